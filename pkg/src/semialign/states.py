"""State space of the segmental HMM over one document."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class State(NamedTuple):
    """``kind`` is one of start/end/phrase/null.

    Phrase states cover document positions ``i..j`` (1-based, inclusive);
    null states remember the document position ``i`` they were entered from.
    """

    kind: str
    i: int = 0
    j: int = 0

    @property
    def exit_pos(self) -> int:
        """Document position the next jump is measured from."""
        if self.kind == "start":
            return 0
        if self.kind == "phrase":
            return self.j
        if self.kind == "null":
            return self.i
        raise ValueError("the end state has no outgoing jumps")

    def __str__(self):
        if self.kind == "phrase":
            return f"r[{self.i},{self.j}]"
        if self.kind == "null":
            return f"null[{self.i}]"
        return f"<{self.kind}>"


START = State("start")
END = State("end")


def Phrase(i: int, j: int) -> State:
    return State("phrase", i, j)


def Null(anchor: int) -> State:
    return State("null", anchor)


@dataclass(frozen=True, eq=False)
class StateSpace:
    """States are numbered start, phrases (sorted by start then end), nulls, end."""

    doc_len: int
    max_doc_phrase_len: int
    states: tuple
    phrase_start: np.ndarray
    phrase_end: np.ndarray

    @property
    def num_states(self) -> int:
        return len(self.states)

    @property
    def num_phrases(self) -> int:
        return len(self.phrase_start)

    @property
    def start_id(self) -> int:
        return 0

    @property
    def end_id(self) -> int:
        return len(self.states) - 1

    def null_id(self, anchor: int) -> int:
        return 1 + self.num_phrases + anchor - 1

    def phrase_ids(self) -> range:
        return range(1, 1 + self.num_phrases)

    def null_ids(self) -> range:
        return range(1 + self.num_phrases, 1 + self.num_phrases + self.doc_len)

    def index(self, state: State) -> int:
        return self._index[state]

    @property
    def _index(self) -> dict:
        cache = self.__dict__.get("_index_cache")
        if cache is None:
            cache = {s: k for k, s in enumerate(self.states)}
            object.__setattr__(self, "_index_cache", cache)
        return cache

    @property
    def exit_positions(self) -> np.ndarray:
        """Exit position of every non-end state (end gets -1)."""
        out = np.empty(len(self.states), dtype=np.int64)
        for k, s in enumerate(self.states):
            out[k] = -1 if s.kind == "end" else s.exit_pos
        return out

    def successors(self, state: State) -> list:
        """States reachable from ``state`` in one transition."""
        if state.kind == "end":
            return []
        targets = [s for s in self.states if s.kind in ("phrase", "null")]
        if state.kind != "start":
            targets.append(END)
        return targets

    @property
    def out_degree(self) -> int:
        return self.num_phrases + self.doc_len + 1


def build_state_space(doc_len: int, max_doc_phrase_len: int = 5) -> StateSpace:
    if doc_len < 1:
        raise ValueError("document must have at least one token")
    if max_doc_phrase_len < 1:
        raise ValueError("max_doc_phrase_len must be >= 1")
    phrases = [(i, j) for i in range(1, doc_len + 1)
               for j in range(i, min(doc_len, i + max_doc_phrase_len - 1) + 1)]
    states = [START] + [Phrase(i, j) for i, j in phrases]
    states += [Null(a) for a in range(1, doc_len + 1)] + [END]
    return StateSpace(
        doc_len=doc_len,
        max_doc_phrase_len=max_doc_phrase_len,
        states=tuple(states),
        phrase_start=np.array([i for i, _ in phrases], dtype=np.int64),
        phrase_end=np.array([j for _, j in phrases], dtype=np.int64),
    )
