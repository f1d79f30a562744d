"""Document/abstract alignment with a semi-Markov HMM."""

__version__ = "0.1.0"
