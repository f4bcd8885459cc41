"""gmwalk: exact laboratory for group-valued walks driven by Gibbs-Markov systems."""

__version__ = "0.1.0"
