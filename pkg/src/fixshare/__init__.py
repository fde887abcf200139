"""Fixed share over expert hidden Markov models, with freezing and sleeping resets."""

__version__ = "0.1.0"
