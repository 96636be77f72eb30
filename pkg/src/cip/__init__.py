"""Caption-grounded prompt construction and training-set synthesis toolkit."""

__version__ = "0.1.0"
