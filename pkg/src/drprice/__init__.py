"""Online-learning retail electricity pricing for demand response."""

__version__ = "0.1.0"
