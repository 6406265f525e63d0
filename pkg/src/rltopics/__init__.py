"""Neural topic modeling trained with single-step continuous-action REINFORCE."""

__version__ = "0.1.0"
