"""Track-and-stop causal discovery from interventional samples."""

__version__ = "0.1.0"
