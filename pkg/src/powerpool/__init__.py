"""Power-mean pooling of ensemble forecasts for extreme-event classification."""

__version__ = "0.1.0"
