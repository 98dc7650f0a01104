"""Library modules for normal-prior-guided neural surface reconstruction of indoor scenes."""

__version__ = "0.1.0"
