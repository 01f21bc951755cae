"""Structure-preserving feed-forward style transfer for GUI images and app assets."""

__version__ = "0.1.0"
