"""Time-domain backprojection imaging for synthetic aperture sonar."""

__version__ = "0.1.0"
