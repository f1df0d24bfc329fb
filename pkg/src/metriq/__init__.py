"""Distribution-based code quality scoring for software repositories."""

__version__ = "0.1.0"
