"""Turn-by-turn GNSS spoofing detection with a learned differential-distance threshold."""

__version__ = "0.1.0"
