"""Bell test with photon pairs from a two-pulse cavity-optomagnonic protocol."""

__version__ = "0.1.0"
