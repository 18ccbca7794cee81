"""Joint learning of radial grid topology and nodal injection statistics from voltage samples."""

__version__ = "0.1.0"
