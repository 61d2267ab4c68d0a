"""PA-centric energy-efficient OFDM: PAPR tools, allocation and precoding solvers, experiments."""

__version__ = "0.1.0"
