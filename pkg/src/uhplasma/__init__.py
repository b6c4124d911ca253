"""Upper-hybrid cold-plasma oscillations: blow-up criterion, regimes and sweeps."""

__version__ = "0.1.0"
