"""Small-network delta hedging on simulated GBM markets."""
__version__ = "0.1.0"
