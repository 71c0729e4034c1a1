"""resroute: queue-based road traffic simulation with reservation-aware route guidance."""

__version__ = "0.1.0"
