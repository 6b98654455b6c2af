"""Age-of-information toolkit: metrics, queues, polling scheduler, wire
protocol, simulator and a UDP testbed."""

__version__ = "0.1.0"
