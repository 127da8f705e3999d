"""ride-kernel: interactive robot middleware with a simulated PR2-like robot."""

__version__ = "0.1.0"
