"""hetero-dispatch: analysis, optimization and simulation of two-speed server farm dispatching."""

__version__ = "0.1.0"
