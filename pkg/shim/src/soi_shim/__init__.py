"""Standard-library tracker shim for the soi-forge wire protocol."""

__version__ = "0.1.0"
