"""attbench: a spacecraft attitude estimation and fault-detection workbench."""

__version__ = "0.1.0"
