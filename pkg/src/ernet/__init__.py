"""ernet: joint multi-stage brain extraction and affine registration."""

__version__ = "0.1.0"
