"""Shape optimization of linear elastic bodies in unilateral (Signorini) contact."""

__version__ = "0.1.0"
