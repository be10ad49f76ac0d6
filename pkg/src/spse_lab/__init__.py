"""Single-peak normalized solutions of a Schrodinger-Poisson-Slater equation."""

__version__ = "0.1.0"
