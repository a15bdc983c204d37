"""Ginzburg-Landau energies with manifold targets: singular chains, Plateau predictions, lower bounds."""

__version__ = "0.1.0"
