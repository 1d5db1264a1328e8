"""Penalised mountain-pass solver for a coupled quasilinear Schrödinger system."""

__version__ = "0.1.0"
