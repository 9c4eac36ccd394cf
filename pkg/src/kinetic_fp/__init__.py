"""Numerical toolkit for a nonlinear kinetic Fokker-Planck equation with
density-dependent collision frequency, its Kolmogorov fundamental solution,
and its fast-diffusion limit on the torus."""

__version__ = "0.1.0"
