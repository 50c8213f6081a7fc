"""Simulation laboratory for one-dimensional coalescing stochastic flows.

Pieces: covariance kernels (`kernels`), grid simulators for interacting
Brownian particle systems (`flows`), the epsilon-gluing pathwise coupling
(`coupling`), discrete measures and exact 1D optimal transport
(`transport`), Monte Carlo experiments with confidence-interval-adjusted
bound checks (`montecarlo`), and a command-line front end (`cli`).
"""

__version__ = "0.1.0"
