"""Stationary Fokker-Planck densities from a tanh potential network, with collocation
points refined by optimal transport of the residual distribution."""

__version__ = "0.1.0"
