"""Two-stage stochastic biomass-to-pellet supply-chain design: model, exact kernel, PHA and SAA."""

__version__ = "0.1.0"
