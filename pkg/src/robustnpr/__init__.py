"""Robust deep nonparametric regression on heavy-tailed data.

Subpackages: losses (robust losses), mlp (ReLU nets + backprop), optim
(Adam training), datagen (streams, targets, noise), theory (design and
bound calculators), harness (experiment grids), cli (command line).
"""

__version__ = "0.1.0"
