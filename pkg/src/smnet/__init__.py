"""Bayesian probit models for multilayer similarity networks."""
from .models import VARIANTS, Hyperparameters, Model, ModelState, default_hyperparameters
from .netcore import MultilayerNetwork, layer_stats

__version__ = "0.1.0"
