"""Agnostic feature-inference attacks on vertical federated logistic regression,
and parameter-distortion defenses against them."""

from . import adversary, attack, data, defense, harness, model, stiefel, synthetic

__all__ = ["adversary", "attack", "data", "defense", "harness", "model", "stiefel", "synthetic"]
__version__ = "0.1.0"
