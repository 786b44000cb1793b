"""CNN inference over homomorphically encrypted data with polynomial activations."""

__version__ = "0.1.0"
