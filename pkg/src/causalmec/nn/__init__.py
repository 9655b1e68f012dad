from . import layers, losses, model, tensor, training

__all__ = ["tensor", "layers", "model", "losses", "training"]
