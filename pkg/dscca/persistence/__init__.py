from .checkpoint import KINDS, checkpoint_bytes, load_checkpoint, model_from_bytes, model_kind, save_checkpoint

__all__ = ["KINDS", "checkpoint_bytes", "load_checkpoint", "model_from_bytes", "model_kind", "save_checkpoint"]
