from .dsdcca_trainer import train_dsdcca, validation_loss
from .ranking_trainer import train_ds_ranking, validation_recalls

__all__ = ["train_dsdcca", "validation_loss", "train_ds_ranking", "validation_recalls"]
