from .datasets import SPLITS, ViewPairDataset, make_splits
from .formats import (
    join_halves,
    load_views,
    read_binary_view,
    read_csv_view,
    read_idx_images,
    split_halves,
    write_binary_view,
    write_csv_view,
)
from .synthetic import synth_correlated

__all__ = [
    "SPLITS",
    "ViewPairDataset",
    "make_splits",
    "join_halves",
    "load_views",
    "read_binary_view",
    "read_csv_view",
    "read_idx_images",
    "split_halves",
    "write_binary_view",
    "write_csv_view",
    "synth_correlated",
]
