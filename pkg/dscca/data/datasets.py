"""
Paired two-view datasets and deterministic splits.
"""
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from dscca.numerics.linalg import Matrix, Vector, as_matrix
from dscca.utils.exception_handler import ShapeError

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class ViewPairDataset:
    """
    Paired views, samples as columns: view1[:, i] and view2[:, i] describe the same instance.
    split maps "train"/"val"/"test" to disjoint column index arrays.
    """

    view1: Matrix
    view2: Matrix
    name: str = ""
    split: Dict[str, np.ndarray] = field(default_factory=dict)
    ground_truth_correlations: Optional[Vector] = None

    def __post_init__(self):
        object.__setattr__(self, "view1", as_matrix(self.view1, "view1"))
        object.__setattr__(self, "view2", as_matrix(self.view2, "view2"))
        if self.view1.shape[1] != self.view2.shape[1]:
            raise ShapeError(f"views have {self.view1.shape[1]} and {self.view2.shape[1]} samples")
        split = {}
        seen = set()
        for name, indices in self.split.items():
            if name not in SPLITS:
                raise ShapeError(f"unknown split {name!r}")
            indices = np.asarray(indices, dtype=np.int64)
            if indices.size and (indices.min() < 0 or indices.max() >= self.n_samples):
                raise ShapeError(f"split {name!r} indexes outside [0, {self.n_samples})")
            overlap = seen.intersection(indices.tolist())
            if overlap or len(set(indices.tolist())) != indices.size:
                raise ShapeError(f"split {name!r} overlaps another split or repeats indices")
            seen.update(indices.tolist())
            split[name] = indices
        object.__setattr__(self, "split", split)

    @property
    def n_samples(self) -> int:
        return self.view1.shape[1]

    @property
    def dims(self) -> Tuple[int, int]:
        return self.view1.shape[0], self.view2.shape[0]

    def has_split(self, name: str) -> bool:
        return name in self.split and self.split[name].size > 0

    def subset(self, name: str) -> "ViewPairDataset":
        """The columns of one split as a split-less dataset"""
        if name not in self.split:
            raise ShapeError(f"dataset {self.name!r} has no {name!r} split")
        indices = self.split[name]
        return ViewPairDataset(
            self.view1[:, indices], self.view2[:, indices], f"{self.name}:{name}", {}, self.ground_truth_correlations
        )

    def views(self, name: Optional[str] = None) -> Tuple[Matrix, Matrix]:
        if name is None:
            return self.view1, self.view2
        data = self.subset(name)
        return data.view1, data.view2


def _split_counts(n: int, sizes: Sequence[float]) -> Tuple[int, int, int]:
    sizes = [float(s) for s in sizes]
    if len(sizes) != 3 or any(s < 0 for s in sizes):
        raise ValueError(f"split needs three non-negative sizes, got {sizes}")
    if all(s <= 1.0 for s in sizes):
        if sum(sizes) > 1.0 + 1e-9:
            raise ShapeError(f"split fractions {sizes} sum above 1")
        train, val = int(round(sizes[0] * n)), int(round(sizes[1] * n))
        test = min(int(round(sizes[2] * n)), n - train - val)
        counts = (train, val, test)
    else:
        counts = tuple(int(s) for s in sizes)
    if sum(counts) > n:
        raise ShapeError(f"split sizes {counts} exceed {n} samples")
    return counts


def make_splits(dataset: ViewPairDataset, sizes: Sequence[float], seed: int = 0) -> ViewPairDataset:
    """
    Shuffle the sample indices with seed and cut train/val/test.

    Args:
        sizes: three fractions of N (all ≤ 1) or three absolute counts
    """
    train, val, test = _split_counts(dataset.n_samples, sizes)
    order = np.random.default_rng(seed).permutation(dataset.n_samples)
    split = {
        "train": np.sort(order[:train]),
        "val": np.sort(order[train: train + val]),
        "test": np.sort(order[train + val: train + val + test]),
    }
    return replace(dataset, split=split)
