"""Finite-difference gradient checks and small test doubles."""
from typing import Callable, Dict

import numpy as np

# one-sided slopes disagreeing by more than this mark a ReLU or hinge kink inside [x-h, x+h]
KINK_TOLERANCE = 1e-4


def numeric_gradient(f: Callable[[], float], array: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """
    Central differences of f with respect to every entry of array, perturbed in place.
    Entries whose interval straddles a kink are returned as NaN.
    """
    f0 = f()
    grad = np.zeros_like(array)
    for index in np.ndindex(array.shape):
        original = array[index]
        array[index] = original + h
        plus = f()
        array[index] = original - h
        minus = f()
        array[index] = original
        forward, backward = (plus - f0) / h, (f0 - minus) / h
        if abs(forward - backward) > KINK_TOLERANCE * max(abs(forward), abs(backward), 1.0):
            grad[index] = np.nan
        else:
            grad[index] = (plus - minus) / (2 * h)
    return grad


def gradient_errors(
    f: Callable[[], float],
    params: Dict[str, np.ndarray],
    analytic: Dict[str, np.ndarray],
    h: float = 1e-6,
    floor: float = 1e-5,
) -> Dict[str, float]:
    """
    Relative error per named array: max |analytic − numeric| over the array,
    divided by max(max |numeric|, floor). Kink entries are skipped, and at most
    5% of all entries may be kinks.
    """
    errors = {}
    kinks = total = 0
    for name, array in params.items():
        numeric = numeric_gradient(f, array, h)
        mask = ~np.isnan(numeric)
        kinks += int((~mask).sum())
        total += mask.size
        if not mask.any():
            continue
        scale = max(float(np.max(np.abs(numeric[mask]))), floor)
        errors[name] = float(np.max(np.abs(analytic[name][mask] - numeric[mask]))) / scale
    assert kinks <= 0.05 * total, f"{kinks} of {total} entries sit on kinks"
    return errors


def worst(errors: Dict[str, float]) -> float:
    return max(errors.values(), default=0.0)


class ViewIdentityModel:
    """Projects each view as-is; stands in for a trained model in protocol tests."""

    def __init__(self, d: int, transform1=None, transform2=None):
        self.d = d
        self.transform1 = transform1
        self.transform2 = transform2

    def project(self, X, view: int):
        X = np.asarray(X, dtype=np.float64)
        T = self.transform1 if view == 1 else self.transform2
        return X if T is None else T @ X
