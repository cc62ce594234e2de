"""
Synthetic paired views with known canonical correlations.

Latent pair k of the two views is √ρ_k·z_k + √(1−ρ_k)·ε_{j,k} with z, ε
independent unit Gaussians, so its population correlation is exactly ρ_k.
The latents, padded with independent noise, are embedded by a random
orthogonal map per view.

With the tanh_mix nonlinearity the view-1 latents are first folded by the
even map (x² − 1)/√2 and both embedded views then pass through a rotated
tanh layer. Every linear function of view 2 is odd in its latents, so
linear CCA between the views has population correlation zero, while the
best nonlinear pair (l₁², l₂²) still correlates at ρ_k².
"""
from typing import Sequence, Tuple

import numpy as np

from dscca.data.datasets import ViewPairDataset
from dscca.numerics.linalg import Matrix, random_orthogonal

TANH_GAIN = 1.0


def _embed(latent: Matrix, dim: int, rng: np.random.Generator) -> Matrix:
    n = latent.shape[1]
    padded = np.vstack([latent, rng.standard_normal((dim - latent.shape[0], n))])
    return random_orthogonal(dim, rng) @ padded


def fold(latent: Matrix) -> Matrix:
    """(x² − 1)/√2: zero mean and unit variance on unit Gaussians"""
    return (latent**2 - 1.0) / np.sqrt(2.0)


def tanh_mix(X: Matrix, rng: np.random.Generator, gain: float = TANH_GAIN) -> Matrix:
    """Fixed nonlinearity R·tanh(gain·X) with a random rotation R"""
    return random_orthogonal(X.shape[0], rng) @ np.tanh(gain * X)


def synth_correlated(
    n_samples: int,
    latent_dim: int,
    dims: Tuple[int, int],
    target_correlations: Sequence[float],
    nonlinearity: str = "none",
    seed: int = 0,
) -> ViewPairDataset:
    """
    Generate a two-view dataset whose canonical correlations are target_correlations.

    Args:
        n_samples: number of paired samples N
        latent_dim: number of correlated latent pairs
        dims: (n₁, n₂) view dimensions, each ≥ latent_dim
        target_correlations: descending values in (0, 1], one per latent pair
        nonlinearity: "none" or "tanh_mix"
        seed: generator seed
    """
    rho = np.asarray(target_correlations, dtype=np.float64)
    n1, n2 = (int(n) for n in dims)
    if rho.shape != (latent_dim,):
        raise ValueError(f"expected {latent_dim} target correlations, got {rho.size}")
    if np.any(rho <= 0) or np.any(rho > 1):
        raise ValueError(f"target correlations must lie in (0, 1], got {rho.tolist()}")
    if np.any(np.diff(rho) > 0):
        raise ValueError(f"target correlations must be descending, got {rho.tolist()}")
    if latent_dim < 1 or latent_dim > min(n1, n2):
        raise ValueError(f"latent_dim={latent_dim} must lie in [1, min(dims)={min(n1, n2)}]")
    if n_samples < 2:
        raise ValueError(f"need at least 2 samples, got {n_samples}")
    if nonlinearity not in ("none", "tanh_mix"):
        raise ValueError(f"unknown nonlinearity {nonlinearity!r}")

    rng = np.random.default_rng(seed)
    shared = rng.standard_normal((latent_dim, n_samples))
    signal = np.sqrt(rho)[:, None]
    noise = np.sqrt(1.0 - rho)[:, None]
    latent1 = signal * shared + noise * rng.standard_normal((latent_dim, n_samples))
    latent2 = signal * shared + noise * rng.standard_normal((latent_dim, n_samples))

    if nonlinearity == "tanh_mix":
        latent1 = fold(latent1)
    view1 = _embed(latent1, n1, rng)
    view2 = _embed(latent2, n2, rng)
    if nonlinearity == "tanh_mix":
        view1 = tanh_mix(view1, rng)
        view2 = tanh_mix(view2, rng)
    name = f"synthetic-{nonlinearity}-{latent_dim}x{n_samples}"
    return ViewPairDataset(view1, view2, name, {}, rho.copy())
