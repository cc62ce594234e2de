"""
Minimal deterministic neural-network substrate.

Fully-connected layers optionally followed by batch normalization without
affine parameters and a ReLU, with a hand-written backward pass and an
RMSprop optimizer with weight decay. Activations are stored with samples as
columns: a layer maps X (d_in × N) to Wᵀ·X + b (d_out × N).
"""
import copy
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from dscca.numerics.linalg import Matrix, Vector
from dscca.utils.exception_handler import NumericalError, ShapeError

TRAIN = "train"
EVAL = "eval"
ACTIVATIONS = ("relu", "none")


@dataclass
class DenseLayer:
    W: Matrix
    b: Vector

    @property
    def d_in(self) -> int:
        return self.W.shape[0]

    @property
    def d_out(self) -> int:
        return self.W.shape[1]

    def forward(self, X: Matrix) -> Matrix:
        return self.W.T @ X + self.b[:, None]


@dataclass
class BatchNormState:
    """Batch normalization without affine parameters."""

    running_mean: Vector
    running_var: Vector
    momentum: float = 0.1
    epsilon: float = 1e-5
    mode: str = TRAIN

    @classmethod
    def create(cls, dim: int, momentum: float = 0.1, epsilon: float = 1e-5) -> "BatchNormState":
        return cls(np.zeros(dim), np.ones(dim), momentum, epsilon)


@dataclass
class MlpLayer:
    dense: DenseLayer
    batch_norm: Optional[BatchNormState] = None
    activation: str = "relu"


@dataclass
class LayerCache:
    X: Matrix
    xhat: Optional[Matrix]
    inv_std: Optional[Vector]
    mask: Optional[np.ndarray]
    batch_stats: bool


@dataclass
class MlpTape:
    mode: str
    caches: List[LayerCache] = field(default_factory=list)


@dataclass
class MlpNetwork:
    layers: List[MlpLayer]
    seed: int = 0

    @property
    def input_dim(self) -> int:
        return self.layers[0].dense.d_in

    @property
    def output_dim(self) -> int:
        return self.layers[-1].dense.d_out

    @property
    def sizes(self) -> List[int]:
        return [self.input_dim] + [layer.dense.d_out for layer in self.layers]

    def parameters(self, prefix: str = "") -> Dict[str, np.ndarray]:
        """Trainable arrays by name; the arrays are the live parameters."""
        params = {}
        for i, layer in enumerate(self.layers):
            params[f"{prefix}{i}.W"] = layer.dense.W
            params[f"{prefix}{i}.b"] = layer.dense.b
        return params

    def buffers(self, prefix: str = "") -> Dict[str, np.ndarray]:
        """Batch-norm running statistics by name."""
        buffers = {}
        for i, layer in enumerate(self.layers):
            if layer.batch_norm is not None:
                buffers[f"{prefix}{i}.running_mean"] = layer.batch_norm.running_mean
                buffers[f"{prefix}{i}.running_var"] = layer.batch_norm.running_var
        return buffers

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters().values()))

    def copy(self) -> "MlpNetwork":
        return copy.deepcopy(self)


def batch_norm_forward(bn: BatchNormState, H: Matrix, mode: str, update_stats: bool):
    if mode == TRAIN:
        n = H.shape[1]
        mean = H.mean(axis=1)
        var = H.var(axis=1)
        if update_stats:
            unbiased = var * n / (n - 1)
            bn.running_mean[:] = (1.0 - bn.momentum) * bn.running_mean + bn.momentum * mean
            bn.running_var[:] = (1.0 - bn.momentum) * bn.running_var + bn.momentum * unbiased
        batch_stats = True
    else:
        mean = bn.running_mean
        var = bn.running_var
        batch_stats = False
    inv_std = 1.0 / np.sqrt(var + bn.epsilon)
    xhat = (H - mean[:, None]) * inv_std[:, None]
    return xhat, inv_std, batch_stats


def batch_norm_backward(dXhat: Matrix, xhat: Matrix, inv_std: Vector, batch_stats: bool) -> Matrix:
    if not batch_stats:
        return dXhat * inv_std[:, None]
    n = dXhat.shape[1]
    sum_d = dXhat.sum(axis=1, keepdims=True)
    sum_dx = (dXhat * xhat).sum(axis=1, keepdims=True)
    return (inv_std[:, None] / n) * (n * dXhat - sum_d - xhat * sum_dx)


def mlp_forward(net: MlpNetwork, X: Matrix, mode: str = TRAIN, update_stats: bool = True) -> Tuple[Matrix, MlpTape]:
    """
    Forward pass recording every intermediate needed by mlp_backward.

    Eval mode normalizes with running statistics, so each output column only
    depends on its own input column.
    """
    if mode not in (TRAIN, EVAL):
        raise ValueError(f"unknown mode {mode!r}")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != net.input_dim:
        raise ShapeError(f"network expects {net.input_dim} input rows, got shape {X.shape}")
    has_bn = any(layer.batch_norm is not None for layer in net.layers)
    if mode == TRAIN and has_bn and X.shape[1] < 2:
        raise ShapeError("train-mode batch normalization needs at least 2 samples")

    tape = MlpTape(mode)
    H = X
    for layer in net.layers:
        layer_input = H
        H = layer.dense.forward(H)
        xhat = inv_std = None
        batch_stats = False
        if layer.batch_norm is not None:
            xhat, inv_std, batch_stats = batch_norm_forward(layer.batch_norm, H, mode, update_stats)
            H = xhat
        mask = None
        if layer.activation == "relu":
            mask = H > 0
            H = H * mask
        tape.caches.append(LayerCache(layer_input, xhat, inv_std, mask, batch_stats))
    return H, tape


def mlp_backward(net: MlpNetwork, tape: MlpTape, dY: Matrix, prefix: str = "") -> Tuple[Dict[str, np.ndarray], Matrix]:
    """
    Backpropagate dY through a recorded forward pass.

    Returns:
        (gradients keyed like net.parameters(prefix), gradient w.r.t. the input)
    """
    if len(tape.caches) != len(net.layers):
        raise ShapeError("tape does not match network depth")
    dY = np.asarray(dY, dtype=np.float64)
    expected = (net.output_dim, tape.caches[-1].X.shape[1])
    if dY.shape != expected:
        raise ShapeError(f"dY must have shape {expected}, got {dY.shape}")

    grads = {}
    dH = dY
    for i in range(len(net.layers) - 1, -1, -1):
        layer, cache = net.layers[i], tape.caches[i]
        if cache.mask is not None:
            dH = dH * cache.mask
        if cache.xhat is not None:
            dH = batch_norm_backward(dH, cache.xhat, cache.inv_std, cache.batch_stats)
        grads[f"{prefix}{i}.W"] = cache.X @ dH.T
        grads[f"{prefix}{i}.b"] = dH.sum(axis=1)
        dH = layer.dense.W @ dH
    return grads, dH


@dataclass
class RmspropState:
    lr: float = 1e-3
    alpha_smoothing: float = 0.99
    eps: float = 1e-8
    weight_decay: float = 1e-5
    accumulators: Dict[str, np.ndarray] = field(default_factory=dict)
    steps: int = 0


def rmsprop_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: RmspropState):
    """
    One in-place RMSprop update with coupled weight decay.

    For every parameter with a gradient: g ← g + wd·θ, s ← α·s + (1−α)·g²,
    θ ← θ − lr·g/(√s + eps). Parameters without a gradient are left untouched.
    """
    for name in sorted(grads):
        if name not in params:
            raise ShapeError(f"gradient for unknown parameter {name!r}")
        param, grad = params[name], grads[name]
        if grad.shape != param.shape:
            raise ShapeError(f"gradient shape {grad.shape} does not match parameter {name!r} {param.shape}")
        if not np.all(np.isfinite(grad)):
            raise NumericalError(f"non-finite gradient for parameter {name!r}")
        g = grad + state.weight_decay * param if state.weight_decay else grad
        acc = state.accumulators.get(name)
        if acc is None:
            acc = np.zeros_like(param)
            state.accumulators[name] = acc
        acc *= state.alpha_smoothing
        acc += (1.0 - state.alpha_smoothing) * g * g
        param -= state.lr * g / (np.sqrt(acc) + state.eps)
    state.steps += 1
    return params, state


def he_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> Matrix:
    """He-uniform weights, variance 2/fan_in."""
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_network(
    sizes: Sequence[int],
    seed: int = 0,
    hidden_batch_norm: bool = True,
    final_batch_norm: bool = True,
    bn_momentum: float = 0.1,
    bn_epsilon: float = 1e-5,
    final_activation: str = "none",
    rng: Optional[np.random.Generator] = None,
) -> MlpNetwork:
    """
    Build an MLP with He-uniform weights and zero biases.

    Hidden layers are dense → batch norm → ReLU; the last layer uses
    final_activation and is followed by batch norm when final_batch_norm is set.

    Args:
        sizes: [input_dim, hidden..., output_dim]
        seed: seed of the weight generator (ignored when rng is given)
    """
    sizes = [int(s) for s in sizes]
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ShapeError(f"invalid layer sizes {sizes}")
    rng = rng if rng is not None else np.random.default_rng(seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        last = i == len(sizes) - 2
        use_bn = final_batch_norm if last else hidden_batch_norm
        layers.append(
            MlpLayer(
                DenseLayer(he_uniform(fan_in, fan_out, rng), np.zeros(fan_out)),
                BatchNormState.create(fan_out, bn_momentum, bn_epsilon) if use_bn else None,
                final_activation if last else "relu",
            )
        )
    return MlpNetwork(layers, seed)
