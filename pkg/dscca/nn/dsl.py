"""
Dynamically-scaled layer (DSL).

The last dense layer of a feature extractor whose weight matrix and bias are
multiplied element-wise, per input sample, by the outputs of a scaling
network h. Besides the dynamic layer this module implements the variants used
for ablations: static learnable scales, scaling of the layer outputs, and a
hypernetwork that emits the parameters directly.

Scaler outputs are laid out per sample as [vec(S_W) (row-major d_in×d_out), S_b].
"""
import copy
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from dscca.config.constants import CONDITIONING_MODES
from dscca.nn.core import (
    EVAL,
    TRAIN,
    BatchNormState,
    DenseLayer,
    MlpLayer,
    MlpNetwork,
    MlpTape,
    batch_norm_backward,
    batch_norm_forward,
    he_uniform,
    init_network,
    mlp_backward,
    mlp_forward,
)
from dscca.numerics.linalg import Matrix, Vector
from dscca.utils.exception_handler import ShapeError

WARMUP = "warmup"
DYNAMIC = "dynamic"
GLOBAL_SCALE = "global_scale"
SCALE_OUTPUTS = "scale_outputs"
HYPERNET = "hypernet"
CONVENTIONAL = "conventional"

VARIANTS = (CONVENTIONAL, DYNAMIC, GLOBAL_SCALE, SCALE_OUTPUTS, HYPERNET)
DSL_MODES = (WARMUP, DYNAMIC, GLOBAL_SCALE, SCALE_OUTPUTS, HYPERNET)

# initial scale of the scaler's final weights relative to He init
SCALER_OUTPUT_GAIN = 1e-2


@dataclass
class ScalingNetwork:
    net: MlpNetwork
    conditioning: str
    output_dim: int
    z_dim: int
    x_dim: int


@dataclass
class DslLayer:
    base: DenseLayer
    scaler: Optional[ScalingNetwork]
    variant: str
    mode: str = WARMUP
    global_scales: Optional[Vector] = None

    @property
    def d_in(self) -> int:
        return self.base.d_in

    @property
    def d_out(self) -> int:
        return self.base.d_out

    @property
    def scaled_count(self) -> int:
        return self.d_in * self.d_out + self.d_out

    def activate(self) -> None:
        """
        Leave the warm-up phase. A hypernetwork head takes over the current
        conventional parameters as the bias of its output layer.
        """
        if self.variant == CONVENTIONAL:
            return
        if self.variant == HYPERNET and self.mode == WARMUP:
            final = self.scaler.net.layers[-1].dense
            final.b[:] = np.concatenate([self.base.W.reshape(-1), self.base.b])
        self.mode = self.variant

    def parameters(self, prefix: str = "head.") -> Dict[str, np.ndarray]:
        params = {f"{prefix}base.W": self.base.W, f"{prefix}base.b": self.base.b}
        if self.scaler is not None:
            params.update(self.scaler.net.parameters(f"{prefix}scaler."))
        if self.global_scales is not None:
            params[f"{prefix}global_scales"] = self.global_scales
        return params

    def trainable_parameters(self, mode: Optional[str] = None, prefix: str = "head.") -> Dict[str, np.ndarray]:
        """Parameters that take part in the computation graph of the given mode."""
        mode = mode or self.mode
        params = {}
        if mode != HYPERNET:
            params[f"{prefix}base.W"] = self.base.W
            params[f"{prefix}base.b"] = self.base.b
        if mode in (DYNAMIC, SCALE_OUTPUTS, HYPERNET):
            params.update(self.scaler.net.parameters(f"{prefix}scaler."))
        if mode == GLOBAL_SCALE:
            params[f"{prefix}global_scales"] = self.global_scales
        return params

    def buffers(self, prefix: str = "head.") -> Dict[str, np.ndarray]:
        if self.scaler is None:
            return {}
        return self.scaler.net.buffers(f"{prefix}scaler.")


@dataclass
class DslTape:
    mode: str
    z: Matrix
    x: Optional[Matrix]
    scales: Optional[Matrix] = None
    scaler_tape: Optional[MlpTape] = None
    pre_scale: Optional[Matrix] = None


def conditioning_vector(mode: str, z: Matrix, x: Optional[Matrix]) -> Matrix:
    """Input of the scaling network: z, x, or the row-wise concatenation [z; x]."""
    if mode not in CONDITIONING_MODES:
        raise ValueError(f"unknown conditioning mode {mode!r}")
    if mode == "z_only":
        return z
    if x is None:
        raise ShapeError(f"conditioning {mode!r} needs the raw input x")
    if x.shape[1] != z.shape[1]:
        raise ShapeError(f"z has {z.shape[1]} columns but x has {x.shape[1]}")
    if mode == "x_only":
        return x
    return np.vstack([z, x])


def build_scaling_network(
    z_dim: int,
    x_dim: int,
    output_dim: int,
    hidden: Sequence[int],
    conditioning: str,
    rng: np.random.Generator,
    output_bias: Optional[Vector] = None,
    bn_momentum: float = 0.1,
    bn_epsilon: float = 1e-5,
) -> ScalingNetwork:
    """
    Hidden layers are dense → batch norm → ReLU, the output layer is bare.
    The output layer starts with small weights and a bias of ones (or
    output_bias), so the layer begins near its unscaled behaviour.
    """
    in_dim = {"z_only": z_dim, "x_only": x_dim, "z_and_x": z_dim + x_dim}[conditioning]
    net = init_network(
        [in_dim, *hidden, output_dim],
        hidden_batch_norm=True,
        final_batch_norm=False,
        bn_momentum=bn_momentum,
        bn_epsilon=bn_epsilon,
        rng=rng,
    )
    final = net.layers[-1].dense
    final.W *= SCALER_OUTPUT_GAIN
    final.b[:] = 1.0 if output_bias is None else output_bias
    return ScalingNetwork(net, conditioning, output_dim, z_dim, x_dim)


def build_dsl_layer(
    d_in: int,
    d_out: int,
    variant: str,
    rng: np.random.Generator,
    scaler_rng: Optional[np.random.Generator] = None,
    x_dim: int = 0,
    scaler_hidden: Sequence[int] = (256,),
    conditioning: str = "z_only",
    bn_momentum: float = 0.1,
    bn_epsilon: float = 1e-5,
) -> DslLayer:
    if variant not in VARIANTS:
        raise ValueError(f"unknown DSL variant {variant!r}")
    base = DenseLayer(he_uniform(d_in, d_out, rng), np.zeros(d_out))
    scaler_rng = scaler_rng if scaler_rng is not None else rng
    count = d_in * d_out + d_out
    scaler = None
    global_scales = None
    if variant in (DYNAMIC, SCALE_OUTPUTS, HYPERNET):
        output_dim = d_out if variant == SCALE_OUTPUTS else count
        output_bias = None
        if variant == HYPERNET:
            output_bias = np.concatenate([base.W.reshape(-1), base.b])
        scaler = build_scaling_network(
            d_in, x_dim, output_dim, scaler_hidden, conditioning, scaler_rng, output_bias, bn_momentum, bn_epsilon
        )
    elif variant == GLOBAL_SCALE:
        global_scales = np.ones(count)
    return DslLayer(base, scaler, variant, WARMUP, global_scales)


def _split_scales(layer: DslLayer, S: Matrix) -> Tuple[np.ndarray, Matrix]:
    n_w = layer.d_in * layer.d_out
    S_W = S[:n_w].reshape(layer.d_in, layer.d_out, -1)
    return S_W, S[n_w:]


def _expected_scaler_dim(layer: DslLayer, mode: str) -> int:
    return layer.d_out if mode == SCALE_OUTPUTS else layer.scaled_count


def dsl_forward(
    layer: DslLayer,
    z: Matrix,
    x: Optional[Matrix] = None,
    mode: Optional[str] = None,
    net_mode: str = TRAIN,
    update_stats: bool = True,
) -> Tuple[Matrix, DslTape]:
    """
    Apply the DSL column by column.

    dynamic: Y_i = (S_W(i) ⊙ W)ᵀ z_i + S_b(i) ⊙ b
    warmup: Y_i = Wᵀ z_i + b
    global_scale: as dynamic with one static learnable scale vector
    scale_outputs: Y_i = s(i) ⊙ (Wᵀ z_i + b)
    hypernet: Y_i = Ŵ(i)ᵀ z_i + b̂(i), parameters emitted by the scaler
    """
    mode = mode or layer.mode
    if mode not in DSL_MODES:
        raise ValueError(f"unknown DSL mode {mode!r}")
    if z.shape[0] != layer.d_in:
        raise ShapeError(f"DSL expects {layer.d_in} input rows, got {z.shape[0]}")
    tape = DslTape(mode, z, x)
    W, b = layer.base.W, layer.base.b

    if mode == WARMUP:
        return layer.base.forward(z), tape

    if mode == GLOBAL_SCALE:
        if layer.global_scales is None or layer.global_scales.size != layer.scaled_count:
            raise ShapeError("global_scale mode needs a static scale vector of the scaled parameter count")
        S_W, S_b = _split_scales(layer, layer.global_scales[:, None])
        tape.scales = layer.global_scales
        return (W * S_W[:, :, 0]).T @ z + (S_b[:, 0] * b)[:, None], tape

    if layer.scaler is None:
        raise ShapeError(f"mode {mode!r} needs a scaling network")
    cond = conditioning_vector(layer.scaler.conditioning, z, x)
    S, scaler_tape = mlp_forward(layer.scaler.net, cond, net_mode, update_stats)
    if S.shape[0] != _expected_scaler_dim(layer, mode):
        raise ShapeError(f"scaler emits {S.shape[0]} values, mode {mode!r} needs {_expected_scaler_dim(layer, mode)}")
    tape.scales = S
    tape.scaler_tape = scaler_tape

    if mode == SCALE_OUTPUTS:
        pre = layer.base.forward(z)
        tape.pre_scale = pre
        return S * pre, tape

    S_W, S_b = _split_scales(layer, S)
    if mode == HYPERNET:
        return np.einsum("ion,in->on", S_W, z) + S_b, tape
    W_hat = S_W * W[:, :, None]
    return np.einsum("ion,in->on", W_hat, z) + S_b * b[:, None], tape


def dsl_backward(
    layer: DslLayer, tape: DslTape, dY: Matrix, prefix: str = "head."
) -> Tuple[Dict[str, np.ndarray], Matrix, Optional[Matrix]]:
    """
    Gradients of a recorded dsl_forward.

    Returns:
        (gradients for every entry of layer.parameters(prefix), dZ, dX or None)
    """
    mode = tape.mode
    if mode in (DYNAMIC, SCALE_OUTPUTS, HYPERNET) and (tape.scaler_tape is None or layer.scaler is None):
        raise ShapeError(f"tape of mode {mode!r} carries no scaler record")
    if mode == GLOBAL_SCALE and layer.global_scales is None:
        raise ShapeError("tape of mode 'global_scale' but layer has no static scales")
    z, W, b = tape.z, layer.base.W, layer.base.b
    if dY.shape != (layer.d_out, z.shape[1]):
        raise ShapeError(f"dY must have shape {(layer.d_out, z.shape[1])}, got {dY.shape}")

    grads = {name: np.zeros_like(p) for name, p in layer.parameters(prefix).items()}
    dS = None
    dX = None

    if mode == WARMUP:
        grads[f"{prefix}base.W"] = z @ dY.T
        grads[f"{prefix}base.b"] = dY.sum(axis=1)
        dZ = W @ dY
    elif mode == GLOBAL_SCALE:
        S_W, S_b = _split_scales(layer, layer.global_scales[:, None])
        S_W, S_b = S_W[:, :, 0], S_b[:, 0]
        zdY = z @ dY.T
        grads[f"{prefix}base.W"] = S_W * zdY
        grads[f"{prefix}base.b"] = S_b * dY.sum(axis=1)
        grads[f"{prefix}global_scales"] = np.concatenate([(W * zdY).reshape(-1), b * dY.sum(axis=1)])
        dZ = (W * S_W) @ dY
    elif mode == SCALE_OUTPUTS:
        S = tape.scales
        dS = tape.pre_scale * dY
        dU = S * dY
        grads[f"{prefix}base.W"] = z @ dU.T
        grads[f"{prefix}base.b"] = dU.sum(axis=1)
        dZ = W @ dU
    elif mode == HYPERNET:
        S_W, _ = _split_scales(layer, tape.scales)
        dS_W = np.einsum("in,on->ion", z, dY)
        dS = np.concatenate([dS_W.reshape(layer.d_in * layer.d_out, -1), dY], axis=0)
        dZ = np.einsum("ion,on->in", S_W, dY)
    else:
        S_W, S_b = _split_scales(layer, tape.scales)
        grads[f"{prefix}base.W"] = np.einsum("ion,in,on->io", S_W, z, dY)
        grads[f"{prefix}base.b"] = (S_b * dY).sum(axis=1)
        dS_W = np.einsum("io,in,on->ion", W, z, dY)
        dS = np.concatenate([dS_W.reshape(layer.d_in * layer.d_out, -1), b[:, None] * dY], axis=0)
        dZ = np.einsum("ion,on->in", S_W * W[:, :, None], dY)

    if dS is not None:
        scaler_grads, dCond = mlp_backward(layer.scaler.net, tape.scaler_tape, dS, f"{prefix}scaler.")
        grads.update(scaler_grads)
        conditioning = layer.scaler.conditioning
        if conditioning == "z_only":
            dZ = dZ + dCond
        elif conditioning == "x_only":
            dX = dCond
        else:
            dZ = dZ + dCond[: layer.d_in]
            dX = dCond[layer.d_in:]
    return grads, dZ, dX


@dataclass
class DslNetworkTape:
    backbone: Optional[MlpTape]
    head: DslTape
    xhat: Matrix
    inv_std: Vector
    batch_stats: bool


@dataclass
class DslNetwork:
    """Backbone MLP (dense → BN → ReLU blocks), a DSL head, then feature batch norm."""

    backbone: Optional[MlpNetwork]
    head: DslLayer
    feature_bn: BatchNormState
    input_dim: int
    seed: int = 0

    @property
    def output_dim(self) -> int:
        return self.head.d_out

    def parameters(self) -> Dict[str, np.ndarray]:
        params = self.backbone.parameters("backbone.") if self.backbone is not None else {}
        params.update(self.head.parameters("head."))
        return params

    def trainable_parameters(self) -> Dict[str, np.ndarray]:
        params = self.backbone.parameters("backbone.") if self.backbone is not None else {}
        params.update(self.head.trainable_parameters(prefix="head."))
        return params

    def buffers(self) -> Dict[str, np.ndarray]:
        buffers = self.backbone.buffers("backbone.") if self.backbone is not None else {}
        buffers.update(self.head.buffers("head."))
        buffers["feature_bn.running_mean"] = self.feature_bn.running_mean
        buffers["feature_bn.running_var"] = self.feature_bn.running_var
        return buffers

    def parameter_count(self, include_scaler: bool = True) -> int:
        params = self.parameters()
        return int(sum(p.size for name, p in params.items() if include_scaler or ".scaler." not in name))

    def scaler_parameter_count(self) -> int:
        return self.parameter_count() - self.parameter_count(include_scaler=False)

    def copy(self) -> "DslNetwork":
        return copy.deepcopy(self)


def build_dsl_network(
    input_dim: int,
    hidden: Sequence[int],
    output_dim: int,
    variant: str = DYNAMIC,
    seed: int = 0,
    view: int = 1,
    scaler_hidden: Sequence[int] = (256,),
    conditioning: str = "z_only",
    bn_momentum: float = 0.1,
    bn_epsilon: float = 1e-5,
) -> DslNetwork:
    """
    Build one view's feature extractor.

    Backbone, head and scaler draw from independent streams of (seed, view),
    so networks that differ only in their variant share identical
    conventional parameters.
    """
    backbone_seq, head_seq, scaler_seq = np.random.SeedSequence([seed, view]).spawn(3)
    hidden = list(hidden)
    backbone = None
    if hidden:
        backbone = init_network(
            [input_dim, *hidden],
            hidden_batch_norm=True,
            final_batch_norm=True,
            bn_momentum=bn_momentum,
            bn_epsilon=bn_epsilon,
            final_activation="relu",
            rng=np.random.default_rng(backbone_seq),
        )
    z_dim = hidden[-1] if hidden else input_dim
    head = build_dsl_layer(
        z_dim,
        output_dim,
        variant,
        np.random.default_rng(head_seq),
        np.random.default_rng(scaler_seq),
        x_dim=input_dim,
        scaler_hidden=scaler_hidden,
        conditioning=conditioning,
        bn_momentum=bn_momentum,
        bn_epsilon=bn_epsilon,
    )
    return DslNetwork(backbone, head, BatchNormState.create(output_dim, bn_momentum, bn_epsilon), input_dim, seed)


def dsl_network_forward(net: DslNetwork, X: Matrix, mode: str = TRAIN, update_stats: bool = True) -> Tuple[Matrix, DslNetworkTape]:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != net.input_dim:
        raise ShapeError(f"network expects {net.input_dim} input rows, got shape {X.shape}")
    if mode == TRAIN and X.shape[1] < 2:
        raise ShapeError("train-mode batch normalization needs at least 2 samples")
    backbone_tape = None
    z = X
    if net.backbone is not None:
        z, backbone_tape = mlp_forward(net.backbone, X, mode, update_stats)
    Y, head_tape = dsl_forward(net.head, z, X, net_mode=mode, update_stats=update_stats)
    xhat, inv_std, batch_stats = batch_norm_forward(net.feature_bn, Y, mode, update_stats)
    return xhat, DslNetworkTape(backbone_tape, head_tape, xhat, inv_std, batch_stats)


def dsl_network_backward(net: DslNetwork, tape: DslNetworkTape, dF: Matrix) -> Tuple[Dict[str, np.ndarray], Matrix]:
    """Gradients for every entry of net.parameters() and the input gradient."""
    dY = batch_norm_backward(dF, tape.xhat, tape.inv_std, tape.batch_stats)
    grads, dZ, dX_head = dsl_backward(net.head, tape.head, dY, "head.")
    if net.backbone is not None:
        backbone_grads, dX = mlp_backward(net.backbone, tape.backbone, dZ, "backbone.")
        grads.update(backbone_grads)
    else:
        dX = dZ
    if dX_head is not None:
        dX = dX + dX_head
    return grads, dX


def project_features(net: DslNetwork, X: Matrix, mode: str = EVAL) -> Matrix:
    """Features of X without recording a tape or touching running statistics."""
    F, _ = dsl_network_forward(net, X, mode, update_stats=False)
    return F


def scaling_factors(net: DslNetwork, X: Matrix) -> Matrix:
    """Scaler outputs for X in eval mode, one column per sample, for inspection."""
    if net.head.scaler is None:
        if net.head.global_scales is not None:
            return np.repeat(net.head.global_scales[:, None], np.asarray(X).shape[1], axis=1)
        raise ShapeError("network has no scaling network")
    z = np.asarray(X, dtype=np.float64)
    if net.backbone is not None:
        z, _ = mlp_forward(net.backbone, z, EVAL, update_stats=False)
    cond = conditioning_vector(net.head.scaler.conditioning, z, np.asarray(X, dtype=np.float64))
    S, _ = mlp_forward(net.head.scaler.net, cond, EVAL, update_stats=False)
    return S


def plain_network(net: DslNetwork) -> MlpNetwork:
    """The conventional MLP sharing this network's backbone, θᶜ and feature batch norm."""
    layers: List[MlpLayer] = list(net.backbone.layers) if net.backbone is not None else []
    layers.append(MlpLayer(net.head.base, net.feature_bn, "none"))
    return MlpNetwork(layers, net.seed)
