"""
Checkpoint container.

    magic b"DSCCAKPT" | u16 version | u32 header length | JSON header | float64 payload

The UTF-8 JSON header (sorted keys) holds the model kind, the config
snapshot, the network structure, training metadata and an array directory
of (name, shape, offset); the payload stores every array little-endian.
Identical models serialize to identical bytes.
"""
import json
import struct
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from dscca.cca.deep import DsccaModel
from dscca.cca.linear import LinearCcaModel
from dscca.cca.ranking import RankingModel, RunningCcaState
from dscca.config.constants import ExceptionConstants, FormatConstants
from dscca.nn.core import BatchNormState, DenseLayer, MlpLayer, MlpNetwork
from dscca.nn.dsl import DslLayer, DslNetwork, ScalingNetwork
from dscca.utils.exception_handler import CheckpointError, ExceptionHandler
from dscca.utils.logging_utils import LoggingUtils

Model = Union[LinearCcaModel, DsccaModel, RankingModel]
KINDS = ("linear", "dcca", "ranking")
_PREAMBLE = struct.Struct("<HI")
_CCA_STATE_ARRAYS = ("sigma11", "sigma12", "sigma22", "mean1", "mean2")


def model_kind(model: Model) -> str:
    if isinstance(model, LinearCcaModel):
        return "linear"
    if isinstance(model, DsccaModel):
        return "dcca"
    if isinstance(model, RankingModel):
        return "ranking"
    raise TypeError(f"cannot checkpoint {type(model).__name__}")


def _mlp_layout(net: MlpNetwork) -> List[Dict[str, Any]]:
    return [
        {
            "d_in": layer.dense.d_in,
            "d_out": layer.dense.d_out,
            "activation": layer.activation,
            "batch_norm": None
            if layer.batch_norm is None
            else {"momentum": layer.batch_norm.momentum, "epsilon": layer.batch_norm.epsilon},
        }
        for layer in net.layers
    ]


def _mlp_from_layout(layout: List[Dict[str, Any]], seed: int) -> MlpNetwork:
    layers = []
    for entry in layout:
        bn = entry["batch_norm"]
        layers.append(
            MlpLayer(
                DenseLayer(np.zeros((entry["d_in"], entry["d_out"])), np.zeros(entry["d_out"])),
                None if bn is None else BatchNormState.create(entry["d_out"], bn["momentum"], bn["epsilon"]),
                entry["activation"],
            )
        )
    return MlpNetwork(layers, seed)


def network_layout(net: DslNetwork) -> Dict[str, Any]:
    head = net.head
    scaler = None
    if head.scaler is not None:
        scaler = {
            "conditioning": head.scaler.conditioning,
            "output_dim": head.scaler.output_dim,
            "z_dim": head.scaler.z_dim,
            "x_dim": head.scaler.x_dim,
            "layers": _mlp_layout(head.scaler.net),
        }
    return {
        "input_dim": net.input_dim,
        "seed": net.seed,
        "backbone": None if net.backbone is None else _mlp_layout(net.backbone),
        "head": {
            "variant": head.variant,
            "mode": head.mode,
            "d_in": head.d_in,
            "d_out": head.d_out,
            "global_scales": head.global_scales is not None,
            "scaler": scaler,
        },
        "feature_bn": {"momentum": net.feature_bn.momentum, "epsilon": net.feature_bn.epsilon},
    }


def network_from_layout(layout: Dict[str, Any]) -> DslNetwork:
    """Structure with zeroed arrays, filled in by name afterwards"""
    seed = layout["seed"]
    h = layout["head"]
    scaler = None
    if h["scaler"] is not None:
        s = h["scaler"]
        scaler = ScalingNetwork(_mlp_from_layout(s["layers"], seed), s["conditioning"], s["output_dim"], s["z_dim"], s["x_dim"])
    global_scales = np.zeros(h["d_in"] * h["d_out"] + h["d_out"]) if h["global_scales"] else None
    head = DslLayer(
        DenseLayer(np.zeros((h["d_in"], h["d_out"])), np.zeros(h["d_out"])), scaler, h["variant"], h["mode"], global_scales
    )
    backbone = None if layout["backbone"] is None else _mlp_from_layout(layout["backbone"], seed)
    bn = layout["feature_bn"]
    return DslNetwork(backbone, head, BatchNormState.create(h["d_out"], bn["momentum"], bn["epsilon"]), layout["input_dim"], seed)


def _network_arrays(net: DslNetwork, prefix: str) -> Dict[str, np.ndarray]:
    arrays = {**net.parameters(), **net.buffers()}
    return {prefix + name: array for name, array in arrays.items()}


def _collect(model: Model) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    kind = model_kind(model)
    if kind == "linear":
        meta = {"r1": model.r1, "r2": model.r2}
        arrays = {"A1": model.A1, "A2": model.A2, "mean1": model.mean1, "mean2": model.mean2,
                  "correlations": model.correlations}
        return {"kind": kind, "config": {}, "meta": meta, "networks": {}}, arrays

    arrays = {"A1": model.A1, "A2": model.A2}
    arrays.update(_network_arrays(model.net1, "view1."))
    arrays.update(_network_arrays(model.net2, "view2."))
    networks = {"view1": network_layout(model.net1), "view2": network_layout(model.net2)}
    meta: Dict[str, Any] = {"best_epoch": model.best_epoch, "history": model.history}
    if kind == "dcca":
        arrays["mean1"] = model.mean1
        arrays["mean2"] = model.mean2
        meta["best_val_loss"] = model.best_val_loss
    else:
        state = model.cca_state
        for name in _CCA_STATE_ARRAYS:
            arrays[f"cca.{name}"] = getattr(state, name)
        meta.update(
            {
                "margin": model.margin,
                "r1": model.r1,
                "r2": model.r2,
                "best_val_recall": model.best_val_recall,
                "best_epoch_per_k": {str(k): v for k, v in model.best_epoch_per_k.items()},
                "cca_alpha": state.alpha,
                "cca_initialized": state.initialized,
                "cca_updates": state.updates,
            }
        )
    return {"kind": kind, "config": model.config, "meta": meta, "networks": networks}, arrays


def checkpoint_bytes(model: Model) -> bytes:
    header, arrays = _collect(model)
    directory = []
    chunks = []
    offset = 0
    for name in sorted(arrays):
        data = np.ascontiguousarray(arrays[name], dtype="<f8").tobytes()
        directory.append({"name": name, "shape": list(np.shape(arrays[name])), "offset": offset})
        chunks.append(data)
        offset += len(data)
    header["arrays"] = directory
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    preamble = FormatConstants.CHECKPOINT_MAGIC + _PREAMBLE.pack(FormatConstants.CHECKPOINT_VERSION, len(header_bytes))
    return preamble + header_bytes + b"".join(chunks)


def save_checkpoint(model: Model, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(checkpoint_bytes(model))
    except ExceptionConstants.FILE_OPERATION_EXCEPTIONS as e:
        ExceptionHandler.handle_file_operation_error(e, "Checkpoint")
        raise CheckpointError(f"cannot write checkpoint {path}: {e}") from e
    LoggingUtils.log_debug("Checkpoint", "Saved {kind} checkpoint to {path}", kind=model_kind(model), path=path)
    return path


def _parse(data: bytes, source: str) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    magic = FormatConstants.CHECKPOINT_MAGIC
    if data[: len(magic)] != magic:
        raise CheckpointError(f"{source}: not a dscca checkpoint (bad magic)")
    start = len(magic)
    if len(data) < start + _PREAMBLE.size:
        raise CheckpointError(f"{source}: truncated preamble")
    version, header_length = _PREAMBLE.unpack_from(data, start)
    if version != FormatConstants.CHECKPOINT_VERSION:
        raise CheckpointError(f"{source}: format version {version}, expected {FormatConstants.CHECKPOINT_VERSION}")
    start += _PREAMBLE.size
    if len(data) < start + header_length:
        raise CheckpointError(f"{source}: truncated header")
    try:
        header = json.loads(data[start: start + header_length].decode("utf-8"))
    except ExceptionConstants.DATA_PARSING_EXCEPTIONS as e:
        raise CheckpointError(f"{source}: unreadable header: {e}") from e
    payload = data[start + header_length:]
    arrays = {}
    end = 0
    for entry in header.get("arrays", []):
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = entry["offset"] + 8 * count
        if end > len(payload):
            raise CheckpointError(f"{source}: truncated payload at array {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(payload, dtype="<f8", count=count, offset=entry["offset"]).reshape(shape).astype(np.float64)
    if end != len(payload):
        raise CheckpointError(f"{source}: {len(payload) - end} trailing payload bytes")
    if header.get("kind") not in KINDS:
        raise CheckpointError(f"{source}: unknown model kind {header.get('kind')!r}")
    return header, arrays


def _fill_network(net: DslNetwork, arrays: Dict[str, np.ndarray], prefix: str, source: str) -> None:
    for name, target in {**net.parameters(), **net.buffers()}.items():
        key = prefix + name
        if key not in arrays:
            raise CheckpointError(f"{source}: missing array {key!r}")
        if arrays[key].shape != target.shape:
            raise CheckpointError(f"{source}: array {key!r} has shape {arrays[key].shape}, expected {target.shape}")
        target[...] = arrays[key]


def model_from_bytes(data: bytes, expected_kind: Optional[str] = None, source: str = "<bytes>") -> Model:
    header, arrays = _parse(data, source)
    kind = header["kind"]
    if expected_kind is not None and kind != expected_kind:
        raise CheckpointError(f"{source}: holds a {kind} model, expected {expected_kind}")
    meta = header["meta"]
    try:
        if kind == "linear":
            return LinearCcaModel(
                arrays["A1"], arrays["A2"], arrays["mean1"], arrays["mean2"], arrays["correlations"], meta["r1"], meta["r2"]
            )
        net1 = network_from_layout(header["networks"]["view1"])
        net2 = network_from_layout(header["networks"]["view2"])
        _fill_network(net1, arrays, "view1.", source)
        _fill_network(net2, arrays, "view2.", source)
        if kind == "dcca":
            return DsccaModel(
                net1, net2, arrays["A1"], arrays["A2"], arrays["mean1"], arrays["mean2"], header["config"],
                meta["best_epoch"], meta["best_val_loss"], meta["history"],
            )
        state = RunningCcaState(alpha=meta["cca_alpha"], initialized=meta["cca_initialized"], updates=meta["cca_updates"])
        for name in _CCA_STATE_ARRAYS:
            setattr(state, name, arrays[f"cca.{name}"])
        return RankingModel(
            net1, net2, state, meta["margin"], arrays["A1"], arrays["A2"], meta["r1"], meta["r2"], header["config"],
            meta["best_epoch"], meta["best_val_recall"], meta["history"],
            {int(k): v for k, v in meta["best_epoch_per_k"].items()},
        )
    except KeyError as e:
        raise CheckpointError(f"{source}: missing entry {e}") from e


def load_checkpoint(path: Union[str, Path], expected_kind: Optional[str] = None) -> Model:
    """
    Raises:
        CheckpointError: unreadable file, bad magic, version mismatch, truncation, kind mismatch
    """
    try:
        data = Path(path).read_bytes()
    except ExceptionConstants.FILE_OPERATION_EXCEPTIONS as e:
        ExceptionHandler.handle_file_operation_error(e, "Checkpoint")
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    return model_from_bytes(data, expected_kind, str(path))
