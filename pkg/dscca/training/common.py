"""
Pieces shared by the DS-DCCA and DS-Ranking trainers: network construction
(including the widened baselines), mini-batching and optimizer plumbing.
"""
from typing import Dict, Iterator, List, Sequence, Tuple

import numpy as np

from dscca.config.experiment_config import ExperimentConfig, ResolvedArchitecture, resolve_ablation
from dscca.nn.core import RmspropState, rmsprop_step
from dscca.nn.dsl import DslNetwork, build_dsl_network
from dscca.utils.exception_handler import NumericalError, ShapeError, TrainingAbortedError
from dscca.utils.logging_utils import LoggingUtils

WIDEN_TOLERANCE = 0.05
VIEW_PREFIXES = ("view1.", "view2.")


def mlp_parameter_count(sizes: Sequence[int]) -> int:
    return int(sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:])))


def scaler_parameter_count(
    input_dim: int, hidden: Sequence[int], output_dim: int, scaler_hidden: Sequence[int], conditioning: str
) -> int:
    """Parameters of a dynamic head's scaling network, computed without building it"""
    z_dim = hidden[-1] if hidden else input_dim
    in_dim = {"z_only": z_dim, "x_only": input_dim, "z_and_x": z_dim + input_dim}[conditioning]
    return mlp_parameter_count([in_dim, *scaler_hidden, z_dim * output_dim + output_dim])


def widen_hidden(
    input_dim: int, hidden: Sequence[int], output_dim: int, target: int, which: str
) -> Tuple[List[int], int]:
    """
    Add the same number of units to the widened hidden layers so the extra
    parameter count comes as close as possible to target.

    Args:
        which: "wide2" widens the last hidden layer, "wide12" every hidden layer

    Returns:
        (widened sizes, added parameter count)
    """
    hidden = list(hidden)
    if not hidden:
        raise ShapeError("wide ablations need at least one hidden layer")
    widened_layers = range(len(hidden)) if which == "wide12" else [len(hidden) - 1]
    base = mlp_parameter_count([input_dim, *hidden, output_dim])

    def added(extra: int) -> int:
        sizes = [h + extra if i in widened_layers else h for i, h in enumerate(hidden)]
        return mlp_parameter_count([input_dim, *sizes, output_dim]) - base

    high = 1
    while added(high) < target:
        high *= 2
    low = 0
    while high - low > 1:
        middle = (low + high) // 2
        if added(middle) < target:
            low = middle
        else:
            high = middle
    extra = low if abs(added(low) - target) <= abs(added(high) - target) else high
    if target and abs(added(extra) - target) > WIDEN_TOLERANCE * target:
        LoggingUtils.log_warning(
            "Training", "Widened layers add {added} parameters, target {target}", added=added(extra), target=target
        )
    sizes = [h + extra if i in widened_layers else h for i, h in enumerate(hidden)]
    return sizes, added(extra)


def build_networks(config: ExperimentConfig, dims: Tuple[int, int]) -> Tuple[DslNetwork, DslNetwork, ResolvedArchitecture]:
    """Both views' feature extractors for the config's mode and ablation"""
    resolved = resolve_ablation(config)
    arch = config.architecture
    hidden = [list(resolved.hidden1), list(resolved.hidden2)]
    if resolved.widen:
        for view in range(2):
            target = scaler_parameter_count(dims[view], hidden[view], resolved.output_dim, arch.scaler_hidden, arch.conditioning)
            hidden[view], added = widen_hidden(dims[view], hidden[view], resolved.output_dim, target, resolved.widen)
            LoggingUtils.log_info(
                "Training",
                "View {view} widened to {sizes} (+{added} parameters, scaler equivalent {target})",
                view=view + 1,
                sizes=hidden[view],
                added=added,
                target=target,
            )
    networks = [
        build_dsl_network(
            dims[view],
            hidden[view],
            resolved.output_dim,
            variant=resolved.variant,
            seed=config.training.seed,
            view=view + 1,
            scaler_hidden=arch.scaler_hidden,
            conditioning=arch.conditioning,
            bn_momentum=arch.bn_momentum,
            bn_epsilon=arch.bn_epsilon,
        )
        for view in range(2)
    ]
    return networks[0], networks[1], resolved


def shuffle_rng(seed: int) -> np.random.Generator:
    """Batch-order stream, independent of the parameter initialization streams"""
    return np.random.default_rng(np.random.SeedSequence([seed, 0]))


def iterate_batches(n: int, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    """
    Shuffled index batches covering all n samples. The remainder is spread over
    the batches, so no batch is smaller than batch_size (unless n itself is).
    """
    order = rng.permutation(n)
    count = max(1, n // batch_size)
    yield from np.array_split(order, count)


def check_batching(n_train: int, batch_size: int, d: int) -> None:
    if batch_size <= d:
        raise ShapeError(f"batch size {batch_size} must exceed d={d}")
    if min(n_train, batch_size) <= d:
        raise ShapeError(f"training split of {n_train} samples must exceed d={d}")


def trainable_parameters(net1: DslNetwork, net2: DslNetwork) -> Dict[str, np.ndarray]:
    params = {}
    for prefix, net in zip(VIEW_PREFIXES, (net1, net2)):
        params.update({prefix + name: p for name, p in net.trainable_parameters().items()})
    return params


def optimizer_step(
    net1: DslNetwork,
    net2: DslNetwork,
    grads1: Dict[str, np.ndarray],
    grads2: Dict[str, np.ndarray],
    optimizer: RmspropState,
    epoch: int,
    batch: int,
) -> None:
    """One RMSprop update of every parameter active in the heads' current mode"""
    params = trainable_parameters(net1, net2)
    grads = {}
    for prefix, view_grads in zip(VIEW_PREFIXES, (grads1, grads2)):
        grads.update({prefix + name: g for name, g in view_grads.items() if prefix + name in params})
    try:
        rmsprop_step(params, grads, optimizer)
    except NumericalError as e:
        raise TrainingAbortedError(str(e), epoch, batch) from e


def activate_heads(net1: DslNetwork, net2: DslNetwork, epoch: int) -> None:
    for net in (net1, net2):
        net.head.activate()
    LoggingUtils.log_info("Training", "Warm-up finished, {mode} heads active from epoch {epoch}", mode=net1.head.mode, epoch=epoch)


def make_optimizer(config: ExperimentConfig) -> RmspropState:
    t = config.training
    return RmspropState(lr=t.lr, alpha_smoothing=t.rmsprop_alpha, eps=t.rmsprop_eps, weight_decay=t.weight_decay)
