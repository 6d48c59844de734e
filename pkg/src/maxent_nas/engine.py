"""Minimal tensor inference engine for entropy scoring.

Implements exactly what scoring needs and nothing more: Gaussian-initialized
convolutions (cross-correlation, "same" padding), ReLU, residual adds, and
per-unit rescaling that keeps activations O(1) at arbitrary depth. No
gradients, no trained weights, no framework.

All arithmetic is float64. Convolution is im2col + matmul; the reduction
order is the row-major (channel, ky, kx) contraction of the patch matrix,
so results are bit-reproducible for a fixed NumPy/BLAS build.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .arch import ArchitectureSpec, ConvOp, Unit, iter_units

STAGE_NAMES = ("C1", "C2", "C3", "C4", "C5")


class NonFiniteActivationError(ArithmeticError):
    """A forward pass produced inf/nan; carries the offending unit index."""

    def __init__(self, unit_index: int):
        super().__init__(f"non-finite activation at unit {unit_index}")
        self.unit_index = unit_index


@dataclass
class FeatureMap:
    """Dense (channels, height, width) float64 array, C-contiguous row-major."""

    data: np.ndarray

    def __post_init__(self) -> None:
        if self.data.ndim != 3:
            raise ValueError(f"feature map must be 3-d, got shape {self.data.shape}")
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def numel(self) -> int:
        return self.data.size


@dataclass
class RescaleLedger:
    """Per-unit rescale factors applied during a forward pass."""

    gammas: list[float]

    def log_sum(self) -> float:
        return float(sum(math.log(g) for g in self.gammas))


def gaussian_input(channels: int, height: int, width: int, rng: np.random.Generator) -> FeatureMap:
    """I.i.d. standard-normal input map."""
    if channels <= 0 or height <= 0 or width <= 0:
        raise ValueError("input dimensions must be positive")
    return FeatureMap(rng.standard_normal((channels, height, width)))


def _same_pad(size: int, kernel: int, stride: int) -> tuple[int, int]:
    # "same" padding: out = ceil(in / stride); pad split low/high, extra on the high side
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    lo = total // 2
    return lo, total - lo


def conv2d(x: FeatureMap, weights: np.ndarray, stride: int = 1, groups: int = 1) -> FeatureMap:
    """Cross-correlation with "same" padding and zero bias.

    `weights` has shape (out_channels, in_channels // groups, k, k).
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 4 or w.shape[2] != w.shape[3]:
        raise ValueError(f"weights must be (out, in/groups, k, k), got {w.shape}")
    cout, cin_g, k, _ = w.shape
    cin = x.channels
    if cin_g * groups != cin or cout % groups != 0:
        raise ValueError(
            f"channel mismatch: input {cin}, weights {w.shape}, groups {groups}")

    ph_lo, ph_hi = _same_pad(x.height, k, stride)
    pw_lo, pw_hi = _same_pad(x.width, k, stride)
    padded = np.pad(x.data, ((0, 0), (ph_lo, ph_hi), (pw_lo, pw_hi)))
    oh = -(-x.height // stride)
    ow = -(-x.width // stride)

    # im2col: patches laid out (oh*ow, cin, k, k) via strided view, then GEMM
    s = padded.strides
    view = np.lib.stride_tricks.as_strided(
        padded,
        shape=(oh, ow, cin, k, k),
        strides=(s[1] * stride, s[2] * stride, s[0], s[1], s[2]),
        writeable=False,
    )
    if groups == 1:
        cols = view.reshape(oh * ow, cin * k * k)
        out = cols @ w.reshape(cout, -1).T                      # (oh*ow, cout)
        result = out.T.reshape(cout, oh, ow)
    else:
        og = cout // groups
        result = np.empty((cout, oh, ow), dtype=np.float64)
        for g in range(groups):
            sub = view[:, :, g * cin_g:(g + 1) * cin_g].reshape(oh * ow, cin_g * k * k)
            wg = w[g * og:(g + 1) * og].reshape(og, -1)
            result[g * og:(g + 1) * og] = (sub @ wg.T).T.reshape(og, oh, ow)
    return FeatureMap(result)


def relu(x: FeatureMap) -> FeatureMap:
    return FeatureMap(np.maximum(x.data, 0.0))


# --- rescale policies -------------------------------------------------------

def gamma_rms(post_activation: np.ndarray) -> float:
    """Root-mean-square of the map; the default rescaler (norm / sqrt(numel))."""
    return float(np.sqrt(np.mean(np.square(post_activation))))


def gamma_unit(post_activation: np.ndarray) -> float:
    """No rescaling; useful for shallow nets and the compensation identity."""
    return 1.0


GammaFn = Callable[[np.ndarray], float]

GAMMA_MODES: dict[str, GammaFn] = {
    "rms": gamma_rms,
    "unit": gamma_unit,
}


@dataclass
class ForwardResult:
    """Outputs of one rescaled forward pass.

    `stage_maps` holds the last pre-activation map of each stage (after the
    residual add, before ReLU and before that unit's own rescale).
    `stage_gamma_log_sums` is the cumulative sum of log(gamma) applied
    strictly before each captured map; adding it to the map's log-std
    recovers the unrescaled entropy.
    """

    stage_maps: dict[str, FeatureMap]
    ledger: RescaleLedger
    stage_gamma_log_sums: dict[str, float]
    final_map: FeatureMap


def _draw_weights(op: ConvOp, rng: np.random.Generator) -> np.ndarray:
    # every weight i.i.d. N(0,1); the rescaler absorbs the magnitude growth
    return rng.standard_normal(
        (op.out_channels, op.in_channels // op.groups, op.kernel, op.kernel))


def _run_unit(u: Unit, x: FeatureMap, rng: np.random.Generator) -> FeatureMap:
    y = x
    last = len(u.convs) - 1
    for j, op in enumerate(u.convs):
        y = conv2d(y, _draw_weights(op, rng), stride=op.stride, groups=op.groups)
        if j != last:
            y = relu(y)
    if u.residual:
        if u.projection is not None:
            p = u.projection
            shortcut = conv2d(x, _draw_weights(p, rng), stride=p.stride)
        else:
            shortcut = x
        y = FeatureMap(y.data + shortcut.data)
    return y


def rescaled_forward(
    arch: ArchitectureSpec,
    input_map: FeatureMap,
    rng: np.random.Generator,
    gamma_fn: GammaFn = gamma_rms,
) -> ForwardResult:
    """Forward pass with per-unit rescaling and stage-map capture.

    Each unit's post-activation output is divided by gamma = gamma_fn(map);
    a zero-valued map keeps gamma = 1 and simply propagates zeros. Weights
    are drawn from `rng` in unit order, so identical (arch, rng state) gives
    bit-identical results.
    """
    units = iter_units(arch)
    if units and units[0].convs[0].in_channels != input_map.channels:
        raise ValueError(
            f"input has {input_map.channels} channels, stem expects "
            f"{units[0].convs[0].in_channels}")

    x = input_map
    gammas: list[float] = []
    log_sum = 0.0
    stage_maps: dict[str, FeatureMap] = {}
    stage_sums: dict[str, float] = {}
    final = input_map
    for idx, u in enumerate(units):
        with np.errstate(over="ignore", invalid="ignore"):  # detected right below
            h = _run_unit(u, x, rng)
        if not np.all(np.isfinite(h.data)):
            raise NonFiniteActivationError(idx)
        if u.stage_end:
            name = STAGE_NAMES[u.stage - 1] if u.stage <= len(STAGE_NAMES) else f"C{u.stage}"
            stage_maps[name] = h
            stage_sums[name] = log_sum
        final = h
        activated = relu(h)
        gamma = gamma_fn(activated.data)
        if not (gamma > 0.0 and math.isfinite(gamma)):
            gamma = 1.0
        gammas.append(gamma)
        log_sum += math.log(gamma)
        x = FeatureMap(activated.data / gamma)
    return ForwardResult(stage_maps, RescaleLedger(gammas), stage_sums, final)
