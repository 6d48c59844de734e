"""Entropy scoring: per-stage Gaussian-bound entropy and the weighted multi-scale score.

The differential entropy of any distribution is bounded by that of a
Gaussian with the same variance, so log-variance of a feature map stands in
for its entropy (constants dropped). Each stage's last pre-activation map
contributes numel * (0.5*log(var) + sum(log(gamma))) where the gamma term
undoes the numerical rescaling applied during inference; the architecture
score is the weighted sum over stages C1..C5.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .arch import ArchitectureSpec, validate
from .engine import (
    STAGE_NAMES,
    FeatureMap,
    GAMMA_MODES,
    GammaFn,
    gaussian_input,
    rescaled_forward,
)
from .rng import SeededRng

INPUT_CHANNELS = 3


class DegenerateFeatureMapError(ValueError):
    """Zero-variance or undersized map; the candidate carries no signal."""


class DegenerateArchitectureError(ValueError):
    """A weighted stage of the architecture produced a degenerate map."""


@dataclass(frozen=True)
class StageWeights:
    """Non-negative weight per stage C1..C5; at least one must be positive."""

    alpha: tuple[float, float, float, float, float]

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        if len(self.alpha) != 5:
            raise ValueError(f"expected 5 stage weights, got {len(self.alpha)}")
        if any(a < 0 for a in self.alpha):
            raise ValueError("stage weights must be non-negative")
        if not any(a > 0 for a in self.alpha):
            raise ValueError("at least one stage weight must be positive")

    @classmethod
    def default(cls) -> "StageWeights":
        # deep stages dominate: C5 feeds the whole upper pyramid
        return cls((0.0, 0.0, 1.0, 1.0, 6.0))

    @classmethod
    def parse(cls, text: str) -> "StageWeights":
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 5:
            raise ValueError(f"expected 5 comma-separated weights, got {text!r}")
        return cls(tuple(float(p) for p in parts))


@dataclass(frozen=True)
class EntropyReport:
    """Per-stage entropies and their weighted sum.

    score == sum over stages with alpha > 0 of alpha * stage_entropy; stages
    with zero weight may legitimately be -inf (degenerate but unweighted).
    """

    stage_entropy: tuple[float, float, float, float, float]
    score: float
    gamma_log_sums: tuple[float, float, float, float, float]

    def as_dict(self) -> dict:
        return {
            "stage_entropy": list(self.stage_entropy),
            "score": self.score,
            "gamma_log_sums": list(self.gamma_log_sums),
        }


def gaussian_entropy(sigma: float) -> float:
    """Entropy of N(mu, sigma^2) with additive constants dropped: log(sigma)."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return math.log(sigma)


def stage_entropy(pre_activation_map: FeatureMap, gamma_log_sum: float) -> float:
    """Feature-map entropy: numel * (0.5*log(var) + accumulated log-gammas).

    Variance is the biased population variance over all C*H*W elements.
    Raises DegenerateFeatureMapError on constant or undersized maps.
    """
    n = pre_activation_map.numel
    if n < 2:
        raise DegenerateFeatureMapError(f"map has {n} element(s), need >= 2")
    var = float(np.var(pre_activation_map.data))
    if not (var > 0.0 and math.isfinite(var)):
        raise DegenerateFeatureMapError(f"degenerate map variance {var}")
    return n * (0.5 * math.log(var) + gamma_log_sum)


def _weighted_score(alpha: tuple[float, ...], entropies: tuple[float, ...]) -> float:
    # zero-weight stages are skipped outright so alpha=(0,0,0,0,1) reproduces
    # H(C5) exactly and degenerate unweighted stages cannot poison the sum
    score = 0.0
    for a, h in zip(alpha, entropies):
        if a != 0.0:
            score += a * h
    return score


def multiscale_entropy(
    arch: ArchitectureSpec,
    weights: StageWeights,
    resolution: int,
    rng: SeededRng,
    gamma_mode: str | GammaFn = "rms",
    repeats: int = 1,
) -> EntropyReport:
    """Score an architecture at (3, resolution, resolution) Gaussian input.

    Deterministic given (arch, rng, weights, resolution). With repeats > 1
    the per-stage entropies are averaged over independent substreams and the
    score is recomputed from the averages.
    """
    result = validate(arch)
    if not result:
        raise ValueError(f"invalid architecture: {result.error}")
    if resolution % 32 != 0:
        raise ValueError(f"resolution must be divisible by 32, got {resolution}")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if isinstance(gamma_mode, str):
        if gamma_mode not in GAMMA_MODES:
            raise ValueError(f"unknown gamma_mode {gamma_mode!r} (choose from {sorted(GAMMA_MODES)})")
        gamma_fn = GAMMA_MODES[gamma_mode]
    else:
        gamma_fn = gamma_mode

    per_repeat: list[tuple[tuple[float, ...], tuple[float, ...]]] = []
    for r in range(repeats):
        gen = (rng if repeats == 1 else rng.substream(r)).generator()
        x = gaussian_input(INPUT_CHANNELS, resolution, resolution, gen)
        fwd = rescaled_forward(arch, x, gen, gamma_fn=gamma_fn)
        entropies = []
        log_sums = []
        degenerate_weighted = None
        for i, name in enumerate(STAGE_NAMES):
            log_sum = fwd.stage_gamma_log_sums[name]
            log_sums.append(log_sum)
            try:
                h = stage_entropy(fwd.stage_maps[name], log_sum)
            except DegenerateFeatureMapError as exc:
                h = float("-inf")
                if weights.alpha[i] > 0 and degenerate_weighted is None:
                    degenerate_weighted = (name, exc)
            entropies.append(h)
        if degenerate_weighted is not None:
            name, exc = degenerate_weighted
            raise DegenerateArchitectureError(
                f"degenerate architecture: stage {name}: {exc}") from exc
        per_repeat.append((tuple(entropies), tuple(log_sums)))

    if repeats == 1:
        entropies, log_sums = per_repeat[0]
    else:
        entropies = tuple(
            float(np.mean([pr[0][i] for pr in per_repeat])) for i in range(5))
        log_sums = tuple(
            float(np.mean([pr[1][i] for pr in per_repeat])) for i in range(5))
    return EntropyReport(entropies, _weighted_score(weights.alpha, entropies), log_sums)
