"""Coarse-to-fine evolutionary search under FLOPs/parameter/depth budgets.

The loop keeps a bounded population of scored candidates. Each iteration
mutates one uniformly chosen member; candidates over budget are rejected
unscored; the population is pruned from below. Halfway through, everything
but the top 10 is discarded and mutation narrows to kernel/width only.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, TextIO

import numpy as np

from .arch import (
    ArchitectureSpec,
    BlockSpec,
    BlockType,
    KERNEL_CHOICES,
    MAX_LAYERS_PER_BLOCK,
    MOBILE_EXPANSIONS,
    count_flops,
    count_params,
    round_channels,
    structural_hash,
    validate,
)
from .entropy import DegenerateArchitectureError, StageWeights, multiscale_entropy
from .rng import SeededRng, hash64

WIDTH_SCALES = (1 / 1.5, 1 / 1.25, 1.0, 1.25, 1.5, 2.0)
DEPTH_DELTAS = (-2, -1, 1, 2)
FINE_PHASE_KEEP = 10

LOG_HEADER = "iteration\tcandidate\tscore\tstatus\treason\tpop_best"


def scoring_stream(seed: int, arch: ArchitectureSpec) -> SeededRng:
    """The stream any candidate's score is drawn from: (seed, structural hash)."""
    return SeededRng(seed, hash64("score", structural_hash(arch)))


@dataclass
class MutationFlag:
    """Coarse/fine phase switch; flips to fine exactly once, at T/2."""

    fine: bool = False


@dataclass(frozen=True)
class SearchConfig:
    initial_arch: ArchitectureSpec
    flops_budget: int
    params_budget: Optional[int] = None
    max_depth: int = 80                 # cap on total stacked layers
    iterations: int = 96000
    population_size: int = 256
    alpha: StageWeights = field(default_factory=StageWeights.default)
    resolution: int = 384               # square input for scoring and budget FLOPs
    seed: int = 0
    block_types: tuple[BlockType, ...] = (BlockType.RESIDUAL,)
    seed_population: bool = False       # pre-fill with random mutants of the initial arch
    repeats: int = 1
    gamma_mode: str = "rms"

    def check(self) -> None:
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.population_size <= 0:
            raise ValueError("population_size must be > 0")
        if self.flops_budget <= 0:
            raise ValueError("flops_budget must be > 0")
        if self.params_budget is not None and self.params_budget <= 0:
            raise ValueError("params_budget must be > 0 when set")
        if self.max_depth <= 0:
            raise ValueError("max_depth must be > 0")
        if not self.block_types:
            raise ValueError("block_types whitelist must be non-empty")
        result = validate(self.initial_arch)
        if not result:
            raise ValueError(f"initial architecture invalid: {result.error}")


@dataclass(frozen=True)
class PopulationEntry:
    arch: ArchitectureSpec
    score: float
    insertion_index: int
    hash: str


@dataclass
class Population:
    """Scored candidates, unique by structural hash, pruned from below."""

    entries: list[PopulationEntry] = field(default_factory=list)
    _hashes: set[str] = field(default_factory=set)
    _counter: int = 0

    def __len__(self) -> int:
        return len(self.entries)

    def contains(self, arch_hash: str) -> bool:
        return arch_hash in self._hashes

    def add(self, arch: ArchitectureSpec, score: float, arch_hash: Optional[str] = None) -> PopulationEntry:
        h = arch_hash if arch_hash is not None else structural_hash(arch)
        if h in self._hashes:
            raise ValueError(f"duplicate candidate {h[:12]}")
        entry = PopulationEntry(arch, score, self._counter, h)
        self._counter += 1
        self.entries.append(entry)
        self._hashes.add(h)
        return entry

    def best(self) -> PopulationEntry:
        # ties broken toward the earlier insertion
        return max(self.entries, key=lambda e: (e.score, -e.insertion_index))

    def _drop(self, removed: list[PopulationEntry]) -> None:
        for e in removed:
            self._hashes.discard(e.hash)


def maintain(pop: Population, cap: int) -> Population:
    """Remove lowest-score entries until size <= cap; earlier insertions survive ties."""
    if cap <= 0:
        raise ValueError("cap must be > 0")
    if len(pop) > cap:
        ranked = sorted(pop.entries, key=lambda e: (-e.score, e.insertion_index))
        keep, drop = ranked[:cap], ranked[cap:]
        pop._drop(drop)
        pop.entries = sorted(keep, key=lambda e: e.insertion_index)
    return pop


# ---------------------------------------------------------------------------
# Mutation
# ---------------------------------------------------------------------------

def _mutate_width(b: BlockSpec, rng: np.random.Generator) -> BlockSpec:
    out = round_channels(b.out_channels * rng.choice(WIDTH_SCALES))
    b = replace(b, out_channels=out)
    if b.block_type is BlockType.RESIDUAL:
        mid = round_channels(b.bottleneck_channels * rng.choice(WIDTH_SCALES))
        b = replace(b, bottleneck_channels=mid)
    return b


def _convert_type(b: BlockSpec, new_type: BlockType, rng: np.random.Generator) -> BlockSpec:
    if new_type is b.block_type:
        if new_type is BlockType.MOBILE:
            # re-rolling the same type still re-draws the expansion ratio
            return replace(b, expansion=int(rng.choice(MOBILE_EXPANSIONS)))
        return b
    if new_type is BlockType.RESIDUAL:
        mid = round_channels(max(8, b.out_channels // 4))
        return replace(b, block_type=new_type, bottleneck_channels=mid, expansion=0)
    if new_type is BlockType.MOBILE:
        return replace(b, block_type=new_type, bottleneck_channels=0,
                       expansion=int(rng.choice(MOBILE_EXPANSIONS)))
    return replace(b, block_type=new_type, bottleneck_channels=0, expansion=0)


def _split_if_deep(b: BlockSpec) -> list[BlockSpec]:
    # rows deeper than the cap divide into two equal blocks
    if b.num_layers <= MAX_LAYERS_PER_BLOCK:
        return [b]
    first = b.num_layers - b.num_layers // 2
    second = b.num_layers // 2
    return [
        replace(b, num_layers=first),
        replace(b, in_channels=b.out_channels, stride=1, num_layers=second),
    ]


def mutate(
    arch: ArchitectureSpec,
    rng: np.random.Generator,
    flag: MutationFlag,
    block_types: tuple[BlockType, ...] = (BlockType.RESIDUAL,),
) -> ArchitectureSpec:
    """Mutate one uniformly chosen block row; always returns a valid spec.

    Fine phase re-draws kernel and width only. Coarse phase additionally
    re-draws the block type (never for the stem row) and shifts depth by
    +-1 or +-2; rows growing past the depth cap split into two equal rows.
    Channel continuity with the downstream neighbor is repaired afterwards.
    """
    blocks = list(arch.blocks)
    idx = int(rng.integers(len(blocks)))
    b = blocks[idx]

    if not flag.fine and idx > 0:
        b = _convert_type(b, BlockType(rng.choice([t.value for t in block_types])), rng)
    b = replace(b, kernel=int(rng.choice(KERNEL_CHOICES)))
    b = _mutate_width(b, rng)
    if not flag.fine:
        depth = max(1, b.num_layers + int(rng.choice(DEPTH_DELTAS)))
        b = replace(b, num_layers=depth)

    new_rows = _split_if_deep(b)
    blocks[idx:idx + 1] = new_rows
    # repair: the next row consumes whatever this row now produces
    after = idx + len(new_rows)
    if after < len(blocks):
        blocks[after] = replace(blocks[after], in_channels=new_rows[-1].out_channels)
    mutated = ArchitectureSpec(tuple(blocks))
    result = validate(mutated)
    if not result:  # mutation must be closed over the valid space
        raise AssertionError(f"mutation produced invalid arch: {result.error}")
    return mutated


# ---------------------------------------------------------------------------
# Admission and search
# ---------------------------------------------------------------------------

Scorer = Callable[[ArchitectureSpec], float]


@dataclass(frozen=True)
class AdmitDecision:
    accepted: bool
    score: Optional[float] = None
    reason: Optional[str] = None


def default_scorer(config: SearchConfig) -> Scorer:
    """Score via multi-scale entropy on a stream derived from (seed, structural hash).

    Stream derivation makes scores reproducible regardless of evaluation
    order or parallelism.
    """

    def score(arch: ArchitectureSpec) -> float:
        report = multiscale_entropy(
            arch, config.alpha, config.resolution, scoring_stream(config.seed, arch),
            gamma_mode=config.gamma_mode, repeats=config.repeats)
        return report.score

    return score


def admit(candidate: ArchitectureSpec, config: SearchConfig, scorer: Scorer) -> AdmitDecision:
    """Budget-check first (rejections are unscored), then score."""
    if count_flops(candidate, (config.resolution, config.resolution)) > config.flops_budget:
        return AdmitDecision(False, reason="flops_budget")
    if config.params_budget is not None and count_params(candidate) > config.params_budget:
        return AdmitDecision(False, reason="params_budget")
    if candidate.total_layers > config.max_depth:
        return AdmitDecision(False, reason="depth")
    try:
        score = scorer(candidate)
    except DegenerateArchitectureError:
        return AdmitDecision(False, reason="degenerate")
    if math.isnan(score):
        return AdmitDecision(False, reason="nan_score")
    return AdmitDecision(True, score=score)


@dataclass
class SearchResult:
    best_arch: ArchitectureSpec
    best_score: float
    score_trajectory: list[float]
    iterations_run: int


InspectFn = Callable[[int, Population, str], None]


def _log_line(log: Optional[TextIO], t: int, h: str, score: Optional[float],
              status: str, reason: Optional[str], best: float) -> None:
    if log is None:
        return
    score_text = repr(score) if score is not None else "-"
    log.write(f"{t}\t{h[:12]}\t{score_text}\t{status}\t{reason or '-'}\t{best!r}\n")


def _seed_population(pop: Population, config: SearchConfig, scorer: Scorer,
                     rng: np.random.Generator, jobs: int,
                     evaluated: dict[str, AdmitDecision]) -> None:
    # optional pre-fill: random coarse mutants of the initial structure
    flag = MutationFlag(fine=False)
    attempts = 0
    pending: list[tuple[str, ArchitectureSpec]] = []
    seen = set()
    while len(pending) + len(pop) < config.population_size and attempts < config.population_size * 20:
        attempts += 1
        cand = mutate(pop.entries[0].arch, rng, flag, config.block_types)
        h = structural_hash(cand)
        if pop.contains(h) or h in seen:
            continue
        seen.add(h)
        pending.append((h, cand))
    decisions = _score_batch([c for _, c in pending], config, scorer, jobs)
    for (h, cand), decision in zip(pending, decisions):
        evaluated[h] = decision
        if decision.accepted and not pop.contains(h):
            pop.add(cand, decision.score, h)


def _score_batch(candidates: list[ArchitectureSpec], config: SearchConfig,
                 scorer: Scorer, jobs: int) -> list[AdmitDecision]:
    if jobs <= 1 or len(candidates) <= 1:
        return [admit(c, config, scorer) for c in candidates]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda c: admit(c, config, scorer), candidates))


def search(
    config: SearchConfig,
    scorer: Optional[Scorer] = None,
    log: Optional[TextIO] = None,
    inspect: Optional[InspectFn] = None,
    jobs: int = 1,
) -> SearchResult:
    """Run the full coarse-to-fine search.

    Deterministic for a fixed (config, jobs): candidate generation consumes
    a single sequential stream, and every candidate's score comes from its
    own hash-derived stream. With jobs > 1, candidates are generated and
    admitted in batches of `jobs`, all mutated from the population snapshot
    at the batch start; jobs=1 reproduces the strictly sequential loop.
    """
    config.check()
    scorer = scorer if scorer is not None else default_scorer(config)

    init_hash = structural_hash(config.initial_arch)
    initial_decision = admit(config.initial_arch, config, scorer)
    if not initial_decision.accepted:
        raise ValueError(f"initial architecture violates budget: {initial_decision.reason}")

    pop = Population()
    pop.add(config.initial_arch, initial_decision.score, init_hash)
    evaluated: dict[str, AdmitDecision] = {init_hash: initial_decision}
    loop_rng = SeededRng(config.seed, hash64("ea-loop")).generator()
    if config.seed_population:
        _seed_population(pop, config, scorer, loop_rng, jobs, evaluated)
        maintain(pop, config.population_size)

    flag = MutationFlag(fine=False)
    switch_at = config.iterations // 2
    trajectory: list[float] = []
    if log is not None:
        log.write(LOG_HEADER + "\n")

    t = 1
    while t <= config.iterations:
        if switch_at >= 1 and t == switch_at:
            if inspect is not None:
                inspect(t, pop, "pre_cull")
            maintain(pop, FINE_PHASE_KEEP)
            flag.fine = True
            if inspect is not None:
                inspect(t, pop, "post_cull")

        # batch never spans the phase switch or the horizon
        limit = config.iterations
        if not flag.fine and switch_at >= 1 and t < switch_at:
            limit = switch_at - 1
        batch = max(1, min(jobs, limit - t + 1))

        cands: list[tuple[str, ArchitectureSpec, str]] = []
        batch_seen: set[str] = set()
        for _ in range(batch):
            parent = pop.entries[int(loop_rng.integers(len(pop)))].arch
            cand = mutate(parent, loop_rng, flag, config.block_types)
            h = structural_hash(cand)
            if pop.contains(h) or h in batch_seen:
                kind = "duplicate"       # already in the population: skip outright
            elif h in evaluated:
                kind = "cached"          # seen before: reuse its decision, never re-score
            else:
                batch_seen.add(h)
                kind = "fresh"
            cands.append((h, cand, kind))

        to_score = [c for _, c, kind in cands if kind == "fresh"]
        decisions = iter(_score_batch(to_score, config, scorer, jobs))
        for h, cand, kind in cands:
            if kind == "duplicate" or (kind == "cached" and pop.contains(h)):
                status, reason, score = "DUPLICATE", None, None
            else:
                d = evaluated[h] if kind == "cached" else next(decisions)
                evaluated[h] = d
                if d.accepted:
                    pop.add(cand, d.score, h)
                    maintain(pop, config.population_size)
                    status, reason, score = "ACCEPTED", None, d.score
                else:
                    status, reason, score = "REJECTED", d.reason, None
            best = pop.best().score
            trajectory.append(best)
            _log_line(log, t, h, score, status, reason, best)
            if inspect is not None:
                inspect(t, pop, "iteration")
            t += 1

    best = pop.best()
    return SearchResult(best.arch, best.score, trajectory, config.iterations)
