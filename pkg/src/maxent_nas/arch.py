"""Backbone architecture IR: block specs, validity rules, cost counters, serialization.

An architecture is an ordered list of block rows. Each row duplicates one
convolutional unit `num_layers` times; exactly five rows carry stride 2,
partitioning the net into stages C1..C5, each at half the previous
resolution. Cost counters are analytic (no tensors involved) and count
multiply-accumulates for FLOPs; convolution biases do not exist and batch
norm is never counted.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, replace
from typing import Optional

FORMAT_VERSION = 1

KERNEL_CHOICES = (3, 5)
MOBILE_EXPANSIONS = (1, 3, 6)
MAX_LAYERS_PER_BLOCK = 10
CHANNEL_DIVISOR = 8
NUM_STAGES = 5


class BlockType(str, enum.Enum):
    CONV = "Conv"            # plain convolution (stem and vanilla rows)
    RESIDUAL = "ResBlock"    # 1x1 reduce -> kxk -> 1x1 expand, residual add
    MOBILE = "MBBlock"       # 1x1 expand -> kxk depthwise -> 1x1 project


@dataclass(frozen=True)
class BlockSpec:
    """One block row: the unit the search mutates.

    `num_layers` counts stacked units; the first unit carries the row's
    stride and maps in_channels -> out_channels, the rest run at stride 1
    with out_channels -> out_channels.
    """

    block_type: BlockType
    kernel: int
    in_channels: int
    out_channels: int
    stride: int
    bottleneck_channels: int = 0   # residual rows only
    num_layers: int = 1
    expansion: int = 0             # mobile rows only, one of {1, 3, 6}


@dataclass(frozen=True)
class ArchitectureSpec:
    """Ordered block rows forming a multi-stage backbone."""

    blocks: tuple[BlockSpec, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "blocks", tuple(self.blocks))

    @property
    def total_layers(self) -> int:
        """Stacked-unit count; the quantity the search depth budget caps."""
        return sum(b.num_layers for b in self.blocks)

    def stage_of_block(self) -> tuple[int, ...]:
        """Stage index (1-based) per block; stride-2 rows open a new stage."""
        stages = []
        stage = 0
        for b in self.blocks:
            if b.stride == 2:
                stage += 1
            stages.append(stage)
        return tuple(stages)


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    error: Optional[str] = None
    block_index: Optional[int] = None

    def __bool__(self) -> bool:
        return self.ok


class InvalidArchitectureError(ValueError):
    pass


def _check_block(i: int, b: BlockSpec, prev_out: Optional[int]) -> Optional[str]:
    if b.kernel not in KERNEL_CHOICES:
        return f"kernel not in {{3,5}} (got {b.kernel})"
    if b.stride not in (1, 2):
        return f"stride not in {{1,2}} (got {b.stride})"
    if b.num_layers < 1:
        return f"num_layers must be >= 1 (got {b.num_layers})"
    if b.num_layers > MAX_LAYERS_PER_BLOCK:
        return f"num_layers exceeds {MAX_LAYERS_PER_BLOCK} (got {b.num_layers})"
    if b.in_channels <= 0 or b.out_channels <= 0:
        return "channel counts must be positive"
    # The stem consumes raw image channels; every other width is 8-aligned.
    if i > 0 and b.in_channels % CHANNEL_DIVISOR != 0:
        return f"in_channels not a multiple of {CHANNEL_DIVISOR} (got {b.in_channels})"
    if b.out_channels % CHANNEL_DIVISOR != 0:
        return f"out_channels not a multiple of {CHANNEL_DIVISOR} (got {b.out_channels})"
    if prev_out is not None and b.in_channels != prev_out:
        return f"in_channels {b.in_channels} != previous out_channels {prev_out}"
    if b.block_type is BlockType.RESIDUAL:
        if b.bottleneck_channels <= 0:
            return "residual block needs bottleneck_channels > 0"
        if b.expansion != 0:
            return "residual block must not set expansion"
    elif b.block_type is BlockType.MOBILE:
        if b.expansion not in MOBILE_EXPANSIONS:
            return f"mobile expansion not in {MOBILE_EXPANSIONS} (got {b.expansion})"
        if b.bottleneck_channels != 0:
            return "mobile block must not set bottleneck_channels"
    else:
        if b.bottleneck_channels != 0 or b.expansion != 0:
            return "plain conv block must not set bottleneck/expansion"
    return None


def validate_blocks(arch: ArchitectureSpec) -> ValidationResult:
    """Per-block validity only (field ranges and channel continuity).

    Sufficient for cost counting; does not require the five-stage topology,
    so partial nets (e.g. a bare stem) can still be analyzed.
    """
    if not arch.blocks:
        return ValidationResult(False, "architecture has no blocks")
    prev_out: Optional[int] = None
    for i, b in enumerate(arch.blocks):
        err = _check_block(i, b, prev_out)
        if err is not None:
            return ValidationResult(False, err, i)
        prev_out = b.out_channels
    return ValidationResult(True)


def validate(arch: ArchitectureSpec) -> ValidationResult:
    """Full validity: block rules plus the five-stage downsampling topology."""
    res = validate_blocks(arch)
    if not res:
        return res
    if arch.blocks[0].stride != 2:
        return ValidationResult(False, "first block must open stage C1 with stride 2", 0)
    n_down = sum(1 for b in arch.blocks if b.stride == 2)
    if n_down != NUM_STAGES:
        return ValidationResult(False, f"stage count != {NUM_STAGES} (got {n_down} stride-2 blocks)")
    return ValidationResult(True)


def _require(result: ValidationResult) -> None:
    if not result:
        where = "" if result.block_index is None else f" at block {result.block_index}"
        raise InvalidArchitectureError(f"invalid architecture{where}: {result.error}")


# ---------------------------------------------------------------------------
# Unit expansion: the single source of truth for what a block row contains.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvOp:
    """One weight tensor application: out_ch x (in_ch/groups) x k x k."""

    in_channels: int
    out_channels: int
    kernel: int
    stride: int
    groups: int = 1

    @property
    def weight_count(self) -> int:
        return self.out_channels * (self.in_channels // self.groups) * self.kernel * self.kernel


@dataclass(frozen=True)
class Unit:
    """One stacked unit of a block row, fully expanded into conv ops.

    `convs` is the main path (ReLU between consecutive entries); `projection`
    is the residual shortcut conv, or None for an identity shortcut, with
    `residual` saying whether any shortcut is added at all.
    """

    block_index: int
    kind: BlockType
    stride: int
    convs: tuple[ConvOp, ...]
    projection: Optional[ConvOp]
    residual: bool
    stage: int
    stage_end: bool = False


def _unit_ops(b: BlockSpec, cin: int, stride: int) -> tuple[tuple[ConvOp, ...], Optional[ConvOp], bool]:
    k, cout = b.kernel, b.out_channels
    if b.block_type is BlockType.CONV:
        return (ConvOp(cin, cout, k, stride),), None, False
    if b.block_type is BlockType.RESIDUAL:
        mid = b.bottleneck_channels
        convs = (
            ConvOp(cin, mid, 1, 1),
            ConvOp(mid, mid, k, stride),
            ConvOp(mid, cout, 1, 1),
        )
        proj = ConvOp(cin, cout, 1, stride) if (cin != cout or stride != 1) else None
        return convs, proj, True
    # mobile inverted bottleneck; identity residual only when shapes agree
    hidden = cin * b.expansion
    convs: list[ConvOp] = []
    if b.expansion != 1:
        convs.append(ConvOp(cin, hidden, 1, 1))
    convs.append(ConvOp(hidden, hidden, k, stride, groups=hidden))
    convs.append(ConvOp(hidden, cout, 1, 1))
    residual = stride == 1 and cin == cout
    return tuple(convs), None, residual


def iter_units(arch: ArchitectureSpec) -> list[Unit]:
    """Expand block rows into the ordered unit list used by cost and inference."""
    units: list[Unit] = []
    stage = 0
    for bi, b in enumerate(arch.blocks):
        for li in range(b.num_layers):
            cin = b.in_channels if li == 0 else b.out_channels
            stride = b.stride if li == 0 else 1
            if stride == 2:
                stage += 1
            convs, proj, residual = _unit_ops(b, cin, stride)
            units.append(Unit(bi, b.block_type, stride, convs, proj, residual, stage))
    # mark the last unit of every stage (its pre-activation map is scored)
    last_of_stage: dict[int, int] = {}
    for idx, u in enumerate(units):
        last_of_stage[u.stage] = idx
    ends = set(last_of_stage.values())
    return [replace(u, stage_end=(i in ends)) for i, u in enumerate(units)]


# ---------------------------------------------------------------------------
# Analytic cost model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CostReport:
    flops: int    # multiply-accumulates at the given resolution
    params: int   # convolution weight count (biases absent, BN not counted)
    depth: int    # convolution layers on the main path (projections excluded)


def _out_size(size: int, stride: int) -> int:
    # "same" padding: output spatial size = ceil(input / stride)
    return -(-size // stride)


def count_params(arch: ArchitectureSpec) -> int:
    """Total convolution weight count, projection shortcuts included."""
    _require(validate_blocks(arch))
    total = 0
    for u in iter_units(arch):
        total += sum(c.weight_count for c in u.convs)
        if u.projection is not None:
            total += u.projection.weight_count
    return total


def count_flops(arch: ArchitectureSpec, resolution: tuple[int, int]) -> int:
    """Multiply-accumulate count for one forward pass at (height, width)."""
    _require(validate_blocks(arch))
    h, w = resolution
    if h <= 0 or w <= 0:
        raise ValueError(f"resolution must be positive (got {resolution})")
    total = 0
    for u in iter_units(arch):
        uh, uw = h, w
        for c in u.convs:
            oh, ow = _out_size(uh, c.stride), _out_size(uw, c.stride)
            total += c.weight_count * oh * ow
            uh, uw = oh, ow
        if u.projection is not None:
            p = u.projection
            total += p.weight_count * _out_size(h, p.stride) * _out_size(w, p.stride)
        h, w = _out_size(h, u.stride), _out_size(w, u.stride)
    return total


def count_depth(arch: ArchitectureSpec) -> int:
    """Main-path convolution layers (projection shortcuts are parallel, not depth)."""
    _require(validate_blocks(arch))
    return sum(len(u.convs) for u in iter_units(arch))


def cost_report(arch: ArchitectureSpec, resolution: tuple[int, int]) -> CostReport:
    return CostReport(
        flops=count_flops(arch, resolution),
        params=count_params(arch),
        depth=count_depth(arch),
    )


# ---------------------------------------------------------------------------
# Serialization: versioned JSON document, one entry per block row
# ---------------------------------------------------------------------------

class ParseError(ValueError):
    """Malformed architecture document; message carries the position or field."""


def _block_to_doc(b: BlockSpec) -> dict:
    doc = {
        "block": b.block_type.value,
        "kernel": b.kernel,
        "in": b.in_channels,
        "out": b.out_channels,
        "stride": b.stride,
        "bottleneck": b.bottleneck_channels,
        "layers": b.num_layers,
    }
    if b.block_type is BlockType.MOBILE:
        doc["expansion"] = b.expansion
    return doc


def serialize(arch: ArchitectureSpec) -> str:
    """Canonical JSON text; stable bytes for hashing and golden fixtures."""
    doc = {
        "format_version": FORMAT_VERSION,
        "blocks": [_block_to_doc(b) for b in arch.blocks],
    }
    return json.dumps(doc, indent=2) + "\n"


def _field(entry: dict, key: str, index: int, default=None) -> object:
    if key in entry:
        return entry[key]
    if default is not None:
        return default
    raise ParseError(f"blocks[{index}]: missing field '{key}'")


def _int_field(entry: dict, key: str, index: int, default=None) -> int:
    val = _field(entry, key, index, default)
    if isinstance(val, bool) or not isinstance(val, int):
        raise ParseError(f"blocks[{index}].{key}: expected integer, got {val!r}")
    return val


def parse(text: str) -> ArchitectureSpec:
    """Parse an architecture document; inverse of serialize."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported format_version {version!r} (expected {FORMAT_VERSION})")
    raw_blocks = doc.get("blocks")
    if not isinstance(raw_blocks, list) or not raw_blocks:
        raise ParseError("'blocks' must be a non-empty array")
    blocks = []
    for i, entry in enumerate(raw_blocks):
        if not isinstance(entry, dict):
            raise ParseError(f"blocks[{i}]: expected object")
        type_name = _field(entry, "block", i)
        try:
            btype = BlockType(type_name)
        except ValueError:
            raise ParseError(f"blocks[{i}].block: unknown block type {type_name!r}") from None
        blocks.append(BlockSpec(
            block_type=btype,
            kernel=_int_field(entry, "kernel", i),
            in_channels=_int_field(entry, "in", i),
            out_channels=_int_field(entry, "out", i),
            stride=_int_field(entry, "stride", i),
            bottleneck_channels=_int_field(entry, "bottleneck", i, default=0),
            num_layers=_int_field(entry, "layers", i),
            expansion=_int_field(entry, "expansion", i, default=0),
        ))
    return ArchitectureSpec(tuple(blocks))


def structural_hash(arch: ArchitectureSpec) -> str:
    """Content hash of the canonical serialization; population identity key."""
    return hashlib.sha256(serialize(arch).encode("utf-8")).hexdigest()


def round_channels(value: float, divisor: int = CHANNEL_DIVISOR) -> int:
    """Round to the nearest positive multiple of `divisor`."""
    return max(divisor, int(divisor * round(value / divisor)))
