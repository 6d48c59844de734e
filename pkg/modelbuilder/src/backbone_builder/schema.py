"""Validation of the versioned architecture JSON document.

Deliberately independent of the search engine's own parser: this side of
the bridge re-checks everything it relies on and names the offending field
on failure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

SUPPORTED_VERSION = 1
BLOCK_TYPES = ("Conv", "ResBlock", "MBBlock")
MOBILE_EXPANSIONS = (1, 3, 6)


class SchemaError(ValueError):
    """Document does not satisfy the architecture schema; names the field."""


@dataclass(frozen=True)
class BlockRow:
    block: str
    kernel: int
    in_channels: int
    out_channels: int
    stride: int
    bottleneck: int
    layers: int
    expansion: int


def _int_field(entry: dict, key: str, where: str, default=None, minimum=None) -> int:
    if key not in entry:
        if default is not None:
            return default
        raise SchemaError(f"{where}.{key}: missing")
    val = entry[key]
    if isinstance(val, bool) or not isinstance(val, int):
        raise SchemaError(f"{where}.{key}: expected integer, got {val!r}")
    if minimum is not None and val < minimum:
        raise SchemaError(f"{where}.{key}: must be >= {minimum}, got {val}")
    return val


def load_document(text: str) -> list[BlockRow]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc.msg} (line {exc.lineno})") from exc
    if not isinstance(doc, dict):
        raise SchemaError("top level: expected object")
    version = doc.get("format_version")
    if version != SUPPORTED_VERSION:
        raise SchemaError(f"format_version: expected {SUPPORTED_VERSION}, got {version!r}")
    blocks = doc.get("blocks")
    if not isinstance(blocks, list) or not blocks:
        raise SchemaError("blocks: expected non-empty array")

    rows: list[BlockRow] = []
    prev_out = None
    for i, entry in enumerate(blocks):
        where = f"blocks[{i}]"
        if not isinstance(entry, dict):
            raise SchemaError(f"{where}: expected object")
        btype = entry.get("block")
        if btype not in BLOCK_TYPES:
            raise SchemaError(f"{where}.block: unsupported block type {btype!r}")
        row = BlockRow(
            block=btype,
            kernel=_int_field(entry, "kernel", where, minimum=1),
            in_channels=_int_field(entry, "in", where, minimum=1),
            out_channels=_int_field(entry, "out", where, minimum=1),
            stride=_int_field(entry, "stride", where, minimum=1),
            bottleneck=_int_field(entry, "bottleneck", where, default=0, minimum=0),
            layers=_int_field(entry, "layers", where, minimum=1),
            expansion=_int_field(entry, "expansion", where, default=0, minimum=0),
        )
        if row.kernel % 2 == 0:
            raise SchemaError(f"{where}.kernel: must be odd, got {row.kernel}")
        if row.stride not in (1, 2):
            raise SchemaError(f"{where}.stride: must be 1 or 2, got {row.stride}")
        if row.block == "ResBlock" and row.bottleneck <= 0:
            raise SchemaError(f"{where}.bottleneck: required for ResBlock")
        if row.block == "MBBlock" and row.expansion not in MOBILE_EXPANSIONS:
            raise SchemaError(
                f"{where}.expansion: must be one of {MOBILE_EXPANSIONS} for MBBlock")
        if prev_out is not None and row.in_channels != prev_out:
            raise SchemaError(
                f"{where}.in: {row.in_channels} does not match previous out {prev_out}")
        prev_out = row.out_channels
        rows.append(row)
    return rows


def analytic_conv_params(rows: list[BlockRow]) -> int:
    """Expected convolution weight count, straight from the document.

    Independent of module introspection so the two can cross-check.
    """
    total = 0
    for row in rows:
        for rep in range(row.layers):
            cin = row.in_channels if rep == 0 else row.out_channels
            stride = row.stride if rep == 0 else 1
            k = row.kernel
            if row.block == "Conv":
                total += cin * row.out_channels * k * k
            elif row.block == "ResBlock":
                mid = row.bottleneck
                total += cin * mid + mid * mid * k * k + mid * row.out_channels
                if cin != row.out_channels or stride != 1:
                    total += cin * row.out_channels
            else:
                hidden = cin * row.expansion
                if row.expansion != 1:
                    total += cin * hidden
                total += hidden * k * k  # depthwise: one kxk filter per channel
                total += hidden * row.out_channels
    return total
