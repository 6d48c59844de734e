"""Independent reference implementations the test suite checks the library against.

Nothing here imports the library's unit expansion or conv paths; these are
deliberately separate, slow, and obvious.
"""

from __future__ import annotations

import math

import numpy as np

from maxent_nas.arch import ArchitectureSpec, BlockType


def naive_same_pad(size: int, kernel: int, stride: int) -> tuple[int, int, int]:
    out = math.ceil(size / stride)
    total = max((out - 1) * stride + kernel - size, 0)
    low = total // 2
    return out, low, total - low


def naive_conv2d(x: np.ndarray, w: np.ndarray, stride: int, groups: int = 1) -> np.ndarray:
    """Reference cross-correlation: explicit loops over every output position."""
    cin, h, wid = x.shape
    cout, cin_g, k, _ = w.shape
    assert cin_g * groups == cin and cout % groups == 0
    oh, ph_lo, ph_hi = naive_same_pad(h, k, stride)
    ow, pw_lo, pw_hi = naive_same_pad(wid, k, stride)
    padded = np.zeros((cin, h + ph_lo + ph_hi, wid + pw_lo + pw_hi))
    padded[:, ph_lo:ph_lo + h, pw_lo:pw_lo + wid] = x
    out = np.zeros((cout, oh, ow))
    out_per_group = cout // groups
    for co in range(cout):
        g = co // out_per_group
        ci_start = g * cin_g
        for oy in range(oh):
            for ox in range(ow):
                patch = padded[ci_start:ci_start + cin_g,
                               oy * stride:oy * stride + k,
                               ox * stride:ox * stride + k]
                out[co, oy, ox] = float(np.sum(patch * w[co]))
    return out


def brute_force_costs(arch: ArchitectureSpec, resolution: tuple[int, int]) -> tuple[int, int, int]:
    """(params, flops, main-path conv depth) by flat per-layer enumeration.

    Walks every duplication of every block, expands it into individual
    convolutions, and sums weight counts and weight*output-position products.
    """
    params = 0
    flops = 0
    depth = 0
    h, w = resolution

    def conv(cin, cout, k, stride, in_h, in_w, groups=1, shortcut=False):
        nonlocal params, flops, depth
        weights = cout * (cin // groups) * k * k
        out_h, out_w = math.ceil(in_h / stride), math.ceil(in_w / stride)
        params += weights
        flops += weights * out_h * out_w
        if not shortcut:
            depth += 1
        return out_h, out_w

    for b in arch.blocks:
        for rep in range(b.num_layers):
            cin = b.in_channels if rep == 0 else b.out_channels
            stride = b.stride if rep == 0 else 1
            if b.block_type is BlockType.CONV:
                h, w = conv(cin, b.out_channels, b.kernel, stride, h, w)
            elif b.block_type is BlockType.RESIDUAL:
                mid = b.bottleneck_channels
                rh, rw = conv(cin, mid, 1, 1, h, w)
                rh, rw = conv(mid, mid, b.kernel, stride, rh, rw)
                rh, rw = conv(mid, b.out_channels, 1, 1, rh, rw)
                if cin != b.out_channels or stride != 1:
                    conv(cin, b.out_channels, 1, stride, h, w, shortcut=True)
                h, w = rh, rw
            else:
                hidden = cin * b.expansion
                rh, rw = h, w
                if b.expansion != 1:
                    rh, rw = conv(cin, hidden, 1, 1, rh, rw)
                rh, rw = conv(hidden, hidden, b.kernel, stride, rh, rw, groups=hidden)
                rh, rw = conv(hidden, b.out_channels, 1, 1, rh, rw)
                h, w = rh, rw
    return params, flops, depth


def histogram_entropy(samples: np.ndarray, bins: int = 50) -> float:
    """Plug-in differential entropy from an equal-width histogram, in nats."""
    counts, edges = np.histogram(samples, bins=bins)
    n = samples.size
    width = edges[1] - edges[0]
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)) + math.log(width))
