"""PyTorch backbone construction from the architecture document.

Block composition mirrors the search engine's cost model one-for-one, with
BatchNorm inserted after every convolution for trainability. Convolutions
carry no bias; BN parameters are therefore the only non-conv weights, and
`conv_weight_count` excludes them so the count can be cross-checked against
the search engine's analytic counter exactly.
"""

from __future__ import annotations

import torch
from torch import nn

from .schema import BlockRow, load_document


def _conv_bn(cin: int, cout: int, k: int, stride: int, groups: int = 1) -> list[nn.Module]:
    return [
        nn.Conv2d(cin, cout, k, stride=stride, padding=k // 2, groups=groups, bias=False),
        nn.BatchNorm2d(cout),
    ]


class ConvUnit(nn.Module):
    def __init__(self, cin: int, cout: int, k: int, stride: int):
        super().__init__()
        self.body = nn.Sequential(*_conv_bn(cin, cout, k, stride), nn.ReLU(inplace=True))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.body(x)


class BottleneckUnit(nn.Module):
    """1x1 reduce -> kxk (carries stride) -> 1x1 expand, residual add."""

    def __init__(self, cin: int, mid: int, cout: int, k: int, stride: int):
        super().__init__()
        self.body = nn.Sequential(
            *_conv_bn(cin, mid, 1, 1), nn.ReLU(inplace=True),
            *_conv_bn(mid, mid, k, stride), nn.ReLU(inplace=True),
            *_conv_bn(mid, cout, 1, 1),
        )
        if cin != cout or stride != 1:
            self.shortcut = nn.Sequential(*_conv_bn(cin, cout, 1, stride))
        else:
            self.shortcut = nn.Identity()
        self.act = nn.ReLU(inplace=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.act(self.body(x) + self.shortcut(x))


class MobileUnit(nn.Module):
    """1x1 expand -> kxk depthwise (carries stride) -> 1x1 linear project."""

    def __init__(self, cin: int, cout: int, k: int, stride: int, expansion: int):
        super().__init__()
        hidden = cin * expansion
        layers: list[nn.Module] = []
        if expansion != 1:
            layers += [*_conv_bn(cin, hidden, 1, 1), nn.ReLU6(inplace=True)]
        layers += [*_conv_bn(hidden, hidden, k, stride, groups=hidden), nn.ReLU6(inplace=True)]
        layers += _conv_bn(hidden, cout, 1, 1)
        self.body = nn.Sequential(*layers)
        self.use_residual = stride == 1 and cin == cout

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.body(x)
        return x + out if self.use_residual else out


def _make_unit(row: BlockRow, cin: int, stride: int) -> nn.Module:
    if row.block == "Conv":
        return ConvUnit(cin, row.out_channels, row.kernel, stride)
    if row.block == "ResBlock":
        return BottleneckUnit(cin, row.bottleneck, row.out_channels, row.kernel, stride)
    return MobileUnit(cin, row.out_channels, row.kernel, stride, row.expansion)


class Backbone(nn.Module):
    """Feature extractor returning one map per downsampling stage.

    forward(images) -> list of stage outputs; stage i has spatial size
    input / 2^i. Built from the document's rows, each expanded into
    `layers` stacked units (the first carries the row's stride).
    """

    def __init__(self, rows: list[BlockRow]):
        super().__init__()
        units: list[nn.Module] = []
        stage_of_unit: list[int] = []
        stage = 0
        for row in rows:
            for rep in range(row.layers):
                cin = row.in_channels if rep == 0 else row.out_channels
                stride = row.stride if rep == 0 else 1
                if stride == 2:
                    stage += 1
                units.append(_make_unit(row, cin, stride))
                stage_of_unit.append(stage)
        self.units = nn.ModuleList(units)
        self.num_stages = stage
        # index of the last unit in each stage: where outputs are captured
        self._capture = {}
        for idx, s in enumerate(stage_of_unit):
            self._capture[s] = idx

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        captures = {v: k for k, v in self._capture.items()}
        outputs: list[torch.Tensor] = []
        for idx, unit in enumerate(self.units):
            x = unit(x)
            if idx in captures:
                outputs.append(x)
        return outputs

    def conv_weight_count(self) -> int:
        """Convolution weights only: comparable with the search-side counter."""
        return sum(m.weight.numel() for m in self.modules() if isinstance(m, nn.Conv2d))


def build(arch_json: str) -> Backbone:
    """Construct a Backbone from architecture JSON text."""
    return Backbone(load_document(arch_json))
