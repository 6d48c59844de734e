"""Consistency checks for a built backbone: shapes, finiteness, parameter parity."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import torch

from .model import build
from .schema import analytic_conv_params, load_document

EXPECTED_STAGES = 5


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class VerifyReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, passed: bool, detail: str = "") -> None:
        self.checks.append(Check(name, passed, detail))

    def render(self) -> str:
        lines = [f"{'PASS' if c.passed else 'FAIL'}\t{c.name}"
                 + (f"\t{c.detail}" if c.detail else "")
                 for c in self.checks]
        lines.append(f"result\t{'ok' if self.ok else 'failed'}")
        return "\n".join(lines) + "\n"


def verify(arch_json: str, resolution: int,
           expected_params: Optional[int] = None) -> VerifyReport:
    """Random forward pass plus structural checks.

    `expected_params` is typically the search engine's analyze output; when
    given it must match the built conv-weight count exactly.
    """
    report = VerifyReport()
    rows = load_document(arch_json)
    model = build(arch_json)
    model.eval()

    report.add("stage_count", model.num_stages == EXPECTED_STAGES,
               f"got {model.num_stages}")

    torch.manual_seed(0)
    x = torch.randn(1, rows[0].in_channels, resolution, resolution)
    with torch.no_grad():
        outputs = model(x)

    for i, out in enumerate(outputs, start=1):
        want = resolution // 2 ** i
        got = tuple(out.shape[-2:])
        report.add(f"stage_C{i}_stride", got == (want, want),
                   f"spatial {got}, expected ({want}, {want})")
    report.add("finite_outputs", all(bool(torch.isfinite(o).all()) for o in outputs))

    built = model.conv_weight_count()
    analytic = analytic_conv_params(rows)
    report.add("conv_params_internal", built == analytic,
               f"module {built} vs analytic {analytic}")
    if expected_params is not None:
        delta = built - expected_params
        report.add("conv_params_expected", delta == 0,
                   f"module {built} vs expected {expected_params} (delta {delta:+d})")
    return report
