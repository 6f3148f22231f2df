"""Comparison of per-channel metrics against the reference performance table."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import cumulative_crosstalk


@dataclass(frozen=True)
class Anchor:
    name: str
    description: str
    low: float = -math.inf
    high: float = math.inf


ANCHORS = (
    Anchor("sde_regular", "plateau SDE of regular channels in [0.30, 0.60]", 0.30, 0.60),
    Anchor("sde_alignment", "plateau SDE of alignment devices in [0.20, 0.30]", 0.20, 0.30),
    Anchor("nep", "NEP at the operating point below 5e-17 W/rtHz", high=5e-17),
    Anchor("h", "maximal figure of merit H above 1e7", low=1e7),
    Anchor("jitter", "minimal system jitter FWHM at most 110 ps", high=110.0),
    Anchor("crosstalk", "cumulative crosstalk from 63 channels below -40 dB", high=-40.0),
)


@dataclass
class AnchorResult:
    anchor: Anchor
    n: int
    worst: float
    passed: bool | None  # None = not evaluated

    @property
    def status(self) -> str:
        return {True: "PASS", False: "FAIL", None: "SKIP"}[self.passed]


def read_csv_rows(path: Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _check(anchor: Anchor, values) -> AnchorResult:
    vals = np.asarray([v for v in values if v is not None and not math.isnan(v)], dtype=float)
    if vals.size == 0:
        return AnchorResult(anchor, 0, math.nan, None)
    ok = (vals >= anchor.low) & (vals <= anchor.high)
    if np.isfinite(anchor.high) and not np.isfinite(anchor.low):
        worst = float(vals.max())
    elif np.isfinite(anchor.low) and not np.isfinite(anchor.high):
        worst = float(vals.min())
    else:
        bad = vals[~ok]
        worst = float(bad[0]) if bad.size else float(vals.min())
    return AnchorResult(anchor, int(vals.size), worst, bool(ok.all()))


def evaluate(metrics_rows: list[dict[str, str]],
             crosstalk_rows: list[dict[str, str]] | None = None) -> list[AnchorResult]:
    by = {a.name: a for a in ANCHORS}

    def col(name, rows):
        return [float(r[name]) for r in rows if r.get(name, "") not in ("", "nan")]

    regular = [r for r in metrics_rows if r["is_alignment_device"] == "0"]
    align = [r for r in metrics_rows if r["is_alignment_device"] == "1"]
    results = [
        _check(by["sde_regular"], col("sde", regular)),
        _check(by["sde_alignment"], col("sde", align)),
        _check(by["nep"], col("nep_w_per_rthz", metrics_rows)),
        _check(by["h"], col("h", metrics_rows)),
        _check(by["jitter"], col("jitter_fwhm_ps", metrics_rows)),
    ]
    if crosstalk_rows:
        per = [float(r["crosstalk_db"]) for r in crosstalk_rows]
        finite = [p for p in per if math.isfinite(p)]
        cum = [cumulative_crosstalk([p] * 63) for p in finite]
        results.append(_check(by["crosstalk"], cum))
    else:
        results.append(AnchorResult(by["crosstalk"], 0, math.nan, None))
    return results


def results_csv(results: list[AnchorResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["anchor", "description", "n_values", "worst_value", "status"])
    for r in results:
        w.writerow([r.anchor.name, r.anchor.description, r.n, repr(r.worst), r.status])
    return buf.getvalue()


def results_table(results: list[AnchorResult]) -> str:
    lines = [f"{'anchor':<14} {'n':>3} {'worst':>12}  status  description"]
    for r in results:
        lines.append(f"{r.anchor.name:<14} {r.n:>3} {r.worst:>12.4g}  {r.status:<6}  "
                     f"{r.anchor.description}")
    return "\n".join(lines) + "\n"
