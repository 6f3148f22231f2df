"""Nanowire pre-selection and fiber-port assignment.

Selecting k of n surveyed nanowires and placing them on a port grid is solved
exactly as one rectangular assignment: records x ports, utility
``score - lambda * routing_cost``, padded with dummy rows so that exactly k
real records are matched.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

N_EDGES = 4


class SurveyError(ValueError):
    pass


class InfeasibleError(ValueError):
    pass


@dataclass(frozen=True)
class NanowireRecord:
    id: int
    edge: int
    slot: int
    r_room: float | None  # ohms; None = open circuit
    i_c: float | None  # amperes at 3 K

    @property
    def eligible(self) -> bool:
        return self.r_room is not None and self.i_c is not None


@dataclass(frozen=True)
class PortGrid:
    rows: int = 8
    cols: int = 8
    pitch: float = 350e-6

    @property
    def n_ports(self) -> int:
        return self.rows * self.cols

    def port(self, index: int) -> tuple[int, int]:
        return divmod(index, self.cols)

    def coordinates(self) -> np.ndarray:
        """Physical (x, y) of every port in meters, row-major."""
        r, c = np.divmod(np.arange(self.n_ports), self.cols)
        return np.column_stack([c * self.pitch, r * self.pitch])

    def normalized(self) -> np.ndarray:
        r, c = np.divmod(np.arange(self.n_ports), self.cols)
        return np.column_stack([(c + 0.5) / self.cols, (r + 0.5) / self.rows])


@dataclass(frozen=True)
class ScoreWeights:
    w_ic: float = 0.5
    w_r: float = 0.5


# ---------------------------------------------------------------------------
# survey I/O

SURVEY_HEADER = ["id", "edge", "slot", "r_ohm", "ic_ua"]


def load_survey(data: bytes | str) -> list[NanowireRecord]:
    text = data.decode() if isinstance(data, bytes) else data
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SurveyError("empty survey") from None
    if header != SURVEY_HEADER:
        raise SurveyError(f"line 1: header must be {','.join(SURVEY_HEADER)}, got {','.join(header)}")
    records = []
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(SURVEY_HEADER):
            raise SurveyError(f"line {line_no}: expected {len(SURVEY_HEADER)} fields, got {len(row)}")
        cells = [c.strip() for c in row]
        try:
            rid, edge, slot = int(cells[0]), int(cells[1]), int(cells[2])
            r = float(cells[3]) if cells[3] else None
            ic = float(cells[4]) * 1e-6 if cells[4] else None
        except ValueError as exc:
            raise SurveyError(f"line {line_no}: {exc}") from None
        if not 0 <= edge < N_EDGES or slot < 0:
            raise SurveyError(f"line {line_no}: edge must be 0-3 and slot >= 0")
        records.append(NanowireRecord(rid, edge, slot, r, ic))
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        raise SurveyError("duplicate nanowire ids")
    return records


def survey_to_csv(records: Iterable[NanowireRecord]) -> str:
    lines = [",".join(SURVEY_HEADER)]
    for rec in records:
        r = "" if rec.r_room is None else f"{rec.r_room:.1f}"
        ic = "" if rec.i_c is None else f"{rec.i_c * 1e6:.4f}"
        lines.append(f"{rec.id},{rec.edge},{rec.slot},{r},{ic}")
    return "\n".join(lines) + "\n"


def synthetic_survey(n: int = 176, seed: int = 0, open_fraction: float = 0.05,
                     r_mean: float = 1.2e6, ic_mean: float = 11.0e-6) -> list[NanowireRecord]:
    """Survey with smooth position-dependent drift plus noise, and a few open wires."""
    rng = np.random.default_rng(seed)
    per_edge = math.ceil(n / N_EDGES)
    records = []
    for k in range(n):
        edge, slot = divmod(k, per_edge)
        # position around the chip perimeter, 0..1
        u = (edge + (slot + 0.5) / per_edge) / N_EDGES
        drift = math.sin(2 * math.pi * u) + 0.5 * math.sin(6 * math.pi * u + 1.0)
        r = r_mean * (1.0 + 0.06 * drift + 0.03 * rng.standard_normal())
        ic = ic_mean * (1.0 - 0.05 * drift + 0.04 * rng.standard_normal())
        if rng.random() < open_fraction:
            records.append(NanowireRecord(k, edge, slot, None, None))
        else:
            records.append(NanowireRecord(k, edge, slot, float(r), float(ic)))
    return records


# ---------------------------------------------------------------------------
# scoring and routing


def score_nanowires(records: Sequence[NanowireRecord],
                    weights: ScoreWeights = ScoreWeights()) -> dict[int, float]:
    """Quality score in [0, 1] for every eligible record, keyed by id.

    The critical-current term is 1 at or above the mean and falls linearly to
    0 at two standard deviations below it; the resistance term falls linearly
    with distance from the mean, reaching 0 at two standard deviations.
    """
    # id order makes the float sums, and hence the scores, independent of input order
    good = _eligible_sorted(records)
    if not good:
        raise InfeasibleError("no eligible nanowire records")
    ic = np.array([r.i_c for r in good])
    res = np.array([r.r_room for r in good])
    ic_mean, ic_std = ic.mean(), ic.std()
    r_mean, r_spread = res.mean(), 2.0 * res.std()
    if ic_std > 0:
        g = np.clip(1.0 - (ic_mean - ic) / (2.0 * ic_std), 0.0, 1.0)
    else:
        g = np.ones_like(ic)
    if r_spread > 0:
        rterm = np.clip(1.0 - np.abs(res - r_mean) / r_spread, 0.0, 1.0)
    else:
        rterm = np.ones_like(res)
    score = np.clip(weights.w_ic * g + weights.w_r * rterm, 0.0, 1.0)
    return {r.id: float(s) for r, s in zip(good, score)}


def edge_point(edge: int, slot: int, slots_per_edge: int) -> tuple[float, float]:
    f = (slot + 0.5) / slots_per_edge
    return [(f, 0.0), (1.0, f), (f, 1.0), (0.0, f)][edge]


def routing_costs(records: Sequence[NanowireRecord], grid: PortGrid,
                  slots_per_edge: int | None = None) -> np.ndarray:
    """Manhattan distance from each record's edge point to each port, scaled to [0, 1]."""
    if slots_per_edge is None:
        slots_per_edge = max((r.slot for r in records), default=0) + 1
    pts = np.array([edge_point(r.edge, r.slot, slots_per_edge) for r in records]).reshape(-1, 2)
    ports = grid.normalized()
    d = np.abs(pts[:, None, 0] - ports[None, :, 0]) + np.abs(pts[:, None, 1] - ports[None, :, 1])
    return d / 2.0


# ---------------------------------------------------------------------------
# assignment


@dataclass
class Placement:
    record: NanowireRecord
    port_row: int
    port_col: int
    score: float
    routing_cost: float


@dataclass
class PortAssignment:
    placements: list[Placement]
    lam: float
    grid: PortGrid = field(default_factory=PortGrid)

    @property
    def mapping(self) -> dict[int, tuple[int, int]]:
        return {p.record.id: (p.port_row, p.port_col) for p in self.placements}

    @property
    def quality(self) -> float:
        return float(sum(p.score for p in self.placements))

    @property
    def routing(self) -> float:
        return float(sum(p.routing_cost for p in self.placements))

    @property
    def objective(self) -> float:
        return self.quality - self.lam * self.routing

    def to_csv(self) -> str:
        lines = ["id,edge,slot,port_row,port_col,score,routing_cost"]
        for p in sorted(self.placements, key=lambda p: (p.port_row, p.port_col)):
            lines.append(f"{p.record.id},{p.record.edge},{p.record.slot},{p.port_row},"
                         f"{p.port_col},{p.score:.6f},{p.routing_cost:.6f}")
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        ics = [p.record.i_c for p in self.placements]
        rs = [p.record.r_room for p in self.placements]
        return {
            "k": len(self.placements),
            "lambda": self.lam,
            "quality_score": self.quality,
            "routing_cost": self.routing,
            "objective": self.objective,
            "mean_ic_ua": float(np.mean(ics)) * 1e6,
            "mean_r_ohm": float(np.mean(rs)),
        }


def _eligible_sorted(records: Sequence[NanowireRecord]) -> list[NanowireRecord]:
    return sorted((r for r in records if r.eligible), key=lambda r: r.id)


def select_and_assign(records: Sequence[NanowireRecord], grid: PortGrid, k: int,
                      lam: float = 0.2, weights: ScoreWeights = ScoreWeights(),
                      exclusions: Iterable[tuple[int, int]] = (),
                      slots_per_edge: int | None = None) -> PortAssignment:
    """Choose k eligible records and distinct ports maximizing score - lam * routing.

    ``exclusions`` holds forbidden (record id, port index) pairs. Records are
    processed in id order, so the result does not depend on input order; among
    equal-utility selections the lower ids win.
    """
    if k <= 0:
        raise InfeasibleError("k must be positive")
    good = _eligible_sorted(records)
    if len(good) < k:
        raise InfeasibleError(f"only {len(good)} eligible records, need k={k}")
    if grid.n_ports < k:
        raise InfeasibleError(f"grid has {grid.n_ports} ports, fewer than k={k}")
    if slots_per_edge is None:
        slots_per_edge = max((r.slot for r in records), default=0) + 1
    scores = score_nanowires(records, weights)
    s = np.array([scores[r.id] for r in good])
    cost = routing_costs(good, grid, slots_per_edge)
    util = s[:, None] - lam * cost
    # tiny rank penalties: prefer lower ids, then lower port indices, between equal choices
    util = util - 1e-9 * np.arange(len(good))[:, None] / max(len(good), 1)
    util = util - 1e-12 * np.arange(grid.n_ports)[None, :] / grid.n_ports
    forbidden = np.zeros_like(util, dtype=bool)
    index = {r.id: j for j, r in enumerate(good)}
    for rid, port in exclusions:
        if rid in index and 0 <= port < grid.n_ports:
            forbidden[index[rid], port] = True
    span = float(np.abs(util).max()) + 1.0
    util[forbidden] = -1e3 * span * (k + 1)
    n_dummy = grid.n_ports - k
    if n_dummy:
        util = np.vstack([util, np.full((n_dummy, grid.n_ports), 1e3 * span)])
    rows, cols = linear_sum_assignment(util, maximize=True)
    chosen = [(r, c) for r, c in zip(rows, cols) if r < len(good)]
    if len(chosen) != k or any(forbidden[r, c] for r, c in chosen):
        raise InfeasibleError("exclusion pairs leave no feasible assignment")
    placements = [Placement(good[r], *grid.port(int(c)), float(s[r]), float(cost[r, c]))
                  for r, c in chosen]
    return PortAssignment(placements, lam, grid)


def greedy_assign(records: Sequence[NanowireRecord], grid: PortGrid, k: int,
                  lam: float = 0.2, weights: ScoreWeights = ScoreWeights(),
                  slots_per_edge: int | None = None) -> PortAssignment:
    """Baseline: top-k by score, each placed on its cheapest free port in score order."""
    if slots_per_edge is None:
        slots_per_edge = max((r.slot for r in records), default=0) + 1
    good = _eligible_sorted(records)
    if len(good) < k or grid.n_ports < k:
        raise InfeasibleError("not enough eligible records or ports")
    scores = score_nanowires(records, weights)
    top = sorted(good, key=lambda r: (-scores[r.id], r.id))[:k]
    cost = routing_costs(top, grid, slots_per_edge)
    free = np.ones(grid.n_ports, dtype=bool)
    placements = []
    for j, rec in enumerate(top):
        c = np.where(free, cost[j], np.inf)
        port = int(np.argmin(c))
        free[port] = False
        placements.append(Placement(rec, *grid.port(port), scores[rec.id], float(cost[j, port])))
    return PortAssignment(placements, lam, grid)
