"""Command line entry point: ``snspd-lab {simulate,analyze,plan,report,survey,replay}``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime or data error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (AnalysisError, BiasSweep, FwhmAmbiguityError, crosstalk_db,
                       cumulative_crosstalk, fwhm, max_sustained_rate, nep,
                       normalize_bias, sweep_metrics, MetricReport)
from .dynamics import dark_rate
from .model import ConfigError, ReceiverConfig, default_config, dump_config, load_config, \
    validate_config
from .planner import (InfeasibleError, PortGrid, SurveyError, greedy_assign, load_survey,
                      select_and_assign, survey_to_csv, synthetic_survey)
from .report import evaluate, read_csv_rows, results_csv, results_table
from .sim import simulate_receiver
from .tcspc import PS, TimetagFormatError, interarrival_histogram, read_timetag_file, \
    sync_delay_histogram, write_timetags

log = logging.getLogger("snspd_lab")

SEED_ENV = "SNSPD_LAB_SEED"
TELECOM_FLUX = 1e6


class UsageError(Exception):
    """Exit code 1."""


class DataError(Exception):
    """Exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# helpers


class Outputs:
    """Writes files into an output directory and records their hashes."""

    def __init__(self, out_dir: Path):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: dict[str, str] = {}

    def write(self, name: str, data: str | bytes) -> Path:
        path = self.dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        raw = data.encode() if isinstance(data, str) else data
        path.write_bytes(raw)
        self.files[name] = hashlib.sha256(raw).hexdigest()
        return path

    def manifest(self, command: str, argv: list[str], config: str | None, seed: int | None,
                 started: float) -> None:
        doc = {
            "command": command,
            "argv": argv,
            "config_path": config,
            "seed": seed,
            "output_dir": str(self.dir),
            "tool_version": __version__,
            "wall_time_s": round(time.time() - started, 3),
            "outputs": dict(sorted(self.files.items())),
        }
        (self.dir / "manifest.json").write_text(json.dumps(doc, indent=2) + "\n")


def _load_cfg(path: str | None) -> ReceiverConfig:
    return load_config(path) if path else default_config()


def _resolve_seed(arg_seed: int | None, cfg_seed: int) -> int:
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env, 0)
        except ValueError:
            raise UsageError(f"{SEED_ENV}={env!r} is not an integer") from None
    return cfg_seed if arg_seed is None else arg_seed


def _config_text(cfg: ReceiverConfig, path: str | None) -> str:
    try:
        return dump_config(cfg)
    except ConfigError:
        return Path(path).read_text() if path else ""


def _parse_range(text: str) -> np.ndarray:
    try:
        start, stop, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise UsageError(f"range {text!r} must be START:STOP:STEP") from None
    if step <= 0 or stop < start:
        raise UsageError(f"range {text!r} must increase")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return np.round(start + step * np.arange(n), 10)


def _sub_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, *key])
               .generate_state(1, np.uint64)[0])


def _row(*values) -> str:
    return ",".join(str(v) if isinstance(v, (int, np.integer)) else repr(float(v))
                    for v in values)


def _channel_rates(path: Path, duration: float) -> tuple[np.ndarray, np.ndarray]:
    tags = read_timetag_file(path)
    counts = np.bincount(tags.channel, minlength=tags.channel_count)
    return counts / duration, counts


# ---------------------------------------------------------------------------
# simulate


def _set_bias(cfg: ReceiverConfig, bias: float) -> ReceiverConfig:
    return replace(cfg, channels=tuple(replace(c, i_set=float(bias)) for c in cfg.channels))


def _dark(cfg: ReceiverConfig) -> ReceiverConfig:
    return replace(cfg, channels=tuple(replace(c, input_flux=0.0) for c in cfg.channels))


def cmd_simulate(args) -> int:
    cfg = _load_cfg(args.config)
    seed = _resolve_seed(args.seed, cfg.seed)
    cfg = replace(cfg, seed=seed, duration=cfg.duration if args.duration is None else args.duration)
    cfg = validate_config(cfg)
    out = Outputs(args.out)
    started = time.time()
    out.write("config.ini", _config_text(cfg, args.config))
    if args.bias_sweep:
        _simulate_sweep(cfg, args, out)
    else:
        tags, report = simulate_receiver(cfg, workers=args.workers)
        out.write("timetags.sntt", write_timetags(tags, cfg.n_channels))
        out.write("sim_report.csv", report.to_csv())
        log.info("simulated %d channels, %d timetags", cfg.n_channels, len(tags))
    out.manifest("simulate", args.argv, args.config, seed, started)
    return 0


def _simulate_sweep(cfg, args, out: Outputs) -> None:
    biases = _parse_range(args.bias_sweep)
    rows = [["index", "bias", "kind", "file", "duration_s"]]
    runs = [("light", cfg.duration, lambda c: c),
            ("dark", args.dark_duration, _dark),
            ("pulsed", args.jitter_duration,
             lambda c: replace(c, source="pulsed", sync_period=args.sync_period,
                               pulse_offset=args.sync_period / 2))]
    for k, bias in enumerate(biases):
        for kind_index, (kind, duration, shape) in enumerate(runs):
            if duration <= 0:
                continue
            run = validate_config(replace(shape(_set_bias(cfg, bias)), duration=duration,
                                          seed=_sub_seed(cfg.seed, k, kind_index)))
            tags, _ = simulate_receiver(run, workers=args.workers)
            name = f"sweep/{kind}_{k:03d}.sntt"
            out.write(name, write_timetags(tags, cfg.n_channels))
            rows.append([k, repr(float(bias)), kind, name, repr(float(duration))])
        log.info("bias %.3f done", bias)
    out.write("sweep.csv", "\n".join(",".join(map(str, r)) for r in rows) + "\n")
    out.write("sweep.json", json.dumps({"sync_period_s": args.sync_period,
                                        "flux_per_s": TELECOM_FLUX}, indent=2) + "\n")


# ---------------------------------------------------------------------------
# analyze


class SweepBatch:
    def __init__(self, root: Path):
        self.root = Path(root)
        index = self.root / "sweep.csv"
        if not index.exists():
            raise DataError(f"{root} is not a sweep batch (missing sweep.csv)")
        self.rows = read_csv_rows(index)
        meta_path = self.root / "sweep.json"
        self.meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        self.config = load_config(self.root / "config.ini")
        self.biases = sorted({float(r["bias"]) for r in self.rows})

    def runs(self, kind: str) -> list[tuple[float, Path, float]]:
        return sorted((float(r["bias"]), self.root / r["file"], float(r["duration_s"]))
                      for r in self.rows if r["kind"] == kind)

    def rate_matrix(self, kind: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(bias, rates[bias, channel], counts[bias, channel])."""
        runs = self.runs(kind)
        if not runs:
            raise DataError(f"sweep batch has no {kind} runs")
        rates, counts = zip(*(_channel_rates(p, d) for _, p, d in runs))
        return np.array([b for b, _, _ in runs]), np.array(rates), np.array(counts)

    def jitter_matrix(self, bin_width_ps: int | None,
                      method: str = "gauss") -> tuple[np.ndarray, np.ndarray]:
        runs = self.runs("pulsed")
        n = self.config.n_channels
        period_ps = int(round(self.meta.get("sync_period_s", 1e-6) * PS))
        out = np.full((len(runs), n), np.nan)
        for k, (_, path, _) in enumerate(runs):
            tags = read_timetag_file(path)
            for ch in range(n):
                t = tags.for_channel(ch)
                if t.size < 100:
                    continue
                out[k, ch] = _jitter_of(t, period_ps, bin_width_ps, method)
        return np.array([b for b, _, _ in runs]), out


def auto_bin_width(times_ps: np.ndarray, period_ps: int) -> int:
    """Bin width giving roughly sqrt(n)/4 bins (8 to 40) across the peak FWHM."""
    d = (times_ps % period_ps).astype(float)
    med = np.median(d)
    fw = 2.3548 * 1.4826 * np.median(np.abs(d - med))
    per_fwhm = min(40.0, max(8.0, math.sqrt(d.size) / 4.0))
    return max(1, int(round(fw / per_fwhm)))


def _jitter_of(times_ps: np.ndarray, period_ps: int, bin_width_ps: int | None,
               method: str = "gauss") -> float:
    if bin_width_ps is None:
        bin_width_ps = auto_bin_width(times_ps, period_ps)
    hist = sync_delay_histogram(times_ps, period_ps, bin_width_ps)
    try:
        return fwhm(hist, method=method)
    except FwhmAmbiguityError:
        log.info("noisy delay histogram, falling back to a Gaussian fit")
        return fwhm(hist, method="gauss")


def _sweeps(batch: SweepBatch):
    bias, light, light_n = batch.rate_matrix("light")
    dbias, dark, dark_n = batch.rate_matrix("dark")
    if not np.array_equal(bias, dbias):
        raise DataError("light and dark runs cover different biases")
    return bias, light, light_n, dark, dark_n


def analyze_sde(args, out: Outputs) -> None:
    batch = SweepBatch(Path(args.input))
    bias, light, _, dark, _ = _sweeps(batch)
    lines = ["channel,bias,bias_norm,count_rate_per_s,dark_rate_per_s,sde,nep_w_per_rthz"]
    for ch, cc in enumerate(batch.config.channels):
        if cc.input_flux <= 0:
            continue
        sweep = BiasSweep(bias, light[:, ch], dark[:, ch])
        try:
            ref = normalize_bias(sweep, cc.input_flux)
        except AnalysisError as exc:
            log.info("channel %d: %s", ch, exc)
            ref = math.nan
        for k, b in enumerate(bias):
            sde = max((light[k, ch] - dark[k, ch]) / cc.input_flux, 0.0)
            # NEP is left blank (nan) where the dark rate rests on no counts
            n_val = nep(sde, dark[k, ch]) if sde > 0 and dark[k, ch] > 0 else math.nan
            lines.append(_row(ch, b, b / ref, light[k, ch], dark[k, ch], sde, n_val))
    out.write("sde_vs_bias.csv", "\n".join(lines) + "\n")


def analyze_jitter(args, out: Outputs) -> None:
    src = Path(args.input)
    if src.is_dir():
        batch = SweepBatch(src)
        bias, jit = batch.jitter_matrix(args.bin_width_ps, args.fwhm_method)
        lines = ["channel,bias,jitter_fwhm_ps"]
        for ch in range(jit.shape[1]):
            lines += [_row(ch, b, jit[k, ch] * PS) for k, b in enumerate(bias)
                      if np.isfinite(jit[k, ch])]
        out.write("jitter_vs_bias.csv", "\n".join(lines) + "\n")
        return
    tags = _read_tags(src)
    period_ps = int(round(args.sync_period * PS))
    channels = [args.channel] if args.channel is not None else sorted(set(tags.channel.tolist()))
    lines = ["channel,events,jitter_fwhm_ps"]
    for ch in channels:
        t = _channel_times(tags, ch)
        width = args.bin_width_ps or auto_bin_width(t, period_ps)
        hist = sync_delay_histogram(t, period_ps, width)
        out.write(f"jitter_hist_ch{ch:02d}.csv", hist.to_csv())
        lines.append(_row(ch, t.size, _jitter_of(t, period_ps, width, args.fwhm_method) * PS))
    out.write("jitter_summary.csv", "\n".join(lines) + "\n")


def _read_tags(path: Path):
    try:
        return read_timetag_file(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None


def _channel_times(tags, ch: int) -> np.ndarray:
    if not 0 <= ch < tags.channel_count:
        raise DataError(f"unknown channel id {ch} (file has {tags.channel_count} channels)")
    t = tags.for_channel(ch)
    if t.size == 0:
        raise DataError(f"channel {ch} has an empty stream")
    return t


def analyze_iat(args, out: Outputs) -> None:
    tags = _read_tags(Path(args.input))
    ch = 0 if args.channel is None else args.channel
    t = _channel_times(tags, ch)
    hist = interarrival_histogram(t, args.bin_width_ps, args.max_lag_ps)
    out.write(f"iat_ch{ch:02d}.csv", hist.to_csv())


def analyze_rate(args, out: Outputs) -> None:
    cfg = validate_config(load_config(args.input))
    ch = 0 if args.channel is None else args.channel
    if not 0 <= ch < cfg.n_channels:
        raise DataError(f"unknown channel id {ch}")
    grid = None
    if args.flux_grid:
        grid = [float(x) for x in args.flux_grid.split(",")]
    seed = _resolve_seed(args.seed, cfg.seed)
    duration = 1e-4 if args.duration is None else args.duration
    curve = max_sustained_rate(cfg.channels[ch], grid, duration=duration, seed=seed)
    out.write(f"rate_vs_flux_ch{ch:02d}.csv", curve.to_csv())


def analyze_crosstalk(args, out: Outputs) -> None:
    src = Path(args.input)
    cfg_path = args.config or src.parent / "config.ini"
    cfg = validate_config(load_config(cfg_path))
    tags = _read_tags(src)
    if args.duration is not None:
        duration = args.duration
    else:
        duration = cfg.duration
    counts = np.bincount(tags.channel, minlength=cfg.n_channels)
    if args.dark:
        dark_rates = np.bincount(_read_tags(Path(args.dark)).channel,
                                 minlength=cfg.n_channels) / args.dark_duration
    else:
        dark_rates = np.array([float(dark_rate(c.detector, c.i_set)) for c in cfg.channels])
    flux = np.array([c.input_flux for c in cfg.channels])
    victims = [k for k in range(cfg.n_channels) if flux[k] == 0]
    if not victims:
        raise DataError("no dark (un-illuminated) channel to measure crosstalk on")
    lines = ["channel,count_rate_per_s,dcr_per_s,source_flux_per_s,crosstalk_db,"
             "cumulative_63_db"]
    for v in victims:
        total = float(flux.sum() - flux[v])
        rate = float(counts[v]) / duration
        dcr = float(dark_rates[v])
        xt = crosstalk_db(rate, dcr, total)
        cum = cumulative_crosstalk([xt] * 63) if math.isfinite(xt) else -math.inf
        lines.append(_row(v, rate, dcr, total, xt, cum))
    out.write("crosstalk.csv", "\n".join(lines) + "\n")


def analyze_metrics(args, out: Outputs) -> None:
    batch = SweepBatch(Path(args.input))
    bias, light, light_n, dark, dark_n = _sweeps(batch)
    if batch.runs("pulsed"):
        jbias, jit = batch.jitter_matrix(args.bin_width_ps, args.fwhm_method)
    else:
        jbias, jit = bias, None
    if jit is not None and not np.array_equal(jbias, bias):
        raise DataError("pulsed runs cover different biases")
    reports: list[MetricReport] = []
    for ch, cc in enumerate(batch.config.channels):
        if cc.input_flux <= 0:
            continue
        try:
            rep = sweep_metrics(
                ch, BiasSweep(bias, light[:, ch], dark[:, ch]), cc.input_flux,
                jitter_fwhm_s=None if jit is None else jit[:, ch],
                light_counts=light_n[:, ch], dark_counts=dark_n[:, ch],
                min_dark_counts=args.min_dark_counts,
                is_alignment_device=cc.is_alignment_device)
        except AnalysisError as exc:
            log.warning("channel %d skipped: %s", ch, exc)
            continue
        if args.max_rate:
            curve = max_sustained_rate(replace(cc, i_set=bias[-1]), duration=1e-4,
                                       seed=_sub_seed(batch.config.seed, ch))
            rep.max_count_rate = curve.peak_rate
        reports.append(rep)
    if not reports:
        raise DataError("no channel could be reduced to metrics")
    out.write("metrics.csv", MetricReport.CSV_HEADER + "\n"
              + "\n".join(r.csv_row() for r in reports) + "\n")
    out.write("metrics.txt", _metrics_table(reports))


def _metrics_table(reports: list[MetricReport]) -> str:
    lines = ["NEP convention: (h c / lambda) / eta * sqrt(2 DCR), lambda = 1550 nm",
             f"{'ch':>3} {'align':>5} {'SDE':>7} {'+-':>6} {'DCR/Hz':>9} {'NEP':>9} "
             f"{'i_op':>6} {'jit/ps':>7} {'H':>9} {'Rmax/cps':>9}"]
    for r in reports:
        lines.append(f"{r.channel:>3} {int(r.is_alignment_device):>5} {r.sde:7.4f} "
                     f"{r.sde_uncertainty:6.4f} {r.dcr:9.3g} {r.nep:9.3g} {r.operating_bias:6.3f} "
                     f"{r.jitter_fwhm * PS:7.1f} {r.h:9.3g} {r.max_count_rate:9.3g}")
    return "\n".join(lines) + "\n"


ANALYZERS = {"sde": analyze_sde, "jitter": analyze_jitter, "iat": analyze_iat,
             "rate": analyze_rate, "crosstalk": analyze_crosstalk, "metrics": analyze_metrics}


def cmd_analyze(args) -> int:
    out = Outputs(args.out)
    started = time.time()
    try:
        ANALYZERS[args.what](args, out)
    except (AnalysisError, TimetagFormatError) as exc:
        raise DataError(str(exc)) from None
    out.manifest(f"analyze {args.what}", args.argv, getattr(args, "config", None), None, started)
    return 0


# ---------------------------------------------------------------------------
# plan / survey / report / replay


def _parse_grid(text: str) -> PortGrid:
    try:
        rows, cols = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"grid {text!r} must look like 8x8") from None
    return PortGrid(rows, cols)


def cmd_plan(args) -> int:
    try:
        records = load_survey(Path(args.survey).read_bytes())
    except OSError as exc:
        raise UsageError(f"cannot read survey: {exc}") from None
    except SurveyError as exc:
        raise DataError(str(exc)) from None
    grid = _parse_grid(args.grid)
    out = Outputs(args.out)
    started = time.time()
    exclusions = []
    if args.exclusions:
        for row in read_csv_rows(Path(args.exclusions)):
            exclusions.append((int(row["id"]), int(row["port_row"]) * grid.cols
                               + int(row["port_col"])))
    try:
        best = select_and_assign(records, grid, args.k, args.lam, exclusions=exclusions)
        greedy = greedy_assign(records, grid, args.k, args.lam)
        sweep = [(lam, select_and_assign(records, grid, args.k, lam, exclusions=exclusions))
                 for lam in args.lambda_sweep]
    except InfeasibleError as exc:
        raise DataError(f"infeasible: {exc}") from None
    out.write("assignment.csv", best.to_csv())
    costs = [a.routing for _, a in sweep]
    summary = {
        "records": len(records),
        "eligible": sum(r.eligible for r in records),
        **best.summary(),
        "greedy_objective": greedy.objective,
        "lambda_sweep": [{"lambda": lam, "routing_cost": a.routing, "quality_score": a.quality}
                         for lam, a in sweep],
        "routing_cost_non_increasing": bool(all(b <= a + 1e-9 for a, b in zip(costs, costs[1:]))),
    }
    out.write("plan_summary.json", json.dumps(summary, indent=2) + "\n")
    print(f"assigned {best.summary()['k']} nanowires; objective {best.objective:.4f} "
          f"(greedy {greedy.objective:.4f})")
    out.manifest("plan", args.argv, None, None, started)
    return 0


def cmd_survey(args) -> int:
    recs = synthetic_survey(args.n, args.seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(survey_to_csv(recs))
    return 0


def cmd_report(args) -> int:
    metrics, crosstalk = [], []
    for d in args.inputs:
        d = Path(d)
        if (d / "metrics.csv").exists():
            metrics += read_csv_rows(d / "metrics.csv")
        if (d / "crosstalk.csv").exists():
            crosstalk += read_csv_rows(d / "crosstalk.csv")
    if not metrics:
        raise DataError("missing inputs: expected metrics.csv (and optionally crosstalk.csv) "
                        f"in {', '.join(args.inputs)}")
    results = evaluate(metrics, crosstalk or None)
    out = Outputs(args.out)
    started = time.time()
    out.write("report.csv", results_csv(results))
    table = results_table(results)
    out.write("report.txt", table)
    print(table, end="")
    out.manifest("report", args.argv, None, None, started)
    return 0 if all(r.passed is not False for r in results) else 2


def cmd_replay(args) -> int:
    doc = json.loads(Path(args.manifest).read_text())
    argv = list(doc["argv"])
    if "--out" in argv:
        argv[argv.index("--out") + 1] = args.out
    code = main(argv)
    if code:
        return code
    new = json.loads((Path(args.out) / "manifest.json").read_text())["outputs"]
    diff = [k for k in doc["outputs"] if doc["outputs"][k] != new.get(k)]
    if diff:
        print("outputs differ: " + ", ".join(diff), file=sys.stderr)
        return 2
    print(f"reproduced {len(new)} outputs byte-identically")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="snspd-lab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate the receiver and write timetags")
    s.add_argument("config_pos", nargs="?", metavar="CONFIG")
    s.add_argument("--config")
    s.add_argument("--seed", type=lambda x: int(x, 0))
    s.add_argument("--duration", type=float)
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--bias-sweep", metavar="START:STOP:STEP")
    s.add_argument("--dark-duration", type=float, default=1.0)
    s.add_argument("--jitter-duration", type=float, default=0.1)
    s.add_argument("--sync-period", type=float, default=1e-6)
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="compute figure data and metrics")
    a.add_argument("what", choices=sorted(ANALYZERS))
    a.add_argument("input", help="timetag file, sweep batch directory, or config (rate)")
    a.add_argument("--out", required=True)
    a.add_argument("--config")
    a.add_argument("--channel", type=int)
    a.add_argument("--seed", type=lambda x: int(x, 0))
    a.add_argument("--duration", type=float)
    a.add_argument("--bin-width-ps", type=int)
    a.add_argument("--fwhm-method", choices=("gauss", "interp"), default="gauss",
                   help="gauss is robust on count-limited histograms")
    a.add_argument("--max-lag-ps", type=int, default=100_000)
    a.add_argument("--sync-period", type=float, default=1e-6)
    a.add_argument("--flux-grid", help="comma separated photons/s")
    a.add_argument("--dark", help="dark reference timetag file (crosstalk)")
    a.add_argument("--dark-duration", type=float, default=1.0)
    a.add_argument("--min-dark-counts", type=int, default=10)
    a.add_argument("--max-rate", action="store_true", help="add simulated max count rate")
    a.set_defaults(func=cmd_analyze)

    pl = sub.add_parser("plan", help="select nanowires and assign fiber ports")
    pl.add_argument("survey")
    pl.add_argument("--k", type=int, default=64)
    pl.add_argument("--grid", default="8x8")
    pl.add_argument("--lambda", dest="lam", type=float, default=0.2)
    pl.add_argument("--lambda-sweep", type=lambda s: [float(x) for x in s.split(",")],
                    default=[0.0, 0.2, 1.0])
    pl.add_argument("--exclusions", help="CSV of forbidden id,port_row,port_col")
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plan)

    sv = sub.add_parser("survey", help="write a synthetic nanowire survey CSV")
    sv.add_argument("--n", type=int, default=176)
    sv.add_argument("--seed", type=int, default=0)
    sv.add_argument("--out", required=True)
    sv.set_defaults(func=cmd_survey)

    r = sub.add_parser("report", help="compare metrics against the reference anchors")
    r.add_argument("inputs", nargs="+")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)

    rp = sub.add_parser("replay", help="re-run a manifest and compare output hashes")
    rp.add_argument("manifest")
    rp.add_argument("--out", required=True)
    rp.set_defaults(func=cmd_replay)
    return p


_DEFAULT_BINS = {"iat": 1000}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "simulate":
        if args.config and args.config_pos:
            parser.error("give the config either positionally or with --config")
        args.config = args.config or args.config_pos
    if args.command == "analyze" and args.bin_width_ps is None:
        args.bin_width_ps = _DEFAULT_BINS.get(args.what)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"snspd-lab: error: {exc}", file=sys.stderr)
        return 1
    except (DataError, TimetagFormatError, AnalysisError, InfeasibleError, SurveyError) as exc:
        print(f"snspd-lab: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"snspd-lab: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
