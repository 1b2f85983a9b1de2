"""Sweep execution and result emission.

Seeds: point i, repeat r of experiment ``name`` uses the first eight bytes
(big endian) of sha256(f"{master_seed}:{name}:{i}:{r}"). Results are sorted
by (point, repeat) before anything is written, so output does not depend on
worker count or completion order.
"""
from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ScenarioConfig, jsonable, config_from_dict
from .experiments import Experiment, get_experiment
from .metrics import EVM_LIMITS, PointResult, SweepResult

log = logging.getLogger(__name__)


def point_seed(master_seed: int, name: str, point: int, repeat: int) -> int:
    digest = hashlib.sha256(f"{master_seed}:{name}:{point}:{repeat}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def grid(cfg: ScenarioConfig) -> list[tuple]:
    """Cartesian product of the sweep axes, first axis slowest; one empty point without axes."""
    return list(itertools.product(*(ax.values for ax in cfg.sweep)))


def resolve_config(exp: Experiment, user: ScenarioConfig | dict | None = None) -> ScenarioConfig:
    """Library defaults < experiment defaults < user settings."""
    base = config_from_dict(exp.defaults)
    if user is None:
        return base
    if isinstance(user, dict):
        return config_from_dict(user, base)
    return user


def _run_one(args) -> PointResult:
    name, cfg, point, repeat, seed, values = args
    exp = get_experiment(name)
    overrides = {ax.parameter: v for ax, v in zip(cfg.sweep, values)}
    pcfg = cfg.with_overrides(overrides)
    report = exp.point(pcfg, seed)
    return PointResult(point, repeat, seed, tuple(values), report)


def run_experiment(name: str, cfg: ScenarioConfig, workers: int = 1) -> SweepResult:
    exp = get_experiment(name)
    jobs = []
    for i, values in enumerate(grid(cfg)):
        for r in range(cfg.repeats):
            jobs.append((name, cfg, i, r, point_seed(cfg.master_seed, name, i, r), values))
    log.info("%s: %d runs on %d worker(s)", name, len(jobs), workers)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    results.sort(key=lambda r: (r.point, r.repeat))
    annotations = {"evm_limit_percent": EVM_LIMITS[cfg.waveform.scheme], **exp.reference}
    return SweepResult(name, tuple(ax.parameter for ax in cfg.sweep), tuple(results), cfg.fingerprint(),
                       annotations)


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _n_streams(result: SweepResult, cfg: ScenarioConfig | None) -> int:
    if result.results:
        return max(len(r.report.evm) for r in result.results)
    return cfg.U if cfg is not None else 1


def csv_text(result: SweepResult, cfg: ScenarioConfig | None = None) -> str:
    n = _n_streams(result, cfg)
    extras = sorted({k for r in result.results for k in r.report.extras})
    header = [*result.axis_names, "repeat", "seed", *(f"evm_ue{k + 1}" for k in range(n)), *extras,
              *(f"std_ue{k + 1}" for k in range(n))]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    stds = {p: result.std(p) for p in result.points()}
    for r in result.results:
        ev = list(r.report.evm) + [math.nan] * (n - len(r.report.evm))
        sd = list(stds[r.point]) + [math.nan] * (n - len(stds[r.point]))
        row = [*r.axes, r.repeat, r.seed, *ev, *(r.report.extras.get(k, "") for k in extras), *sd]
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def summary(result: SweepResult, cfg: ScenarioConfig, anchor: str = "") -> dict:
    points = []
    for p in result.points():
        mean = result.mean(p)
        scheme = next(r.report.scheme for r in result.results if r.point == p)
        points.append({
            "point": p,
            "axes": dict(zip(result.axis_names, result.axes_of(p))),
            "mean_evm_percent": list(mean),
            "std_evm_percent": list(result.std(p)),
            "meets_evm_limit": [m <= EVM_LIMITS[scheme] for m in mean],
        })
    return jsonable({
        "experiment": result.experiment,
        "anchor": anchor,
        "fingerprint": result.fingerprint,
        "master_seed": cfg.master_seed,
        "runs": len(result.results),
        "annotations": result.annotations,
        "config": cfg.to_dict(),
        "points": points,
    })


def emit_results(result: SweepResult, out_dir, cfg: ScenarioConfig | None = None,
                 dump_constellations: bool = False) -> list[Path]:
    """Write ``<experiment>.csv``, ``<experiment>.json`` and optional constellation text files."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []
        p_csv = out / f"{result.experiment}.csv"
        p_csv.write_text(csv_text(result, cfg))
        written.append(p_csv)
        if cfg is not None:
            anchor = get_experiment(result.experiment).anchor
            p_json = out / f"{result.experiment}.json"
            p_json.write_text(json.dumps(summary(result, cfg, anchor), indent=2, sort_keys=True) + "\n")
            written.append(p_json)
        if dump_constellations:
            cdir = out / "constellations"
            cdir.mkdir(exist_ok=True)
            for r in result.results:
                for k, sym in enumerate(r.report.constellations):
                    p = cdir / f"{result.experiment}_p{r.point:03d}_r{r.repeat:02d}_ue{k + 1}.txt"
                    p.write_text("".join(f"{repr(float(z.real))},{repr(float(z.imag))}\n" for z in sym))
                    written.append(p)
    except OSError as e:
        raise OSError(f"cannot write results to {out}: {e}") from e
    return written
