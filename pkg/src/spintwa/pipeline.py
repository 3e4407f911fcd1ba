"""Run orchestration: model, sampling, dynamics, correlations, CMV and output bundles.

A bundle directory holds ``correlations.csv``, optional ``half_max.csv`` and
``meshes/``, and ``manifest.yaml``. The bundle is assembled in a temporary
sibling directory and renamed into place only after the manifest is written,
so a failed run leaves nothing behind.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import platform
import shutil
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .cmv import build_surface, classify_shape, export_mesh
from .config import CLOSED_FORM, SAMPLED, ConfigError, RunConfig, validate
from .correlations import (
    AXES, CorrelationMatrix, connected_pair, delta_norm, eigensummary, ensemble_correlation,
    half_max_time, pm_to_cartesian, symmetrize,
)
from .dynamics import evolve
from .exact import MAX_SITES, closed_form_ising, statevector_expectations
from .model import model_preset
from .sampling import sample

log = logging.getLogger(__name__)

COMPONENTS = ("xx", "xy", "xz", "yy", "yz", "zz")
CSV_COLUMNS = (
    ["tJ", "method", "n_sites", "i", "j"]
    + [f"C_{c}" for c in COMPONENTS]
    + [f"se_{c}" for c in COMPONENTS]
    + ["lambda_1", "lambda_2", "lambda_3", "dimensionality", "shape", "delta_norm"]
)
_SAMPLED_SEED_OFFSET = {"dtwa_sampled": 0, "twa_sampled": 1}


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return ""
    return format(float(x) + 0.0, ".17g")


@dataclass
class RunResult:
    path: Path
    rows: list
    manifest: dict
    warnings: list = field(default_factory=list)


def _closed_form(method, spec, theta, times, pairs):
    out = {}
    for i, j in pairs:
        C = pm_to_cartesian(closed_form_ising(method, spec, theta, times, i, j))
        out[(i, j)] = [CorrelationMatrix(C[k], (i, j), float(t), method) for k, t in enumerate(times)]
    return out


def _statevector(spec, theta, times, pairs):
    ev = statevector_expectations(spec, theta, times, pairs)
    return {
        p: [CorrelationMatrix(symmetrize(connected_pair(e)), p, float(t), "exact_statevector") for e, t in zip(ev[p], times)]
        for p in pairs
    }


def _sampled(scheme, spec, cfg, times, pairs, seed, threads):
    sites = sorted({s for p in pairs for s in p})
    ens = sample(scheme, cfg.theta, spec.n_sites, cfg.n_samples, seed, threads)
    traj = evolve(ens, spec, times, cfg.dt, sites, threads)
    return {p: [ensemble_correlation(traj, *p, t) for t in times] for p in pairs}


def compute_point(cfg: RunConfig, lattice, threads: int, timings: dict, seeds: dict):
    """All requested methods on one lattice, plus the reference branch for ``delta_norm``."""
    spec = model_preset(cfg.preset, lattice, cfg.h)
    times = np.asarray(cfg.times, dtype=float)
    n = lattice.n_sites
    results = {}
    wanted = list(cfg.methods)
    reference = None
    if spec.is_field_free_ising():
        reference = "exact_closed_form"
    elif n <= MAX_SITES:
        reference = "exact_statevector"
    if reference and reference not in wanted:
        wanted.append(reference)
    for m in wanted:
        t0 = time.perf_counter()
        if m in CLOSED_FORM:
            results[m] = _closed_form(CLOSED_FORM[m], spec, cfg.theta, times, cfg.pairs)
        elif m == "exact_statevector":
            results[m] = _statevector(spec, cfg.theta, times, cfg.pairs)
        else:
            seed = cfg.seed + _SAMPLED_SEED_OFFSET[m]
            seeds[f"{m}[N={n}]"] = {"seed": seed, "n_samples": cfg.n_samples}
            results[m] = _sampled(SAMPLED[m], spec, cfg, times, cfg.pairs, seed, threads)
        timings[f"{m}[N={n}]"] = round(time.perf_counter() - t0, 6)
    return results, reference


def _rows_for(cfg, results, reference, n_sites):
    rows = []
    for m in cfg.methods:
        for (i, j), series in results[m].items():
            for k, cm in enumerate(series):
                es = eigensummary(cm.C, cfg.dimensionality_threshold)
                shape = classify_shape(es, cfg.cmv.ratio_low, cfg.cmv.ratio_high)
                delta = None
                if reference is not None:
                    delta = delta_norm(results[reference][(i, j)][k].C, cm.C, cfg.delta_metric)
                se = cm.se if cm.se is not None else np.full((3, 3), np.nan)
                row = {"tJ": cm.t, "method": m, "n_sites": n_sites, "i": i, "j": j}
                for c in COMPONENTS:
                    a, b = AXES.index(c[0]), AXES.index(c[1])
                    row[f"C_{c}"] = cm.C[a, b]
                    row[f"se_{c}"] = se[a, b]
                row.update(
                    lambda_1=es.values[0], lambda_2=es.values[1], lambda_3=es.values[2],
                    dimensionality=es.dimensionality, shape=shape, delta_norm=delta,
                )
                rows.append((row, cm))
    return rows


def _write_csv(path: Path, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in rows:
        w.writerow([row[c] if isinstance(row[c], (str, int, np.integer)) else _fmt(row[c]) for c in CSV_COLUMNS])
    path.write_text(buf.getvalue())


def _write_meshes(cfg, rows, mesh_dir: Path) -> list[str]:
    written = []
    counters: dict = {}
    for row, cm in rows:
        key = (row["method"], row["n_sites"], row["i"], row["j"])
        k = counters.get(key, 0)
        counters[key] = k + 1
        if k % cfg.cmv.stride or not np.any(cm.C):
            continue
        surf = build_surface(cm.C, cfg.cmv.level, cfg.cmv.kappa, cfg.cmv.subdivisions)
        stem = f"{row['method']}_N{row['n_sites']}_{row['i']}-{row['j']}_t{k:04d}"
        export_mesh(surf, mesh_dir / f"{stem}.csv", "csv")
        written.append(f"meshes/{stem}.csv")
        if not surf.is_empty:
            export_mesh(surf, mesh_dir / f"{stem}.ply", "ply")
            written.append(f"meshes/{stem}.ply")
    return written


def _half_max_rows(cfg, per_point):
    comp = cfg.half_max.component
    a, b = AXES.index(comp[0]), AXES.index(comp[1])
    rows = []
    for n, results in per_point:
        for (i, j), series in results[cfg.half_max.method].items():
            y = [cm.C[a, b] for cm in series]
            rows.append({"n_sites": n, "i": i, "j": j, "method": cfg.half_max.method,
                         "component": comp, "t_half": half_max_time(cfg.times, y)})
    return rows


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _prepare_target(out: Path) -> None:
    if out.exists() and not (out / "manifest.yaml").exists():
        raise FileExistsError(f"{out} exists and is not a previous run bundle; refusing to replace it")


def run(cfg: RunConfig, out=None, threads: int | None = None) -> RunResult:
    """Execute a validated configuration and write the output bundle to ``out``."""
    report = validate(cfg)
    if not report.ok:
        raise ConfigError(report.errors)
    for w in report.warnings:
        log.warning(w)
    out = Path(out or cfg.output or f"runs/{cfg.name}")
    threads = threads or cfg.threads
    _prepare_target(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        timings: dict = {}
        seeds: dict = {}
        rows = []
        per_point = []
        t_start = time.perf_counter()
        for lattice in cfg.lattices():
            results, reference = compute_point(cfg, lattice, threads, timings, seeds)
            rows += _rows_for(cfg, results, reference, lattice.n_sites)
            per_point.append((lattice.n_sites, results))
        files = ["correlations.csv"]
        _write_csv(tmp / "correlations.csv", [r for r, _ in rows])
        if cfg.half_max is not None:
            hm = _half_max_rows(cfg, per_point)
            buf = io.StringIO()
            w = csv.DictWriter(buf, fieldnames=list(hm[0]), lineterminator="\n")
            w.writeheader()
            w.writerows({k: (_fmt(v) if isinstance(v, float) else v) for k, v in r.items()} for r in hm)
            (tmp / "half_max.csv").write_text(buf.getvalue())
            files.append("half_max.csv")
        if cfg.cmv.enabled:
            t0 = time.perf_counter()
            files += _write_meshes(cfg, rows, tmp / "meshes")
            timings["cmv"] = round(time.perf_counter() - t0, 6)
        timings["total"] = round(time.perf_counter() - t_start, 6)
        manifest = {
            "tool": "spintwa",
            "version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "config": cfg.to_dict(),
            "threads": threads,
            "sampling": seeds,
            "timings_s": timings,
            "warnings": report.warnings,
            "files": {f: _sha256(tmp / f) for f in files},
        }
        (tmp / "manifest.yaml").write_text(yaml.safe_dump(manifest, sort_keys=False))
        if out.exists():
            shutil.rmtree(out)
        tmp.rename(out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return RunResult(out, [r for r, _ in rows], manifest, report.warnings)


# ---------------------------------------------------------------------- compare


class GridMismatch(ValueError):
    """Two bundles do not cover the same (method, pair, time) points."""


def read_correlations(path) -> list[dict]:
    path = Path(path)
    if path.is_dir():
        path = path / "correlations.csv"
    try:
        with open(path, newline="") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc


def _key(row):
    return (row["method"], int(row["n_sites"]), int(row["i"]), int(row["j"]), round(float(row["tJ"]), 12))


def compare(bundle_a, bundle_b) -> dict:
    """Largest componentwise and eigenvalue differences between two bundles."""
    a = {_key(r): r for r in read_correlations(bundle_a)}
    b = {_key(r): r for r in read_correlations(bundle_b)}
    if a.keys() != b.keys():
        only_a, only_b = sorted(a.keys() - b.keys()), sorted(b.keys() - a.keys())
        raise GridMismatch(
            f"bundles differ in {len(only_a)} + {len(only_b)} points "
            f"(first: {(only_a or only_b)[0]}); compare runs with matching methods, pairs and times"
        )
    cols = [f"C_{c}" for c in COMPONENTS] + ["lambda_1", "lambda_2", "lambda_3"]
    diffs = {c: 0.0 for c in cols}
    worst = None
    for k in sorted(a):
        for c in cols:
            d = abs(float(a[k][c]) - float(b[k][c]))
            if d > diffs[c]:
                diffs[c] = d
                if worst is None or d > worst[1]:
                    worst = (k, d, c)
    return {
        "points": len(a),
        "max_abs_diff": diffs,
        "overall_max": max(diffs.values()) if diffs else 0.0,
        "worst": None if worst is None else {"key": list(worst[0]), "column": worst[2], "diff": worst[1]},
    }


# -------------------------------------------------------------- standalone CMV


def meshes_from_csv(csv_path, out_dir, kappa: float = 0.5, level: float | None = None, subdivisions: int = 4) -> list[Path]:
    """Mesh and radii files for every row of a correlation CSV."""
    out_dir = Path(out_dir)
    written = []
    for n, row in enumerate(read_correlations(csv_path)):
        C = np.empty((3, 3))
        for c in COMPONENTS:
            a, b = AXES.index(c[0]), AXES.index(c[1])
            C[a, b] = C[b, a] = float(row[f"C_{c}"])
        if not np.any(C):
            continue
        surf = build_surface(C, level, kappa, subdivisions)
        stem = f"{row['method']}_N{row['n_sites']}_{row['i']}-{row['j']}_r{n:05d}"
        written.append(export_mesh(surf, out_dir / f"{stem}.csv", "csv"))
        if not surf.is_empty:
            written.append(export_mesh(surf, out_dir / f"{stem}.ply", "ply"))
    return written
