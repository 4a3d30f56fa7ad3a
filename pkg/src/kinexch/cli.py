"""Command-line front end: strict JSON configs, experiment dispatch, and
deterministic CSV/JSON emission (17 significant digits, LF endings, atomic
writes). Exit codes: 0 success, 1 config error, 2 runtime error."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from . import experiments, metrics, particles, pde
from .core import (
    DistributionSpec,
    Exponential,
    Gamma,
    GridSpec,
    Table,
    TwoAtom,
    Uniform,
    default_grid,
    make_grid_density,
    moments,
    sample,
    spec_label,
)

COMMANDS = ("pde", "particles", "nanbu", "poc", "gini", "envelope")


class ConfigError(ValueError):
    """Malformed or inconsistent CLI configuration."""


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------


def parse_spec(value: Any) -> DistributionSpec:
    """Accept 'gamma:5:1'-style shorthand or a {'kind': ...} object."""
    if isinstance(value, str):
        parts = value.split(":")
        kind, args = parts[0].lower(), parts[1:]
        try:
            nums = [float(p) for p in args]
        except ValueError as exc:
            raise ConfigError(f"bad spec shorthand {value!r}: {exc}") from None
        try:
            if kind == "gamma" and len(nums) in (1, 2):
                return Gamma(*nums)
            if kind == "exponential" and len(nums) in (0, 1):
                return Exponential(*nums)
            if kind == "uniform" and len(nums) == 2:
                return Uniform(*nums)
            if kind in ("twoatom", "two_atom") and len(nums) == 3:
                return TwoAtom(*nums)
        except ValueError as exc:
            raise ConfigError(f"bad spec {value!r}: {exc}") from None
        raise ConfigError(f"unknown spec shorthand {value!r}")
    if isinstance(value, dict):
        obj = dict(value)
        kind = obj.pop("kind", None)
        fields = {
            "gamma": (Gamma, ("shape", "rate")),
            "exponential": (Exponential, ("rate",)),
            "uniform": (Uniform, ("lo", "hi")),
            "two_atom": (TwoAtom, ("p", "x0", "x1")),
            "twoatom": (TwoAtom, ("p", "x0", "x1")),
            "table": (Table, ("points",)),
        }
        if kind not in fields:
            raise ConfigError(f"unknown spec kind {kind!r}")
        cls, names = fields[kind]
        unknown = set(obj) - set(names)
        if unknown:
            raise ConfigError(f"unknown spec key: {sorted(unknown)[0]!r}")
        try:
            return cls(**obj)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad spec object: {exc}") from None
    raise ConfigError(f"spec must be a string or object, got {type(value).__name__}")


_SCHEMAS: Dict[str, Dict[str, Any]] = {
    "pde": {
        "spec": "gamma:5:1",
        "dx": 0.01,
        "x_max": None,
        "dt": 0.05,
        "t_end": 5.0,
        "record_every": None,
        "backend": "fft",
        "renormalize": True,
        "with_h": False,
        "h_mc_samples": 1_000_000,
        "seed": 0,
    },
    "particles": {
        "spec": "gamma:5:1",
        "n_agents": 1000,
        "t_end": 2.0,
        "record_times": [0.0, 0.5, 1.0, 1.5, 2.0],
        "seed": 0,
    },
    "nanbu": {
        "spec": "gamma:5:1",
        "dx": 0.01,
        "x_max": None,
        "ensemble_size": 10_000,
        "t_end": 1.0,
        "record_times": [0.0, 0.5, 1.0],
        "with_w1": False,
        "ref_dt": 0.01,
        "seed": 0,
    },
    "poc": {
        "spec": "gamma:5:1",
        "ns": [64, 256, 1024, 4096],
        "t_grid": [0.0, 1.0],
        "replicas": None,
        "ref_dx": 0.005,
        "ref_dt": 0.01,
        "seed": 0,
    },
    "gini": {
        "spec": "gamma:5:1",
        "dx": 0.01,
        "x_max": None,
    },
    "envelope": {
        "specs": None,
        "m_cells": 256,
        "counterexample_n": 2000,
    },
}


def load_config(command: str, path: Optional[str]) -> Dict[str, Any]:
    """Defaults for the command, updated from the JSON file; unknown keys fail."""
    cfg = dict(_SCHEMAS[command])
    if path is None:
        return cfg
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    for key in data:
        if key not in cfg:
            raise ConfigError(f"unknown config key: {key!r}")
    cfg.update(data)
    return cfg


# ---------------------------------------------------------------------------
# Deterministic output
# ---------------------------------------------------------------------------


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=path.name + ".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _json_default(obj: Any) -> Any:
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def write_summary(path: Path, summary: Dict[str, Any]) -> None:
    text = json.dumps(summary, sort_keys=True, indent=2, default=_json_default)
    _atomic_write(path, text + "\n")


def _summary_skeleton(command: str, cfg: Dict[str, Any], seed: Optional[int]) -> Dict[str, Any]:
    echo = {
        k: (spec_label(parse_spec(v)) if k == "spec" and v is not None else v)
        for k, v in cfg.items()
    }
    return {
        "command": command,
        "config_echo": echo,
        "seed": seed,
        "fitted_rates": {},
        "pass_fail": {},
    }


# ---------------------------------------------------------------------------
# Command implementations
# ---------------------------------------------------------------------------


def _resolve_grid(spec: DistributionSpec, dx: float, x_max: Optional[float]) -> GridSpec:
    if x_max is None:
        return default_grid(spec, dx)
    return GridSpec(x_max=float(x_max), dx=float(dx))


def _cmd_pde(cfg: Dict[str, Any], out: Path, seed: int, workers: int) -> Dict[str, Any]:
    spec = parse_spec(cfg["spec"])
    grid = _resolve_grid(spec, cfg["dx"], cfg["x_max"])
    d0 = make_grid_density(spec, grid)
    dt = float(cfg["dt"])
    t_end = float(cfg["t_end"])
    every = dt if cfg["record_every"] is None else float(cfg["record_every"])
    times = tuple(k * every for k in range(int(round(t_end / every)) + 1))
    pcfg = pde.PdeConfig(
        dt=dt,
        t_end=t_end,
        record_times=times,
        conv_backend=cfg["backend"],
        renormalize_each_step=bool(cfg["renormalize"]),
    )
    snaps = pde.evolve(d0, pcfg)
    with_h = bool(cfg["with_h"])
    header = ["t", "mass", "mean", "variance", "gini"] + (["h"] if with_h else [])
    rows: List[List[Any]] = []
    for snap in snaps:
        row: List[Any] = [snap.t, snap.mass, snap.mean, snap.variance, snap.gini]
        if with_h:
            if grid.n_cells <= metrics.QUADRATURE3D_MAX_CELLS:
                row.append(metrics.gini_dissipation(snap.density).value)
            else:
                row.append(
                    metrics.gini_dissipation(
                        snap.density,
                        estimator=metrics.MONTECARLO,
                        mc_samples=int(cfg["h_mc_samples"]),
                        seed=seed,
                    ).value
                )
        rows.append(row)
    write_csv(out / "pde.csv", header, rows)

    g = np.array([s.gini for s in snaps])
    t = np.array([s.t for s in snaps])
    summary = _summary_skeleton("pde", cfg, seed)
    monotone = bool(np.all(np.diff(g) <= 1e-8 * np.maximum(np.diff(t) / dt, 1.0)))
    floor_ok = bool(np.all(g <= g[0] * np.exp(-t / 14434.0) + 1e-12))
    sel = (t >= 0.5) & (g > 0)
    if sel.sum() >= 2:
        summary["fitted_rates"]["gini_decay"] = -float(
            np.polyfit(t[sel], np.log(g[sel]), 1)[0]
        )
    summary["pass_fail"] = {"gini_monotone": monotone, "theorem_floor": floor_ok}
    print(f"pde: {len(rows)} records, gini {g[0]:.6g} -> {g[-1]:.6g}")
    return summary


def _cmd_particles(cfg: Dict[str, Any], out: Path, seed: int, workers: int) -> Dict[str, Any]:
    spec = parse_spec(cfg["spec"])
    n = int(cfg["n_agents"])
    times = tuple(float(t) for t in cfg["record_times"])
    scfg = particles.SimConfig(
        n_agents=n, t_end=float(cfg["t_end"]), record_times=times, seed=seed
    )
    w0 = sample(spec, n, _spawn(seed, 0))
    sum0 = float(w0.wealths.sum())
    traj = particles.simulate_exchange(w0, scfg)
    rows = [
        [r.t, r.mean * n / sum0, r.mean, r.variance, r.gini] for r in traj.records
    ]
    write_csv(out / "particles.csv", ["t", "mass", "mean", "variance", "gini"], rows)
    summary = _summary_skeleton("particles", cfg, seed)
    drift = max(abs(r.mean * n / sum0 - 1.0) for r in traj.records)
    summary["pass_fail"] = {"mass_conserved": drift <= 1e-9}
    summary["event_count"] = traj.event_count
    print(f"particles: {traj.event_count} events, sum drift {drift:.3g}")
    return summary


def _cmd_nanbu(cfg: Dict[str, Any], out: Path, seed: int, workers: int) -> Dict[str, Any]:
    spec = parse_spec(cfg["spec"])
    grid = _resolve_grid(spec, cfg["dx"], cfg["x_max"])
    d0 = make_grid_density(spec, grid)
    m = int(cfg["ensemble_size"])
    times = tuple(float(t) for t in cfg["record_times"])
    scfg = particles.SimConfig(
        n_agents=m, t_end=float(cfg["t_end"]), record_times=times, seed=seed
    )
    traj = particles.simulate_nanbu(d0, m, scfg)
    with_w1 = bool(cfg["with_w1"])
    refs = {}
    if with_w1:
        pcfg = pde.PdeConfig(
            dt=float(cfg["ref_dt"]), t_end=float(cfg["t_end"]), record_times=times
        )
        refs = {snap.t: snap.density for snap in pde.evolve(d0, pcfg)}
    mean0 = moments(d0)[1]
    header = ["t", "mass", "mean", "variance", "gini"] + (["w1"] if with_w1 else [])
    rows = []
    for rec in traj.records:
        row: List[Any] = [rec.t, rec.mean / mean0, rec.mean, rec.variance, rec.gini]
        if with_w1:
            if rec.wealths is None:
                raise RuntimeError(
                    "stored states exceeded the snapshot budget; "
                    "reduce ensemble_size or record_times for --with_w1"
                )
            ref = min(refs.items(), key=lambda kv: abs(kv[0] - rec.t))[1]
            row.append(metrics.w1(rec.wealths, ref))
        rows.append(row)
    write_csv(out / "nanbu.csv", header, rows)
    summary = _summary_skeleton("nanbu", cfg, seed)
    summary["event_count"] = traj.event_count
    if with_w1:
        summary["pass_fail"] = {"w1_final_small": rows[-1][-1] <= 0.05}
    print(f"nanbu: {traj.event_count} events")
    return summary


def _cmd_poc(cfg: Dict[str, Any], out: Path, seed: int, workers: int) -> Dict[str, Any]:
    spec = parse_spec(cfg["spec"])
    report = experiments.run_poc_experiment(
        spec,
        ns=[int(n) for n in cfg["ns"]],
        t_grid=[float(t) for t in cfg["t_grid"]],
        replicas=cfg["replicas"],
        seed=seed,
        ref_dx=float(cfg["ref_dx"]),
        ref_dt=float(cfg["ref_dt"]),
        workers=workers,
    )
    rows = [
        [r.n_agents, r.t, r.mean_w1, r.std_err, r.replicas] for r in report.rows
    ]
    write_csv(out / "poc.csv", ["n_agents", "t", "mean_w1", "std_err", "replicas"], rows)
    summary = _summary_skeleton("poc", cfg, seed)
    t_last = max(report.slopes)
    summary["fitted_rates"] = {
        f"w1_loglog_slope_t={t:g}": s for t, s in sorted(report.slopes.items())
    }
    final_rows = [r for r in report.rows if r.t == t_last]
    decreasing = all(
        a.mean_w1 - b.mean_w1 > 2.0 * math.hypot(a.std_err, b.std_err)
        for a, b in zip(final_rows, final_rows[1:])
    )
    slope = report.slopes[t_last]
    summary["pass_fail"] = {
        "w1_decreasing": decreasing,
        "slope_in_band": -0.7 <= slope <= -0.3,
    }
    print(f"poc: slope at t={t_last:g} is {slope:.4f}")
    return summary


def _cmd_gini(cfg: Dict[str, Any], out: Path, seed: int, workers: int) -> Dict[str, Any]:
    spec = parse_spec(cfg["spec"])
    closed: Optional[float] = None
    if isinstance(spec, Gamma):
        closed = metrics.gamma_gini_closed_form(spec.shape)
    elif isinstance(spec, Exponential):
        closed = metrics.gamma_gini_closed_form(1.0)
    elif isinstance(spec, Uniform):
        closed = (spec.hi - spec.lo) / (3.0 * (spec.hi + spec.lo))
    elif isinstance(spec, TwoAtom) and spec.mean > 0:
        closed = spec.p * (1 - spec.p) * abs(spec.x1 - spec.x0) / spec.mean
    grid_value: Optional[float] = None
    if not isinstance(spec, TwoAtom):
        grid = _resolve_grid(spec, cfg["dx"], cfg["x_max"])
        d = make_grid_density(spec, grid)
        grid_value = metrics.gini_density(d)
        echo_x_max = grid.x_max
    else:
        echo_x_max = None
    rows = [[spec_label(spec), closed, grid_value, cfg["dx"], echo_x_max]]
    write_csv(out / "gini.csv", ["label", "closed_form", "grid_gini", "dx", "x_max"], rows)
    summary = _summary_skeleton("gini", cfg, seed)
    summary["closed_form"] = closed
    summary["grid_gini"] = grid_value
    if closed is not None and grid_value is not None:
        summary["pass_fail"] = {"grid_matches_closed_form": abs(grid_value - closed) <= 1e-3}
    print(f"gini {spec_label(spec)}: closed form {closed}, grid value {grid_value}")
    return summary


def _cmd_envelope(cfg: Dict[str, Any], out: Path, seed: int, workers: int) -> Dict[str, Any]:
    specs = cfg["specs"]
    parsed = None if specs is None else [parse_spec(s) for s in specs]
    report = experiments.run_envelope_survey(
        parsed,
        m_cells=int(cfg["m_cells"]),
        counterexample_n=int(cfg["counterexample_n"]),
    )
    header = ["label", "gini", "h", "a", "b", "c", "g_upper", "h_lower", "ratio", "skipped", "note"]
    rows = [
        [r.label, r.gini, r.h, r.a, r.b, r.c, r.g_upper, r.h_lower, r.ratio, r.skipped, r.note]
        for r in report.rows
    ]
    write_csv(out / "envelope.csv", header, rows)
    summary = _summary_skeleton("envelope", cfg, seed)
    summary["min_ratio"] = None if math.isnan(report.min_ratio) else report.min_ratio
    summary["pass_fail"] = {"decay_bound_holds": report.all_pass}
    print(f"envelope: min dissipation ratio {report.min_ratio:.4g}")
    return summary


_RUNNERS = {
    "pde": _cmd_pde,
    "particles": _cmd_particles,
    "nanbu": _cmd_nanbu,
    "poc": _cmd_poc,
    "gini": _cmd_gini,
    "envelope": _cmd_envelope,
}


def _spawn(seed: int, index: int) -> int:
    return int(
        np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1, np.uint64)[0]
    )


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kinexch",
        description="Pair-averaging exchange: simulators, grid solver, inequality metrics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="JSON config file (strict keys)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--spec", help="spec shorthand, e.g. gamma:5:1")
        p.add_argument("--workers", type=int, help="worker count (default KINEXCH_WORKERS or 1)")
    return parser


def parse_and_dispatch(argv: Sequence[str]) -> int:
    """Parse arguments, run the selected command, emit CSV + JSON summary."""
    parser = _build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        cfg = load_config(args.command, args.config)
        if args.spec is not None:
            if "spec" in cfg:
                cfg["spec"] = args.spec
            elif "specs" in cfg:
                cfg["specs"] = [args.spec]
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        if args.workers is not None:
            workers = args.workers
        else:
            workers = int(os.environ.get("KINEXCH_WORKERS", "1"))
        if workers < 1:
            raise ConfigError(f"workers must be at least 1, got {workers}")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        # validate the spec early so bad values count as config errors
        if "spec" in cfg:
            parse_spec(cfg["spec"])
        elif cfg.get("specs") is not None:
            for s in cfg["specs"]:
                parse_spec(s)
    except (ConfigError, ValueError, TypeError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        summary = _RUNNERS[args.command](cfg, out, seed, workers)
        write_summary(out / f"{args.command}_summary.json", summary)
        return 0
    except Exception as exc:  # noqa: BLE001 - report and signal failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main(argv: Optional[Sequence[str]] = None) -> int:
    return parse_and_dispatch(sys.argv[1:] if argv is None else list(argv))


if __name__ == "__main__":
    sys.exit(main())
