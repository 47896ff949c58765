"""Command-line front end: ``forcedecomp simulate`` and ``forcedecomp report``.

Exit codes: 0 success, 1 analysis error, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import secrets
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import (
    TrialRecord,
    atomic_write_text,
    csv_text,
    json_text,
    parse_trial,
    write_trial,
)
from .errors import ConfigError, ForceDecompError, ValidationError
from .geometry import (
    CategoryBands,
    EPS_NET_DATA,
    THETA_RESOLUTION_DEG,
    decompose_arrays,
)
from .netforce import (
    ACCEL_EPS,
    V_EPS,
    FilterConfig,
    FilterMethod,
    NetSource,
    agent_wrench,
    net_series,
    object_kinematics,
)
from .sim import load_scenario, run_scenario
from .stats import (
    F_PARALLEL_SPEC,
    F_PERP_SPEC,
    TENSION_SPEC,
    HistogramSpec,
    OverflowPolicy,
    category_stats,
    circular_density,
    magnitude_histogram,
)
from .tension import EPS_DOT, OperandMode, classify_tension_series

log = logging.getLogger("forcedecomp")

EXIT_OK, EXIT_ANALYSIS, EXIT_USAGE = 0, 1, 2

REPORT_FILES = (
    "category_stats.csv",
    "circular_density.csv",
    "f_parallel_hist.csv",
    "f_perp_hist.csv",
    "tension_hist.csv",
    "tension_states.csv",
    "checks.csv",
    "summary.json",
    "provenance.json",
)


class InputError(ForceDecompError):
    """Bad input file or arguments (exit code 2)."""


@dataclass(frozen=True)
class RunConfig:
    net_source: NetSource = NetSource.KINEMATIC
    eps_net: float = EPS_NET_DATA
    bands: CategoryBands = field(default_factory=CategoryBands)
    cutoff_hz: float = 5.0
    filter_order: int = 2
    filter_method: FilterMethod = FilterMethod.BUTTERWORTH
    tension_mode: OperandMode = OperandMode.OTHERS
    eps_dot: float = EPS_DOT
    v_eps: float = V_EPS
    accel_eps: float = ACCEL_EPS
    bin_width: float = 1.0
    overflow: OverflowPolicy = OverflowPolicy.DROP_REPORT
    density_bin_deg: float = 5.0
    f_parallel_range: tuple[float, float] = (F_PARALLEL_SPEC.lo, F_PARALLEL_SPEC.hi)
    f_perp_range: tuple[float, float] = (F_PERP_SPEC.lo, F_PERP_SPEC.hi)
    tension_range: tuple[float, float] = (TENSION_SPEC.lo, TENSION_SPEC.hi)

    def __post_init__(self):
        try:
            object.__setattr__(self, "net_source", NetSource(self.net_source))
            object.__setattr__(self, "filter_method", FilterMethod(self.filter_method))
            object.__setattr__(self, "tension_mode", OperandMode(self.tension_mode))
            object.__setattr__(self, "overflow", OverflowPolicy(self.overflow))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if isinstance(self.bands, str):
            object.__setattr__(self, "bands", CategoryBands.parse(self.bands))
        elif isinstance(self.bands, (list, tuple)):
            object.__setattr__(self, "bands", CategoryBands(*self.bands))
        elif isinstance(self.bands, dict):
            object.__setattr__(self, "bands", CategoryBands(**self.bands))
        for name in ("f_parallel_range", "f_perp_range", "tension_range"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if self.net_source is NetSource.PROVIDED:
            raise ConfigError("net source 'provided' is library-only; use kinematic or sum-of-agents")
        for name in ("eps_net", "eps_dot", "v_eps", "accel_eps"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        self.filter_config()
        self.histogram_specs()

    def filter_config(self) -> FilterConfig:
        return FilterConfig(self.cutoff_hz, self.filter_order, self.filter_method)

    def histogram_specs(self) -> dict[str, HistogramSpec]:
        return {
            "f_parallel": HistogramSpec(self.bin_width, *self.f_parallel_range, self.overflow),
            "f_perp": HistogramSpec(self.bin_width, *self.f_perp_range, self.overflow),
            "tension": HistogramSpec(self.bin_width, *self.tension_range, self.overflow),
        }

    def as_dict(self) -> dict:
        return {
            "net_source": self.net_source.value,
            "eps_net": self.eps_net,
            "bands": self.bands.as_dict(),
            "cutoff_hz": self.cutoff_hz,
            "filter_order": self.filter_order,
            "filter_method": self.filter_method.value,
            "tension_mode": self.tension_mode.value,
            "eps_dot": self.eps_dot,
            "v_eps": self.v_eps,
            "accel_eps": self.accel_eps,
            "bin_width": self.bin_width,
            "overflow": self.overflow.value,
            "density_bin_deg": self.density_bin_deg,
            "f_parallel_range": list(self.f_parallel_range),
            "f_perp_range": list(self.f_perp_range),
            "tension_range": list(self.tension_range),
            "theta_resolution_deg": THETA_RESOLUTION_DEG,
        }

    @classmethod
    def resolve(cls, flags: dict, config_file: dict | None = None) -> "RunConfig":
        """Defaults, then explicitly given flags, then config-file values."""
        known = {f.name for f in fields(cls)}
        merged = {k: v for k, v in flags.items() if v is not None}
        if config_file:
            unknown = set(config_file) - known
            if unknown:
                raise ConfigError(f"unknown config keys {sorted(unknown)}")
            merged.update(config_file)
        try:
            return cls(**merged)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------- report


def _checks(f_self, d, table, density, hists, tension, n_determinate) -> list[tuple]:
    rows = []

    def add(name, value, tol, ok):
        rows.append((name, value, tol, "ok" if ok else "FAIL"))

    det = d.determinate
    fs = f_self[det]
    par, perp = d.parallel[det], d.perpendicular[det]
    norm = np.sqrt(np.einsum("ij,ij->i", fs, fs))
    scale = np.maximum(norm, 1e-300)
    if len(fs):
        recon = float(np.max(np.linalg.norm(par + perp - fs, axis=1) / scale))
        ortho = float(np.max(np.abs(np.einsum("ij,ij->i", par, perp)) / scale**2))
        pyth = float(np.max(np.abs(np.einsum("ij,ij->i", par, par) + np.einsum("ij,ij->i", perp, perp) - norm**2)
                            / scale**2))
        plaus = float(np.max(np.maximum(np.linalg.norm(par, axis=1), np.linalg.norm(perp, axis=1)) / scale - 1.0))
    else:
        recon = ortho = pyth = plaus = 0.0
    add("reconstruction_rel_err", recon, 1e-9, recon <= 1e-9)
    add("orthogonality_rel_err", ortho, 1e-9, ortho <= 1e-9)
    add("pythagoras_rel_err", pyth, 1e-9, pyth <= 1e-9)
    add("plausibility_excess", max(plaus, 0.0), 1e-9, plaus <= 1e-9)
    add("category_partition", table.total - n_determinate, 0, table.total == n_determinate)
    if table.total:
        pct = sum(r.percent_time for r in table.rows.values())
        add("category_percent_sum_err", abs(pct - 100.0), 0.01, abs(pct - 100.0) <= 0.01)
    if density is not None:
        err = abs(float(np.sum(density.density)) - 1.0)
        add("density_sum_err", err, 1e-9, err <= 1e-9)
    for name, (h, n_in) in hists.items():
        add(f"{name}_hist_conservation", h.n_values - n_in, 0, h.n_values == n_in)
    frac = sum(tension.fractions.values())
    err = abs(frac - 1.0) if len(tension.value) else 0.0
    add("tension_fraction_sum_err", err, 1e-12, err <= 1e-12)
    v, s = tension.value, tension.state
    consistent = bool(np.all((v > 0) == (s == 0)) and np.all((v < 0) == (s == 1)) and np.all((v == 0) == (s == 2)))
    add("tension_state_consistency", int(not consistent), 0, consistent)
    return rows


def build_report(trial: TrialRecord, agent_id: str, config: RunConfig, trial_info: dict | None = None) -> dict[str, str]:
    """Run the full analysis for one agent; returns ``{file name: contents}``."""
    trial.meta.agent(agent_id)
    filt = config.filter_config()
    kin = object_kinematics(trial, filt)
    net = net_series(trial, config.net_source, filt, kinematics=kin, accel_eps=config.accel_eps)
    f_self, _ = agent_wrench(trial, agent_id, filt)
    d = decompose_arrays(f_self, net.force, config.eps_net, config.bands)
    table = category_stats(d, kin.acceleration, kin.velocity, config.v_eps)
    det = d.determinate
    n_det = int(np.count_nonzero(det))
    density = circular_density(d.theta_deg[det], config.density_bin_deg) if n_det else None

    specs = config.histogram_specs()
    par_vals = d.parallel_signed_mag[det]
    perp_vals = np.linalg.norm(d.perpendicular[det], axis=1)
    tension = classify_tension_series(
        trial, agent_id, config.tension_mode, config.eps_dot, net=net, filter_config=filt
    )
    hists = {
        "f_parallel": (magnitude_histogram(par_vals, specs["f_parallel"]), len(par_vals)),
        "f_perp": (magnitude_histogram(perp_vals, specs["f_perp"]), len(perp_vals)),
        "tension": (magnitude_histogram(tension.value, specs["tension"]), len(tension.value)),
    }
    checks = _checks(f_self, d, table, density, hists, tension, n_det)

    files = {}
    files["category_stats.csv"] = csv_text(table.csv_header(), table.csv_rows())
    if density is not None:
        files["circular_density.csv"] = csv_text(density.csv_header(), density.csv_rows())
    else:
        files["circular_density.csv"] = csv_text(["bin_lo_deg", "bin_hi_deg", "density"], [])
    for name, (h, _) in hists.items():
        fname = "f_perp_hist.csv" if name == "f_perp" else f"{name}_hist.csv"
        files[fname] = csv_text(h.csv_header(), h.csv_rows())
    files["tension_states.csv"] = csv_text(tension.csv_header(), tension.csv_rows())
    files["checks.csv"] = csv_text(["check", "value", "tolerance", "flag"], checks)

    summary = {
        "agent_id": agent_id,
        "n_samples": len(trial),
        "category_stats": table.as_dict(),
        "band_unions": {
            "aligned+acute_percent": table.union_percent(["aligned", "acute"]),
            "obtuse+antagonistic_percent": table.union_percent(["obtuse", "antagonistic"]),
        },
        "tension": tension.as_dict(),
        "histograms": {name: {"outliers_below": h.below, "outliers_above": h.above, "n_values": n}
                       for name, (h, n) in hists.items()},
        "checks_ok": all(c[3] == "ok" for c in checks),
    }
    files["summary.json"] = json_text(summary)
    provenance = {
        "tool": "forcedecomp",
        "version": __version__,
        "trial": trial_info or {},
        "trial_meta": {
            "study_label": trial.meta.study_label,
            "trial_id": trial.meta.trial_id,
            "sample_rate_hz": trial.meta.sample_rate_hz,
            "mass_kg": trial.meta.mass_kg,
            "inertia_z": trial.meta.inertia_z,
            "agents": trial.meta.agent_ids,
        },
        "agent_id": agent_id,
        "config": config.as_dict(),
        "net_force": {"source": net.source.value, "magnitude_valid": net.valid, "streams": net.streams},
        "kinematic_streams": kin.streams,
        "tension_mode": config.tension_mode.value,
        "histogram_specs": {k: v.as_dict() for k, v in specs.items()},
        "planar_reduction": {"gravity_axis": list(trial.meta.gravity_axis),
                             "kept": ["horizontal_force", "torque_about_gravity_axis"]},
    }
    files["provenance.json"] = json_text(provenance)
    return files


def write_bundle(files: dict[str, str], out_dir) -> None:
    out = Path(out_dir)
    for name, text in files.items():
        atomic_write_text(out / name, text)


def _load_trial(path: Path) -> tuple[TrialRecord, str]:
    """Trial plus the sha256 of the exact bytes parsed."""
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise InputError(f"trial file not found: {path}") from None
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    try:
        return parse_trial(data), hashlib.sha256(data).hexdigest()
    except ValidationError as exc:
        raise InputError(f"{path}: {exc}") from exc


def report_one(path, agent_id: str | None, config: RunConfig, out_dir) -> Path:
    path = Path(path)
    trial, digest = _load_trial(path)
    agent = agent_id or trial.meta.agent_ids[0]
    if agent not in trial.meta.agent_ids:
        raise InputError(f"{path}: no agent {agent!r} (agents: {trial.meta.agent_ids})")
    info = {"file": path.name, "sha256": digest}
    files = build_report(trial, agent, config, info)
    write_bundle(files, out_dir)
    return Path(out_dir)


def _report_job(args):
    path, agent, config, out_dir = args
    try:
        report_one(path, agent, config, out_dir)
        return str(path), None, EXIT_OK
    except InputError as exc:
        return str(path), str(exc), EXIT_USAGE
    except (ForceDecompError, ValueError) as exc:
        return str(path), f"{path}: {exc}", EXIT_ANALYSIS


# ---------------------------------------------------------------- commands


def cmd_simulate(args) -> int:
    path = Path(args.scenario)
    if not path.exists():
        print(f"error: scenario file not found: {path}", file=sys.stderr)
        return EXIT_USAGE
    try:
        scenario = load_scenario(path)
    except (ConfigError, OSError) as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    seed = args.seed
    if seed is None:
        seed = secrets.randbits(63)
        print(f"seed: {seed}")
    try:
        record = run_scenario(scenario, seed=seed)
        write_trial(record, args.out)
    except ForceDecompError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    log.info("wrote %s (%d samples)", args.out, len(record))
    return EXIT_OK


def cmd_report(args) -> int:
    config_file = None
    if args.config:
        cpath = Path(args.config)
        try:
            config_file = json.loads(cpath.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: config {cpath}: {exc}", file=sys.stderr)
            return EXIT_USAGE
    flags = {
        "net_source": args.net_source,
        "eps_net": args.eps_net,
        "bands": args.bands,
        "cutoff_hz": args.cutoff_hz,
        "filter_order": args.filter_order,
        "filter_method": args.filter_method,
        "tension_mode": args.tension_mode,
        "eps_dot": args.eps_dot,
        "v_eps": args.v_eps,
        "bin_width": args.bin_width,
        "overflow": args.overflow,
    }
    try:
        config = RunConfig.resolve(flags, config_file)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out = Path(args.out)
    trials = [Path(p) for p in args.trials]
    if len(trials) == 1:
        jobs = [(trials[0], args.agent, config, out)]
    else:
        stems = [p.stem for p in trials]
        if len(set(stems)) != len(stems):
            print("error: trial file names must be distinct when reporting several", file=sys.stderr)
            return EXIT_USAGE
        jobs = [(p, args.agent, config, out / p.stem) for p in trials]

    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_report_job, jobs))
    else:
        results = [_report_job(j) for j in jobs]
    code = EXIT_OK
    for _, message, status in results:
        if message:
            print(f"error: {message}", file=sys.stderr)
        code = max(code, status)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="forcedecomp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"forcedecomp {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario and write a trial file")
    sim.add_argument("--scenario", required=True, help="scenario JSON file")
    sim.add_argument("--seed", type=int, default=None, help="noise seed (drawn and printed if omitted)")
    sim.add_argument("--out", required=True, help="output trial .jsonl")
    sim.set_defaults(func=cmd_simulate)

    rep = sub.add_parser("report", help="decompose and analyze trial files")
    rep.add_argument("trials", nargs="+", help="trial .jsonl file(s)")
    rep.add_argument("--agent", default=None, help="agent id (default: first agent in the trial)")
    rep.add_argument("--out", required=True, help="output directory")
    rep.add_argument("--config", default=None, help="JSON config; its values override flags")
    rep.add_argument("--net-source", choices=[NetSource.KINEMATIC.value, NetSource.SUM_OF_AGENTS.value])
    rep.add_argument("--eps-net", type=float)
    rep.add_argument("--bands", help="aligned,orthogonal,antagonistic half-widths in degrees")
    rep.add_argument("--cutoff-hz", type=float)
    rep.add_argument("--filter-order", type=int)
    rep.add_argument("--filter-method", choices=[m.value for m in FilterMethod])
    rep.add_argument("--tension-mode", choices=[m.value for m in OperandMode])
    rep.add_argument("--eps-dot", type=float)
    rep.add_argument("--v-eps", type=float)
    rep.add_argument("--bin-width", type=float)
    rep.add_argument("--overflow", choices=[p.value for p in OverflowPolicy])
    rep.add_argument("--workers", type=int, default=1, help="parallel worker processes for several trials")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
