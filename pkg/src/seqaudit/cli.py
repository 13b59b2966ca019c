"""Command-line front end.

Subcommands: simulate, test, mi-scan, overshoot, analytic, oracle, reproduce.
Configuration is a flat INI file with one section per concern ([experiment],
[model], [device], plus command-specific sections); every command writes a
manifest next to its outputs that is sufficient to reproduce the run.

Exit codes: 0 success, 2 configuration error, 3 records-schema error,
4 statistical precondition or regime failure.
"""
from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .analytic import (
    ContinuousLLRParams,
    RegimeError,
    decision_time_density,
    error_probs_continuous,
    mean_decision_times,
    mutual_info_continuous,
    mutual_info_discretized,
)
from .core import (
    EmptyCellError,
    ErrorSpec,
    SchemaError,
    Thresholds,
    ValidationError,
    read_records_csv,
    thresholds_from_alphas,
    write_records_csv,
)
from .models import DriftDiffusionModel, GaussianIIDModel, MarkovGaussianModel
from .oracle import LatticeBernoulliModel, enumerate_exact_law, write_exact_law_csv
from .overshoot import condition51_flatness, overshoot_profile, write_series_csv
from .simulate import ExperimentConfig, run_experiment, write_metadata
from .stats import (
    conditional_mi_plugin,
    optimality_test_known_h,
    optimality_test_unknown_h,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SCHEMA = 3
EXIT_STATS = 4


class ConfigError(Exception):
    """Bad or missing configuration; message names the offending key."""


MODEL_FIELDS = {
    "gaussian_iid": ("mu1", "mu2", "sigma1", "sigma2"),
    "markov_gaussian": ("v1", "v2", "w1", "w2", "sigma1", "sigma2"),
    "drift_diffusion": ("mu1", "mu2", "sigma"),
    "lattice": ("p", "m1", "m2"),
}
MODEL_CLASSES = {
    "gaussian_iid": GaussianIIDModel,
    "markov_gaussian": MarkovGaussianModel,
    "drift_diffusion": DriftDiffusionModel,
    "lattice": LatticeBernoulliModel,
}


def load_config(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    return parser


def _get(section, key, cast=float, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigError(f"missing key '{key}' in section [{section.name}]")
        return default
    raw = section[key]
    try:
        if cast is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"key '{key}' in [{section.name}]: {exc}") from exc


def build_model(cfg: configparser.ConfigParser):
    if "model" not in cfg:
        raise ConfigError("missing [model] section")
    section = cfg["model"]
    kind = section.get("kind")
    if kind not in MODEL_FIELDS:
        raise ConfigError(
            f"unknown model kind {kind!r}; expected one of {sorted(MODEL_FIELDS)}"
        )
    fields = {}
    for name in MODEL_FIELDS[kind]:
        cast = int if (kind == "lattice" and name in ("m1", "m2")) else float
        fields[name] = _get(section, name, cast=cast, required=True)
    try:
        return kind, MODEL_CLASSES[kind](**fields)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def build_device(cfg: configparser.ConfigParser, kind: str, model):
    """World model from [device] overrides; matched when no override given."""
    if "device" not in cfg:
        return None, None
    section = cfg["device"]
    overrides = {
        name: _get(section, name, cast=float)
        for name in MODEL_FIELDS[kind]
        if name in section
    }
    if kind == "lattice" and overrides:
        raise ConfigError("lattice devices are always matched; remove belief overrides")
    wm = replace(model, **overrides) if overrides else None
    l1 = _get(section, "l1", cast=float)
    l2 = _get(section, "l2", cast=float)
    th = None
    if l1 is not None or l2 is not None:
        if l1 is None or l2 is None:
            raise ConfigError("thresholds need both l1 and l2")
        try:
            th = Thresholds(l1, l2)
        except ValidationError as exc:
            raise ConfigError(str(exc)) from exc
    return wm, th


def build_experiment(cfg: configparser.ConfigParser, seed_override=None) -> ExperimentConfig:
    kind, model = build_model(cfg)
    wm, th = build_device(cfg, kind, model)
    if th is None:
        if kind == "lattice":
            th = model.thresholds
        else:
            raise ConfigError("missing [device] l1/l2 thresholds")
    if "experiment" not in cfg:
        raise ConfigError("missing [experiment] section")
    section = cfg["experiment"]
    seed = seed_override if seed_override is not None else _get(
        section, "seed", cast=int, required=True
    )
    dt = _get(cfg["device"], "dt", cast=float) if "device" in cfg else None
    try:
        return ExperimentConfig(
            model=model,
            thresholds=th,
            trials=_get(section, "trials", cast=int, required=True),
            seed=seed,
            world_model=wm,
            p1=_get(section, "p1", cast=float, default=0.5),
            window=_get(section, "window", cast=float, default=1000.0),
            dt=dt,
            stratified=_get(section, "stratified", cast=bool, default=False),
        )
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def write_manifest(out_dir: Path, command: str, payload: Dict, outputs: List[str], t0: float):
    manifest = {
        "command": command,
        "toolkit_version": __version__,
        "outputs": sorted(outputs),
        "wall_clock_seconds": round(time.time() - t0, 3),
        **payload,
    }
    path = out_dir / f"manifest_{command.replace('-', '_')}.json"
    tmp = path.with_suffix(".json.tmp")
    with open(tmp, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)
    return str(path)


def _config_payload(cfg: configparser.ConfigParser, seed) -> Dict:
    return {
        "config": {name: dict(cfg[name]) for name in cfg.sections()},
        "seed": seed,
    }


def cmd_simulate(args) -> int:
    t0 = time.time()
    cfg = load_config(args.config)
    exp = build_experiment(cfg, seed_override=args.seed)
    result = run_experiment(exp, threads=args.threads)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records_path = out_dir / "records.csv"
    meta_path = out_dir / "records.meta"
    write_records_csv(records_path, result.records)
    write_metadata(meta_path, result)
    outputs = [str(records_path), str(meta_path)]
    write_manifest(out_dir, "simulate", _config_payload(cfg, exp.seed), outputs, t0)
    print(
        f"simulated {exp.trials} trials: {len(result.records)} decided, "
        f"{result.truncated_count} truncated"
    )
    print(f"alpha1_hat={result.alpha1_hat:.6g} alpha2_hat={result.alpha2_hat:.6g}")
    print(f"records -> {records_path}")
    return EXIT_OK


def _print_report(label: str, rep) -> None:
    print(
        f"{label}: method={rep.method} statistic={rep.statistic:.6g} "
        f"p_value={rep.p_value:.6g} n1={rep.n1} n2={rep.n2}"
    )
    for level in (0.01, 0.05):
        verdict = "reject optimality" if rep.p_value < level else "no rejection"
        print(f"  at level {level}: {verdict}")


def cmd_test(args) -> int:
    t0 = time.time()
    batch = read_records_csv(args.records, time_kind=args.time_type)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    if args.mode == "known-h":
        rep1, rep2 = optimality_test_known_h(batch)
        _print_report("decision-1 cells (H=1 vs H=2)", rep1)
        _print_report("decision-2 cells (H=1 vs H=2)", rep2)
        rows = [("d1_cells", rep1), ("d2_cells", rep2)]
    else:
        print(
            "note: the unknown-hypothesis test assumes involution-symmetric "
            "observations and symmetric error constraints (l1 = -l2); this is "
            "a caller assertion that cannot be checked from records alone"
        )
        rep = optimality_test_unknown_h(batch)
        _print_report("decision-1 vs decision-2 times", rep)
        rows = [("d1_vs_d2", rep)]
    report_path = out_dir / "test_report.csv"
    with open(report_path, "w", newline="\n") as f:
        f.write("comparison,method,statistic,p_value,n1,n2\n")
        for name, rep in rows:
            f.write(
                f"{name},{rep.method},{rep.statistic!r},{rep.p_value!r},{rep.n1},{rep.n2}\n"
            )
    outputs = [str(report_path)]
    payload = {"records": str(args.records), "mode": args.mode, "seed": None}
    write_manifest(out_dir, "test", payload, outputs, t0)
    return EXIT_OK


def _clamped_error_spec(alpha1: float, alpha2: float, n: int) -> ErrorSpec:
    floor = 0.5 / max(n, 2)
    clamp = lambda a: min(max(a if math.isfinite(a) else floor, floor), 0.4999)
    return ErrorSpec(clamp(alpha1), clamp(alpha2))


@dataclass
class ScanRow:
    value: float
    mi_bits: float
    mean_time: float
    mean_time_ref: float
    alpha1_hat: float
    alpha2_hat: float
    truncated_fraction: float

    @property
    def time_ratio_minus_one(self) -> float:
        return self.mean_time / self.mean_time_ref - 1.0


def mi_scan_rows(
    base: ExperimentConfig, parameter: str, values: Sequence[float], threads: int = 1
) -> List[ScanRow]:
    """One simulate-and-estimate cycle per device-belief grid point.

    The reference mean time comes from a matched device whose thresholds
    are rebuilt from the error probabilities the scanned device actually
    achieved, mirroring the divergence-to-optimality diagnostic.  Every run
    reuses the master seed (common random numbers), so differences across
    grid points and against the reference reflect the device change rather
    than fresh sampling noise.
    """
    rows = []
    wm_base = base.device
    for i, value in enumerate(values):
        wm = replace(wm_base, **{parameter: float(value)})
        cfg = replace(base, world_model=wm)
        res = run_experiment(cfg, threads=threads)
        est = conditional_mi_plugin(res.records)
        mean_time = float(res.records.time.mean())
        spec = _clamped_error_spec(res.alpha1_hat, res.alpha2_hat, len(res.records))
        ref_cfg = replace(
            base,
            world_model=None,
            thresholds=thresholds_from_alphas(spec),
        )
        ref = run_experiment(ref_cfg, threads=threads)
        rows.append(
            ScanRow(
                value=float(value),
                mi_bits=est.value_bits,
                mean_time=mean_time,
                mean_time_ref=float(ref.records.time.mean()),
                alpha1_hat=res.alpha1_hat,
                alpha2_hat=res.alpha2_hat,
                truncated_fraction=res.truncated_count / cfg.trials,
            )
        )
    return rows


def cmd_mi_scan(args) -> int:
    t0 = time.time()
    cfg = load_config(args.config)
    base = build_experiment(cfg, seed_override=args.seed)
    if "scan" not in cfg:
        raise ConfigError("missing [scan] section")
    section = cfg["scan"]
    parameter = section.get("parameter")
    kind, _ = build_model(cfg)
    if parameter not in MODEL_FIELDS[kind]:
        raise ConfigError(f"scan parameter {parameter!r} is not a field of {kind}")
    if "values" in section:
        values = [float(v) for v in section["values"].split(",")]
    else:
        start = _get(section, "start", required=True)
        stop = _get(section, "stop", required=True)
        points = _get(section, "points", cast=int, required=True)
        values = np.linspace(start, stop, points).tolist()
    if not values:
        raise ConfigError("empty scan grid")
    rows = mi_scan_rows(base, parameter, values, threads=args.threads)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "mi_scan.csv"
    with open(path, "w", newline="\n") as f:
        f.write(
            f"{parameter},mi_bits,mean_time,mean_time_ref,time_ratio_minus_one,"
            "alpha1_hat,alpha2_hat,truncated_fraction\n"
        )
        for r in rows:
            f.write(
                f"{r.value!r},{r.mi_bits!r},{r.mean_time!r},{r.mean_time_ref!r},"
                f"{r.time_ratio_minus_one!r},{r.alpha1_hat!r},{r.alpha2_hat!r},"
                f"{r.truncated_fraction!r}\n"
            )
    write_manifest(out_dir, "mi-scan", _config_payload(cfg, base.seed), [str(path)], t0)
    print(f"mi-scan over {len(rows)} points -> {path}")
    return EXIT_OK


def cmd_overshoot(args) -> int:
    t0 = time.time()
    cfg = load_config(args.config)
    kind, model = build_model(cfg)
    if kind == "drift_diffusion":
        raise ConfigError("overshoot diagnostics apply to discrete models only")
    wm, th = build_device(cfg, kind, model)
    if th is None and kind == "lattice":
        th = model.thresholds
    if th is None:
        raise ConfigError("missing [device] l1/l2 thresholds")
    section = cfg["overshoot"] if "overshoot" in cfg else {}
    trials = int(section.get("trials", "1000000"))
    estimator = section.get("estimator", "direct")
    mass_threshold = float(section.get("mass_threshold", "0.9"))
    max_steps = int(section.get("max_steps", "2000"))
    seed = args.seed if args.seed is not None else int(section.get("seed", "1"))
    device = wm if wm is not None else model
    series = overshoot_profile(
        model, device, th, trials, seed=seed, max_steps=max_steps, estimator=estimator
    )
    flatness = condition51_flatness(series, mass_threshold=mass_threshold)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "overshoot.csv"
    write_series_csv(path, series)
    write_manifest(out_dir, "overshoot", _config_payload(cfg, seed), [str(path)], t0)
    print(f"flatness ratio over {mass_threshold:.0%} mass range: {flatness:.4f}")
    print(f"profile -> {path}")
    return EXIT_OK


def _parse_grid(spec: str) -> np.ndarray:
    try:
        if ":" in spec:
            start, stop, n = spec.split(":")
            return np.linspace(float(start), float(stop), int(n))
        return np.array([float(v) for v in spec.split(",")])
    except ValueError as exc:
        raise ConfigError(f"bad grid {spec!r}: use start:stop:points or a comma list") from exc


def cmd_analytic(args) -> int:
    t0 = time.time()
    p = ContinuousLLRParams(a1=args.a1, a2=args.a2, b=args.b)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"analytic_{args.quantity.replace('-', '_')}.csv"
    lines: List[str] = []
    if args.quantity == "error-probs":
        th = Thresholds(args.l1, args.l2)
        a1, a2 = error_probs_continuous(p, th)
        lines = ["alpha1,alpha2", f"{a1!r},{a2!r}"]
    elif args.quantity == "mean-times":
        th = Thresholds(args.l1, args.l2)
        m = mean_decision_times(p, th)
        lines = [
            "cell,mean_time",
            f"d1_h1,{m.d1_h1!r}",
            f"d1_h2,{m.d1_h2!r}",
            f"d2_h1,{m.d2_h1!r}",
            f"d2_h2,{m.d2_h2!r}",
            f"wald_d1,{m.wald_d1!r}",
        ]
    elif args.quantity == "density":
        th = Thresholds(args.l1, args.l2)
        grid = _parse_grid(args.grid)
        lines = ["t,d,h,density"]
        for d in (1, 2):
            for h in (1, 2):
                dens = decision_time_density(grid, d, h, p, th)
                lines.extend(
                    f"{float(t)!r},{d},{h},{float(v)!r}" for t, v in zip(grid, dens)
                )
    elif args.quantity == "mi-continuous":
        val = mutual_info_continuous(p, args.l1)
        lines = ["l1,mi_bits", f"{args.l1!r},{val!r}"]
    elif args.quantity == "mi-discretized":
        grid = _parse_grid(args.grid)
        lines = ["t_r,mi_bits"]
        lines.extend(
            f"{tr!r},{mutual_info_discretized(p, args.l1, tr)!r}" for tr in grid
        )
    else:
        raise ConfigError(f"unknown quantity {args.quantity!r}")
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
    payload = {"parameters": vars(args).copy(), "seed": None}
    payload["parameters"].pop("func", None)
    write_manifest(out_dir, "analytic", payload, [str(path)], t0)
    print(f"{args.quantity} -> {path}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    t0 = time.time()
    model = LatticeBernoulliModel(p=args.p, m1=args.m1, m2=args.m2)
    law = enumerate_exact_law(model, k_max=args.k_max)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "exact_law.csv"
    write_exact_law_csv(path, law)
    payload = {
        "parameters": {"p": args.p, "m1": args.m1, "m2": args.m2, "k_max": law.k_max},
        "seed": None,
    }
    write_manifest(out_dir, "oracle", payload, [str(path)], t0)
    print(
        f"enumerated up to k={law.k_max}; surviving mass "
        f"H1={law.surviving[1]:.3g} H2={law.surviving[2]:.3g}"
    )
    print(f"law -> {path}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="seqaudit",
        description="Simulate binary sequential decision devices and audit their optimality.",
    )
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for trials")
    parser.add_argument("--out-dir", default=".", help="directory for outputs")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a configured experiment, write records CSV")
    p_sim.add_argument("config")
    p_sim.set_defaults(func=cmd_simulate)

    p_test = sub.add_parser("test", help="run an optimality test on a records CSV")
    p_test.add_argument("records")
    p_test.add_argument("--mode", choices=["known-h", "unknown-h"], default="known-h")
    p_test.add_argument(
        "--time-type",
        choices=["steps", "seconds"],
        default=None,
        help="time representation; inferred from the file when omitted",
    )
    p_test.set_defaults(func=cmd_test)

    p_scan = sub.add_parser("mi-scan", help="scan a device belief, estimating MI per point")
    p_scan.add_argument("config")
    p_scan.set_defaults(func=cmd_mi_scan)

    p_over = sub.add_parser("overshoot", help="estimate the exponentiated-overshoot profile")
    p_over.add_argument("config")
    p_over.set_defaults(func=cmd_overshoot)

    p_ana = sub.add_parser("analytic", help="tabulate continuous-case closed forms")
    p_ana.add_argument(
        "--quantity",
        required=True,
        choices=["error-probs", "density", "mean-times", "mi-continuous", "mi-discretized"],
    )
    p_ana.add_argument("--a1", type=float, required=True)
    p_ana.add_argument("--a2", type=float, required=True)
    p_ana.add_argument("--b", type=float, required=True)
    p_ana.add_argument("--l1", type=float, required=True)
    p_ana.add_argument("--l2", type=float, default=None)
    p_ana.add_argument("--grid", default="1:1000:200", help="start:stop:points or comma list")
    p_ana.set_defaults(func=cmd_analytic)

    p_or = sub.add_parser("oracle", help="enumerate the exact lattice law")
    p_or.add_argument("--p", type=float, required=True)
    p_or.add_argument("--m1", type=int, required=True)
    p_or.add_argument("--m2", type=int, required=True)
    p_or.add_argument("--k-max", type=int, default=None)
    p_or.set_defaults(func=cmd_oracle)

    p_rep = sub.add_parser("reproduce", help="rebuild a figure's data at desk scale")
    p_rep.add_argument(
        "figure", choices=["fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8"]
    )
    p_rep.add_argument("--scale", type=float, default=None, help="trial-count multiplier")
    p_rep.set_defaults(func=cmd_reproduce)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (EmptyCellError, RegimeError) as exc:
        print(f"statistical precondition failed: {exc}", file=sys.stderr)
        return EXIT_STATS
    except ValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def cmd_reproduce(args) -> int:
    from . import reproduce

    t0 = time.time()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else 20180115
    outputs = reproduce.run_figure(
        args.figure, out_dir, scale=args.scale, seed=seed, threads=args.threads
    )
    payload = {"figure": args.figure, "scale": args.scale, "seed": seed}
    write_manifest(out_dir, f"reproduce-{args.figure}", payload, outputs, t0)
    print(f"{args.figure}: wrote {len(outputs)} file(s) to {out_dir}")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
