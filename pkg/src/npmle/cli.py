"""Command-line front end.

    npmle generate   --ground-truth rho_d --d 1 --N 1500 --seed 0 --out data/
    npmle fit        --data data/samples.csv --scheme wfr --m 500 --eta 0.1 --out fit/
    npmle certify    --data data/samples.csv --mixture fit/mixture.csv --out cert/
    npmle experiment Certify43 --trials 20 --threads 4 --out runs/certify
    npmle lab        --out runs/lab

Settings come from built-in defaults, then a flat JSON ``--config`` file
(a previous run's manifest.json is accepted too), then command-line flags.

Exit codes: 0 success, 2 configuration error, 3 numerical abort, 4 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from npmle import __version__, datagen, io
from npmle.certify import UnsupportedDimensionError, certify_1d
from npmle.experiments import ConfigError, Experiment, ExperimentConfig, run_experiment
from npmle.first_variation import FirstVariationField
from npmle.kernel import KernelSpec
from npmle.mixture import GroundTruthMixture, ParticleMixture, SampleSet
from npmle.optimizers import NumericalAbort, OptimizerConfig, init_particles, run

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
U64 = 1 << 64

GENERATE_DEFAULTS = {"ground_truth": "rho_d", "d": 1, "N": 1500, "seed": 0, "out": ".",
                     "stem": "samples", "threads": 1}
FIT_DEFAULTS = {"data": None, "init": None, "heldout": None, "scheme": "wfr", "m": 500,
                "eta": 0.1, "gamma": None, "t0": 1000, "seed": 0, "record_every": 1,
                "order": "locations_first", "record_gap": False, "gap_spacing": 0.01,
                "gap_margin": 1.0, "snapshot_every": None, "out": ".", "threads": 1}
CERTIFY_DEFAULTS = {"data": None, "mixture": None, "spacing": 0.01, "margin": 1.0,
                    "refine": False, "out": ".", "threads": 1}
EXPERIMENT_KEYS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def load_config(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"{path} is not valid JSON ({exc})") from None
    if not isinstance(obj, dict):
        raise ConfigError("--config", f"{path} must hold a JSON object")
    if "config" in obj and "files" in obj:  # a run manifest
        obj = obj["config"]
    return obj


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _merge(defaults: dict, args, allowed=None, rename=None) -> dict:
    """defaults < config file < flags; unknown file keys are config errors."""
    allowed = set(defaults) if allowed is None else allowed
    cfg = dict(defaults)
    if getattr(args, "config", None):
        for key, val in load_config(args.config).items():
            if key not in allowed:
                raise ConfigError(key, "unknown configuration key")
            cfg[key] = val
    flags = {k: v for k, v in vars(args).items()
             if k not in ("config", "command", "func", "set")}
    for key, val in flags.items():
        cfg[(rename or {}).get(key, key)] = val
    for item in getattr(args, "set", None) or []:
        key, sep, val = item.partition("=")
        if not sep or key not in allowed:
            raise ConfigError(key or item, "unknown configuration key (use --set KEY=VALUE)")
        cfg[key] = _parse_value(val)
    return cfg


def _need(cfg, key):
    if cfg.get(key) in (None, ""):
        raise ConfigError(key, "required")
    return cfg[key]


def _seed(v, key="seed"):
    if isinstance(v, bool) or not isinstance(v, int) or not 0 <= v < U64:
        raise ConfigError(key, f"expected an unsigned 64-bit integer, got {v!r}")
    return v


def _int(cfg, key, lo=0):
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise ConfigError(key, f"expected an integer >= {lo}, got {v!r}")
    return v


def cmd_generate(args):
    cfg = _merge(GENERATE_DEFAULTS, args)
    try:
        gt = GroundTruthMixture.from_name(cfg["ground_truth"])
    except ValueError as exc:
        raise ConfigError("ground_truth", str(exc)) from None
    d, N, seed = _int(cfg, "d", 1), _int(cfg, "N", 1), _seed(cfg["seed"])
    out = Path(cfg["out"])
    csv_path, meta = datagen.write_dataset(out, gt, d, N, seed, cfg["stem"])
    io.write_manifest(out, cfg, [seed])
    print(f"wrote {csv_path} ({N} x {d}) and {meta}")


def cmd_fit(args):
    cfg = _merge(FIT_DEFAULTS, args)
    s = SampleSet.from_csv(_need(cfg, "data"))
    heldout = SampleSet.from_csv(cfg["heldout"]) if cfg["heldout"] else None
    seed = _seed(cfg["seed"])
    try:
        ocfg = OptimizerConfig(scheme=cfg["scheme"], step_size=cfg["eta"], fr_step=cfg["gamma"],
                               max_iters=cfg["t0"], seed=seed,
                               record_every=cfg["record_every"], order=cfg["order"],
                               record_gap=bool(cfg["record_gap"]),
                               gap_spacing=cfg["gap_spacing"], gap_margin=cfg["gap_margin"],
                               snapshot_every=cfg["snapshot_every"])
    except (ValueError, TypeError) as exc:
        raise ConfigError("fit", str(exc)) from None
    if cfg["init"]:
        rho0 = ParticleMixture.from_csv(cfg["init"])
    else:
        rho0 = init_particles(s, _int(cfg, "m", 1), seed)
    if rho0.dim != s.dim:
        raise ConfigError("init", f"mixture dimension {rho0.dim} != data dimension {s.dim}")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    rho0.to_csv(out / "initial.csv")
    k = KernelSpec(s.dim)
    try:
        rho, rec = run(k, s, rho0, ocfg, heldout)
    except NumericalAbort as exc:
        if exc.record is not None:
            io.write_trajectory(exc.record, out / "trajectory.csv")
        raise
    io.write_trajectory(rec, out / "trajectory.csv")
    io.write_snapshots(rec, out / "snapshots.csv")
    rho.to_csv(out / "mixture.csv")
    if rec.warnings:
        (out / "warnings.txt").write_text("\n".join(rec.warnings) + "\n", encoding="utf-8")
    io.write_manifest(out, cfg, [seed])
    gap = rec.gap_hat[-1]
    print(f"{ocfg.scheme.value}: {ocfg.max_iters} iterations, train nll {rec.train_nll[-1]:.6f}"
          + ("" if gap is None else f", gap_hat {gap:.3e}"))


def cmd_certify(args):
    cfg = _merge(CERTIFY_DEFAULTS, args)
    s = SampleSet.from_csv(_need(cfg, "data"))
    rho = ParticleMixture.from_csv(_need(cfg, "mixture"))
    if rho.dim != s.dim:
        raise ConfigError("mixture", f"mixture dimension {rho.dim} != data dimension {s.dim}")
    k = KernelSpec(s.dim)
    try:
        rep = certify_1d(FirstVariationField.at(k, s, rho), rho, cfg["spacing"], cfg["margin"],
                         refine=bool(cfg["refine"]))
    except UnsupportedDimensionError as exc:
        raise ConfigError("data", str(exc)) from None
    except ValueError as exc:
        raise ConfigError("spacing", str(exc)) from None
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    rep.to_json(out / "certificate.json")
    io.write_manifest(out, cfg, [])
    print(f"gap_hat {rep.gap_hat:.6e}, atom flatness {rep.atom_flatness:.3e}")


def _experiment_config(args, name=None) -> ExperimentConfig:
    file_cfg = load_config(args.config) if getattr(args, "config", None) else {}
    name = name or getattr(args, "name", None) or file_cfg.get("experiment")
    if not name:
        raise ConfigError("experiment", "no experiment named on the command line or in the config")
    try:
        exp = Experiment.parse(name)
    except ValueError as exc:
        raise ConfigError("experiment", str(exc)) from None
    defaults = {"experiment": exp.value, **ExperimentConfig.defaults(exp)}
    cfg = _merge(defaults, args, EXPERIMENT_KEYS, rename={"seed": "base_seed", "name": "experiment"})
    cfg["experiment"] = exp.value
    try:
        return ExperimentConfig(**cfg)
    except TypeError as exc:
        raise ConfigError("experiment", str(exc)) from None


def cmd_experiment(args):
    cfg = _experiment_config(args)
    summary = run_experiment(cfg)
    print(_describe(cfg, summary))


def cmd_lab(args):
    cfg = _experiment_config(args, "Lab")
    summary = run_experiment(cfg)
    print(_describe(cfg, summary))


def _describe(cfg, summary) -> str:
    e = cfg.experiment
    if e is Experiment.INSTABILITY:
        gaps = summary["wfr_gaps"]
        ok = sum(g <= 0.05 for g in gaps)
        return (f"bad minima: EM {summary['em_bad']}/{cfg.trials}, GD {summary['gd_bad']}/"
                f"{cfg.trials}; WFR gap <= 0.05 in {ok}/{len(gaps)} trials -> {cfg.out}")
    if e is Experiment.COMPARISON:
        lines = [f"{m:>5} {sc:>4} train {v[0]:.4f} +- {v[1]:.4f}  test {v[2]:.4f} +- {v[3]:.4f}"
                 for (m, sc), v in summary[0].items()]
        return "\n".join(lines + [f"-> {cfg.out}"])
    if e is Experiment.CERTIFY:
        return f"median log-log gap slope {summary[0]:.3f} -> {cfg.out}"
    return (f"BW sandwich {'holds' if summary['sandwich'] else 'FAILS'}; v0 max rel err "
            f"{summary['v0_max_rel']:.2e}; scans (v0, v1, min 2nd diff, #neg): "
            f"{summary['scans']} -> {cfg.out}")


def _common(p):
    p.add_argument("--config", help="flat JSON config (or a run's manifest.json)")
    p.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="unsigned 64-bit seed")


def _threads(p):
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                   help="worker threads for independent trials")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    ap = argparse.ArgumentParser(prog="npmle", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"npmle {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="draw a synthetic dataset")
    _common(p)
    _threads(p)
    p.add_argument("--ground-truth", dest="ground_truth", default=S, help="rho_d or rho_c")
    p.add_argument("--d", type=int, default=S)
    p.add_argument("--N", type=int, default=S)
    p.add_argument("--stem", default=S, help="output file stem")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("fit", help="run one optimizer on a dataset")
    _common(p)
    _threads(p)
    p.add_argument("--data", default=S, help="samples CSV")
    p.add_argument("--init", default=S, help="initial mixture CSV (default: m random samples)")
    p.add_argument("--heldout", default=S, help="heldout samples CSV")
    p.add_argument("--scheme", default=S, help="wfr, fr, w, em or fixed_em")
    p.add_argument("--m", type=int, default=S)
    p.add_argument("--eta", type=float, default=S)
    p.add_argument("--gamma", type=float, default=S, help="weight step (default: eta)")
    p.add_argument("--t0", type=int, default=S, help="iterations")
    p.add_argument("--record-every", dest="record_every", type=int, default=S)
    p.add_argument("--order", default=S, choices=["locations_first", "weights_first"])
    p.add_argument("--record-gap", dest="record_gap", action="store_true", default=S)
    p.add_argument("--gap-spacing", dest="gap_spacing", type=float, default=S)
    p.add_argument("--gap-margin", dest="gap_margin", type=float, default=S)
    p.add_argument("--snapshot-every", dest="snapshot_every", type=int, default=S)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("certify", help="suboptimality gap of a 1-D mixture")
    _common(p)
    _threads(p)
    p.add_argument("--data", default=S)
    p.add_argument("--mixture", default=S)
    p.add_argument("--spacing", type=float, default=S)
    p.add_argument("--margin", type=float, default=S)
    p.add_argument("--refine", action="store_true", default=S)
    p.set_defaults(func=cmd_certify)

    for name, func in (("experiment", cmd_experiment), ("lab", cmd_lab)):
        p = sub.add_parser(name, help="scripted reproduction" if name == "experiment"
                           else "population-level Gaussian lab")
        if name == "experiment":
            p.add_argument("name", nargs="?", default=S,
                           help="Instability41, Comparison42, Certify43 or Lab")
        _common(p)
        _threads(p)
        for flag, typ in (("N", int), ("d", int), ("m", int), ("t0", int), ("eta", float),
                          ("gamma", float), ("trials", int)):
            p.add_argument(f"--{flag}", type=typ, default=S)
        p.add_argument("--m-grid", dest="m_grid", type=lambda v: [int(x) for x in v.split(",")],
                       default=S, help="comma-separated particle counts")
        p.add_argument("--ground-truth", dest="ground_truth", default=S)
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any other config key (JSON value)")
        p.set_defaults(func=func)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < U64:
        print("npmle: config error: seed: expected an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    func = args.func
    try:
        func(args)
    except ConfigError as exc:
        print(f"npmle: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        print(f"npmle: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"npmle: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # malformed input files (bad CSV headers, non-finite values)
        print(f"npmle: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
