"""Command-line front end: ``synth``, ``cluster`` and ``angles``.

Every option can also come from a flat ``key = value`` config file given
with ``--config``; flags on the command line win. Exit codes: 0 success,
2 usage or configuration error, 3 solver abort.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .data import (ParseError, SyntheticSpec, generate_synthetic, read_labels,
                   read_matrix, write_labels, write_matrix)
from .dtl import DtlParams
from .fssc import FsscParams
from .metrics import angle_matrix, clustering_error
from .pipeline import PipelineConfig, PipelineError, run_dtl_fssc, run_ssc

EXIT_OK, EXIT_USAGE, EXIT_SOLVER = 0, 2, 3

PRESETS = {
    "motion": dict(alpha=0.03, beta=0.5, tau=4.0, lam=0.05, tau1=1.0),
    "digits": dict(alpha=0.07, beta=0.01, tau=8.0, lam=0.07, tau1=0.07),
}

HISTORY_HEADER = ["iter", "fssc_obj", "dtl_obj", "disc_gap", "error_pct"]


class ConfigError(ValueError):
    pass


# key -> parser, per subcommand; flags use the same names with dashes
SYNTH_KEYS = {
    "k": int, "d": int, "n": int, "m": int, "sigma": float, "seed": int,
    "out": str, "truth_out": str,
}
CLUSTER_KEYS = {
    "data": str, "truth": str, "out": str, "history": str,
    "operator_out": str, "angles_out": str, "method": str, "preset": str,
    "k": int, "p": int, "t_max": int, "seed": int, "alpha": float,
    "beta": float, "tau": float, "lam": float, "tau1": float, "mu": float,
    "t_fssc": int, "t_dtl": int, "dc_steps": int, "ssc_alpha": float,
    "normalize_features": "bool",
}
ANGLES_KEYS = {"data": str, "labels": str, "operator": str, "out": str}


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(key, raw, kind):
    try:
        return _parse_bool(raw) if kind == "bool" else kind(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def read_config(path, allowed):
    """Parse a flat ``key = value`` file; ``#`` starts a comment.

    Unknown keys, duplicate keys and lines without ``=`` are errors.
    """
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in allowed:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = _convert(key, raw, allowed[key])
    return out


def _merge(args, allowed, defaults):
    """Defaults < config file < command-line flags."""
    opts = dict(defaults)
    if getattr(args, "config", None):
        opts.update(read_config(args.config, allowed))
    for key in allowed:
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    return opts


def _require(opts, *keys):
    for key in keys:
        if opts.get(key) is None:
            raise ConfigError(f"missing required option --{key.replace('_', '-')}")


def _read_matrix(path, what):
    if not Path(path).is_file():
        raise ConfigError(f"{what} file not found: {path}")
    return read_matrix(path)


def _read_labels(path, what):
    if not Path(path).is_file():
        raise ConfigError(f"{what} file not found: {path}")
    return read_labels(path)


def cmd_synth(args):
    opts = _merge(args, SYNTH_KEYS, dict(
        k=3, d=4, n=30, m=50, sigma=0.01, seed=0,
        out="data.csv", truth_out="truth.csv"))
    spec = SyntheticSpec(K=opts["k"], ambient_dim=opts["n"],
                         subspace_dim=opts["d"], points_per_cluster=opts["m"],
                         noise_sigma=opts["sigma"], seed=opts["seed"])
    X, labels = generate_synthetic(spec)
    write_matrix(opts["out"], X)
    write_labels(opts["truth_out"], labels)
    print(f"n={spec.ambient_dim} N={X.shape[1]} K={spec.K} d={spec.subspace_dim} "
          f"sigma={spec.noise_sigma:g} seed={spec.seed}")
    return EXIT_OK


def build_config(opts, n):
    """Turn merged CLI options into a validated :class:`PipelineConfig`."""
    preset = opts.get("preset", "motion")
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    hp = dict(PRESETS[preset])
    for key in hp:
        if opts.get(key) is not None:
            hp[key] = opts[key]
    p = opts.get("p")
    p_eff = n if p is None else p
    t_max = opts.get("t_max")
    if t_max is None:
        t_max = 10 if p_eff == n else 30
    fssc = FsscParams(alpha=hp["alpha"], beta=hp["beta"], tau=hp["tau"])
    if opts.get("t_fssc") is not None:
        fssc = replace(fssc, t_fssc=opts["t_fssc"])
    dtl = DtlParams(lam=hp["lam"], tau1=hp["tau1"], mu=opts.get("mu"))
    if opts.get("t_dtl") is not None:
        dtl = replace(dtl, t_dtl=opts["t_dtl"])
    if opts.get("dc_steps") is not None:
        dtl = replace(dtl, dc_steps=opts["dc_steps"])
    method = opts.get("method", "dtl-fssc")
    if method not in ("dtl-fssc", "ssc", "dtl-fssc-binary"):
        raise ConfigError(f"unknown method {method!r}")
    return PipelineConfig(
        K=opts["k"], p=p, t_max=t_max, seed=opts.get("seed", 0),
        membership_mode="binary" if method == "dtl-fssc-binary" else "fuzzy",
        normalize_features=opts.get("normalize_features", True),
        fssc=fssc, dtl=dtl, ssc_alpha=opts.get("ssc_alpha"))


def write_history(path, history):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_HEADER)
        for rec in history.records:
            err = "" if rec.error_pct is None else repr(float(rec.error_pct))
            w.writerow([rec.iteration, repr(rec.fssc_objective),
                        repr(rec.dtl_objective), repr(rec.disc_gap), err])


def cmd_cluster(args):
    opts = _merge(args, CLUSTER_KEYS, dict(method="dtl-fssc", preset="motion",
                                           out="labels.csv"))
    _require(opts, "data", "k")
    X = _read_matrix(opts["data"], "data")
    truth = None
    if opts.get("truth"):
        truth = _read_labels(opts["truth"], "truth")
        if truth.size != X.shape[1]:
            raise ConfigError(
                f"truth has {truth.size} labels for {X.shape[1]} samples")
    config = build_config(opts, X.shape[0])
    method = opts["method"]

    if method == "ssc":
        labels, _, A = run_ssc(X, config)
        history = None
    else:
        res = run_dtl_fssc(X, config, truth=truth,
                           record_angles=opts.get("angles_out") is not None)
        labels, A, history = res.labels, res.A, res.history
    write_labels(opts["out"], labels)
    if opts.get("operator_out"):
        write_matrix(opts["operator_out"], A)
    if opts.get("angles_out"):
        if truth is None:
            raise ConfigError("--angles-out needs --truth to group the samples")
        write_matrix(opts["angles_out"], angle_matrix(A, X, truth))
    if truth is not None:
        if history is not None:
            hist_path = opts.get("history") or str(
                Path(opts["out"]).with_suffix(".history.csv"))
            write_history(hist_path, history)
        print(f"error%: {clustering_error(labels, truth):.2f}")
    return EXIT_OK


def cmd_angles(args):
    opts = _merge(args, ANGLES_KEYS, dict(operator="identity", out="angles.csv"))
    _require(opts, "data", "labels")
    X = _read_matrix(opts["data"], "data")
    labels = _read_labels(opts["labels"], "labels")
    if opts["operator"] == "identity":
        A = np.eye(X.shape[0])
    else:
        A = _read_matrix(opts["operator"], "operator")
    if A.shape[1] != X.shape[0]:
        raise ConfigError(
            f"operator has {A.shape[1]} columns but data has {X.shape[0]} rows")
    write_matrix(opts["out"], angle_matrix(A, X, labels))
    return EXIT_OK


def _add_keys(parser, keys, help_overrides=None):
    help_overrides = help_overrides or {}
    for key, kind in keys.items():
        flag = "--" + key.replace("_", "-")
        if kind == "bool":
            parser.add_argument(flag, dest=key, type=_parse_bool, default=None,
                                metavar="BOOL", help=help_overrides.get(key))
        else:
            parser.add_argument(flag, dest=key, type=kind, default=None,
                                help=help_overrides.get(key))


def build_parser():
    ap = argparse.ArgumentParser(
        prog="dtlfssc",
        description="Subspace clustering with learned discriminative transforms.")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic union of subspaces")
    sp.add_argument("--config")
    _add_keys(sp, SYNTH_KEYS, {
        "k": "clusters", "d": "subspace dimension", "n": "ambient dimension",
        "m": "points per cluster", "sigma": "noise level",
        "out": "data CSV (default data.csv)",
        "truth_out": "truth labels (default truth.csv)"})
    sp.set_defaults(func=cmd_synth)

    cp = sub.add_parser("cluster", help="cluster a data matrix")
    cp.add_argument("--config")
    _add_keys(cp, CLUSTER_KEYS, {
        "method": "dtl-fssc (default), ssc or dtl-fssc-binary",
        "preset": f"hyperparameter preset: {', '.join(PRESETS)} (default motion)",
        "t_max": "outer iterations (default 10 if p = n, else 30)",
        "history": "history CSV (default <out>.history.csv; needs --truth)"})
    cp.set_defaults(func=cmd_cluster)

    ag = sub.add_parser("angles", help="smallest principal angles between groups")
    ag.add_argument("--config")
    _add_keys(ag, ANGLES_KEYS, {
        "operator": "operator CSV or 'identity' (default)"})
    ag.set_defaults(func=cmd_angles)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PipelineError as exc:
        print(f"solver abort: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"solver abort: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
