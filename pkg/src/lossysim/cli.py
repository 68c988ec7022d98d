"""Reproducible experiment runner.

Each subcommand takes a JSON config (``--config``) plus ``--set key=value``
overrides, validates the keys, and writes deterministic data files together
with a ``meta.json`` holding version, config hash and timing.

Exit codes: 0 success, 2 invalid input, 3 size cap exceeded, 4 a checked
bound or equivalence failed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from scipy.stats import unitary_group

from . import __version__, channels, fock, metrics, network, rng, sampler
from .errors import CapExceededError, LossySimError, ValidationError

EXIT_OK, EXIT_INVALID, EXIT_CAP, EXIT_FLAG = 0, 2, 3, 4

DEFAULTS = {
    "dsep-curve": {"ns": [4, 100, 1000], "ls": [0, 1, 2, 3, 4, 5, 10], "oracle": True},
    "beta-curve": {"ns": [10, 20, 50], "etas": [0.1, 0.3, 0.5, 0.7, 0.9], "delta": 0.5},
    "tv-experiment": {
        "n": 3, "m": 4, "l": 2, "eta": None, "delta": 0.5,
        "trials": 20, "seed": 0, "unitary": "haar",
    },
    "extract": {
        "network": None, "relaxed": False, "active_inputs": None,
        "trace": False, "verify": True, "verify_photons": 3,
    },
    "sample": {
        "sampler": "meanfield_fixed", "n": 2, "m": 2, "l": None, "eta": None,
        "seed": 0, "n_samples": 1000, "unitary": "haar", "unitary_seed": 0,
        "input": None, "network": None,
    },
}


class FlagFailure(Exception):
    pass


# ------------------------------------------------------------------ config


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(command: str, path, overrides) -> dict:
    cfg = dict(DEFAULTS[command])
    given = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                given.update(json.load(fh))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {path}: {exc.msg} at line {exc.lineno}") from exc
        if not isinstance(given, dict):
            raise ValidationError("config file must hold a JSON object")
    for item in overrides or []:
        if "=" not in item:
            raise ValidationError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        given[key.strip()] = _parse_value(value)
    unknown = sorted(set(given) - set(cfg))
    if unknown:
        raise ValidationError(f"unknown config keys for {command}: {unknown}")
    cfg.update(given)
    return cfg


def config_hash(command: str, cfg: dict) -> str:
    blob = json.dumps({"command": command, "config": cfg}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def make_unitary(kind, m: int, seed: int) -> np.ndarray:
    if kind == "haar":
        return unitary_group.rvs(m, random_state=rng.stream(seed)) if m > 1 else np.eye(1, dtype=complex)
    if kind == "identity":
        return np.eye(m, dtype=complex)
    if kind == "hom":
        if m != 2:
            raise ValidationError("the 'hom' unitary needs m = 2")
        return np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    if isinstance(kind, list):
        arr = np.array(kind, dtype=float)
        if arr.shape != (m, m, 2):
            raise ValidationError("explicit unitary must be an m x m list of [re, im] pairs")
        return fock.check_unitary(arr[..., 0] + 1j * arr[..., 1])
    raise ValidationError(f"unknown unitary {kind!r}")


def _int(cfg, key, lo=0):
    v = cfg[key]
    if not isinstance(v, int) or isinstance(v, bool) or v < lo:
        raise ValidationError(f"{key} must be an integer >= {lo}, got {v!r}")
    return v


# --------------------------------------------------------------- commands


def cmd_dsep_curve(cfg: dict, out: Path) -> dict:
    rows = metrics.dsep_curve_rows(cfg["ns"], cfg["ls"], oracle=bool(cfg["oracle"]))
    _atomic_write(out / "dsep_curve.csv", metrics.rows_to_csv(rows, ["n", "l", "d_sep", "asymptotic", "oracle"]))
    return {"rows": len(rows), "files": ["dsep_curve.csv"]}


def cmd_beta_curve(cfg: dict, out: Path) -> dict:
    rows = metrics.beta_curve_rows(cfg["ns"], cfg["etas"], float(cfg["delta"]))
    violations = sum(not (r["lower"] <= r["beta"] <= r["upper"]) for r in rows)
    _atomic_write(out / "beta_curve.csv", metrics.rows_to_csv(rows, ["n", "eta", "beta", "lower", "upper"]))
    summary = {"rows": len(rows), "violations": violations, "files": ["beta_curve.csv"]}
    if violations:
        raise FlagFailure(summary)
    return summary


def cmd_tv_experiment(cfg: dict, out: Path) -> dict:
    n, m, trials = _int(cfg, "n"), _int(cfg, "m", 1), _int(cfg, "trials", 1)
    eta = cfg["eta"]
    records = []
    for t in range(trials):
        U = make_unitary(cfg["unitary"], m, _int(cfg, "seed") + t)
        if eta is None:
            l = _int(cfg, "l")
            lossy = channels.exact_bosonic_distribution(U, channels.fixed_loss_state(n, m, l))
            approx = sampler.exact_sigma_star_distribution(n, m, l, U)
            bound = metrics.d_sep_closed_form(n, l)
        else:
            lossy = channels.exact_bosonic_distribution(U, channels.binomial_loss_state(n, m, float(eta)))
            approx = sampler.exact_sigma_eta_distribution(n, m, float(eta), U)
            bound = metrics.beta_eta_bounds(n, float(eta), float(cfg["delta"]))[1]
        tv = metrics.total_variation(lossy, approx)
        records.append({"trial": t, "tv": tv, "bound": bound, "pass": tv <= bound + 1e-9})
    report = {
        "n": n, "m": m, "l": cfg["l"] if eta is None else None, "eta": eta,
        "bound_kind": "d_sep" if eta is None else "beta_upper",
        "trials": records,
        "all_pass": all(r["pass"] for r in records),
        "max_tv": max(r["tv"] for r in records),
    }
    _atomic_write(out / "tv_report.json", json.dumps(report, indent=1) + "\n")
    if not report["all_pass"]:
        raise FlagFailure({"files": ["tv_report.json"], "all_pass": False})
    return {"files": ["tv_report.json"], "all_pass": True, "max_tv": report["max_tv"]}


def cmd_extract(cfg: dict, out: Path) -> dict:
    if not cfg["network"]:
        raise ValidationError("extract needs a network file")
    net = network.load_network(cfg["network"])
    extract = network.extract_uniform_losses_relaxed if cfg["relaxed"] else network.extract_uniform_losses
    result = extract(net, active_inputs=cfg["active_inputs"], keep_trace=bool(cfg["trace"]))
    report = {
        "s": result.s,
        "eta_eff": result.eta_eff,
        "eta_star": result.eta_star,
        "active_inputs": list(result.active_inputs),
        "removed_loss_elements": result.removed,
        "original_loss_elements": net.loss_count(),
        "residual_loss_elements": result.residual.loss_count(),
        "placement": result.loss_placement(),
    }
    if cfg["trace"]:
        report["trace"] = [list(step) for step in result.trace]
    files = ["residual.json", "extract_report.json"]
    if cfg["verify"]:
        photons = min(int(cfg["verify_photons"]), len(result.active_inputs), network.CHANNEL_MAX_PHOTONS)
        occ = [0] * net.m
        for q in result.active_inputs[:photons]:
            occ[q] = 1
        try:
            tv = metrics.total_variation(
                network.network_output_distribution(net, occ),
                network.extracted_output_distribution(result, occ),
            )
            report["verification"] = {"input": occ, "tv": tv, "pass": tv <= 1e-9}
        except CapExceededError as exc:
            report["verification"] = {"skipped": str(exc)}
    _atomic_write(out / "residual.json", result.residual.to_json() + "\n")
    _atomic_write(out / "extract_report.json", json.dumps(report, indent=1) + "\n")
    if report.get("verification", {}).get("pass") is False:
        raise FlagFailure({"files": files, "verification": report["verification"]})
    return {"files": files, "s": result.s, "eta_eff": result.eta_eff}


def cmd_sample(cfg: dict, out: Path) -> dict:
    kind = cfg["sampler"]
    config = sampler.SamplerConfig(_int(cfg, "seed"), _int(cfg, "n_samples", 1))
    n = _int(cfg, "n")
    if kind == "meanfield_network":
        if not cfg["network"]:
            raise ValidationError("meanfield_network needs a network file")
        batch, _ = sampler.sample_meanfield_network(n, network.load_network(cfg["network"]), config)
    elif kind == "exact_network":
        if not cfg["network"]:
            raise ValidationError("exact_network needs a network file")
        net = network.load_network(cfg["network"])
        inp = cfg["input"] if cfg["input"] is not None else fock.fock_input(n, net.m)
        batch = sampler.sample_exact_network(net, inp, config)
    else:
        m = _int(cfg, "m", 1)
        U = make_unitary(cfg["unitary"], m, _int(cfg, "unitary_seed"))
        if kind == "meanfield_fixed":
            batch = sampler.sample_meanfield_fixed(n, m, _int(cfg, "l") if cfg["l"] is not None else n, U, config)
        elif kind == "meanfield_binomial":
            batch = sampler.sample_meanfield_binomial(n, m, float(cfg["eta"] if cfg["eta"] is not None else 1.0), U, config)
        elif kind == "exact":
            if cfg["l"] is not None:
                loss = channels.FixedLoss(_int(cfg, "l"))
            else:
                loss = channels.UniformBeamsplitterLoss(float(cfg["eta"] if cfg["eta"] is not None else 1.0))
            batch = sampler.sample_exact_lossy(n, m, loss, U, config)
        elif kind == "distinguishable":
            inp = cfg["input"] if cfg["input"] is not None else fock.fock_input(n, m)
            batch = sampler.sample_distinguishable(inp, U, config)
        else:
            raise ValidationError(f"unknown sampler {kind!r}")
    _atomic_write(out / "samples.jsonl", batch.to_jsonl())
    _atomic_write(out / "summary.csv", batch.summary_csv())
    return {"files": ["samples.jsonl", "summary.csv"], "samples": config.n_samples, "sha256": batch.digest()}


COMMANDS = {
    "dsep-curve": cmd_dsep_curve,
    "beta-curve": cmd_beta_curve,
    "tv-experiment": cmd_tv_experiment,
    "extract": cmd_extract,
    "sample": cmd_sample,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lossysim", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
        p.add_argument("--out", default=".", help="output directory (default: current)")
        if name == "extract":
            p.add_argument("network_file", nargs="?", help="network JSON (same as --set network=...)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    try:
        overrides = list(args.set)
        if getattr(args, "network_file", None):
            overrides.append(f"network={json.dumps(args.network_file)}")
        cfg = load_config(args.command, args.config, overrides)
        out = Path(args.out)
        status, summary = EXIT_OK, None
        try:
            summary = COMMANDS[args.command](cfg, out)
        except FlagFailure as flag:
            status, summary = EXIT_FLAG, flag.args[0]
        meta = {
            "command": args.command,
            "version": __version__,
            "config": cfg,
            "config_sha256": config_hash(args.command, cfg),
            "started_utc": datetime.now(timezone.utc).isoformat(),
            "wall_clock_s": time.perf_counter() - started,
            "exit_code": status,
        }
        _atomic_write(out / "meta.json", json.dumps(meta, indent=1, default=str) + "\n")
        print(json.dumps({"command": args.command, "exit_code": status, **(summary or {})}, default=str))
        return status
    except CapExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (LossySimError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
