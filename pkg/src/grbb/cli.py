"""Command-line entry point.

Subcommands map one-to-one onto the experiment and solver operations:

    simulate       chain trajectory, empirical measures to CSV
    chaos          mean-field deviation sweep over system sizes
    tv-check       exact two-site TV gaps against their bounds
    coupling-test  coupling marginal fidelity and mismatch rate
    mixing         Fermi-Dirac flattening time vs the mixing bound
    stationary     stationary law of the unit-service queue
    fixed-point    mean-indexed stationary law of the measure recursion
    equilibrium    convergence of the recursion to that law

Options may come from a config file (INI: one section per subcommand,
``key = value``); explicit flags win over file keys, unknown file keys are
rejected.  Exit status: 0 all hard checks passed, 1 an assertion or
stability check failed, 2 configuration or I/O error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels, experiments
from .measures import Pmf
from .nonlinear import UnstableQueueError, fixed_point, queue_stationary, stationary_mean
from .process import grbb_trajectory, write_trajectory_csv
from .statistics import ReassignmentLaw

__all__ = ["main", "parse_config", "run", "RunConfig"]


def parse_pmf(text: str) -> Pmf:
    """Pmf from a compact spec: delta:K, bernoulli:A, poisson:RATE,
    geometric:S (success parameter on Z+), binomial:N,P, or @file.json with
    the serialized {"support": .., "mass": .., "tail": ..} layout."""
    text = text.strip()
    if text.startswith("@"):
        with open(text[1:]) as fh:
            return Pmf.from_json_dict(json.load(fh))
    name, _, args = text.partition(":")
    name = name.lower()
    try:
        if name == "delta":
            return Pmf.delta(int(args))
        if name == "bernoulli":
            return Pmf.bernoulli(float(args))
        if name == "poisson":
            return Pmf.poisson(float(args))
        if name == "geometric":
            return Pmf.geometric(float(args))
        if name == "binomial":
            n, p = args.split(",")
            return Pmf.binomial(int(n), float(p))
    except (TypeError, ValueError) as exc:
        raise ValueError(f"bad distribution spec {text!r}: {exc}") from exc
    raise ValueError(f"unknown distribution {name!r} (delta, bernoulli, poisson, "
                     f"geometric, binomial, or @file.json)")


def parse_grid(text: str) -> list[int]:
    """Integer grid: '128' | '128,256,512' | '4..30' (inclusive)."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..")
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise ValueError(f"empty grid {text!r}")
        return list(range(lo, hi + 1))
    return [int(part) for part in text.split(",") if part.strip()]


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return value


@dataclass(frozen=True)
class _Param:
    name: str
    parse: object
    default: object = None  # None with required=True means mandatory
    required: bool = False
    help: str = ""


_LAW = _Param("law", ReassignmentLaw.from_name, required=True,
              help="reassignment statistic: fd, mb or be")
_SEED = _Param("seed", _seed, default=0, help="64-bit master seed")
_WORKERS = _Param("workers", int, default=0, help="thread workers, 0 = all cores")

_COMMAND_PARAMS: dict[str, list[_Param]] = {
    "simulate": [
        _LAW,
        _Param("L", int, required=True, help="number of bins"),
        _Param("N", int, required=True, help="number of balls"),
        _Param("T", int, default=100, help="steps to simulate"),
        _SEED,
    ],
    "chaos": [
        _LAW,
        _Param("L", parse_grid, required=True, help="grid of system sizes, e.g. 128,256,512"),
        _Param("T", int, default=20, help="horizon"),
        _Param("delta", float, default=0.05, help="deviation threshold"),
        _Param("replicas", int, default=2000, help="independent replicas per size"),
        _Param("init", parse_pmf, default="bernoulli:0.5",
               help="per-site initial law (finite support)"),
        _Param("slope-bound", float, default=-0.4,
               help="acceptance bound on the mean-deviation log-log slope"),
        _SEED,
        _WORKERS,
    ],
    "tv-check": [
        _LAW,
        _Param("L", parse_grid, required=True, help="grid of system sizes, e.g. 4..30"),
    ],
    "coupling-test": [
        _Param("which", str, required=True, help="coupling construction: mb or be"),
        _Param("L", int, required=True, help="number of bins"),
        _Param("N", int, required=True, help="number of balls"),
        _Param("samples", int, default=1_000_000, help="coupled draws"),
        _SEED,
        _WORKERS,
    ],
    "mixing": [
        _Param("L", int, required=True, help="number of bins"),
        _Param("N", int, required=True, help="number of balls (2 <= N <= L)"),
        _Param("replicas", int, default=500, help="independent flattening times"),
        _SEED,
        _WORKERS,
    ],
    "stationary": [
        _Param("arrival", parse_pmf, required=True,
               help="arrival law, e.g. poisson:0.5 or @pmf.json"),
        _Param("tol", float, default=1e-10, help="TV tolerance of the solver"),
    ],
    "fixed-point": [
        _LAW,
        _Param("r", float, required=True, help="prescribed mean in [0, 1)"),
        _Param("tol", float, default=1e-10, help="solver tolerance"),
    ],
    "equilibrium": [
        _LAW,
        _Param("r", float, required=True, help="prescribed mean in [0, 1)"),
        _Param("T", int, default=10_000, help="recursion steps"),
        _Param("path-steps", int, default=200_000,
               help="length of the cross-check sample path (0 disables)"),
        _SEED,
    ],
}


@dataclass
class RunConfig:
    command: str
    params: dict
    output: Path
    fmt: str
    dry_run: bool


_COMMAND_HELP = {
    "simulate": "run one chain trajectory and dump its empirical measures as CSV",
    "chaos": "sweep the empirical-measure deviation from the mean-field recursion over sizes",
    "tv-check": "exact two-site TV gaps against their size-scaled bounds",
    "coupling-test": "coupling marginal fidelity (chi-square) and mismatch budget",
    "mixing": "flattening times of the Fermi-Dirac chain vs the mixing-time bound",
    "stationary": "stationary law of the unit-service queue for an arrival law",
    "fixed-point": "mean-indexed stationary law of the measure recursion",
    "equilibrium": "convergence of the measure recursion to its stationary law",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grbb",
        description="Repeated balls-into-bins simulators, exact laws and experiment reports.",
    )
    parser.add_argument("--config", help="INI config file with one section per subcommand")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for command, params in _COMMAND_PARAMS.items():
        p = sub.add_parser(command, help=_COMMAND_HELP[command])
        for spec in params:
            default_note = "required" if spec.required else f"default: {spec.default}"
            p.add_argument(f"--{spec.name}", dest=spec.name.replace("-", "_"),
                           help=f"{spec.help} ({default_note})")
        p.add_argument("--out", help=f"output path (default: grbb_{command}.<ext>)")
        p.add_argument("--format", dest="fmt", choices=["json", "csv", "both"],
                       help="report format (default: json)")
        p.add_argument("--dry-run", action="store_true",
                       help="validate the configuration and print the plan without computing")
    return parser


def _validate(command: str, params: dict) -> None:
    """Cross-parameter preconditions surfaced before dispatch."""
    law = params.get("law")
    if command == "simulate":
        if params["L"] < 1 or params["N"] < 0 or params["T"] < 0:
            raise ValueError("need L >= 1, N >= 0, T >= 0")
        if law is ReassignmentLaw.FERMI_DIRAC and params["N"] > params["L"]:
            raise ValueError("statistic undefined: Fermi-Dirac needs N <= L")
    elif command == "chaos":
        if params["replicas"] < 100:
            raise ValueError("need at least 100 replicas")
        if params["delta"] <= 0:
            raise ValueError("delta must be positive")
    elif command == "tv-check":
        if any(L < 2 for L in params["L"]):
            raise ValueError("two-site checks need L >= 2")
    elif command == "coupling-test":
        which = ReassignmentLaw.from_name(params["which"])
        if which is ReassignmentLaw.FERMI_DIRAC:
            raise ValueError("coupling-test covers mb and be")
        if params["samples"] < 1000:
            raise ValueError("need at least 1000 samples")
        if params["L"] < 2 or params["N"] < 0:
            raise ValueError("need L >= 2 and N >= 0")
    elif command == "mixing":
        if not 2 <= params["N"] <= params["L"]:
            raise ValueError("mixing needs 2 <= N <= L")
    elif command in ("fixed-point", "equilibrium"):
        if not 0.0 <= params["r"] < 1.0:
            raise ValueError("r must lie in [0, 1)")


def parse_config(argv: list[str]) -> RunConfig:
    """Resolve a RunConfig from argv plus an optional INI file.

    Flags win over file keys; unknown file keys are rejected; every
    precondition of the target operation is checked here so that dispatch
    cannot fail on bad parameters."""
    parser = _build_parser()
    ns = parser.parse_args(argv)
    if ns.command is None:
        parser.error("missing subcommand")
    specs = _COMMAND_PARAMS[ns.command]

    file_values: dict[str, str] = {}
    if ns.config:
        ini = configparser.ConfigParser()
        ini.optionxform = str  # keys are case-sensitive (L vs law)
        read = ini.read(ns.config)
        if not read:
            raise ValueError(f"config file {ns.config!r} not found")
        if ini.has_section(ns.command):
            known = {spec.name for spec in specs} | {"out", "format"}
            for key, value in ini.items(ns.command):
                if key not in known:
                    raise ValueError(f"unknown key {key!r} in config section [{ns.command}]")
                file_values[key] = value

    params: dict = {}
    for spec in specs:
        raw = getattr(ns, spec.name.replace("-", "_"))
        if raw is None:
            raw = file_values.get(spec.name)
        if raw is None:
            if spec.required:
                raise ValueError(f"missing required parameter --{spec.name}")
            raw = spec.default
        params[spec.name.replace("-", "_")] = (
            spec.parse(raw) if isinstance(raw, str) else raw
        )
    _validate(ns.command, params)

    fmt = ns.fmt or file_values.get("format") or "json"
    ext = "csv" if (fmt == "csv" or ns.command == "simulate") else "json"
    out = ns.out or file_values.get("out") or f"grbb_{ns.command}.{ext}"
    return RunConfig(ns.command, params, Path(out), fmt, ns.dry_run)


def _write_report(report: experiments.ExperimentReport, cfg: RunConfig) -> None:
    if cfg.fmt in ("json", "both"):
        report.write_json(cfg.output.with_suffix(".json") if cfg.fmt == "both" else cfg.output)
    if cfg.fmt in ("csv", "both"):
        report.write_csv(cfg.output.with_suffix(".csv") if cfg.fmt == "both" else cfg.output)


def run(cfg: RunConfig) -> int:
    """Execute a resolved configuration; returns the process exit status."""
    if cfg.dry_run:
        plan = {k: (v.to_json_dict() if isinstance(v, Pmf) else
                    v.value if isinstance(v, ReassignmentLaw) else v)
                for k, v in cfg.params.items()}
        print(json.dumps({"command": cfg.command, "params": plan,
                          "output": str(cfg.output), "format": cfg.fmt,
                          "backend": _kernels.BACKEND}, indent=2, sort_keys=True))
        return 0
    p = cfg.params
    if cfg.command == "simulate":
        rng = experiments.child_rng(p["seed"], "simulate", p["L"])
        # spread the N balls over the bins as evenly as possible
        base, extra = divmod(p["N"], p["L"])
        init = np.full(p["L"], base, dtype=np.int64)
        init[:extra] += 1
        traj = grbb_trajectory(p["law"], init, p["T"], rng)
        write_trajectory_csv(traj, cfg.output)
        print(f"simulate: wrote {len(traj)} empirical measures to {cfg.output}")
        return 0
    if cfg.command == "chaos":
        report = experiments.chaos_sweep(
            experiments.ChaosConfig(
                law=p["law"], L_grid=tuple(p["L"]), T=p["T"], delta=p["delta"],
                replicas=p["replicas"], init_law=p["init"], seed=p["seed"],
                workers=p["workers"], slope_bound=p["slope_bound"],
            )
        )
    elif cfg.command == "tv-check":
        report = experiments.tv_bound_suite(p["law"], p["L"])
    elif cfg.command == "coupling-test":
        report = experiments.coupling_experiment(
            p["which"], p["L"], p["N"], p["samples"], p["seed"], p["workers"]
        )
    elif cfg.command == "mixing":
        report = experiments.mixing_experiment(
            p["L"], p["N"], p["replicas"], p["seed"], p["workers"]
        )
    elif cfg.command == "stationary":
        pi = queue_stationary(p["arrival"], tol=p["tol"])
        payload = {
            "arrival": p["arrival"].to_json_dict(),
            "arrival_mean": p["arrival"].mean(),
            "stationary": pi.to_json_dict(),
            "stationary_mean": pi.mean(),
            "closed_form_mean": stationary_mean(p["arrival"]),
            "tol": p["tol"],
        }
        with open(cfg.output, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"stationary: mean {pi.mean():.10f}, written to {cfg.output}")
        return 0
    elif cfg.command == "fixed-point":
        fp = fixed_point(p["law"], p["r"], tol=p["tol"])
        with open(cfg.output, "w") as fh:
            json.dump(fp.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"fixed-point: a_star = {fp.a_star:.10f}, residual {fp.residual_tv:.2e}, "
              f"written to {cfg.output}")
        return 0
    else:
        report = experiments.equilibrium_experiment(
            p["law"], p["r"], p["T"], seed=p["seed"], path_steps=p["path_steps"]
        )
    _write_report(report, cfg)
    print(report.summary_line() + f" -> {cfg.output}")
    return 0 if report.passed else 1


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
    except SystemExit as exc:  # argparse already printed a usage message
        return 2 if exc.code not in (0, None) else 0
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        return run(cfg)
    except UnstableQueueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
