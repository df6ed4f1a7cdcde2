"""Command line front end.

    chdbc run CONFIG [--out DIR]
    chdbc sweep --kind {tau,ell,hgamma} CONFIG [--out DIR] [--threads K]

Exit codes: 0 success, 2 configuration error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .diagnostics import observed_orders
from .experiments import (
    ERROR_NAMES, Preparation, cos_cos, initial_data, run_ell_sweep,
    run_temporal_order_study,
)
from .fem import Discretization
from .models import InvalidStateError, ModelConfig, simulate
from .output import write_rows, write_series, write_snapshot
from .solver import NewtonError, NewtonSettings, SingularSystemError

log = logging.getLogger("chdbc")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3

INITIAL_VALUES = {"cos_cos": cos_cos}


class ConfigError(ValueError):
    pass


# key -> (converter, default); a default of ... marks a required key
SCHEMA = {
    "model": {
        "model": (str, ...),
        "order": (str, "first"),
        "epsilon": (float, ...),
        "delta": (float, 1.0),
        "sigma": (float, ...),
        "kappa": (float, 1.0),
        "tau": (float, ...),
        "T": (float, ...),
        "ell": (int, 1),
    },
    "discretization": {
        "n": (int, ...),
        "boundary_factor": (int, 1),
        "initial": (str, "cos_cos"),
        "prepare_steps": (int, 0),
        "prepare_tau": (float, 1e-7),
    },
    "solver": {
        "abs_tol": (float, 1e-11),
        "rel_tol": (float, 1e-12),
        "max_iters": (int, 50),
        "damping": (float, None),
    },
    "output": {
        "dir": (str, "out"),
        "stride": (int, 1),
        "snapshots": (str, "final"),
    },
    "sweep": {
        "halvings": (int, 4),
        "ells": (str, "1,2,4,8"),
        "factors": (str, "1,2,4"),
        "ref_divisor": (int, 16),
        "finest_factor": (int, 0),
    },
}


@dataclass
class RunConfig:
    model: ModelConfig
    n: int
    boundary_factor: int
    initial: str
    prepare: Preparation | None
    settings: NewtonSettings
    out_dir: Path
    stride: int
    snapshots: object  # "final", "none" or a set of steps
    sweep: dict = field(default_factory=dict)


def _convert(section, key, raw, conv):
    try:
        return conv(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {conv.__name__}") from None


def _int_list(section, key, raw):
    return [_convert(section, key, v.strip(), int) for v in raw.split(",") if v.strip()]


def load_config(path) -> RunConfig:
    """Read and validate an INI configuration file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keep "T" upper case
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key in cp[section]:
            if key not in SCHEMA[section]:
                raise ConfigError(f"[{section}] {key}: unknown key")
    vals = {}
    for section, keys in SCHEMA.items():
        vals[section] = {}
        for key, (conv, default) in keys.items():
            if cp.has_option(section, key):
                vals[section][key] = _convert(section, key, cp.get(section, key), conv)
            elif default is ...:
                raise ConfigError(f"[{section}] {key}: missing required key")
            else:
                vals[section][key] = default
    m, d, s, o = vals["model"], vals["discretization"], vals["solver"], vals["output"]
    try:
        model = ModelConfig(**m)
    except ValueError as exc:
        raise ConfigError(f"[model] {exc}") from None
    if d["n"] < 1:
        raise ConfigError("[discretization] n: must be at least 1")
    if d["boundary_factor"] < 1:
        raise ConfigError("[discretization] boundary_factor: must be at least 1")
    if d["initial"] not in INITIAL_VALUES:
        raise ConfigError(f"[discretization] initial: unknown initial value {d['initial']!r}")
    if d["prepare_steps"] < 0 or d["prepare_tau"] <= 0:
        raise ConfigError("[discretization] prepare_steps/prepare_tau: must be non-negative/positive")
    try:
        settings = NewtonSettings(**s)
    except ValueError as exc:
        raise ConfigError(f"[solver] {exc}") from None
    if o["stride"] < 1:
        raise ConfigError("[output] stride: must be at least 1")
    snaps = o["snapshots"].strip().lower()
    if snaps not in ("final", "none"):
        snaps = set(_int_list("output", "snapshots", snaps))
    sw = dict(vals["sweep"])
    sw["ells"] = _int_list("sweep", "ells", sw["ells"])
    sw["factors"] = _int_list("sweep", "factors", sw["factors"])
    if sw["halvings"] < 2:
        raise ConfigError("[sweep] halvings: need at least 2 step sizes")
    return RunConfig(
        model=model,
        n=d["n"],
        boundary_factor=d["boundary_factor"],
        initial=d["initial"],
        prepare=Preparation(d["prepare_steps"], d["prepare_tau"]) if d["prepare_steps"] else None,
        settings=settings,
        out_dir=Path(o["dir"]),
        stride=o["stride"],
        snapshots=snaps,
        sweep=sw,
    )


def cmd_run(config_path, out=None) -> int:
    try:
        rc = load_config(config_path)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    out_dir = Path(out) if out is not None else rc.out_dir
    cfg = rc.model
    try:
        disc = Discretization.build(rc.n, rc.boundary_factor)
        state0 = initial_data(cfg, disc, INITIAL_VALUES[rc.initial], rc.prepare, rc.settings)
        N = cfg.num_steps
        wanted = {N} if rc.snapshots == "final" else set() if rc.snapshots == "none" else rc.snapshots
        if 0 in wanted:
            write_snapshot(state0, disc, out_dir)

        def snap(state, report):
            if state.n in wanted:
                write_snapshot(state, disc, out_dir)

        traj = simulate(cfg, disc, state0, rc.settings, stride=rc.stride, callback=snap)
    except (NewtonError, SingularSystemError, InvalidStateError) as exc:
        log.error("solver failure: %s", exc)
        return EXIT_SOLVER
    write_series(traj, out_dir / "series.csv")
    log.info("wrote %d rows to %s", len(traj.states), out_dir / "series.csv")
    return EXIT_OK


def _sweep_rows(kind, rc: RunConfig, workers: int):
    cfg, sw = rc.model, rc.sweep
    u0 = INITIAL_VALUES[rc.initial]
    if kind == "ell":
        rows = run_ell_sweep(cfg.model, cfg, sw["ells"], n=rc.n, ref_divisor=sw["ref_divisor"],
                             u0_fn=u0, settings=rc.settings, workers=workers)
        return ["ell", *ERROR_NAMES], [[r.ell, *r.errors] for r in rows]
    taus = [cfg.tau / 2**i for i in range(sw["halvings"])]
    factors = [rc.boundary_factor] if kind == "tau" else sw["factors"]
    study = run_temporal_order_study(
        cfg.model, cfg, taus, factors, n=rc.n, ref_tau=taus[-1] / sw["ref_divisor"],
        finest_factor=sw["finest_factor"] or None, prepare=rc.prepare,
        settings=rc.settings, workers=workers,
    )
    header = ["factor", "tau", *ERROR_NAMES, *(f"finest_{k}" for k in ERROR_NAMES),
              *(f"order_{k}" for k in ERROR_NAMES), *(f"fitted_order_{k}" for k in ERROR_NAMES)]
    rows = []
    for f in study.factors:
        frs = [r for r in study.rows if r.factor == f]
        cons = {k: observed_orders(study.errors(f, k)) for k in ERROR_NAMES}
        for i, r in enumerate(frs):
            orders = [cons[k][i - 1] if i > 0 else "" for k in ERROR_NAMES]
            fitted = [study.fitted.get((f, k), float("nan")) for k in ERROR_NAMES]
            rows.append([f, r.tau, *r.errors, *r.finest_errors, *orders, *fitted])
    return header, rows


def cmd_sweep(kind, config_path, out=None, threads: int = 1) -> int:
    if kind not in ("tau", "ell", "hgamma"):
        log.error("config error: unknown sweep kind %r", kind)
        return EXIT_CONFIG
    try:
        rc = load_config(config_path)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    out_dir = Path(out) if out is not None else rc.out_dir
    try:
        header, rows = _sweep_rows(kind, rc, max(1, int(threads)))
    except (NewtonError, SingularSystemError, InvalidStateError) as exc:
        log.error("solver failure: %s", exc)
        return EXIT_SOLVER
    except ValueError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    write_rows(out_dir / "sweep.csv", header, rows)
    log.info("wrote %d rows to %s", len(rows), out_dir / "sweep.csv")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (overrides [output] dir)")
    common.add_argument("--threads", type=int, default=1, help="parallel sweep points")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="chdbc", description=__doc__.splitlines()[0] if __doc__ else None)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="run one simulation")
    r.add_argument("config")
    s = sub.add_parser("sweep", parents=[common], help="run a parameter sweep")
    s.add_argument("--kind", required=True, choices=("tau", "ell", "hgamma"))
    s.add_argument("config")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if args.command == "run":
        return cmd_run(args.config, args.out)
    return cmd_sweep(args.kind, args.config, args.out, args.threads)


if __name__ == "__main__":
    sys.exit(main())
