"""Command-line front door: analyze | run | verify.

Exit codes: 0 ok, 2 config problem, 3 construction failure, 4 runtime
divergence, 5 verification failure.  All commands are deterministic given
the same config file.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .analysis import pde_report
from .config import ComponentBundle, build_components, load_config
from .csvio import write_csv
from .errors import (
    ComponentMismatch,
    ConfigError,
    FitRejected,
    InvalidEquilibrium,
    InvalidRelaxation,
    InvalidVelocitySet,
    LbmError,
    NonPositiveDensity,
    RankDeficient,
    ShapeError,
    SimulationDiverged,
    SingularMomentMatrix,
)
from .scheme import (
    conservation_audit,
    initialize_equilibrium,
    moments_of,
    run,
    save_checkpoint,
)
from .verify import StudySetup, run_verification

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONSTRUCTION = 3
EXIT_DIVERGED = 4
EXIT_VERIFICATION = 5

_CONSTRUCTION_ERRORS = (
    InvalidVelocitySet,
    RankDeficient,
    SingularMomentMatrix,
    InvalidEquilibrium,
    InvalidRelaxation,
    NonPositiveDensity,
    ShapeError,
    ComponentMismatch,
)


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def cmd_analyze(args) -> int:
    cfg = load_config(args.config)
    bundle = build_components(cfg)
    report = pde_report(bundle.vs, bundle.mm, bundle.model, bundle.params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "pde_report.csv").write_text(report.to_csv(), newline="\n")
    (out / "pde_report.txt").write_text(report.to_text(), newline="\n")
    _say(args, report.to_text())
    _say(args, f"wrote {out / 'pde_report.csv'} and {out / 'pde_report.txt'}")
    return EXIT_OK


def _write_moment_fields(path, bundle: ComponentBundle, state) -> None:
    m = moments_of(state, bundle.mm)
    d = bundle.mm.d
    grid = state.grid_shape
    index_names = ["i", "j"][: len(grid)]
    header = index_names + ["rho", "qx", "qy"][: 1 + d]
    rows = []
    for idx in np.ndindex(*grid):
        rows.append(tuple(int(i) for i in idx)
                    + tuple(float(x) for x in m[idx][: 1 + d]))
    write_csv(path, header, rows)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    bundle = build_components(cfg)
    W0 = bundle.field.conserved(bundle.grid_shape, bundle.params.dx)
    state = initialize_equilibrium(bundle.model, bundle.vs, W0)
    initial = state
    state = run(state, bundle.steps, bundle.vs, bundle.mm, bundle.model,
                bundle.params)
    audit = conservation_audit(initial, state, bundle.mm)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint.csv", state, bundle.params, bundle.mm)
    _write_moment_fields(out / "moments.csv", bundle, state)
    mom = ", ".join(f"{x:.3e}" for x in audit["momentum_drift"])
    _say(args, f"ran {bundle.steps} steps on grid {state.grid_shape}")
    _say(args, f"conservation audit: mass drift {audit['mass_drift']:.3e} "
               f"relative, momentum drift [{mom}] relative")
    _say(args, f"wrote {out / 'checkpoint.csv'} and {out / 'moments.csv'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    study = (args.study or cfg.study_name).lower()
    bundle = build_components(cfg)
    from .verify import ShearWaveConfig

    setup = StudySetup(
        vs=bundle.vs, mm=bundle.mm, model=bundle.model,
        s=bundle.params.s, field=bundle.field, length=cfg.length,
        measure_time=cfg.coarse_steps * cfg.length
        / (min(cfg.resolutions) * cfg.lam),
    )
    base_cfg = ShearWaveConfig(
        length=cfg.length, mode=cfg.viscosity_mode,
        amplitude=cfg.viscosity_amplitude,
        horizon_decay_times=cfg.horizon_decay_times,
    )
    outcomes = run_verification(
        study, setup, cfg.resolutions,
        viscosity_s=cfg.viscosity_s, viscosity_n=cfg.viscosity_n,
        viscosity_cfg=base_cfg,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for outcome in outcomes:
        write_csv(out / f"{outcome.experiment}.csv", outcome.header, outcome.rows)
        _say(args, outcome.summary_line())
    write_csv(
        out / "summary.csv",
        ("experiment", "fitted_slope", "r2", "passed"),
        [
            (o.experiment,
             float("nan") if o.summary_value is None else o.summary_value,
             float("nan") if o.r2 is None else o.r2,
             "pass" if o.passed else "fail")
            for o in outcomes
        ],
    )
    if all(o.passed for o in outcomes):
        return EXIT_OK
    return EXIT_VERIFICATION


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lbmlab",
        description="moment-space lattice Boltzmann runs, equivalent-equation "
                    "reports and order-verification studies",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, doc in (
        ("analyze", cmd_analyze, "write the transport-coefficient report"),
        ("run", cmd_run, "run a simulation and dump checkpoint + moment fields"),
        ("verify", cmd_verify, "run refinement/viscometry studies"),
    ):
        p = sub.add_parser(name, help=doc)
        p.add_argument("--config", required=True, help="path to the config file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--quiet", action="store_true", help="suppress stdout chatter")
        if name == "verify":
            p.add_argument("--study", default=None,
                           help="prop3|prop4|prop5|prop6|viscosity|all "
                                "(default: the config's [study] name)")
        p.set_defaults(handler=fn)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _CONSTRUCTION_ERRORS as exc:
        print(f"construction error: {exc}", file=sys.stderr)
        return EXIT_CONSTRUCTION
    except SimulationDiverged as exc:
        print(f"simulation diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except FitRejected as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFICATION
    except (OSError, LbmError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
