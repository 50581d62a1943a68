"""Command-line interface.

    contactna simulate --mode network --n 1000 --seed 7 --out-dir run
    contactna estimate --input run/record.csv --method marginal-na --out-dir est
    contactna coverage-study --preset table1-w2 --out-dir cov
    contactna household-analyze --sensitivity --out-dir hh
    contactna sar-sim --p 0.07 --out-dir sar

Every subcommand accepts ``--config FILE`` with ``key = value`` lines whose
keys are the long option names; flags given on the command line win.
Exit status: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import io as cio
from .em import EMConfig, em_estimate
from .estimators import confidence_band, kaplan_meier, nelson_aalen
from .harness.coverage import CSV_COLUMNS, ESTIMATORS, coverage_study
from .harness.households import (CHAIN_BINOMIAL, MARGINAL, NaturalHistory, household_analyze,
                                  sar_forward_simulation, sensitivity_analysis, synthetic_fixture)
from .harness.presets import NATURAL_HISTORY_GRID, PRESETS
from .hazards import FitError, fit_parametric, parse_model
from .records import MASS_ACTION, NETWORK, RecordError, mass_action_risk_set, risk_set
from .simulate import SimulationConfig, simulate_epidemic
from .smoothing import KERNEL, SPLINE, SmootherConfig

log = logging.getLogger("contactna")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
FIXTURE = "synthetic_households.csv"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _model(text: str):
    try:
        return parse_model(text)
    except (ValueError, TypeError) as exc:
        raise argparse.ArgumentTypeError(f"bad model {text!r} ({exc}); use e.g. weibull,2,1") from None


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value file supplying defaults")
    p.add_argument("--out-dir", default=".", help="directory for all outputs (default: .)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("-q", "--quiet", action="store_true")


def _em_options(p: argparse.ArgumentParser):
    p.add_argument("--smoother", choices=[SPLINE, KERNEL], default=SPLINE)
    p.add_argument("--bandwidth", type=float, help="fixed kernel bandwidth")
    p.add_argument("--tol", type=float, help="L1 tolerance (default .0005 network, .005 mass action)")
    p.add_argument("--min-iter", type=int, default=5)
    p.add_argument("--max-iter", type=int, default=50)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="contactna", description="Contact-interval hazard estimation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate one SEIR epidemic")
    _common(p)
    p.add_argument("--mode", choices=[NETWORK, MASS_ACTION], default=NETWORK)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--stop-m", type=int, default=300)
    p.add_argument("--ws-k", type=int, default=10)
    p.add_argument("--ws-p", type=float, default=0.1)
    p.add_argument("--contact", type=_model, default="weibull,2,1")
    p.add_argument("--latent", type=_model, default="constant,0")
    p.add_argument("--infectious", type=_model, default="exponential,1")
    p.add_argument("--initial", type=int, default=1)
    p.add_argument("--hide-infectors", action="store_true", help="omit who infected whom")

    p = sub.add_parser("estimate", help="estimate the contact-interval cumulative hazard")
    _common(p)
    p.add_argument("--input", required=True, help="record CSV")
    p.add_argument("--edges", help="edge list CSV (default: <input stem>.edges.csv)")
    p.add_argument("--method", default="na",
                   choices=["na", "km", "marginal-na", "marginal-km", "parametric"])
    p.add_argument("--family", choices=["exponential", "weibull", "gamma"], default="weibull")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--ignore-infectors", action="store_true",
                   help="treat recorded infectors as unknown")
    _em_options(p)

    p = sub.add_parser("coverage-study", help="Monte Carlo coverage of the 95%% limits")
    _common(p)
    p.add_argument("--preset", choices=sorted(PRESETS), required=True)
    p.add_argument("--full-scale", action="store_true", help="n=100,000, m=1,000, 1,000 replicates")
    p.add_argument("--replicates", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--stop-m", type=int)
    p.add_argument("--estimators", nargs="+", choices=list(ESTIMATORS), default=list(ESTIMATORS))
    p.add_argument("--jobs", type=int, default=1)
    _em_options(p)

    p = sub.add_parser("household-analyze", help="household contact probability from onset days")
    _common(p)
    p.add_argument("--input", help=f"household CSV (default: bundled {FIXTURE})")
    p.add_argument("--incubation", type=int, default=2)
    p.add_argument("--latent", type=int, default=0)
    p.add_argument("--infectious", type=int, default=6)
    p.add_argument("--estimator", choices=[MARGINAL, CHAIN_BINOMIAL], default=MARGINAL)
    p.add_argument("--sensitivity", action="store_true", help="also run the natural-history grid")
    _em_options(p)

    p = sub.add_parser("sar-sim", help="household secondary attack rate by forward simulation")
    _common(p)
    p.add_argument("--input", help=f"household CSV (default: bundled {FIXTURE})")
    p.add_argument("--p", type=float, required=True, help="per-member contact probability")
    p.add_argument("--replicates", type=int, default=10_000)

    p = sub.add_parser("make-fixture", help="write a synthetic household CSV")
    _common(p)
    p.add_argument("--contact-probability", type=float, default=0.07)
    p.add_argument("--incubation", type=int, default=2)
    p.add_argument("--latent", type=int, default=0)
    p.add_argument("--infectious", type=int, default=6)
    return parser


# config files

def read_config(path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path) as fh:
        for k, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{k}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.lstrip("-").replace("-", "_")] = value
    return out


def _apply_config(sub: argparse.ArgumentParser, values: dict[str, str]):
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in values.items():
        act = actions.get(key)
        if act is None or key in ("config", "help"):
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(act, argparse._StoreTrueAction):
            if value.lower() not in ("1", "0", "true", "false", "yes", "no"):
                raise UsageError(f"config key {key!r} needs a boolean")
            defaults[key] = value.lower() in ("1", "true", "yes")
        elif act.nargs == "+":
            defaults[key] = value.split()
        else:
            defaults[key] = value
        act.required = False
    sub.set_defaults(**defaults)


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in COMMANDS), None)
    if known.config and command is not None:
        sub = parser._subparsers._group_actions[0].choices[command]
        _apply_config(sub, read_config(known.config))
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("contactna: a subcommand is required (see --help)")
    return args


# helpers

def _manifest(args: argparse.Namespace, extra: dict | None = None) -> str:
    entries = {f"arg.{k}": _show(v) for k, v in vars(args).items()
               if k not in ("verbose", "quiet")}
    entries.update({"version": __version__, "numpy": np.__version__, "scipy": scipy.__version__})
    entries.update(extra or {})
    return cio.manifest_to_text(entries)


def _show(v) -> str:
    if hasattr(v, "to_csv_line"):
        return v.to_csv_line()
    if isinstance(v, (list, tuple)):
        return " ".join(str(x) for x in v)
    return str(v)


def _em_config(args, mass: bool) -> EMConfig:
    tol = args.tol if args.tol is not None else (5e-3 if mass else 5e-4)
    smoother = SmootherConfig(kind=args.smoother, bandwidth=args.bandwidth)
    return EMConfig(tol=tol, min_iter=args.min_iter, max_iter=args.max_iter, smoother=smoother)


def _households(args):
    if args.input:
        return cio.read_households(args.input)
    ref = resources.files("contactna") / "data" / FIXTURE
    with resources.as_file(ref) as path:
        return cio.read_households(path)


# subcommands

def cmd_simulate(args, out: Path) -> dict:
    config = SimulationConfig(mode=args.mode, n=args.n, ws_k=args.ws_k, ws_p=args.ws_p,
                              contact_model=args.contact, latent_model=args.latent,
                              infectious_model=args.infectious, initial_infections=args.initial,
                              stop_m=args.stop_m, seed=args.seed)
    record = simulate_epidemic(config)
    if args.hide_infectors:
        record = record.hide_infectors()
    if record.extinct:
        log.warning("epidemic went extinct after %d infections", record.m)
    cio.write_record(record, out / "record.csv")
    return {"m": record.m, "T": cio.fmt(record.T), "extinct": int(record.extinct)}


def cmd_estimate(args, out: Path) -> dict:
    record = cio.read_record(args.input, args.edges)
    if args.ignore_infectors:
        record = record.hide_infectors()
    mass = record.mode == MASS_ACTION
    Y = mass_action_risk_set(record) if mass else risk_set(record)
    info: dict = {"mode": record.mode, "m": record.m}
    if args.method in ("na", "km"):
        est = nelson_aalen(record, Y) if args.method == "na" else kaplan_meier(record, Y)
        cio.atomic_write(out / "estimate.csv", cio.estimate_to_text(est, args.alpha))
    elif args.method in ("marginal-na", "marginal-km"):
        res = em_estimate(record, _em_config(args, mass), Y)
        est = res.cumhaz if args.method == "marginal-na" else res.survival
        cio.atomic_write(out / "estimate.csv", cio.estimate_to_text(est, args.alpha))
        cio.atomic_write(out / "weights.csv", cio.weights_to_text(res.weights))
        cio.atomic_write(out / "iterations.csv", cio.iteration_log_to_text(res.l1_log))
        if res.hazard is not None and hasattr(res.hazard, "grid"):
            cio.atomic_write(out / "hazard.csv", cio.hazard_grid_to_text(*res.hazard.grid()))
        info.update(converged=int(res.converged), iterations=res.iterations)
        if not res.converged:
            log.warning("EM did not converge; see iterations.csv")
    else:
        fit = fit_parametric(record, args.family)
        rows = [[fit.family, k, float(v), float(s) if fit.stderr is not None else np.nan]
                for k, (v, s) in enumerate(zip(fit.params, fit.stderr if fit.stderr is not None
                                                else np.full(len(fit.params), np.nan)), 1)]
        cio.atomic_write(out / "parametric.csv",
                         cio.table_to_text(["family", "param", "value", "stderr"], rows))
        info.update(loglik=cio.fmt(fit.loglik), converged=int(fit.converged),
                    boundary=int(fit.boundary))
    return info


def cmd_coverage(args, out: Path) -> dict:
    preset = PRESETS[args.preset]
    config = preset.config(args.full_scale, args.seed)
    if args.n is not None or args.stop_m is not None:
        config = SimulationConfig(mode=config.mode, n=args.n or config.n, ws_k=config.ws_k,
                                  ws_p=config.ws_p, contact_model=config.contact_model,
                                  latent_model=config.latent_model,
                                  infectious_model=config.infectious_model,
                                  initial_infections=config.initial_infections,
                                  stop_m=args.stop_m or config.stop_m, seed=args.seed)
    replicates = args.replicates if args.replicates is not None else preset.replicates(args.full_scale)
    em_config = EMConfig(tol=preset.tol if args.tol is None else args.tol, min_iter=args.min_iter,
                         max_iter=args.max_iter,
                         smoother=SmootherConfig(kind=args.smoother, bandwidth=args.bandwidth))
    report = coverage_study(config, args.estimators, replicates, args.seed, em_config, args.jobs)
    if report.error:
        raise RecordError(f"coverage study: {report.error}")
    rows = [[e, q, h, n, float(c), float(lo), float(hi)] for e, q, h, n, c, lo, hi in report.rows()]
    cio.atomic_write(out / "coverage.csv", cio.table_to_text(CSV_COLUMNS, rows))
    cio.atomic_write(out / "em_iterations.csv",
                     cio.table_to_text(["replicate", "iterations", "converged"],
                                       [[r, it, int(c)] for r, (it, c) in
                                        enumerate(zip(report.iterations, report.converged))]))
    if not args.quiet:
        print("\n".join(report.summary_lines()))
    info = {"replicates": replicates, "extinctions": report.extinctions,
            "n": config.n, "stop_m": config.stop_m, "tol": em_config.tol}
    for est, fails in report.failures.items():
        info[f"failures.{est}"] = len(fails)
    for k, v in report.iteration_summary().items():
        info[f"em.{k}"] = v
    return info


def _household_rows(label, res):
    if isinstance(res, Exception):
        return [label, "", "", "", "", "", "", "", "", "", str(res)]
    nh = res.nh
    lo, hi = res.contact_ci
    return [label, nh.incubation, nh.latent, nh.infectious, res.estimator,
            float(res.contact_probability), float(lo), float(hi),
            float(res.cumhaz) if res.cumhaz is not None else np.nan,
            int(res.converged), "; ".join(f"{p.household_id}/{p.person_id}" for p in res.problems)]


HOUSEHOLD_TABLE = ["label", "incubation", "latent", "infectious", "estimator",
                   "contact_probability", "lo95", "hi95", "cumhaz", "converged", "notes"]


def cmd_household(args, out: Path) -> dict:
    households = _households(args)
    nh = NaturalHistory(args.incubation, args.latent, args.infectious)
    kwargs = {"estimator": args.estimator, "em_config": _em_config(args, False)}
    primary = household_analyze(households, nh, **kwargs)
    results = {"primary": primary}
    if args.sensitivity:
        grid = {k: v for k, v in NATURAL_HISTORY_GRID.items() if v != nh}
        results.update(sensitivity_analysis(households, grid, **kwargs))
    cio.atomic_write(out / "household.csv",
                     cio.table_to_text(HOUSEHOLD_TABLE,
                                       [_household_rows(k, r) for k, r in results.items()]))
    curves = []
    for label, res in results.items():
        if isinstance(res, Exception) or res.em is None:
            continue
        band = confidence_band(res.em.cumhaz)
        curves += [[label, float(t), float(v), float(lo), float(hi)]
                   for t, v, lo, hi in zip(band.tau, band.estimate, band.lower, band.upper)]
    if curves:
        cio.atomic_write(out / "curves.csv",
                         cio.table_to_text(["label", "tau", "cumhaz", "lo95", "hi95"], curves))
    if primary.parametric:
        rows = [[fam, fit.model.to_csv_line(), float(fit.loglik)]
                for fam, fit in primary.parametric.items() if fit.model]
        cio.atomic_write(out / "parametric.csv", cio.table_to_text(["family", "model", "loglik"], rows))
    if primary.problems:
        cio.atomic_write(out / "problems.csv", cio.table_to_text(
            ["household_id", "person_id", "message"],
            [[p.household_id, p.person_id, p.message] for p in primary.problems]))
    if not args.quiet:
        for label, res in results.items():
            text = f"error: {res}" if isinstance(res, Exception) else res.formatted()
            print(f"{label:14s} {text}")
    return {"households": primary.households, "members": primary.members,
            "primaries": primary.primaries, "secondaries": primary.secondaries,
            "contact_probability": primary.formatted(), "converged": int(primary.converged),
            "problems": len(primary.problems)}


def cmd_sar(args, out: Path) -> dict:
    households = _households(args)
    res = sar_forward_simulation(households, args.p, args.replicates, np.random.default_rng(args.seed))
    cio.atomic_write(out / "sar.csv", cio.table_to_text(
        ["p", "replicates", "mean", "lo95", "hi95"],
        [[float(args.p), args.replicates, res.mean, res.lower, res.upper]]))
    if not args.quiet:
        print(f"SAR {res.mean:.3f} ({res.lower:.3f}, {res.upper:.3f})")
    return {"mean": cio.fmt(res.mean)}


def cmd_fixture(args, out: Path) -> dict:
    nh = NaturalHistory(args.incubation, args.latent, args.infectious)
    households = synthetic_fixture(args.contact_probability, nh, args.seed)
    text = "# synthetic households, not observed data\n" + cio.households_to_text(households)
    cio.atomic_write(out / "households.csv", text)
    return {"households": len(households)}


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "coverage-study": cmd_coverage,
            "household-analyze": cmd_household, "sar-sim": cmd_sar, "make-fixture": cmd_fixture}


def run(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"contactna: cannot read config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    level = logging.ERROR if args.quiet else (logging.DEBUG if args.verbose > 1 else
                                              logging.INFO if args.verbose else logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out_dir)
    try:
        info = COMMANDS[args.command](args, out)
        cio.atomic_write(out / "manifest.txt", _manifest(args, {f"result.{k}": v
                                                                for k, v in info.items()}))
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (RecordError, FitError, ValueError, OSError, KeyError) as exc:
        print(f"contactna {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"contactna {args.command}: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
