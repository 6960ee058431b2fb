"""Experiment runner and command-line interface.

Three subcommands::

    tempersmc run --config exp.ini --out results/ [--seed S] [--threads K]
    tempersmc figure {rates|sequences|scaling|narrow} --out data/ [...]
    tempersmc schedule --lambdas 0,0.5,0.75,1 [--out data/]

``run`` executes one sampler configuration (any scheme) and writes a JSON
result plus CSV traces; output bytes are a pure function of the config
and seed.  ``figure`` regenerates the summary datasets behind the
standard plots as CSV bundles at desk scale: ``rates`` tabulates the
temperature/step-size/certificate columns for the three closed-form
Gaussian scenarios, ``sequences`` the adaptive temperature curves for the
narrow/wide/mixed-variance cases at d=25, ``scaling`` the schedule length
against dimension, and ``narrow`` the SMC versus constant-decay-rule
comparison on the narrow Gaussian.  ``schedule`` converts between
temperature and step-size representations and tabulates the convergence
certificate, or integrates the schedule ODE for a configured model.

Exit codes: 0 success, 1 usage or configuration error, 2 numeric or
budget error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BudgetExceededError, DegenerateError, NumericError
from .model import GaussianPair, fisher_info, gaussian_state, load_model_config
from .schedule import (
    Schedule,
    StepSizes,
    gammas_to_lambdas,
    lambdas_to_gammas,
    rate_bound,
    rate_cn,
    solve_schedule_ode,
)
from .smc import (
    ConstantRateAis,
    EssBisection,
    Fixed,
    FisherStep,
    KernelConfig,
    KlConstant,
    run_smc,
    write_result_json,
    write_trace_csv,
)
from .altschemes import run_pmd, run_srais
from .diagnostics import moment_error

__all__ = [
    "ExperimentSpec",
    "load_experiment_spec",
    "run_experiment",
    "figure_rates",
    "figure_sequences",
    "figure_scaling",
    "figure_narrow",
    "write_rows_csv",
    "main",
]

_FIGURE_CASES = {
    "a": ("narrow", 1e-2),
    "b": ("wide", 1e2),
    "c": ("mixed", None),
}


@dataclass(eq=False)
class ExperimentSpec:
    """One named, seeded sampler configuration."""

    name: str
    pair: GaussianPair
    scheme: str = "smc"
    rule: object = field(default_factory=EssBisection)
    n_particles: int = 1000
    kernel: KernelConfig = field(default_factory=KernelConfig)
    seed: int = 0
    replicates: int = 1
    max_steps: int = 1000
    resampling: str = "systematic"
    gammas: StepSizes | None = None
    batch_sizes: list[int] | None = None
    gamma_rule: object = "renyi"
    bandwidth: float | None = None
    fast_weights: bool = False

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if self.scheme not in ("smc", "pmd", "srais"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


def _parse_floats(text):
    return [float(p) for p in str(text).replace(";", ",").split(",") if p.strip()]


def _parse_rule(section):
    kind = section.get("rule", "ess").strip().lower()
    if kind == "ess":
        return EssBisection(beta=section.getfloat("beta", 1.0))
    if kind == "kl":
        return KlConstant(kappa=section.getfloat("kappa", 0.5))
    if kind == "fisher":
        return FisherStep(beta=section.getfloat("beta", 1.0))
    if kind == "constant_rate":
        return ConstantRateAis(delta=section.getfloat("delta", 1.0 / 32.0))
    if kind == "fixed":
        if "lambdas" not in section:
            raise ValueError("rule = fixed requires a lambdas list")
        return Fixed(Schedule(np.asarray(_parse_floats(section["lambdas"]))))
    raise ValueError(f"unknown rule {kind!r}")


def load_experiment_spec(path) -> ExperimentSpec:
    """Parse an experiment config file (``[model]``, ``[sampler]``,
    optional ``[experiment]`` sections)."""
    parser = configparser.ConfigParser()
    if not parser.read(str(path)):
        raise ValueError(f"cannot read config {path!r}")
    if "model" not in parser:
        raise ValueError("config lacks a [model] section")
    pair = load_model_config(parser["model"])

    sampler = parser["sampler"] if "sampler" in parser else {}
    scheme = str(sampler.get("scheme", "smc")).strip().lower()
    spec = ExperimentSpec(
        name=parser.get("experiment", "name", fallback=Path(path).stem),
        pair=pair,
        scheme=scheme,
        n_particles=int(sampler.get("n_particles", 1000)),
        kernel=KernelConfig(
            n_mh_steps=int(sampler.get("n_mh_steps", 5)),
            scale_factor=float(sampler.get("scale_factor", 1.0)),
        ),
        seed=int(sampler.get("seed", 0)),
        replicates=parser.getint("experiment", "replicates", fallback=1),
        max_steps=int(sampler.get("max_steps", 1000)),
        resampling=str(sampler.get("resampling", "systematic")),
    )
    if scheme == "smc":
        if isinstance(sampler, configparser.SectionProxy):
            spec.rule = _parse_rule(sampler)
    elif scheme == "pmd":
        if "gammas" not in sampler:
            raise ValueError("scheme = pmd requires a gammas list")
        spec.gammas = StepSizes(np.asarray(_parse_floats(sampler["gammas"])))
    elif scheme == "srais":
        if "batch_sizes" not in sampler:
            raise ValueError("scheme = srais requires a batch_sizes list")
        spec.batch_sizes = [int(v) for v in _parse_floats(sampler["batch_sizes"])]
        rule = str(sampler.get("gamma_rule", "renyi")).strip().lower()
        if rule == "renyi":
            spec.gamma_rule = "renyi"
        elif rule == "fixed":
            if "gammas" not in sampler:
                raise ValueError("gamma_rule = fixed requires a gammas list")
            spec.gamma_rule = StepSizes(np.asarray(_parse_floats(sampler["gammas"])))
        else:
            raise ValueError(f"unknown gamma_rule {rule!r}")
    if isinstance(sampler, configparser.SectionProxy):
        if "bandwidth" in sampler:
            spec.bandwidth = float(sampler["bandwidth"])
        if "fast_weights" in sampler:
            spec.fast_weights = sampler.getboolean("fast_weights")
    return spec


def _run_one(spec: ExperimentSpec, seed):
    if spec.scheme == "smc":
        return run_smc(
            spec.pair,
            spec.rule,
            spec.n_particles,
            config=spec.kernel,
            seed=seed,
            max_steps=spec.max_steps,
            resampling=spec.resampling,
        )
    if spec.scheme == "pmd":
        return run_pmd(
            spec.pair,
            spec.n_particles,
            spec.gammas,
            seed=seed,
            bandwidth=spec.bandwidth,
            fast_weights=spec.fast_weights,
            resampling=spec.resampling,
        )
    return run_srais(
        spec.pair,
        spec.batch_sizes,
        seed=seed,
        gamma_rule=spec.gamma_rule,
        bandwidth=spec.bandwidth,
        fast_weights=spec.fast_weights,
    )


def run_experiment(spec: ExperimentSpec, out_dir, threads=1):
    """Execute all replicates of a spec and write JSON/CSV outputs.

    Replicate ``k`` runs with seed ``spec.seed + k`` and may execute in a
    worker thread; files are named and written in replicate order.
    Returns the list of result records.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [spec.seed + k for k in range(spec.replicates)]
    results = _map_seeds(lambda s: _run_one(spec, s), seeds, threads)
    for k, result in enumerate(results):
        stem = spec.name if spec.replicates == 1 else f"{spec.name}_r{k}"
        write_result_json(result, out / f"{stem}_result.json")
        write_trace_csv(result, out / f"{stem}_trace.csv")
        with open(out / f"{stem}_schedule.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["lambda"])
            for lam in result.schedule:
                writer.writerow([repr(float(lam))])
    return results


def _map_seeds(fn, seeds, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            return list(pool.map(fn, seeds))
    return [fn(s) for s in seeds]


# ---------------------------------------------------------------------------
# figure data


def figure_rates(ode_step=0.02):
    """Temperature, step size, certificate, and bound columns for the
    three closed-form Gaussian scenarios."""
    scenarios = [
        ("negative-exponential", GaussianPair(1, mean=0.0, var=4.0)),
        ("exponential-growth", GaussianPair(1, mean=0.0, var=0.25)),
        ("linear", GaussianPair(1, mean=2.0, var=1.0)),
    ]
    rows = []
    for label, pair in scenarios:
        path = solve_schedule_ode(
            lambda lam: fisher_info(pair, lam), c=1.0, step=ode_step
        )
        sched = Schedule(path.lambdas)
        gammas = lambdas_to_gammas(sched)
        cn = rate_cn(gammas)
        bound = rate_bound(sched)
        for n in range(1, sched.n_steps):
            rows.append(
                {
                    "scenario": label,
                    "n": n,
                    "lambda": float(sched.lambdas[n]),
                    "gamma": float(gammas.gammas[n - 1]),
                    "c_n": float(cn[n - 1]),
                    "bound": float(bound[n - 1]),
                }
            )
    return rows


def _case_pair(case, dim):
    kind, var = _FIGURE_CASES[case]
    if kind == "mixed":
        variances = np.where(np.arange(dim) < dim // 2, 1e-2, 1e2)
        return GaussianPair(dim, mean=1.0, var=variances)
    return GaussianPair(dim, mean=1.0, var=var)


def figure_sequences(n_particles=10_000, dim=25, replicates=5, seed=0, threads=1):
    """Adaptive temperature curves for the three d=25 benchmark cases."""
    rows = []
    for case in ("a", "b", "c"):
        pair = _case_pair(case, dim)
        seeds = [seed + k for k in range(replicates)]
        results = _map_seeds(
            lambda s, p=pair: run_smc(p, EssBisection(1.0), n_particles, seed=s),
            seeds,
            threads,
        )
        for rep, result in enumerate(results):
            for step, lam in enumerate(result.schedule):
                rows.append(
                    {"case": case, "seed": seeds[rep], "step": step, "lambda": float(lam)}
                )
    return rows


def figure_scaling(
    n_particles=1000, dims=(4, 16, 64, 256), replicates=5, seed=0, threads=1
):
    """Schedule length against dimension for the narrow-variance case."""
    rows = []
    for dim in dims:
        pair = GaussianPair(dim, mean=1.0, var=1e-2)
        seeds = [seed + k for k in range(replicates)]
        results = _map_seeds(
            lambda s, p=pair: run_smc(p, EssBisection(1.0), n_particles, seed=s),
            seeds,
            threads,
        )
        for rep, result in enumerate(results):
            rows.append({"d": dim, "seed": seeds[rep], "n_steps": result.n_steps})
    return rows


def figure_narrow(n_particles=10_000, seed=0, delta=1.0 / 32.0, ais_cap=10_000):
    """SMC versus the constant-decay rule on the narrow Gaussian target."""
    pair = GaussianPair(2, mean=1.0, var=1e-2)
    target = gaussian_state(pair, 1.0)
    rows = []

    smc_result = run_smc(pair, EssBisection(1.0), n_particles, seed=seed)
    mean_err, var_err = moment_error(smc_result.final_cloud, target)
    rows.append(
        {
            "method": "smc",
            "n_steps": smc_result.n_steps,
            "reached_target": 1,
            "mean_err": mean_err,
            "var_err": var_err,
            "log_z": smc_result.log_z_estimate,
        }
    )

    try:
        ais_result = run_smc(
            pair,
            ConstantRateAis(delta),
            n_particles,
            seed=seed,
            max_steps=ais_cap,
        )
        reached = 1
    except BudgetExceededError as err:
        ais_result = err.partial
        reached = 0
    mean_err, var_err = moment_error(ais_result.final_cloud, target)
    rows.append(
        {
            "method": "constant_rate_ais",
            "n_steps": ais_result.n_steps,
            "reached_target": reached,
            "mean_err": mean_err,
            "var_err": var_err,
            "log_z": ais_result.log_z_estimate,
        }
    )
    return rows


def write_rows_csv(rows, path):
    """Write a list of uniform dict rows as CSV (floats via ``repr`` so
    they parse back losslessly)."""
    if not rows:
        raise ValueError("no rows to write")
    fields = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for row in rows:
            writer.writerow(
                [repr(v) if isinstance(v, float) else v for v in (row[f] for f in fields)]
            )


# ---------------------------------------------------------------------------
# subcommands


def _cmd_run(args):
    spec = load_experiment_spec(args.config)
    if args.seed is not None:
        spec.seed = int(args.seed)
    run_experiment(spec, args.out, threads=args.threads)
    return 0


def _cmd_figure(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    which = args.which
    if which == "rates":
        rows = figure_rates()
    elif which == "sequences":
        rows = figure_sequences(
            n_particles=args.particles or 10_000,
            replicates=args.replicates,
            seed=args.seed,
            threads=args.threads,
        )
    elif which == "scaling":
        rows = figure_scaling(
            n_particles=args.particles or 1000,
            replicates=args.replicates,
            seed=args.seed,
            threads=args.threads,
        )
    else:
        rows = figure_narrow(n_particles=args.particles or 10_000, seed=args.seed)
    write_rows_csv(rows, out / f"{which}.csv")
    return 0


def _schedule_rows(sched: Schedule):
    gammas = lambdas_to_gammas(sched)
    cn = rate_cn(gammas) if sched.n_steps > 1 else np.empty(0)
    bound = rate_bound(sched)
    rows = []
    for n in range(1, sched.n_steps + 1):
        descent = n < sched.n_steps
        rows.append(
            {
                "n": n,
                "lambda": float(sched.lambdas[n]),
                "gamma": float(gammas.gammas[n - 1]),
                "c_n": float(cn[n - 1]) if descent else "",
                "bound": float(bound[n - 1]) if descent else "",
            }
        )
    return rows


def _cmd_schedule(args):
    given = [v is not None for v in (args.lambdas, args.gammas, args.config)]
    if sum(given) != 1:
        raise ValueError("give exactly one of --lambdas, --gammas, --config")
    if args.lambdas is not None:
        values = _parse_floats(args.lambdas)
        if not values or abs(values[-1] - 1.0) > 1e-12:
            raise ValueError("schedule must end at 1")
        sched = Schedule(np.asarray(values))
    elif args.gammas is not None:
        sched = gammas_to_lambdas(StepSizes(np.asarray(_parse_floats(args.gammas))))
    else:
        pair = load_model_config(args.config)
        path = solve_schedule_ode(
            lambda lam: fisher_info(pair, lam), c=args.speed, step=args.ode_step
        )
        sched = Schedule(path.lambdas)
    rows = _schedule_rows(sched)
    if args.out is None:
        writer = csv.writer(sys.stdout)
        writer.writerow(rows[0].keys())
        for row in rows:
            writer.writerow(row.values())
    else:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_rows_csv(rows, out / "schedule.csv")
    return 0


class _Parser(argparse.ArgumentParser):
    # usage errors must exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _build_parser():
    parser = _Parser(prog="tempersmc", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a configured sampler run")
    p_run.add_argument("--config", required=True, help="experiment config file")
    p_run.add_argument("--seed", type=int, default=None, help="override config seed")
    p_run.add_argument("--out", default=".", help="output directory")
    p_run.add_argument("--threads", type=int, default=1, help="replicate workers")

    p_fig = sub.add_parser("figure", help="emit a figure dataset as CSV")
    p_fig.add_argument("which", choices=["rates", "sequences", "scaling", "narrow"])
    p_fig.add_argument("--out", default=".", help="output directory")
    p_fig.add_argument("--seed", type=int, default=0)
    p_fig.add_argument("--threads", type=int, default=1)
    p_fig.add_argument("--replicates", type=int, default=5)
    p_fig.add_argument("--particles", type=int, default=None, help="override default N")

    p_sched = sub.add_parser("schedule", help="convert/tabulate a schedule")
    p_sched.add_argument("--lambdas", help="comma-separated temperatures")
    p_sched.add_argument("--gammas", help="comma-separated step sizes")
    p_sched.add_argument("--config", help="model config for ODE mode")
    p_sched.add_argument("--speed", type=float, default=1.0, help="ODE speed constant")
    p_sched.add_argument("--ode-step", type=float, default=1e-3, help="Euler step")
    p_sched.add_argument("--out", default=None, help="output directory (default stdout)")

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "figure":
            return _cmd_figure(args)
        return _cmd_schedule(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (NumericError, BudgetExceededError, DegenerateError) as exc:
        # DegenerateError subclasses ValueError; numeric failures first
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, configparser.Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
