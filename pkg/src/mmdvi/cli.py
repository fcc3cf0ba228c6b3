"""Command-line entry point.

Subcommands: ``estimate`` (one variational fit of one dataset), ``sweep``
(the contamination benchmark), ``theory`` (prior-mass calculators), and
``verify`` (empirical convergence and contamination-criterion checks).

Configuration can come from a flat JSON file (``--config``); every key
corresponds to a long flag, unknown keys are rejected, and explicit flags win
over file values.  Exit codes: 0 success (all checks passed for ``verify``),
1 invalid configuration or failed verification, 2 malformed input CSV.
Argument-syntax errors exit with the usual argparse status.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import csvio, svg
from .harness import DEFAULT_EPSILONS, PROBLEMS, generate, run_sweep
from .kernel import GaussianKernel
from .mmd import (
    ContaminatedGaussianSpec,
    check_empirical_convergence,
    kl_contaminated_criterion,
    minimize_criterion,
    mmd2_contaminated_criterion,
)
from .models import ModelSpec
from .theory import extended_prior_mass_construction, prior_mass_lower_bound
from .vi import CLOSED_FORM, PER_PARTICLE, SCORE, SHARED, DEFAULT_SEED, FitConfig, fit


class ConfigError(ValueError):
    """Invalid configuration (file or flags); maps to exit code 1."""


KEYS = {
    "estimate": frozenset(
        "data problem epsilon n model sigma2 half_width gamma2 beta_log particles "
        "steps step_scale estimator sample_mode seed out".split()
    ),
    "sweep": frozenset(
        "problem epsilons reps n steps step_scale jobs seed out svg float64".split()
    ),
    "theory": frozenset("theta_star theta_star_norm dim n sigma2 gamma2 out".split()),
    "verify": frozenset("trials seed".split()),
}


def _load_config_file(path: str, allowed: frozenset) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a flat JSON object")
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown config keys: {', '.join(unknown)}")
    for key, value in doc.items():
        if isinstance(value, (dict, list)):
            raise ConfigError(f"{path}: key {key!r} must be a scalar")
    return doc


def _merge(args: argparse.Namespace) -> dict:
    """File values under explicit flags; unset keys become None."""
    allowed = KEYS[args.cmd]
    file_values = _load_config_file(args.config, allowed) if args.config else {}
    merged = {}
    for key in allowed:
        flag = getattr(args, key, None)
        merged[key] = flag if flag is not None else file_values.get(key)
    return merged


def _as_int(value, key: str, default: int | None = None) -> int | None:
    if value is None:
        return default
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be an integer, got {value!r}") from None


def _as_float(value, key: str, default: float | None = None) -> float | None:
    if value is None:
        return default
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a number, got {value!r}") from None


def _as_bool(value, key: str) -> bool:
    if value is None:
        return False
    if isinstance(value, bool):
        return value
    raise ConfigError(f"{key} must be a boolean, got {value!r}")


def _out_dir(value) -> str:
    out = str(value) if value is not None else "."
    os.makedirs(out, exist_ok=True)
    return out


def _fmt_vec(v: np.ndarray) -> str:
    return ",".join(repr(float(x)) for x in np.atleast_1d(v))


def cmd_estimate(opts: dict) -> int:
    seed = _as_int(opts["seed"], "seed", DEFAULT_SEED)
    out = _out_dir(opts["out"])
    if opts["data"] is not None and opts["problem"] is not None:
        raise ConfigError("give either data or problem, not both")

    if opts["data"] is not None:
        x = csvio.read_samples(str(opts["data"]))
        d = x.shape[1]
        kind = str(opts["model"] or "gaussian")
        if kind == "gaussian":
            model = ModelSpec.gaussian(d, sigma2=_as_float(opts["sigma2"], "sigma2", 1.0))
        elif kind == "uniform":
            model = ModelSpec.uniform(d, half_width=_as_float(opts["half_width"], "half_width", 0.5))
        else:
            raise ConfigError(f"unknown model {kind!r}")
        rng_fit = np.random.default_rng(np.random.SeedSequence(seed))
    elif opts["problem"] is not None:
        name = str(opts["problem"])
        if name not in PROBLEMS:
            raise ConfigError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}")
        problem = PROBLEMS[name]
        model = problem.model
        epsilon = _as_float(opts["epsilon"], "epsilon", 0.0)
        n = _as_int(opts["n"], "n", 200)
        ss_data, ss_fit = np.random.SeedSequence(seed).spawn(2)
        try:
            spec = problem.contamination(epsilon)
            x = generate(spec, n, np.random.default_rng(ss_data))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        rng_fit = np.random.default_rng(ss_fit)
    else:
        raise ConfigError("estimate needs a data file or a problem name")

    n, d = x.shape
    gamma2 = _as_float(opts["gamma2"], "gamma2")
    kernel = GaussianKernel(gamma2) if gamma2 is not None else GaussianKernel.default_for_dim(d)
    overrides = {"seed": seed}
    if opts["beta_log"] is not None:
        overrides["beta_log"] = _as_float(opts["beta_log"], "beta_log")
    if opts["particles"] is not None:
        overrides["n_particles"] = _as_int(opts["particles"], "particles")
    if opts["steps"] is not None:
        overrides["n_steps"] = _as_int(opts["steps"], "steps")
    if opts["step_scale"] is not None:
        overrides["step_scale"] = _as_float(opts["step_scale"], "step_scale")
    if opts["estimator"] is not None:
        overrides["estimator"] = str(opts["estimator"])
    if opts["sample_mode"] is not None:
        overrides["sample_mode"] = str(opts["sample_mode"])
    try:
        config = FitConfig.benchmark(n, d, **overrides)
        result = fit(x, model, kernel, config, rng=rng_fit)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    trace_path = os.path.join(out, "trace.csv")
    csvio.write_trace_csv(trace_path, result.trace)
    print(
        f"estimate: n={n} d={d} m={_fmt_vec(result.q.m)} s={_fmt_vec(result.q.s)} "
        f"objective={csvio.fmt(result.trace.objective[-1])} trace={trace_path}"
    )
    return 0


def _parse_epsilons(value) -> tuple:
    if value is None:
        return DEFAULT_EPSILONS
    try:
        eps = tuple(float(tok) for tok in str(value).split(",") if tok.strip())
    except ValueError:
        raise ConfigError(f"invalid grid: cannot parse epsilons {value!r}") from None
    if not eps:
        raise ConfigError("invalid grid: empty epsilon list")
    for e in eps:
        if not 0.0 <= e < 0.5:
            raise ConfigError(f"invalid grid: epsilon {e} outside [0, 0.5)")
    return eps


def cmd_sweep(opts: dict) -> int:
    name = opts["problem"]
    if name is None:
        raise ConfigError("sweep needs a problem name")
    name = str(name)
    if name not in PROBLEMS:
        raise ConfigError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}")
    epsilons = _parse_epsilons(opts["epsilons"])
    reps = _as_int(opts["reps"], "reps", 100)
    n = _as_int(opts["n"], "n", 200)
    steps = _as_int(opts["steps"], "steps", 1000)
    step_scale = _as_float(opts["step_scale"], "step_scale", 1.0)
    jobs = _as_int(opts["jobs"], "jobs", os.cpu_count() or 1)
    seed = _as_int(opts["seed"], "seed", DEFAULT_SEED)
    out = _out_dir(opts["out"])
    try:
        result = run_sweep(
            name,
            n=n,
            reps=reps,
            epsilons=epsilons,
            master_seed=seed,
            n_steps=steps,
            step_scale=step_scale,
            jobs=jobs,
            use_float32=not _as_bool(opts["float64"], "float64"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    rmse_path = os.path.join(out, "rmse.csv")
    trials_path = os.path.join(out, "trials.csv")
    csvio.write_rmse_csv(rmse_path, result)
    csvio.write_trials_csv(trials_path, result)
    written = [rmse_path, trials_path]
    if _as_bool(opts["svg"], "svg"):
        series = {m: (result.epsilons, result.rmse(m)) for m in result.methods}
        chart = svg.line_chart(
            series,
            title=f"{name}: RMSE vs contamination rate",
            xlabel="contamination rate",
            ylabel="RMSE",
        )
        svg_path = os.path.join(out, "sweep.svg")
        csvio.atomic_write(svg_path, chart)
        written.append(svg_path)
    print(f"sweep {name}: n={n} reps={reps} wrote {' '.join(written)}")
    return 0


def cmd_theory(opts: dict) -> int:
    if (opts["theta_star"] is None) == (opts["theta_star_norm"] is None):
        raise ConfigError("theory needs exactly one of theta_star or theta_star_norm")
    if opts["theta_star"] is not None:
        try:
            theta_star = np.array([float(tok) for tok in str(opts["theta_star"]).split(",")])
        except ValueError:
            raise ConfigError(f"cannot parse theta_star {opts['theta_star']!r}") from None
        if opts["dim"] is not None and _as_int(opts["dim"], "dim") != theta_star.size:
            raise ConfigError("dim disagrees with the length of theta_star")
    else:
        norm = _as_float(opts["theta_star_norm"], "theta_star_norm")
        if norm < 0.0:
            raise ConfigError(f"theta_star_norm must be >= 0, got {norm}")
        dim = _as_int(opts["dim"], "dim", 1)
        theta_star = np.zeros(dim)
        theta_star[0] = norm
    n = _as_int(opts["n"], "n", 200)
    sigma2 = _as_float(opts["sigma2"], "sigma2", 1.0)
    gamma2 = _as_float(opts["gamma2"], "gamma2", float(theta_star.size))
    try:
        report = prior_mass_lower_bound(theta_star, n, sigma2, gamma2)
        extended = extended_prior_mass_construction(theta_star, n, sigma2, gamma2)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    for key in (
        "n dim sigma2 gamma2 theta_star_norm s_n f_theta_star "
        "log_mass_lower_bound mass_lower_bound beta_min".split()
    ):
        print(f"{key} = {getattr(report, key)!r}")
    for key in "rho_variance kl_value mmd_integral_bound beta_min_extended".split():
        print(f"{key} = {getattr(extended, key)!r}")
    if opts["out"] is not None:
        path = os.path.join(_out_dir(opts["out"]), "theory.csv")
        csvio.write_theory_csv(path, report, extended)
        print(f"wrote {path}")
    return 0


def cmd_verify(opts: dict) -> int:
    trials = _as_int(opts["trials"], "trials", 1000)
    seed = _as_int(opts["seed"], "seed", DEFAULT_SEED)
    all_passed = True

    model = ModelSpec.gaussian(1)
    kernel = GaussianKernel.default_for_dim(1)
    rng = np.random.default_rng(seed)
    for n in (10, 100, 1000):
        rep = check_empirical_convergence(kernel, model, np.zeros(1), n, trials, rng)
        all_passed &= rep.passed
        print(
            f"convergence n={n} trials={trials} mean={rep.mean_mmd2:.6g} "
            f"bound={rep.bound:.6g} stderr={rep.stderr:.3g} "
            f"{'PASS' if rep.passed else 'FAIL'}"
        )

    spec = ContaminatedGaussianSpec(
        theta0=np.array([2.0]), theta_c=np.array([20.0]), epsilon=0.2, sigma2=1.0
    )
    crit_kernel = GaussianKernel(1.0)
    mmd_argmin = minimize_criterion(
        lambda g: mmd2_contaminated_criterion(crit_kernel, spec, g[:, None]), -5.0, 25.0
    )
    ok = abs(mmd_argmin - 2.0) < 1e-3
    all_passed &= ok
    print(f"contamination-mmd argmin={mmd_argmin:.9f} target=2.0 {'PASS' if ok else 'FAIL'}")

    kl_argmin = minimize_criterion(
        lambda g: kl_contaminated_criterion(spec, g[:, None]), -5.0, 25.0
    )
    target = 0.8 * 2.0 + 0.2 * 20.0
    ok = abs(kl_argmin - target) < 1e-6
    all_passed &= ok
    print(f"contamination-kl argmin={kl_argmin:.9f} target={target} {'PASS' if ok else 'FAIL'}")

    return 0 if all_passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmdvi", description="Robust location estimation with the MMD posterior."
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("estimate", help="fit one dataset and write the optimizer trace")
    p.add_argument("--data", help="input CSV of samples (rows = observations)")
    p.add_argument("--problem", help=f"generate data from a problem: {sorted(PROBLEMS)}")
    p.add_argument("--epsilon", type=float, help="contamination rate for --problem")
    p.add_argument("--n", type=int, help="sample size for --problem (default 200)")
    p.add_argument("--model", choices=("gaussian", "uniform"), help="model for --data")
    p.add_argument("--sigma2", type=float, help="gaussian model variance (default 1)")
    p.add_argument("--half-width", dest="half_width", type=float,
                   help="uniform model half width (default 0.5)")
    p.add_argument("--gamma2", type=float, help="kernel bandwidth^2 (default: dim)")
    p.add_argument("--beta-log", dest="beta_log", type=float,
                   help="log inverse temperature; inf disables the prior term")
    p.add_argument("--particles", type=int, help="gradient particles per step (default n)")
    p.add_argument("--steps", type=int, help="gradient steps (default 1000)")
    p.add_argument("--step-scale", dest="step_scale", type=float,
                   help="step size multiplier for 1/sqrt(t) (default 1)")
    p.add_argument("--estimator", choices=(CLOSED_FORM, SCORE))
    p.add_argument("--sample-mode", dest="sample_mode", choices=(PER_PARTICLE, SHARED))
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("sweep", help="run the contamination benchmark")
    p.add_argument("--problem", help=f"one of {sorted(PROBLEMS)}")
    p.add_argument("--epsilons", help="comma-separated contamination rates in [0, 0.5)")
    p.add_argument("--reps", type=int, help="repetitions per rate (default 100)")
    p.add_argument("--n", type=int, help="sample size (default 200)")
    p.add_argument("--steps", type=int, help="gradient steps per fit (default 1000)")
    p.add_argument("--step-scale", dest="step_scale", type=float)
    p.add_argument("--float64", action="store_true", default=None,
                   help="batched kernel arithmetic in double precision")
    p.add_argument("--svg", action="store_true", default=None,
                   help="also write an RMSE-vs-rate line chart")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("theory", help="prior-mass reports for the Gaussian model")
    p.add_argument("--theta-star", dest="theta_star",
                   help="comma-separated coordinates of the target parameter")
    p.add_argument("--theta-star-norm", dest="theta_star_norm", type=float,
                   help="norm of the target parameter (with --dim)")
    p.add_argument("--dim", type=int)
    p.add_argument("--n", type=int, help="sample size (default 200)")
    p.add_argument("--sigma2", type=float, help="model variance (default 1)")
    p.add_argument("--gamma2", type=float, help="kernel bandwidth^2 (default: dim)")
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("verify", help="convergence and contamination-criterion checks")
    p.add_argument("--trials", type=int, help="datasets per sample size (default 1000)")
    p.set_defaults(func=cmd_verify)

    for p in sub.choices.values():
        p.add_argument("--config", help="flat JSON config file; flags override")
        p.add_argument("--seed", type=int, help=f"master seed (default {DEFAULT_SEED})")
        if p.prog.endswith("verify"):
            continue
        p.add_argument("--out", help="output directory (default: current)")
    if "sweep" in sub.choices:
        sub.choices["sweep"].add_argument(
            "--jobs", type=int, help="worker processes (default: available cores)"
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        opts = _merge(args)
        return args.func(opts)
    except csvio.CsvFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
