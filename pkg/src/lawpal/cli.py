"""Command-line interface: simulation, filtering, likelihoods, and fits.

Every command is driven by a JSON config (see config.py) plus optional
overrides; every command honors --seed, and outputs are deterministic for a
given seed (a timestamped comment line at the top of each CSV is the only
run-to-run difference). Exit codes: 0 success, 1 validation failure,
2 numerical failure (vanished likelihood at an initial point, particle
degeneracy).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .bpf import ParticleDegeneracyError, run_bpf
from .config import (
    ConfigError,
    ExecutionConfig,
    IncidenceSeries,
    RunConfig,
    bind_parameters,
    load_config,
    load_series,
)
from .estimators import coordinate_ascent, log_prior, rwm_chain
from .filters import FilterOutput, run_lawpal, run_pal
from .model import limit_recursion
from .observation import FixedReporting, TruncNormalReporting
from .randkit import child_rng, rng_from_seed
from .simulate import simulate

logger = logging.getLogger(__name__)

PMMH_STREAM_BASE = 1_000_000


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _write_csv(path: Path, command: str, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        stamp = datetime.now(timezone.utc).isoformat()
        fh.write(f"# lawpal {command} written {stamp}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    exec_cfg = cfg.execution
    updates = {}
    for name in ("seed", "replicates", "threads", "particles", "iters", "burnin", "thin"):
        value = getattr(args, name.replace("-", "_"), None)
        if value is not None:
            updates[name] = value
    if updates:
        exec_cfg = ExecutionConfig(
            **{**exec_cfg.__dict__, **updates}
        )
    return RunConfig(
        model=cfg.model,
        observation=cfg.observation,
        estimation=cfg.estimation,
        execution=exec_cfg,
    )


def _get_series(cfg: RunConfig, args: argparse.Namespace) -> IncidenceSeries:
    """Load --data when given, otherwise simulate from the config truth."""
    if args.data is not None:
        return load_series(args.data)
    T = cfg.execution.T
    if T is None:
        raise ConfigError("no --data given and execution.T not set; nothing to filter")
    spec = cfg.model.build_spec()
    rng = child_rng(cfg.execution.seed, 0)
    traj = simulate(spec, cfg.observation, T, rng)
    logger.info("no --data; simulated %d steps from the config model", T)
    return IncidenceSeries(t=np.arange(1, T + 1), y=traj.y)


def _run_filter(cfg: RunConfig, y: np.ndarray) -> FilterOutput:
    spec = cfg.model.build_spec()
    if isinstance(cfg.observation, TruncNormalReporting):
        return run_lawpal(spec, cfg.observation, y)
    return run_pal(spec, cfg.observation, y)


def _filter_rows(cfg: RunConfig, out: FilterOutput):
    ei, ej = cfg.model.obs_edge
    for t, step in enumerate(out.steps, start=1):
        yield [
            t,
            step.Lambda_pred[ei - 1, ej - 1],
            step.q_bar,
            step.s2,
            step.ll_inc,
            *step.lambda_filt,
        ]


def _filter_header(m: int) -> list[str]:
    return ["t", "Lambda_ij_pred", "q_bar", "s2", "ll_inc"] + [
        f"lambda_filt_{k}" for k in range(1, m + 1)
    ]


def cmd_simulate(cfg: RunConfig, args: argparse.Namespace) -> int:
    T = cfg.execution.T
    if T is None:
        raise ConfigError("simulate needs execution.T")
    spec = cfg.model.build_spec()
    rng = rng_from_seed(cfg.execution.seed)
    traj = simulate(spec, cfg.observation, T, rng)
    out = Path(args.out)
    ei, ej = spec.edge_idx
    _write_csv(
        out / "series.csv",
        "simulate",
        ["t", "y"],
        ([t, traj.y[t - 1]] for t in range(1, T + 1)),
    )
    _write_csv(
        out / "trajectory.csv",
        "simulate",
        ["t", "y", "q", "z_edge"] + [f"x_{k}" for k in range(1, spec.m + 1)],
        (
            [t, traj.y[t - 1], traj.q[t - 1], traj.Z[t - 1, ei, ej], *traj.x[t]]
            for t in range(1, T + 1)
        ),
    )
    print(f"wrote {out / 'series.csv'} and {out / 'trajectory.csv'} (T={T})")
    return 0


def cmd_filter(cfg: RunConfig, args: argparse.Namespace) -> int:
    series = _get_series(cfg, args)
    out = _run_filter(cfg, series.y)
    path = Path(args.out) / "filter.csv"
    _write_csv(path, "filter", _filter_header(len(cfg.model.pi0)), _filter_rows(cfg, out))
    print(f"total_ll={_fmt(out.total_ll)} flagged_steps={out.flagged_steps}")
    return 0


def cmd_loglik(cfg: RunConfig, args: argparse.Namespace) -> int:
    series = _get_series(cfg, args)
    out = _run_filter(cfg, series.y)
    outdir = Path(args.out)
    _write_csv(
        outdir / "filter.csv",
        "loglik",
        _filter_header(len(cfg.model.pi0)),
        _filter_rows(cfg, out),
    )
    _write_json(
        outdir / "loglik.json",
        {
            "total_ll": out.total_ll,
            "T": series.T,
            "flagged_steps": out.flagged_steps,
        },
    )
    print(_fmt(out.total_ll))
    return 0


def cmd_pf_loglik(cfg: RunConfig, args: argparse.Namespace) -> int:
    series = _get_series(cfg, args)
    spec = cfg.model.build_spec()
    rng = child_rng(cfg.execution.seed, 2)
    start = time.perf_counter()
    out = run_bpf(spec, cfg.observation, series.y, cfg.execution.particles, rng)
    elapsed = time.perf_counter() - start
    outdir = Path(args.out)
    _write_csv(
        outdir / "ess_trace.csv",
        "pf-loglik",
        ["t", "ess", "log_normalizer"],
        (
            [t, out.ess_trace[t - 1], out.step_log_normalizers[t - 1]]
            for t in range(1, series.T + 1)
        ),
    )
    _write_json(
        outdir / "pf_loglik.json",
        {
            "log_likelihood": out.log_likelihood,
            "particles": cfg.execution.particles,
            "wall_seconds": elapsed,
        },
    )
    print(f"{_fmt(out.log_likelihood)} ({elapsed:.3f}s, N={cfg.execution.particles})")
    return 0


def _mle_objective(cfg: RunConfig, y: np.ndarray, names: list[str]):
    def objective(theta: np.ndarray) -> float:
        try:
            spec, obs = bind_parameters(cfg.model, cfg.observation, dict(zip(names, theta)))
        except (ConfigError, ValueError):
            return -math.inf
        if isinstance(obs, TruncNormalReporting):
            return run_lawpal(spec, obs, y).total_ll
        return run_pal(spec, obs, y).total_ll

    return objective


def _fit_mle_replicate(cfg: RunConfig, replicate: int) -> dict:
    """Simulate one dataset at the config truth and fit the free parameters."""
    spec = cfg.model.build_spec()
    T = cfg.execution.T
    rng = child_rng(cfg.execution.seed, replicate)
    traj = simulate(spec, cfg.observation, T, rng)
    space = cfg.estimation.space
    theta, value = coordinate_ascent(_mle_objective(cfg, traj.y, space.names), space)
    return {"replicate": replicate, "loglik": value, **space.to_dict(theta)}


def cmd_fit_mle(cfg: RunConfig, args: argparse.Namespace) -> int:
    if cfg.estimation is None:
        raise ConfigError("fit-mle needs an estimation block")
    space = cfg.estimation.space
    outdir = Path(args.out)

    if args.data is not None:
        series = load_series(args.data)
        theta, value = coordinate_ascent(_mle_objective(cfg, series.y, space.names), space)
        results = [{"replicate": 0, "loglik": value, **space.to_dict(theta)}]
    else:
        if cfg.execution.T is None:
            raise ConfigError("fit-mle without --data needs execution.T")
        reps = range(cfg.execution.replicates)
        if cfg.execution.threads > 1:
            with ProcessPoolExecutor(max_workers=cfg.execution.threads) as pool:
                results = list(pool.map(_fit_mle_replicate, [cfg] * len(reps), reps))
        else:
            results = [_fit_mle_replicate(cfg, r) for r in reps]

    header = ["replicate", "loglik"] + space.names
    _write_csv(
        outdir / "mle_replicates.csv",
        "fit-mle",
        header,
        ([r[k] for k in header] for r in results),
    )
    estimates = np.array([[r[name] for name in space.names] for r in results])
    summary = {
        "replicates": len(results),
        "parameters": {
            name: {
                "mean": float(estimates[:, k].mean()),
                "sd": float(estimates[:, k].std(ddof=1)) if len(results) > 1 else 0.0,
            }
            for k, name in enumerate(space.names)
        },
    }
    _write_json(outdir / "mle_summary.json", summary)
    for name, stats in summary["parameters"].items():
        print(f"{name}: mean={stats['mean']:.6g} sd={stats['sd']:.6g}")
    return 0


def _posterior(cfg: RunConfig, y: np.ndarray, loglik_fn):
    names = cfg.estimation.space.names
    priors = cfg.estimation.priors

    def log_post(theta: np.ndarray) -> float:
        total = 0.0
        for name, v in zip(names, theta):
            if name in priors:
                total += log_prior(priors[name], float(v))
        if total == -math.inf:
            return -math.inf
        try:
            spec, obs = bind_parameters(cfg.model, cfg.observation, dict(zip(names, theta)))
        except (ConfigError, ValueError):
            return -math.inf
        return total + loglik_fn(spec, obs, y)

    return log_post


def _filter_loglik(spec, obs, y) -> float:
    if isinstance(obs, TruncNormalReporting):
        return run_lawpal(spec, obs, y).total_ll
    return run_pal(spec, obs, y).total_ll


class _PfLoglik:
    """Particle-filter likelihood with a fresh child stream per evaluation."""

    def __init__(self, particles: int, seed: int):
        self.particles = particles
        self.seed = seed
        self.calls = 0
        self.last_degeneracy_step: int | None = None

    def __call__(self, spec, obs, y) -> float:
        self.calls += 1
        rng = child_rng(self.seed, PMMH_STREAM_BASE + self.calls)
        try:
            return run_bpf(spec, obs, y, self.particles, rng).log_likelihood
        except ParticleDegeneracyError as e:
            self.last_degeneracy_step = e.step
            return -math.inf


def _run_mh(cfg: RunConfig, args: argparse.Namespace, loglik_fn, command: str) -> int:
    if cfg.estimation is None:
        raise ConfigError(f"{command} needs an estimation block")
    series = _get_series(cfg, args)
    space = cfg.estimation.space
    log_post = _posterior(cfg, series.y, loglik_fn)
    rng = child_rng(cfg.execution.seed, 1)
    chain = rwm_chain(
        log_post,
        space,
        burn_iters=cfg.execution.burnin,
        burn_step_var=cfg.execution.burn_step_var,
        main_iters=cfg.execution.iters,
        rng=rng,
        thin=cfg.execution.thin,
    )
    outdir = Path(args.out)
    _write_csv(
        outdir / "chain.csv",
        command,
        ["iter", "log_post"] + space.names,
        (
            [k + 1, chain.log_post[k], *chain.samples[k]]
            for k in range(len(chain.samples))
        ),
    )
    summary = {
        "acceptance_rate": chain.acceptance_rate,
        "iters": cfg.execution.iters,
        "burnin": cfg.execution.burnin,
        "thin": cfg.execution.thin,
        "parameters": {
            name: {
                "mean": float(chain.samples[:, k].mean()),
                "sd": float(chain.samples[:, k].std(ddof=1)),
            }
            for k, name in enumerate(space.names)
        },
    }
    _write_json(outdir / "fit_summary.json", summary)
    print(f"acceptance_rate={chain.acceptance_rate:.3f}")
    for name, stats in summary["parameters"].items():
        print(f"{name}: mean={stats['mean']:.6g} sd={stats['sd']:.6g}")
    return 0


def cmd_fit_mh(cfg: RunConfig, args: argparse.Namespace) -> int:
    return _run_mh(cfg, args, _filter_loglik, "fit-mh")


def cmd_fit_pmmh(cfg: RunConfig, args: argparse.Namespace) -> int:
    lik = _PfLoglik(cfg.execution.particles, cfg.execution.seed)
    try:
        return _run_mh(cfg, args, lik, "fit-pmmh")
    except ValueError as e:
        if lik.last_degeneracy_step is not None:
            raise NumericalFailure(
                f"particle degeneracy at step {lik.last_degeneracy_step} "
                f"while evaluating the initial point"
            ) from e
        raise


def cmd_limit(cfg: RunConfig, args: argparse.Namespace) -> int:
    T = cfg.execution.T
    if T is None:
        raise ConfigError("limit needs execution.T")
    spec = cfg.model.build_spec()
    states = limit_recursion(spec, T)
    m = spec.m
    header = (
        ["t"]
        + [f"nu_{k}" for k in range(1, m + 1)]
        + [f"N_{i}_{j}" for i in range(1, m + 1) for j in range(1, m + 1)]
    )
    _write_csv(
        Path(args.out) / "limit.csv",
        "limit",
        header,
        ([t, *states[t - 1].nu, *states[t - 1].N.ravel()] for t in range(1, T + 1)),
    )
    print(f"wrote {Path(args.out) / 'limit.csv'} (T={T})")
    return 0


def cmd_bench(cfg: RunConfig, args: argparse.Namespace) -> int:
    series = _get_series(cfg, args)
    spec = cfg.model.build_spec()
    if not isinstance(cfg.observation, TruncNormalReporting):
        raise ConfigError("bench compares the over-dispersed filter; use trunc_normal")

    start = time.perf_counter()
    filter_out = run_lawpal(spec, cfg.observation, series.y)
    lawpal_seconds = time.perf_counter() - start

    rng = child_rng(cfg.execution.seed, 2)
    start = time.perf_counter()
    pf_out = run_bpf(spec, cfg.observation, series.y, cfg.execution.particles, rng)
    bpf_seconds = time.perf_counter() - start

    ratio = bpf_seconds / lawpal_seconds if lawpal_seconds > 0 else math.inf
    payload = {
        "lawpal_seconds": lawpal_seconds,
        "bpf_seconds": bpf_seconds,
        "speedup_ratio": ratio,
        "lawpal_total_ll": filter_out.total_ll,
        "bpf_log_likelihood": pf_out.log_likelihood,
        "particles": cfg.execution.particles,
    }
    _write_json(Path(args.out) / "bench.json", payload)
    print(
        f"lawpal={lawpal_seconds:.4f}s bpf={bpf_seconds:.4f}s "
        f"speedup={ratio:.1f}x (N={cfg.execution.particles})"
    )
    return 0


class NumericalFailure(RuntimeError):
    pass


COMMANDS = {
    "simulate": cmd_simulate,
    "filter": cmd_filter,
    "loglik": cmd_loglik,
    "pf-loglik": cmd_pf_loglik,
    "fit-mle": cmd_fit_mle,
    "fit-mh": cmd_fit_mh,
    "fit-pmmh": cmd_fit_pmmh,
    "limit": cmd_limit,
    "bench": cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lawpal",
        description="Filters, likelihoods, and fits for partially observed "
        "stochastic compartmental models with over-dispersed reporting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--data", default=None, help="incidence CSV with header t,y")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--particles", type=int, default=None)
        p.add_argument("--iters", type=int, default=None)
        p.add_argument("--burnin", type=int, default=None)
        p.add_argument("--thin", type=int, default=None)
        p.add_argument("--replicates", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("LAWPAL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        Path(args.out).mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ParticleDegeneracyError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 2
    except NumericalFailure as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        if "not finite at the initial point" in str(e):
            print(f"numerical failure: {e}", file=sys.stderr)
            return 2
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
