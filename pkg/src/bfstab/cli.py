"""Command-line interface: ``bfstab eig | gains | lift | simulate | verify``.

Exit codes: 0 pass, 1 property or acceptance failure, 2 configuration error,
3 divergence.
"""

import sys
import warnings
from pathlib import Path

import click
import numpy as np

from . import __version__, examples
from .closedloop import fit_decay_rate, monotone_tail, simulate
from .config import ExperimentConfig, load_config
from .errors import BfstabError, ConfigError, SpectrumError
from .gains import GainParameters, build_gains, choose_parameters, cluster_shifts
from .lifting import lifting_norm_scan, moment_relation_residual, solve_lifted_bvp
from .spectral import detect_multiplicity
from .verify import run_suites

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3


def build_problem(cfg: ExperimentConfig) -> examples.Problem:
    basis = cfg.basis
    if basis == "auto":
        basis = "analytic" if cfg.example == "heat_2d" else "numeric"
    if cfg.example == "heat_rod":
        return examples.heat_rod(cfg.lam_bar, cfg.n, cfg.length, cfg.rho, cfg.N, basis, cfg.trace_stencil)
    if cfg.example == "fhn":
        return examples.fhn(cfg.a, cfg.length, cfg.n, cfg.rho, cfg.N, basis, cfg.trace_stencil)
    return examples.heat_2d(cfg.mu, cfg.n, cfg.rho, cfg.N, cfg.include_k1_zero, basis)


def build_parameters(cfg: ExperimentConfig, problem: examples.Problem) -> GainParameters:
    basis = problem.basis
    if not cfg.gammas:
        return choose_parameters(basis, basis.rho, cfg.mode, cfg.margin, cfg.gamma1)
    N = basis.N
    if len(cfg.gammas) != N:
        raise ConfigError(f"gammas lists {len(cfg.gammas)} values but N={N}")
    if cfg.mode == "simple":
        return GainParameters(basis.rho, cfg.gammas)
    delta = 1.0 / cfg.gammas[0] ** 4
    shifts = cluster_shifts(detect_multiplicity(basis, N).clusters, N, delta)
    return GainParameters(basis.rho, cfg.gammas, delta, "perturbed", shifts)


def _load(config, seed, out, overrides) -> ExperimentConfig:
    cfg = load_config(config) if config else ExperimentConfig()
    extra = list(overrides)
    if seed is not None:
        extra.append(f"seed={seed}")
    if out is not None:
        extra.append(f"out={out}")
    return cfg.with_overrides(extra) if extra else cfg


def _common(func):
    func = click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE", help="Override a config key.")(func)
    func = click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")(func)
    func = click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="Random seed (u64).")(func)
    func = click.option("--config", type=click.Path(dir_okay=False), default=None, help="key = value config file.")(func)
    return func


def _run(body):
    """Map library errors to exit codes."""
    try:
        code = body()
    except (ConfigError, SpectrumError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except BfstabError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_FAIL)
    sys.exit(code or EXIT_OK)


def _fmt(x):
    return f"{x:.10g}"


@click.group()
@click.version_option(version=__version__)
def main():
    """Explicit finite-dimensional Dirichlet boundary feedback for parabolic PDEs."""


@main.command()
@_common
def eig(config, seed, out, overrides):
    """Print the eigenvalues, the unstable set and multiplicity clusters."""

    def body():
        cfg = _load(config, seed, out, overrides)
        prob = build_problem(cfg)
        b = prob.basis
        click.echo(f"example {cfg.example}  rho {_fmt(b.rho)}  computed {b.M} modes")
        for i, (lam, lab) in enumerate(zip(b.lambdas, b.labels)):
            flag = "unstable" if i < b.N else ""
            click.echo(f"{i + 1:4d}  {lam: .12g}  {lab!s:>8}  {flag}".rstrip())
        click.echo(f"N = {b.N}")
        if b.N == 0:
            click.echo("already stable: no eigenvalue below rho")
            return EXIT_OK
        rep = detect_multiplicity(b, b.N)
        if rep.simple_spectrum:
            click.echo("unstable spectrum is simple")
        for c in rep.repeated:
            click.echo("repeated eigenvalue cluster: " + " ".join(str(i + 1) for i in c))
        return EXIT_OK

    _run(body)


@main.command()
@_common
def gains(config, seed, out, overrides):
    """Build the gain matrices and write them as text files."""

    def body():
        cfg = _load(config, seed, out, overrides)
        prob = build_problem(cfg)
        params = build_parameters(cfg, prob)
        gs = build_gains(prob.basis, params, dps=cfg.dps)
        outdir = Path(cfg.out) / "gains"
        paths = gs.save(outdir)
        click.echo(f"N = {gs.N}  mode {params.mode}  delta {_fmt(params.delta)}")
        click.echo("gammas " + " ".join(_fmt(g) for g in params.gammas))
        click.echo(f"cond(sum B_k) = {gs.cond:.6e}")
        click.echo(f"min eig(sum B_k) = {gs.min_eig:.6e}")
        click.echo(f"|A sum B_k - I| = {gs.identity_residual:.3e}  (digits {gs.dps})")
        click.echo(f"wrote {len(paths)} matrices to {outdir}")
        return EXIT_OK

    _run(body)


@main.command()
@_common
def lift(config, seed, out, overrides):
    """Moment identity residuals and lifting norms over a gamma sweep (alpha = 1)."""

    def body():
        cfg = _load(config, seed, out, overrides)
        prob = build_problem(cfg)
        b, op = prob.basis, prob.op
        if b.N == 0:
            raise ConfigError("no unstable modes; nothing to lift")
        scan = lifting_norm_scan(1.0, cfg.lift_gammas, b, op)
        outdir = Path(cfg.out)
        outdir.mkdir(parents=True, exist_ok=True)
        lines = ["gamma,norm,max_moment_residual"]
        click.echo("gamma            ||D alpha||       max moment residual")
        for g, nrm in zip(scan.gammas, scan.norms):
            r = np.abs(moment_relation_residual(solve_lifted_bvp(1.0, g, b, op), b)).max()
            lines.append(f"{g:.17g},{nrm:.17g},{r:.17g}")
            click.echo(f"{g:<16.8g} {nrm:<17.8e} {r:.3e}")
        (outdir / "lift.csv").write_text("\n".join(lines) + "\n")
        click.echo(f"log-log slope {scan.slope:.4f}  monotone {scan.monotone}")
        return EXIT_OK

    _run(body)


@main.command("simulate")
@_common
def simulate_cmd(config, seed, out, overrides):
    """Run the closed (or open) loop, write trajectory.csv and report the decay fit."""

    def body():
        cfg = _load(config, seed, out, overrides)
        prob = build_problem(cfg)
        gs = None
        if cfg.control:
            gs = build_gains(prob.basis, build_parameters(cfg, prob), dps=cfg.dps)
        plant = prob.plant(gs, nonlinear=cfg.plant == "nonlinear")
        y0 = examples.initial_field(prob, cfg.initial, cfg.amplitude, cfg.seed)
        traj = simulate(plant, y0, cfg.T_end, cfg.dt, cfg.record_every)
        outdir = Path(cfg.out)
        outdir.mkdir(parents=True, exist_ok=True)
        traj.to_csv(outdir / "trajectory.csv")
        click.echo(f"samples {traj.times.size}  final t {_fmt(traj.times[-1])}  final norm {traj.norms[-1]:.6e}")
        if traj.diverged:
            click.echo(f"DIVERGED: norm grew by {traj.growth:.3e}")
            return EXIT_DIVERGED
        rep = fit_decay_rate(traj, cfg.window_fraction, floor=cfg.floor)
        passed = rep.mu_hat > cfg.target_mu
        click.echo(f"mu_hat {rep.mu_hat:.6g}  C_hat {rep.C_hat:.6g}  window [{_fmt(rep.window[0])}, {_fmt(rep.window[1])}]")
        click.echo(f"monotone tail {monotone_tail(traj)}")
        click.echo(f"{'PASS' if passed else 'FAIL'}: mu_hat vs target {_fmt(cfg.target_mu)}")
        return EXIT_OK if passed else EXIT_FAIL

    _run(body)


@main.command()
@_common
def verify(config, seed, out, overrides):
    """Run the randomized invariant suites."""

    def body():
        cfg = _load(config, seed, out, overrides)
        if cfg.draws == 0:
            click.echo("warning: zero draws requested; suites pass vacuously", err=True)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            results = run_suites(cfg.seed, cfg.draws, cfg.fault)
        ok = True
        for r in results:
            click.echo(f"{r.name:<14} draws {r.draws:<6d} failures {r.failures:<4d} {'pass' if r.passed else 'FAIL'}")
            for line in r.repro:
                click.echo(f"  repro: {line}")
            ok &= r.passed
        return EXIT_OK if ok else EXIT_FAIL

    _run(body)


if __name__ == "__main__":  # pragma: no cover
    main()
