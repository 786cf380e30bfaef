"""Command-line entry point: ``ppta simulate | analyze | balance | replay``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import logging
import os
import shlex
import sys
import warnings
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from . import rng as rngmod
from .balance import BalanceError, balance_report, ppta_balance
from .comparators import (
    EstimationError,
    bootstrap_interval,
    estimate,
    parse_method,
    weights_for,
)
from .data import ConfigError, DataError, Dataset, McmcConfig, PriorConfig, load_dataset, validate_config
from .design import DegenerateDesignError
from .outcome import DesignStageAbort, ppta_causal_posterior
from .propensity import SingularDesignError, fit_propensity_mle
from .simulation import SimConfig, run_study, summarize_study

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("ppta")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _name_list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _add_mcmc_flags(p: argparse.ArgumentParser) -> None:
    d = McmcConfig()
    g = p.add_argument_group("MCMC")
    g.add_argument("--m1", type=int, default=d.m1, help="design-stage chain length")
    g.add_argument("--burn1", type=int, default=d.burn1)
    g.add_argument("--m2", type=int, default=d.m2, help="analysis-stage chain length per design draw")
    g.add_argument("--burn2", type=int, default=d.burn2)
    g.add_argument("--target-accept", type=float, default=d.proposal_target_accept)
    g.add_argument("--max-subset-redraws", type=int, default=d.max_subset_redraws)
    pr = PriorConfig()
    g = p.add_argument_group("priors")
    g.add_argument("--gamma-prior-sd", type=float, default=pr.gamma_prior_sd)
    g.add_argument("--beta-prior-sd", type=float, default=pr.beta_prior_sd)
    g.add_argument("--sigma2-shape", type=float, default=pr.sigma2_shape)
    g.add_argument("--sigma2-rate", type=float, default=pr.sigma2_rate)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threads", type=int, default=None,
                   help="worker count (falls back to $PPTA_THREADS, then 1)")


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--treatment", required=True)
    p.add_argument("--outcome", required=True)
    p.add_argument("--covariates", required=True, type=_name_list, help="comma-separated names")
    p.add_argument("--standardize", action="store_true",
                   help="z-score covariates before fitting propensity models")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ppta", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ppta {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="run the simulation study")
    _add_common(sim)
    _add_mcmc_flags(sim)
    d = SimConfig()
    sim.add_argument("--b", type=_float_list, default=list(d.b_grid), help="confounding grid, e.g. 0,0.5,1")
    sim.add_argument("--reps", type=int, default=d.reps)
    sim.add_argument("--n", type=int, default=d.n)
    sim.add_argument("--p", type=int, default=d.p)
    sim.add_argument("--true-ate", type=float, default=d.true_ate)
    sim.add_argument("--methods", type=_name_list, default=list(d.methods))

    ana = sub.add_parser("analyze", help="estimate the effect on a CSV dataset")
    _add_common(ana)
    _add_data_flags(ana)
    _add_mcmc_flags(ana)
    ana.add_argument("--method", required=True,
                     help="ppta, iptw, iptw-trunc:<cap>, crump or overlap")
    ana.add_argument("--bootstrap-reps", type=int, default=1000)
    ana.add_argument("--emit-draws", action="store_true", help="write pooled beta1 draws (ppta)")

    bal = sub.add_parser("balance", help="covariate balance per method")
    _add_common(bal)
    _add_data_flags(bal)
    _add_mcmc_flags(bal)
    bal.add_argument("--methods", type=_name_list, default=["unweighted"],
                     help="comma-separated; the unweighted baseline is always included")

    rep = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    rep.add_argument("manifest")
    rep.add_argument("--out", required=True)
    return parser


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("PPTA_THREADS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        raise UsageError(f"PPTA_THREADS must be an integer, got {env!r}") from None


def _configs(args) -> tuple[McmcConfig, PriorConfig]:
    mcmc = McmcConfig(
        m1=args.m1, burn1=args.burn1, m2=args.m2, burn2=args.burn2, seed=args.seed,
        proposal_target_accept=args.target_accept, max_subset_redraws=args.max_subset_redraws,
    )
    prior = PriorConfig(args.gamma_prior_sd, args.beta_prior_sd, args.sigma2_shape, args.sigma2_rate)
    try:
        validate_config(mcmc, prior)
    except ConfigError as exc:
        raise UsageError("invalid configuration: " + "; ".join(exc.violations)) from None
    return mcmc, prior


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


def _prepare_out(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    return out


def _load(args) -> Dataset:
    data = load_dataset(args.data, args.treatment, args.outcome, args.covariates)
    return data.standardized() if args.standardize else data


def _fmt(x: float) -> str:
    return repr(float(x))


# --- simulate -----------------------------------------------------------------------------


def cmd_simulate(args) -> dict:
    mcmc, prior = _configs(args)
    cfg = SimConfig(
        n=args.n, p=args.p, b_grid=tuple(args.b), reps=args.reps, true_ate=args.true_ate,
        methods=tuple(args.methods), seed=args.seed, parallelism=_threads(args),
    )
    problems = cfg.violations()
    if problems:
        flagged = []
        for msg in problems:
            flag = {"b grid": "--b", "reps": "--reps", "n must": "--n", "p must": "--p"}
            name = next((f for k, f in flag.items() if msg.startswith(k)), "--methods")
            flagged.append(f"{name}: {msg}")
        raise UsageError("; ".join(flagged))
    out = _prepare_out(args.out)
    failures: list[str] = []
    rows = run_study(cfg, mcmc, prior, failures=failures)
    with (out / "results.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["b", "rep", "method", "estimate", "subset_or_ess"])
        for r in rows:
            w.writerow([_fmt(r.b), r.rep, r.method, _fmt(r.estimate), _fmt(r.subset_or_ess)])
    with (out / "timings.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["b", "rep", "method", "runtime_ms"])
        for r in rows:
            w.writerow([_fmt(r.b), r.rep, r.method, f"{r.runtime_ms:.3f}"])
    summary = {
        "schema_version": SCHEMA_VERSION,
        "true_ate": cfg.true_ate,
        "groups": [g.to_dict() for g in summarize_study(rows, cfg.true_ate)] if rows else [],
        "failures": failures,
    }
    _write_json(out / "summary.json", summary)
    return {
        "config": {"simulation": asdict(cfg), "mcmc": asdict(mcmc), "prior": asdict(prior)},
        "warnings": failures,
        "outputs": ["results.csv", "timings.csv", "summary.json"],
    }


# --- analyze ------------------------------------------------------------------------------


def _ppta_run(data: Dataset, mcmc, prior, threads):
    return ppta_causal_posterior(data, mcmc, prior, threads=threads)


def cmd_analyze(args) -> dict:
    mcmc, prior = _configs(args)
    try:
        method = parse_method(args.method)
    except ValueError as exc:
        raise UsageError(f"--method: {exc}") from None
    if method.name != "ppta" and args.bootstrap_reps < 100:
        raise UsageError("--bootstrap-reps must be at least 100")
    data = _load(args)
    out = _prepare_out(args.out)
    threads = _threads(args)
    unweighted = balance_report(data)
    report = {
        "schema_version": SCHEMA_VERSION,
        "method": method.cli_label,
        "n": data.n,
        "truncation_cap": method.cap,
        "unweighted_balance": unweighted.to_dict(),
    }
    outputs = ["estimate.json"]
    warn: list[str] = []
    if method.name == "ppta":
        post = _ppta_run(data, mcmc, prior, threads)
        bal = ppta_balance(data, post.designs)
        report.update(
            point=post.posterior_mean,
            ci95=list(post.ci95),
            interval="posterior (2.5%, 97.5%) quantiles",
            posterior_sd=post.posterior_sd,
            mean_subset_size=post.mean_subset_size,
            balance=bal.to_dict(),
            diagnostics={
                "skipped_gamma_draws": post.skipped_gamma_draws,
                "retained_gamma_draws": len(post.designs),
                "pooled_draws": int(post.beta1_pooled.size),
                "propensity_acceptance_rate": post.propensity.acceptance_rate,
                "total_subset_redraws": int(sum(d.redraws_used for d in post.designs)),
            },
        )
        if args.emit_draws:
            with (out / "draws.csv").open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["gamma_index", "beta1"])
                for chunk in post.chunks:
                    for v in chunk.beta1_draws:
                        w.writerow([chunk.design_index, _fmt(v)])
            outputs.append("draws.csv")
    else:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            mle = fit_propensity_mle(data)
        warn += [str(c.message) for c in caught]
        point, w = estimate(data, method, mle.scores)
        lo, hi = bootstrap_interval(
            data, method, args.bootstrap_reps, rngmod.stream(args.seed, rngmod.BOOTSTRAP)
        )
        bal = balance_report(data, weights=w.weights, method=method.cli_label)
        report.update(
            point=point,
            ci95=[lo, hi],
            interval=f"nonparametric bootstrap percentile ({args.bootstrap_reps} replicates)",
            effective_sample_size=w.effective_sample_size(),
            balance=bal.to_dict(),
            diagnostics={"mle_converged": mle.converged, "mle_iterations": mle.iterations,
                         "n_kept": int(np.count_nonzero(w.weights))},
        )
    _write_json(out / "estimate.json", report)
    return {
        "config": {"method": method.cli_label, "mcmc": asdict(mcmc), "prior": asdict(prior),
                   "data": args.data, "treatment": args.treatment, "outcome": args.outcome,
                   "covariates": args.covariates, "standardize": args.standardize,
                   "bootstrap_reps": args.bootstrap_reps, "emit_draws": args.emit_draws},
        "warnings": warn,
        "outputs": outputs,
    }


# --- balance ------------------------------------------------------------------------------


def cmd_balance(args) -> dict:
    mcmc, prior = _configs(args)
    requested = [m for m in args.methods if m.lower() != "unweighted"]
    try:
        methods = [parse_method(m) for m in requested]
    except ValueError as exc:
        raise UsageError(f"--methods: {exc}") from None
    data = _load(args)
    out = _prepare_out(args.out)
    reports = [balance_report(data).to_dict()]
    warn: list[str] = []
    mle = None
    for method in methods:
        if method.name == "ppta":
            post = _ppta_run(data, mcmc, prior, _threads(args))
            reports.append(ppta_balance(data, post.designs).to_dict())
            continue
        if mle is None:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                mle = fit_propensity_mle(data)
            warn += [str(c.message) for c in caught]
        w = weights_for(method, mle.scores, data.treatment)
        reports.append(balance_report(data, weights=w.weights, method=method.cli_label).to_dict())
    _write_json(out / "balance.json", {"schema_version": SCHEMA_VERSION, "reports": reports})
    return {
        "config": {"methods": [m.cli_label for m in methods], "mcmc": asdict(mcmc),
                   "prior": asdict(prior), "data": args.data, "treatment": args.treatment,
                   "outcome": args.outcome, "covariates": args.covariates,
                   "standardize": args.standardize},
        "warnings": warn,
        "outputs": ["balance.json"],
    }


COMMANDS = {"simulate": cmd_simulate, "analyze": cmd_analyze, "balance": cmd_balance}


def _replay_argv(manifest_path: str, out: str) -> list[str]:
    manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    argv = list(manifest["argv"])
    if "--out" in argv:
        argv[argv.index("--out") + 1] = out
    else:
        argv += ["--out", out]
    return argv


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        if args.command == "replay":
            return main(_replay_argv(args.manifest, args.out))
        started = dt.datetime.now(dt.timezone.utc).isoformat()
        info = COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ConfigError, SingularDesignError) as exc:
        print(f"ppta: input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DesignStageAbort, DegenerateDesignError, EstimationError, BalanceError, OSError,
            RuntimeError, ValueError) as exc:
        print(f"ppta: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "command_line": "ppta " + shlex.join(argv),
        "argv": argv,
        "command": args.command,
        "resolved_config": info["config"],
        "seed": args.seed,
        "version": __version__,
        "started": started,
        "finished": dt.datetime.now(dt.timezone.utc).isoformat(),
        "warnings": info["warnings"],
        "outputs": info["outputs"],
    }
    try:
        _write_json(Path(args.out) / "manifest.json", manifest)
    except OSError as exc:
        print(f"ppta: cannot write manifest: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
