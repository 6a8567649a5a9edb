"""Command line entry points: simulate, fit, validate, export-plots.

One INI-style configuration file drives everything; the only environment
knob is AGGNET_VERBOSITY (0 silences progress messages).  Exit codes are
documented in the README: 0 success, 1 a validation check failed, 2 usage,
3 configuration problems, 4 unreadable or unwritable files, 5 inconsistent
inputs.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _backend, fileio, moments, simulate
from .inference import (SamplerConfig, align_posterior, degeneracy_contour,
                        fit, summarize)
from .kernel import ClusterPair, KernelParams, kernel_moments
from .likelihood import AggregateMatrix, aggregate_entry_log_pmf
from .model import (ParamLayout, PriorConfig, log_jacobian_eta, pack,
                    sigma_from_eta, to_natural, to_unconstrained, unpack)
from .moments import GroupConfig, NetworkKind
from .simulate import (aggregate, enumerate_second_moment, mc_kernel_moments,
                       mc_moments, quadrature_gaussian_exp, simulate_network)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_DATA = 5


class ConfigError(Exception):
    """The configuration file is missing, unparseable, or incomplete."""


def _log(message: str) -> None:
    if os.environ.get("AGGNET_VERBOSITY", "1") != "0":
        print(message, file=sys.stderr)


@dataclass
class RunConfig:
    """Everything a run needs, parsed from one INI file."""

    q: int = 2
    kind: NetworkKind = NetworkKind()
    prior: PriorConfig = PriorConfig()
    sampler: SamplerConfig = SamplerConfig()
    truth: GroupConfig = None
    theta: float = None
    sim_seed: int = 0
    aggregate_path: Path = None
    sizes_path: Path = None
    output_dir: Path = None
    validate_options: dict = field(default_factory=dict)


def _parse_group_line(raw: str, q: int, key: str):
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != q + 2:
        raise ConfigError(
            f"{key} must read 'size, {q} centre coordinates, scale', "
            f"got {len(parts)} fields")
    try:
        size = int(parts[0])
        centre = [float(v) for v in parts[1:-1]]
        scale = float(parts[-1])
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    return size, centre, scale


def load_run_config(path) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"configuration file not found: {path}")
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None

    cfg = RunConfig()
    try:
        if parser.has_section("model"):
            sec = parser["model"]
            cfg.q = sec.getint("q", cfg.q)
            cfg.kind = NetworkKind(
                directed=sec.getboolean("directed", True),
                weighted=sec.getboolean("weighted", False))
            cfg.prior = PriorConfig(
                cauchy_scale_sigma=sec.getfloat("cauchy_scale_sigma", 1.0),
                cauchy_scale_tau=sec.getfloat("cauchy_scale_tau", 1.0))
        if parser.has_section("sampler"):
            sec = parser["sampler"]
            cfg.sampler = SamplerConfig(
                n_chains=sec.getint("chains", 10),
                n_warmup=sec.getint("warmup", 2000),
                n_samples=sec.getint("samples", 2000),
                seed=sec.getint("seed", 0),
                adapt_target=sec.getfloat("adapt_target", 0.3),
                n_jobs=sec.getint("jobs", 1))
        if parser.has_section("simulate"):
            sec = parser["simulate"]
            cfg.sim_seed = sec.getint("seed", 0)
            cfg.theta = sec.getfloat("theta", None)
            groups = {}
            for key, raw in sec.items():
                if not key.startswith("group"):
                    continue
                try:
                    idx = int(key[len("group"):])
                except ValueError:
                    raise ConfigError(
                        f"group keys look like group0, group1, ...; got {key}"
                    ) from None
                groups[idx] = _parse_group_line(raw, cfg.q, key)
            if groups:
                if sorted(groups) != list(range(len(groups))):
                    raise ConfigError("group indices must be 0..r-1")
                sizes = [groups[i][0] for i in range(len(groups))]
                centres = [groups[i][1] for i in range(len(groups))]
                scales = [groups[i][2] for i in range(len(groups))]
                cfg.truth = GroupConfig(sizes=np.asarray(sizes),
                                        centres=np.asarray(centres),
                                        scales=np.asarray(scales))
        if parser.has_section("data"):
            sec = parser["data"]
            if sec.get("aggregate", None):
                cfg.aggregate_path = Path(sec.get("aggregate"))
            if sec.get("sizes", None):
                cfg.sizes_path = Path(sec.get("sizes"))
            for p in (cfg.aggregate_path, cfg.sizes_path):
                if p is not None and not p.is_file():
                    raise ConfigError(f"referenced data file not found: {p}")
        if parser.has_section("output"):
            raw = parser["output"].get("directory", None)
            if raw:
                cfg.output_dir = Path(raw)
        if parser.has_section("validate"):
            sec = parser["validate"]
            for key in ("seed", "mc_points", "mc_draws", "entry_sims",
                        "tv_sims"):
                if sec.get(key, None) is not None:
                    cfg.validate_options[key] = sec.getint(key)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return cfg


def _outdir(args, cfg: RunConfig) -> Path:
    out = args.out or cfg.output_dir
    if out is None:
        raise ConfigError("no output directory: pass --out or set "
                          "[output] directory")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = load_run_config(args.config)
    if cfg.truth is None or cfg.theta is None:
        raise ConfigError("simulate needs a [simulate] section with theta "
                          "and group lines")
    out = _outdir(args, cfg)
    seed = args.seed if args.seed is not None else cfg.sim_seed
    params = KernelParams(theta=cfg.theta, q=cfg.q)
    net = simulate_network(cfg.truth, params, cfg.kind, seed)
    data = aggregate(net)
    fileio.write_edge_list(out / "edges.txt", net)
    fileio.write_labels(out / "labels.csv", net.labels)
    fileio.write_sizes(out / "sizes.csv", data.sizes)
    fileio.write_aggregate(out / "aggregate.csv", data.counts)
    fileio.write_ground_truth(out / "truth.json", cfg.truth, cfg.theta,
                              cfg.kind, seed)
    _log(f"simulated {net.n_nodes} nodes, "
         f"{int(np.sum(net.adjacency) // (1 if cfg.kind.directed else 2))} "
         f"edges -> {out}")
    return EXIT_OK


def _load_data(cfg: RunConfig) -> AggregateMatrix:
    if cfg.aggregate_path is None or cfg.sizes_path is None:
        raise ConfigError("fit needs [data] aggregate and sizes paths")
    counts = fileio.read_aggregate(cfg.aggregate_path)
    sizes = fileio.read_sizes(cfg.sizes_path)
    if counts.shape[0] != sizes.shape[0]:
        raise ValueError(
            f"aggregate table has {counts.shape[0]} groups but sizes file "
            f"has {sizes.shape[0]}")
    return AggregateMatrix(counts=counts, sizes=sizes, kind=cfg.kind)


def _edge_density(data: AggregateMatrix) -> float:
    if data.kind.directed:
        y = data.counts
        t = data.trials
    else:
        iu = np.triu_indices(data.r)
        y = data.counts[iu]
        t = data.trials[iu]
    total = int(np.sum(t))
    return float(np.sum(y)) / total if total else 0.0


def cmd_fit(args) -> int:
    cfg = load_run_config(args.config)
    data = _load_data(cfg)
    out = _outdir(args, cfg)
    sampler = cfg.sampler
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.chains is not None:
        overrides["n_chains"] = args.chains
    if overrides:
        sampler = SamplerConfig(
            n_chains=overrides.get("n_chains", sampler.n_chains),
            n_warmup=sampler.n_warmup, n_samples=sampler.n_samples,
            seed=overrides.get("seed", sampler.seed),
            adapt_target=sampler.adapt_target,
            initial_step_scales=sampler.initial_step_scales,
            n_jobs=sampler.n_jobs)
    _log(f"fitting r={data.r} groups, q={cfg.q}, "
         f"{sampler.n_chains} chains ({_backend.active_backend()} backend)")
    result = fit(data, cfg.q, sampler, cfg.prior)
    for i, chain in enumerate(result.chains):
        fileio.write_chain_draws(out / f"draws_chain{i:02d}.csv", chain, i)
    aligned = align_posterior(result.best)
    fileio.write_aligned_draws(out / "aligned_draws.csv", aligned)
    summary = summarize(aligned)
    fileio.write_summary(out / "summary.csv", summary)
    fileio.write_circles(out / "circles.csv", summary)
    info = {
        "selected_chain": result.best_index,
        "median_log_densities": [float(v)
                                 for v in result.median_log_densities],
        "density_gap": result.density_gap,
        "acceptance_rates": [c.acceptance_rate for c in result.chains],
        "edge_density": _edge_density(data),
        "r": data.r, "q": cfg.q,
        "directed": cfg.kind.directed, "weighted": cfg.kind.weighted,
        "n_chains": sampler.n_chains, "n_warmup": sampler.n_warmup,
        "n_samples": sampler.n_samples, "seed": sampler.seed,
        "backend": _backend.active_backend(),
    }
    (out / "fit.json").write_text(
        json.dumps(info, indent=2, sort_keys=True) + "\n")
    gap = ("n/a" if result.density_gap is None
           else f"{result.density_gap:.2f}")
    _log(f"selected chain {result.best_index} "
         f"(median log density {result.best.median_log_density:.2f}, "
         f"gap {gap}) -> {out}")
    return EXIT_OK


def cmd_export_plots(args) -> int:
    cfg = load_run_config(args.config)
    if cfg.output_dir is None:
        raise ConfigError("export-plots reads the fit from [output] "
                          "directory; set it in the configuration")
    fit_dir = Path(cfg.output_dir)
    info_path = fit_dir / "fit.json"
    if not info_path.is_file():
        raise OSError(f"no fit artifacts found at {fit_dir} (missing fit.json)")
    info = json.loads(info_path.read_text())
    logd, values, names = fileio.read_aligned_draws(
        fit_dir / "aligned_draws.csv")
    out = Path(args.out) if args.out else fit_dir / "plots"
    out.mkdir(parents=True, exist_ok=True)
    r, q = info["r"], info["q"]
    n = values.shape[0]
    mu_cols = list(range(r * q))
    sigma_cols = list(range(r * q, r * q + r))
    tau_col, theta_col = r * q + r, r * q + r + 1

    lines = ["draw," + ",".join(names[c] for c in mu_cols)]
    for i in range(n):
        lines.append(",".join([str(i)] + [repr(float(values[i, c]))
                                          for c in mu_cols]))
    (out / "centre_draws.csv").write_text(
        "".join(line + "\n" for line in lines))

    lines = ["draw,theta"]
    lines += [f"{i},{float(values[i, theta_col])!r}" for i in range(n)]
    (out / "theta_draws.csv").write_text(
        "".join(line + "\n" for line in lines))

    truth_sigma = None
    if cfg.aggregate_path is not None:
        truth_path = cfg.aggregate_path.parent / "truth.json"
        if truth_path.is_file():
            truth_config, _, _, _ = fileio.read_ground_truth(truth_path)
            if truth_config.r == r:
                truth_sigma = truth_config.scales
    header = "group,mean,median,lower_2_5,upper_97_5"
    if truth_sigma is not None:
        header += ",truth"
    lines = [header]
    for g in range(r):
        col = values[:, sigma_cols[g]]
        cells = [str(g), repr(float(col.mean())),
                 repr(float(np.median(col))),
                 repr(float(np.percentile(col, 2.5))),
                 repr(float(np.percentile(col, 97.5)))]
        if truth_sigma is not None:
            cells.append(repr(float(truth_sigma[g])))
        lines.append(",".join(cells))
    (out / "sigma_intervals.csv").write_text(
        "".join(line + "\n" for line in lines))

    lines = ["draw,theta,tau"]
    lines += [f"{i},{float(values[i, theta_col])!r},{float(values[i, tau_col])!r}"
              for i in range(n)]
    (out / "theta_tau_draws.csv").write_text(
        "".join(line + "\n" for line in lines))

    density = info["edge_density"]
    lines = ["theta,tau"]
    if 0.0 < density < 1.0:
        contour = degeneracy_contour(density, q, np.linspace(0.0, 1.0, 201))
        lines += [f"{float(th)!r},{float(ta)!r}" for th, ta in contour]
    (out / "contour.csv").write_text("".join(line + "\n" for line in lines))
    _log(f"exported plotting tables for {n} draws -> {out}")
    return EXIT_OK


@dataclass
class ValidationReport:
    """Outcome of the self-check battery: (name, passed, detail) rows."""

    checks: list

    @property
    def all_passed(self) -> bool:
        return all(ok for _, ok, _ in self.checks)

    def lines(self):
        out = []
        for name, ok, detail in self.checks:
            out.append(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        out.append(f"{'OK' if self.all_passed else 'FAILED'} "
                   f"({sum(ok for _, ok, _ in self.checks)}"
                   f"/{len(self.checks)} checks passed)")
        return out


def run_validation(seed: int = 20240817, mc_points: int = 6,
                   mc_draws: int = 200_000, entry_sims: int = 30_000,
                   tv_sims: int = 100_000) -> ValidationReport:
    """Analytic results against their simulation and enumeration oracles.

    Every check goes through the public module attributes so tests can
    inject faults (e.g. a wrong coefficient table) and watch it fail.
    """
    checks = []
    rng = np.random.default_rng(seed)

    worst = 0.0
    for mu in (-3.0, -0.7, 0.0, 1.3, 4.0):
        for var in (0.0, 0.4, 2.0, 9.0):
            a = float(np.exp(-0.5 * np.log1p(var)
                             - mu * mu / (2.0 * (1.0 + var))))
            b = quadrature_gaussian_exp(mu, var)
            worst = max(worst, abs(a - b) / max(abs(b), 1e-300))
    checks.append(("gaussian-identity-quadrature", worst < 1e-8,
                   f"worst relative gap {worst:.2e} over 20 points"))

    bad = 0
    for i in range(mc_points):
        q = int(rng.integers(1, 4))
        pair = ClusterPair(
            centre_a=rng.normal(0.0, 1.5, q),
            centre_b=rng.normal(0.0, 1.5, q),
            var_a=float(rng.uniform(0.0, 4.0)),
            var_b=float(rng.uniform(0.0, 4.0)))
        params = KernelParams(theta=float(rng.uniform(0.2, 1.0)), q=q)
        exact = kernel_moments(pair, params)
        est = mc_kernel_moments(pair, params, mc_draws,
                                rng.integers(2 ** 63))
        for value, (hat, se) in [
                (exact.mean, est.mean), (exact.second, est.second),
                (exact.cross_common_a, est.cross_common_a),
                (exact.cross_common_b, est.cross_common_b)]:
            if abs(value - hat) > max(5.0 * se, 1e-12):
                bad += 1
    checks.append(("kernel-moments-mc", bad == 0,
                   f"{bad} of {4 * mc_points} moments outside 5 standard "
                   f"errors ({mc_draws} draws each)"))

    bad = []
    for kind in (NetworkKind(True, False), NetworkKind(False, False),
                 NetworkKind(True, True)):
        config = GroupConfig(sizes=np.asarray([7, 5]),
                             centres=np.asarray([[0.0, 0.0], [1.2, -0.4]]),
                             scales=np.asarray([0.8, 1.3]))
        params = KernelParams(theta=0.7, q=2)
        for a, b in ((0, 0), (0, 1)):
            est = mc_moments(config, params, kind, a, b, entry_sims,
                             rng.integers(2 ** 63))
            mean = moments.aggregate_mean(config, params, kind, a, b)
            var = (moments.within_group_variance(config, params, kind, a)
                   if a == b else
                   moments.between_group_variance(config, params, kind, a, b))
            if abs(mean - est.mean_hat) > 5.0 * est.se_mean:
                bad.append(f"mean[{a},{b}]")
            if abs(var - est.var_hat) > 5.0 * est.se_var:
                bad.append(f"var[{a},{b}]")
    checks.append(("aggregate-moments-mc", not bad,
                   f"outliers beyond 5 standard errors: {bad or 'none'} "
                   f"({entry_sims} simulations per entry)"))

    mismatches = 0
    cases = 0
    for kind in (NetworkKind(True, False), NetworkKind(False, False)):
        for n in range(1, 7):
            cases += 1
            if (moments.term_coefficients(n, None, kind)
                    != simulate.enumerate_second_moment(n, None, kind)):
                mismatches += 1
    for n_a in range(1, 5):
        for n_b in range(1, 5):
            cases += 1
            if (moments.term_coefficients(n_a, n_b, NetworkKind())
                    != simulate.enumerate_second_moment(n_a, n_b,
                                                        NetworkKind())):
                mismatches += 1
    checks.append(("term-coefficients-enumeration", mismatches == 0,
                   f"{mismatches} of {cases} tables differ from "
                   "brute-force enumeration"))

    kind = NetworkKind(directed=True, weighted=False)
    config = GroupConfig(sizes=np.asarray([10, 15]),
                         centres=np.asarray([[0.0, 0.0], [1.0, 0.0]]),
                         scales=np.asarray([5.0, 5.0]))
    params = KernelParams(theta=1.0, q=2)
    samples = simulate.sample_aggregate_entries(
        config, params, kind, 0, 1, tv_sims, int(rng.integers(2 ** 63)))
    t = int(config.sizes[0] * config.sizes[1])
    empirical = np.bincount(samples, minlength=t + 1) / samples.shape[0]
    mean = moments.aggregate_mean(config, params, kind, 0, 1)
    var = moments.between_group_variance(config, params, kind, 0, 1)
    matched = np.exp([aggregate_entry_log_pmf(y_value, mean, var, t, False)
                      for y_value in range(t + 1)])
    tv = 0.5 * float(np.sum(np.abs(empirical - matched)))
    checks.append(("entry-distribution-tv", tv < 0.02,
                   f"total variation {tv:.4f} over {tv_sims} simulations "
                   "(diffuse two-group reference)"))

    worst_rt = 0.0
    worst_jac = 0.0
    for q in (1, 2, 3):
        layout = ParamLayout(5, q)
        for _ in range(5):
            vec = rng.normal(0.0, 1.0, layout.dim)
            sl = slice(layout.eta_offset, layout.log_tau_offset)
            vec[sl] = rng.uniform(0.05, 0.95, 5)
            u = unpack(vec, layout)
            back = pack(to_unconstrained(to_natural(u)))
            worst_rt = max(worst_rt, float(np.max(np.abs(back - vec))))
        for eta in np.linspace(0.05, 0.95, 7):
            h = 1e-6 * eta
            # sigma decreases in eta; the Jacobian is the absolute slope
            fd = abs(float(sigma_from_eta(eta + h, q))
                     - float(sigma_from_eta(eta - h, q))) / (2.0 * h)
            jac = math.exp(float(log_jacobian_eta(eta, q)))
            worst_jac = max(worst_jac, abs(fd - jac) / jac)
    checks.append(("reparameterisation", worst_rt < 1e-12
                   and worst_jac < 1e-6,
                   f"round trip {worst_rt:.2e}, Jacobian vs finite "
                   f"difference {worst_jac:.2e}"))

    return ValidationReport(checks=checks)


def cmd_validate(args) -> int:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    opts = dict(cfg.validate_options)
    if args.seed is not None:
        opts["seed"] = args.seed
    report = run_validation(**opts)
    for line in report.lines():
        print(line)
    out = args.out or cfg.output_dir
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "validation.txt").write_text(
            "".join(line + "\n" for line in report.lines()))
    return EXIT_OK if report.all_passed else EXIT_CHECK_FAILED


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="aggnet",
        description="Latent cluster models for group-aggregated networks")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, doc in [
            ("simulate", cmd_simulate,
             "sample a synthetic network and its aggregate table"),
            ("fit", cmd_fit, "run the multi-restart posterior fit"),
            ("validate", cmd_validate,
             "run the analytic-vs-simulation self checks"),
            ("export-plots", cmd_export_plots,
             "write plotting tables from a finished fit")]:
        p = sub.add_parser(name, help=doc)
        p.add_argument("--config", help="INI configuration file",
                       default=None)
        p.add_argument("--out", help="output directory", default=None)
        p.add_argument("--seed", type=int, default=None,
                       help="override the configured seed")
        p.add_argument("--chains", type=int, default=None,
                       help="override the configured chain count")
        p.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    if args.config is None and args.fn is not cmd_validate:
        print("error: --config is required for this command", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
