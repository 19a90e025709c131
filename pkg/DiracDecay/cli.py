"""
Command-line front end: python -m DiracDecay <subcommand> [flags]
- classify:   zero-energy threshold classification of the configured potential
- evolve:     low-energy evolution kernels, decay series and fits
- tune:       coupling s* at which a threshold obstruction appears
- free-check: dispersive decay of the free evolution
- selftest:   fast numerical self-checks
"""
import argparse
import logging
import os
import sys

import numpy as np

from . import APP_NAME, VERSION
from . import file_manager
from .decay import (check_log_bounded, default_times, series_from_kernels, window_stability,
                    DecaySeries)
from .discretize import build_grid, factor_potential
from .errors import ConfigError, DiracDecayError, NumericalError
from .freeops import CutoffSpec, dirac_algebra_check
from .propagator import (LatticeModel, PeriodicBox, born_evolution, build_contour, build_probes,
                         compute_Ft, evolve_low, free_kernel, free_kernel_supnorm,
                         oracle_evolution)
from .settings import RunSettings
from .specfun import bessel_j, bessel_y, g_pm
from .threshold import InversionBundle, classify, jn_invert, tune_coupling
from .viewer import export_html

logger = logging.getLogger(__name__)

CLASSIFICATION_EXIT = {"regular": 0, "p_resonance": 10, "eigenvalue": 11, "mixed": 12}
FREE_TOLERANCE = {0.0: 0.1}
WEIGHTED_FREE_TOLERANCE = 0.2
FT_VERDICT_WINDOW = (10.0, 1000.0)


def _prepare(args):
    settings = RunSettings(args.config)
    settings.apply_overrides(grid_n=args.grid_n, grid_L=args.grid_L, lambda1=args.lambda1,
                             out=args.out, serial=True if args.serial else None)
    if args.html:
        settings.set("output.html", True)
    config = settings.to_run_config()
    os.makedirs(config.output_dir, exist_ok=True)
    return settings, config


def _finish(settings, config, command: str, markdown_text: str, extra: dict | None = None):
    out = config.output_dir
    manifest = file_manager.build_manifest(settings.get_all(), config.config_hash, command,
                                           config.serial, extra)
    file_manager.save_manifest(manifest, os.path.join(out, "manifest.yaml"))
    summary_path = os.path.join(out, f"{command}.md")
    with open(summary_path, 'w', encoding='utf-8') as f:
        f.write(markdown_text)
    if config.html:
        export_html(markdown_text, os.path.join(out, f"{command}.html"), config.theme)
    logger.info("Results written to %s", out)


def _fit_window(config, series: DecaySeries):
    """Fit over t ≥ 3/λ1 when that leaves enough samples, else the whole series."""
    t_fit = 3.0 / config.cutoff.lambda1
    if np.sum(series.t >= t_fit) >= 5:
        return t_fit, None
    logger.warning("Fewer than 5 samples beyond t = %.1f; fitting the whole series", t_fit)
    return None, None


def _fits_markdown(series_list) -> list:
    lines = ["| provenance | γ | exponent | stderr |", "|---|---|---|---|"]
    for s in series_list:
        lines.append(f"| {s.provenance} | {s.gamma:g} | {s.fit_exponent:.4f} | "
                     f"{s.fit_stderr:.4f} |")
    return lines


def _write_series(config, series_list, kernels_by_provenance):
    out = config.output_dir
    for provenance, kernels in kernels_by_provenance.items():
        for k in kernels:
            file_manager.save_pair_snapshot(
                k, os.path.join(out, "snapshots", f"{provenance}_t{k.t:09.3f}.ddpair"))
    file_manager.save_decay_csv(series_list, os.path.join(out, "decay.csv"))
    file_manager.save_fits_csv(series_list, os.path.join(out, "fits.csv"))
    for s in series_list:
        file_manager.save_gnuplot_stub(
            os.path.join(out, f"decay_{s.provenance}_gamma{s.gamma:g}.gp"), "decay.csv",
            s.gamma, s.provenance)


def _write_kernel_snapshots(report, out: str):
    """Projectors onto S1, Q and S2 as operator snapshots, when nontrivial."""
    ranks = {'S1': report.rank_S1, 'Q': report.rank_Q, 'S2': report.rank_S2}
    for part, rank in ranks.items():
        if rank:
            file_manager.save_operator_snapshot(
                report.projector(part), os.path.join(out, "snapshots", f"basis_{part}.ddsnap"))


# --- Subcommands ------------------------------------------------------------

def cmd_classify(args) -> int:
    settings, config = _prepare(args)
    grid = build_grid(config.n_per_axis, config.L)
    report = classify(config.potential, grid, config.tolerances)
    out = config.output_dir
    file_manager.save_report(report, os.path.join(out, "threshold_report.md"), grid)
    _write_kernel_snapshots(report, out)
    markdown_text = file_manager.report_markdown(report, grid)
    _finish(settings, config, "classify", markdown_text, {'classification': report.classification})
    return CLASSIFICATION_EXIT[report.classification]


def cmd_tune(args) -> int:
    settings, config = _prepare(args)
    grid = build_grid(config.n_per_axis, config.L)
    s_star, report = tune_coupling(config.potential, grid, config.s_range, config.tune_tol,
                                   config.tune_target, config.tolerances)
    out = config.output_dir
    extra = {'s_star': float(s_star), 'target': config.tune_target}
    file_manager.save_report(report, os.path.join(out, "threshold_report.md"), grid, extra)
    _write_kernel_snapshots(report, out)
    markdown_text = file_manager.report_markdown(report, grid, extra)
    _finish(settings, config, "tune", markdown_text, extra)
    print(f"s* = {s_star!r} ({report.classification})")
    return 0


def cmd_free_check(args) -> int:
    settings, config = _prepare(args)
    gammas = sorted(set(config.gammas) | {0.0})
    series_list = []
    for gamma in gammas:
        norms = [free_kernel_supnorm(t, config.cutoff, gamma) for t in config.t_values]
        series = DecaySeries(gamma=gamma, t=config.t_values, norms=norms, provenance="free")
        series.fit(*_fit_window(config, series))
        series_list.append(series)
    failures = []
    for s in series_list:
        expected = -0.5 - s.gamma
        tol = FREE_TOLERANCE.get(s.gamma, WEIGHTED_FREE_TOLERANCE)
        if abs(s.fit_exponent - expected) > tol:
            failures.append(f"γ = {s.gamma:g}: exponent {s.fit_exponent:.3f}, expected "
                            f"{expected:.3f} ± {tol}")
    _write_series(config, series_list, {})
    lines = ["# Free dispersive decay", ""] + _fits_markdown(series_list)
    lines += ["", "All fits within tolerance." if not failures else "Failures:"]
    lines += [f"- {f}" for f in failures]
    _finish(settings, config, "free-check", "\n".join(lines) + "\n")
    if failures:
        raise NumericalError("; ".join(failures))
    return 0


def _oracle_summary(config, fp, report, bundle, gamma: float) -> list:
    box = PeriodicBox(config.oracle_half_width, config.oracle_points)
    probes = build_probes(min(config.probe_rho_max, 0.25 * box.half_width), 2.0 * box.spacing)
    t_max = max(config.oracle_times)
    contour = build_contour(config.cutoff, t_max, probes.max_distance, config.lambda_min,
                            config.contour_ratio, config.points_per_period,
                            config.resolution_cap)
    stone = evolve_low(config.oracle_times, fp, report, contour, probes, config.cutoff,
                       bundle=bundle, serial=config.serial, max_workers=config.max_workers)
    model = LatticeModel(config.potential, box)
    oracle = oracle_evolution(config.oracle_times, config.potential, box, config.cutoff, probes,
                              band=config.oracle_band, method=config.oracle_method,
                              epsilon=config.oracle_epsilon, model=model)
    lines = ["", "## Oracle cross-check", "", "| t | relative weighted difference |", "|---|---|"]
    for s, o in zip(stone, oracle):
        diff = s.minus(o, "difference").supnorm(gamma) / max(o.supnorm(gamma), 1e-300)
        lines.append(f"| {s.t:g} | {diff:.3e} |")
    return lines


def ft_verdict(bundle, probes, cutoff, window=FT_VERDICT_WINDOW):
    """Log-boundedness of ‖F_t‖ on a geometric t-grid spanning window."""
    times = default_times(*window)
    terms = compute_Ft(times, bundle, probes, cutoff)
    return check_log_bounded(series_from_kernels(terms, 0.0, "finite_rank").samples)


def cmd_evolve(args) -> int:
    settings, config = _prepare(args)
    cutoff = config.cutoff
    probes = build_probes(config.probe_rho_max, config.probe_step)
    series_list, kernels_by_provenance = [], {}
    lines = ["# Low-energy evolution", ""]
    pot = config.potential
    if pot.family == "zero" or pot.coupling == 0 or not np.any(pot.amplitude):
        kernels_by_provenance["free"] = free_kernel(config.t_values, probes, cutoff)
        report = None
        lines.append("Free evolution (V = 0).")
    else:
        grid = build_grid(config.n_per_axis, config.L)
        fp = factor_potential(pot, grid)
        report = classify(pot, grid, config.tolerances, fp=fp)
        if report.classification != "regular" and max(config.gammas) >= 0.5:
            raise ConfigError("Weights γ ≥ 1/2 are outside the controlled range for a "
                              f"{report.classification} threshold")
        bundle = InversionBundle(report, fp, config.tolerances)
        contour = build_contour(cutoff, max(config.t_values), probes.max_distance,
                                config.lambda_min, config.contour_ratio,
                                config.points_per_period, config.resolution_cap)
        options = dict(half_period=config.half_period, check_resolution=config.check_resolution,
                       serial=config.serial, max_workers=config.max_workers)
        if config.born:
            kernels = born_evolution(config.t_values, fp, contour, probes, cutoff, **options)
        else:
            kernels = evolve_low(config.t_values, fp, report, contour, probes, cutoff,
                                 bundle=bundle, **options)
        kernels_by_provenance[kernels[0].provenance] = kernels
        lines.append(f"Threshold: **{report.classification}** (rank S1 = {report.rank_S1}, "
                     f"rank S2 = {report.rank_S2}).")
        if report.rank_Q and config.subtract_Ft and not config.born:
            finite = compute_Ft(config.t_values, bundle, probes, cutoff, contour=contour,
                                tail=False, half_period=config.half_period)
            kernels_by_provenance["stone_low_energy_minus_Ft"] = [
                k.minus(f, "stone_low_energy_minus_Ft") for k, f in zip(kernels, finite)]
            for f in finite:
                file_manager.save_pair_snapshot(
                    f, os.path.join(config.output_dir, "snapshots",
                                    f"finite_rank_t{f.t:09.3f}.ddpair"))
            verdict = ft_verdict(bundle, probes, cutoff)
            lines.append(f"F_t log-boundedness on t ∈ [{FT_VERDICT_WINDOW[0]:g}, "
                         f"{FT_VERDICT_WINDOW[1]:g}]: ratio {verdict.ratio:.3f} "
                         f"({'pass' if verdict.passed else 'fail'}).")
    for provenance, kernels in kernels_by_provenance.items():
        for gamma in config.gammas:
            series = series_from_kernels(kernels, gamma, provenance)
            series.fit(*_fit_window(config, series))
            stability = window_stability(series, *series.window)
            logger.info("%s, γ = %g: exponent %.4f ± %.4f (half-window %.4f)", provenance, gamma,
                        series.fit_exponent, series.fit_stderr, stability['half_exponent'])
            series_list.append(series)
    _write_series(config, series_list, kernels_by_provenance)
    lines += [""] + _fits_markdown(series_list)
    if config.oracle_enabled and report is not None:
        lines += _oracle_summary(config, fp, report, bundle, config.gammas[0])
    _finish(settings, config, "evolve", "\n".join(lines) + "\n")
    return 0


def selftest_checks() -> dict:
    """name → passed for the fast numerical checks."""
    rng = np.random.default_rng(0)
    checks = {'dirac_algebra': dirac_algebra_check()}
    x = np.linspace(0.5, 20.0, 40)
    wronskian = bessel_j(1, x) * bessel_y(0, x) - bessel_j(0, x) * bessel_y(1, x)
    checks['bessel_wronskian'] = bool(np.allclose(wronskian, 2.0 / (np.pi * x), rtol=1e-12))
    checks['g_pm_imaginary_part'] = abs(g_pm('+', 2.0).imag - 0.25) < 1e-14
    contour = build_contour(CutoffSpec(0.1), 64.0)
    checks['contour_quadrature'] = contour.quadrature_error() < 1e-4
    n = 12
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    Q, _ = np.linalg.qr(rng.standard_normal((n, 2)))
    S = Q @ Q.T
    checks['jensen_nenciu'] = bool(np.allclose(jn_invert(A, S), np.linalg.inv(A), rtol=1e-10,
                                               atol=1e-10))
    return checks


def cmd_selftest(args) -> int:
    checks = selftest_checks()
    for name, passed in checks.items():
        print(f"{'ok  ' if passed else 'FAIL'} {name}")
    if not all(checks.values()):
        raise NumericalError("Self-test failed: " + ", ".join(k for k, v in checks.items()
                                                                if not v))
    return 0


# --- Entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file merged over the defaults")
    common.add_argument("--out", help="output directory")
    common.add_argument("--serial", action="store_true", help="no thread pool (deterministic)")
    common.add_argument("--grid-n", type=int, help="Gauss-Legendre nodes per axis")
    common.add_argument("--grid-L", type=float, help="grid half-width")
    common.add_argument("--lambda1", type=float, help="cutoff scale λ1")
    common.add_argument("--html", action="store_true", help="also export the summary as HTML")
    common.add_argument("--verbose", "-v", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog=APP_NAME, description=__doc__.splitlines()[1])
    parser.add_argument("--version", action="version", version=f"{APP_NAME} {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, handler, help_text in (
            ("classify", cmd_classify, "classify the zero-energy threshold"),
            ("evolve", cmd_evolve, "low-energy evolution and decay fits"),
            ("tune", cmd_tune, "find a threshold coupling s*"),
            ("free-check", cmd_free_check, "free dispersive decay fits"),
            ("selftest", cmd_selftest, "fast numerical self-checks")):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(handler=handler)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="[%(name)s] %(message)s")
    try:
        return args.handler(args)
    except DiracDecayError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return e.exit_code
    except Exception:
        logger.exception("Unexpected failure")
        return 1


if __name__ == '__main__':
    sys.exit(main())
