"""The four eit commands. Each writes its files into a run directory and returns their paths."""

import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from cli.config import GridSpec, Mode, RunConfig, ShapeSpec
from cli.jobs import run_jobs
from cli.utils import stage, write_plot_script, write_report
from csvio import write_rows
from errors import EitError
from holeburn import profile_from_populations, run_burn_sequence, write_populations_csv
from integrator import (
    DetuningGrid,
    QuadratureConfig,
    SusceptibilitySpectrum,
    closed_form_spectrum,
    integrate_susceptibility,
    write_spectrum_csv,
)
from lineshape import (
    METRICS_COLUMNS,
    EitMetrics,
    absorption_curve,
    analyze_spectrum,
    detect_center_bump,
    extract_fwhm_dip,
    locate_dip,
    loglog_slope,
    metrics_row,
    write_metrics_csv,
)
from messages import format_message
from profiles import BroadeningProfile, ProfileKind, make_profile, write_profile_csv
from settings import get_logger
from susceptibility import (
    RateParams,
    Regime,
    closed_form_metrics,
    eit_visibility_closed,
    eit_width_asymptotic,
)
from transmission import (
    TransmissionTrace,
    baseline_absorption,
    fit_saturated_absorption,
    read_trace_csv,
    spectrum_from_trace,
    transmission_from_spectrum,
    visibility_from_fit,
    write_trace_csv,
)

logger = get_logger(__name__)

SWEEP_COLUMNS = ("optical", "spin", "abscissa") + METRICS_COLUMNS + ("status", "error")
SUMMARY_COLUMNS = ("optical", "spin", "points", "resolved", "slope_eit", "slope_at", "floor_ratio", "crossing")
FIT_COLUMNS = ("optical_depth", "width", "center", "residual", "vis_fit")
ANALYTIC_POINTS = 200


def uncoupled(p: RateParams) -> RateParams:
    """The same ensemble with the coupling field off."""
    # gamma21 cancels from chi at omega = 0; a nonzero value keeps the kernel finite
    return replace(p, omega=0.0, gamma21=p.gamma21 or 1.0)


def compute_spectrum(
    grid: DetuningGrid,
    p: RateParams,
    optical: BroadeningProfile,
    spin: BroadeningProfile,
    q: QuadratureConfig,
) -> SusceptibilitySpectrum:
    """Closed form for centred Lorentzian profiles, numeric profile average otherwise."""
    closed = all(prof.kind is ProfileKind.LORENTZIAN and prof.center == 0.0 for prof in (optical, spin))
    if closed:
        return closed_form_spectrum(grid, replace(p, sigma_opt=optical.fwhm, sigma_spin=spin.fwhm))
    return integrate_susceptibility(grid, p, optical, spin, q)


def _quadrature_report(s: SusceptibilitySpectrum) -> dict:
    r = s.report
    return {
        "method": r.method,
        "rel_tol": r.rel_tol,
        "achieved": r.achieved,
        "evaluations": r.evaluations,
        "flagged": list(r.flagged),
    }


def _wrote(paths: list[Path]) -> list[Path]:
    for path in paths:
        logger.info(format_message("cli.wrote", path=path))
    return paths


def cmd_spectrum(cfg: RunConfig, run_dir: Path, jobs: int = 1) -> list[Path]:
    """Spectrum, uncoupled reference, metrics and (with an optical depth) transmission traces."""
    p = cfg.rate_params()
    optical = cfg.optical.build(p.sigma_opt)
    spin = cfg.spin.build(p.sigma_spin)
    grid = cfg.grid.build(p)

    s = compute_spectrum(grid, p, optical, spin, cfg.quadrature)
    reference = compute_spectrum(grid, uncoupled(p), optical, spin, cfg.quadrature)
    metrics = analyze_spectrum(s, baseline=reference, params=p)

    paths = [
        write_spectrum_csv(s, run_dir / "spectrum.csv"),
        write_spectrum_csv(reference, run_dir / "uncoupled.csv"),
        write_metrics_csv(run_dir / "metrics.csv", [metrics]),
    ]
    report = {"params": asdict(p), "optical": s.optical, "spin": s.spin, "quadrature": _quadrature_report(s)}
    if cfg.optical_depth is not None:
        peak = float(absorption_curve(reference).alpha.max())
        paths.append(write_trace_csv(transmission_from_spectrum(s, cfg.optical_depth, peak), run_dir / "transmission.csv"))
        paths.append(
            write_trace_csv(
                transmission_from_spectrum(reference, cfg.optical_depth, peak), run_dir / "transmission_uncoupled.csv"
            )
        )
        report["transmission"] = {"optical_depth": cfg.optical_depth, "baseline": peak}
    paths.append(write_report(run_dir / "report.yaml", report))
    paths.append(write_plot_script(run_dir, "spectrum"))
    return _wrote(paths)


@dataclass(frozen=True)
class SweepTask:
    mode: Mode
    shape: ShapeSpec
    value: float
    params: RateParams
    grid: GridSpec
    quadrature: QuadratureConfig


def sweep_omega(mode: Mode, value: float, p: RateParams) -> float:
    if mode is Mode.SWEEP_WIDTH:
        return value * p.sigma_opt
    return math.sqrt(value * p.sigma_opt * p.sigma_spin)


def evaluate_sweep_point(task: SweepTask) -> dict[str, object]:
    """One sweep row; toolkit errors become an error-tagged row."""
    p = task.params.with_omega(sweep_omega(task.mode, task.value, task.params))
    row: dict[str, object] = {
        "optical": task.shape.optical.value,
        "spin": task.shape.spin.value,
        "abscissa": task.value,
        "omega": p.omega,
        "sigma_opt": p.sigma_opt,
        "sigma_spin": p.sigma_spin,
    }
    try:
        optical = make_profile(task.shape.optical, p.sigma_opt)
        spin = make_profile(task.shape.spin, p.sigma_spin)
        grid = task.grid.build(p)
        s = compute_spectrum(grid, p, optical, spin, task.quadrature)
        reference = None
        if task.mode is Mode.SWEEP_VISIBILITY:
            reference = compute_spectrum(grid, uncoupled(p), optical, spin, task.quadrature)
        metrics = analyze_spectrum(s, baseline=reference, params=p)
    except EitError as e:
        row.update(status=type(e).__name__, error=str(e))
        return row
    row.update(metrics_row(metrics))
    row.update(status="ok" if metrics.width is not None else "not_resolved", error=None)
    return row


def _analytic_rows(mode: Mode, values: list[float], p: RateParams) -> list[dict[str, object]]:
    lo, hi = min(values), max(values)
    abscissae = np.geomspace(lo, hi, ANALYTIC_POINTS) if hi > lo else np.array([lo])
    rows = []
    for x in abscissae:
        q = p.with_omega(sweep_omega(mode, float(x), p))
        row: dict[str, object] = {"abscissa": float(x), "omega": q.omega, "sigma_opt": q.sigma_opt, "sigma_spin": q.sigma_spin}
        if mode is Mode.SWEEP_WIDTH:
            closed = closed_form_metrics(q)
            at = eit_width_asymptotic(q, Regime.AUTLER_TOWNES)
            row.update(
                width_closed=closed.width,
                width_eit=eit_width_asymptotic(q, Regime.EIT),
                width_at=at if at > 0 else None,
                expansion_reliable=int(closed.expansion_reliable),
            )
        else:
            row["visibility_closed"] = eit_visibility_closed(q)
        rows.append(row)
    return rows


def _median_slope(omega: np.ndarray, width: np.ndarray) -> float | None:
    if omega.size < 2:
        return None
    return float(np.median(loglog_slope(omega, width)))


def _crossing(x: np.ndarray, v: np.ndarray, level: float = 0.5) -> float | None:
    """Abscissa where v first reaches `level`, interpolated in log x."""
    order = np.argsort(x)
    x, v = x[order], v[order]
    above = np.nonzero(v >= level)[0]
    if above.size == 0 or above[0] == 0:
        return None
    i = int(above[0])
    t = (level - v[i - 1]) / (v[i] - v[i - 1])
    return float(math.exp(math.log(x[i - 1]) + t * (math.log(x[i]) - math.log(x[i - 1]))))


def _summary_rows(mode: Mode, shapes: list[ShapeSpec], rows: list[dict[str, object]]) -> list[dict[str, object]]:
    summary = []
    for shape in shapes:
        mine = [r for r in rows if r["optical"] == shape.optical.value and r["spin"] == shape.spin.value]
        ok = [r for r in mine if r["status"] == "ok"]
        entry: dict[str, object] = {
            "optical": shape.optical.value,
            "spin": shape.spin.value,
            "points": len(mine),
            "resolved": len(ok),
        }
        if mode is Mode.SWEEP_WIDTH and ok:
            ok.sort(key=lambda r: r["omega"])
            sigma_spin = float(ok[0]["sigma_spin"])
            eit = [r for r in ok if r["regime"] == Regime.EIT.value and r["width"] > 10.0 * sigma_spin]
            at = [r for r in ok if r["regime"] == Regime.AUTLER_TOWNES.value]
            for key, group in (("slope_eit", eit), ("slope_at", at)):
                entry[key] = _median_slope(
                    np.array([r["omega"] for r in group]), np.array([r["width"] for r in group])
                )
            if sigma_spin > 0:
                entry["floor_ratio"] = float(ok[0]["width"]) / sigma_spin
        if mode is Mode.SWEEP_VISIBILITY:
            points = [
                (r["abscissa"], r["vis_residual"] if r.get("vis_residual") is not None else r.get("vis_contrast"))
                for r in mine
                if r["status"] in ("ok", "not_resolved")
            ]
            points = [(x, v) for x, v in points if v is not None]
            if len(points) >= 2:
                x, v = (np.array(a, dtype=float) for a in zip(*points))
                entry["crossing"] = _crossing(x, v)
        summary.append(entry)
    return summary


def cmd_sweep(cfg: RunConfig, run_dir: Path, jobs: int = 1) -> list[Path]:
    """Metrics over shape combinations and sweep values, plus the closed-form companion and summary."""
    p = cfg.params.rate_params()
    tasks = [
        SweepTask(cfg.mode, shape, value, p, cfg.grid, cfg.quadrature)
        for shape in cfg.sweep.shapes
        for value in cfg.sweep.values
    ]
    logger.info(format_message("cli.planned", mode=cfg.mode.value, count=len(tasks)))

    rows = []
    for task, result in zip(tasks, run_jobs(evaluate_sweep_point, tasks, jobs)):
        if isinstance(result, Exception):
            result = {
                "optical": task.shape.optical.value,
                "spin": task.shape.spin.value,
                "abscissa": task.value,
                "status": type(result).__name__,
                "error": str(result),
            }
        if result["status"] not in ("ok", "not_resolved"):
            logger.warning(
                format_message(
                    "cli.sweep_point_failed", label=task.shape.label, value=task.value, error=result["error"]
                )
            )
        rows.append(result)

    ok = sum(r["status"] == "ok" for r in rows)
    unresolved = sum(r["status"] == "not_resolved" for r in rows)
    logger.info(
        format_message(
            "cli.sweep_summary", ok=ok, total=len(rows), unresolved=unresolved, failed=len(rows) - ok - unresolved
        )
    )

    analytic = _analytic_rows(cfg.mode, cfg.sweep.values, p)
    paths = [
        write_rows(run_dir / "sweep.csv", rows, SWEEP_COLUMNS),
        write_rows(run_dir / "analytic.csv", analytic, list(analytic[0].keys())),
        write_rows(run_dir / "summary.csv", _summary_rows(cfg.mode, cfg.sweep.shapes, rows), SUMMARY_COLUMNS),
        write_plot_script(run_dir, cfg.mode.value),
    ]
    return _wrote(paths)


def cmd_holeburn(cfg: RunConfig, run_dir: Path, jobs: int = 1) -> list[Path]:
    """Burn sequence, probe profile, numeric spectrum and metrics; errors carry their stage."""
    hb = cfg.holeburn
    p = cfg.rate_params()
    ls = hb.level_structure

    with stage("burn"):
        burn = run_burn_sequence(
            ls,
            hb.target_class,
            hb.trench_halfwidth,
            hb.feature_fwhm,
            probe_ground=hb.probe_ground,
            control_ground=hb.control_ground,
            shared_excited=hb.shared_excited,
            class_halfspan=hb.class_halfspan,
            steps=hb.steps,
        )
    paths = [write_populations_csv(burn.populations, run_dir / "populations.csv")]
    if burn.report.control_frequency_outside_trench:
        logger.warning(format_message("cli.control_outside"))

    with stage("profile"):
        profile = profile_from_populations(
            burn.populations,
            ls,
            hb.probe_ground,
            hb.kernel_fwhm or p.gamma31,
            target_class=hb.target_class,
            shared_excited=hb.shared_excited,
            span=hb.profile_span or 2.0 * hb.trench_halfwidth,
            points=hb.profile_points,
        )
    paths.append(write_profile_csv(profile, run_dir / "profile.csv"))

    if math.isfinite(profile.fwhm):
        p = replace(p, sigma_opt=profile.fwhm)
    spin = cfg.spin.build(p.sigma_spin)
    with stage("integrate"):
        grid = cfg.grid.build(p)
        s = integrate_susceptibility(grid, p, profile, spin, cfg.quadrature)
    with stage("analyze"):
        metrics = analyze_spectrum(s, params=p)
        bump = None
        if metrics.center_bump:
            dip = extract_fwhm_dip(absorption_curve(s))
            bump = detect_center_bump(absorption_curve(s), (dip.left_crossing, dip.right_crossing))
            logger.info(format_message("cli.bump_found", position=bump.position))

    report = {
        "level_structure": ls.model_dump(mode="json"),
        "stages": [{"name": r.name, "moved": r.moved, "cycling_classes": r.cycling_classes} for r in burn.report.stages],
        "field_frequencies": list(burn.report.field_frequencies),
        "class_step": burn.report.class_step,
        "control_frequency_outside_trench": burn.report.control_frequency_outside_trench,
        "control_resonances": [list(entry) for entry in burn.report.control_resonances],
        "profile_fwhm": profile.fwhm if math.isfinite(profile.fwhm) else None,
        "center_bump": None if bump is None else {"position": bump.position, "height": bump.height},
        "quadrature": _quadrature_report(s),
    }
    paths += [
        write_spectrum_csv(s, run_dir / "spectrum.csv"),
        write_metrics_csv(run_dir / "metrics.csv", [metrics]),
        write_report(run_dir / "report.yaml", report),
        write_plot_script(run_dir, "holeburn"),
    ]
    return _wrote(paths)


def _with_depth(trace: TransmissionTrace, d: float) -> TransmissionTrace:
    return TransmissionTrace(grid=trace.grid, transmission=trace.transmission, optical_depth=d)


def cmd_analyze(cfg: RunConfig, run_dir: Path, jobs: int = 1) -> list[Path]:
    """Saturated-absorption fit and/or dip metrics of a measured transmission trace."""
    spec = cfg.analyze
    p = cfg.params.rate_params() if cfg.params is not None else None
    trace = read_trace_csv(spec.input)
    reference = read_trace_csv(spec.baseline_input) if spec.baseline_input is not None else None

    paths: list[Path] = []
    fit = None
    if spec.fit_saturated:
        fit = fit_saturated_absorption(reference if reference is not None else trace)
        logger.info(f"Saturated fit: optical depth {fit.optical_depth:.6g}, width {fit.width:.6g}")
    d = spec.optical_depth if spec.optical_depth is not None else fit.optical_depth

    metrics: EitMetrics | None = None
    if spec.dip:
        baseline = baseline_absorption(p) if p is not None else 1.0
        s = spectrum_from_trace(_with_depth(trace, d), baseline, p)
        locate_dip(absorption_curve(s))
        uncoupled_spectrum = None
        if reference is not None:
            uncoupled_spectrum = spectrum_from_trace(_with_depth(reference, d), baseline, p)
        metrics = analyze_spectrum(s, baseline=uncoupled_spectrum, params=p)
        paths.append(write_metrics_csv(run_dir / "metrics.csv", [metrics]))

    if fit is not None:
        row = fit._asdict()
        row["vis_fit"] = visibility_from_fit(trace, fit) if reference is not None else None
        paths.append(write_rows(run_dir / "fit.csv", [row], FIT_COLUMNS))
    return _wrote(paths)
