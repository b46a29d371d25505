"""Family sweeps: per-potential diagnostics, envelope fits, reports.

A sweep evaluates every member of a family (functionals always; path trace,
certificates and flow checks when configured), then fits the linear lower
envelope F >= A J - B by the LP

    maximize A   subject to   F_k >= A J_k - B,  0 <= B <= B_max,

which matches the quantifier structure of the target inequality.  For the
dilation (mobius) family no positive A exists; the sweep instead reports the
decay of F/J with growing J.

Rows are independent work items processed by a bounded worker pool; report
assembly is a single-owner reduction in row order, so identical seed and
config produce byte-identical CSV output.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses

import numpy as np
from scipy.optimize import linprog

from .constants import FROZEN, VerificationConstants
from .continuity import (
    default_t_grid,
    ding_identity_check,
    endpoint_gap_margins,
    fractional_certificate,
    linear_certificate,
    path_invariant_report,
    trace_path,
)
from .errors import TargetUnreachable
from .families import FamilySpec, make_member
from .flow import FlowPolicy, flow, flow_bounds_margins, smooth_path_state
from .functionals import functional_report
from .geometry import SphereGrid, build_grid, kahler_einstein_background, metric_from_potential
from .io import write_csv, write_json_report

A_CAP = 1e6


@dataclasses.dataclass(frozen=True)
class SweepConfig:
    grid_n: int = 128
    b_max: float = 10.0
    with_paths: bool = False
    with_flows: bool = False
    t_points: int = 65
    flow_sample_ts: tuple[float, ...] = (0.5, 0.7, 0.85, 0.95, 0.99)
    solver_tol: float = 1e-10
    workers: int = 1
    error_quota: float = 0.10
    clamp_unreachable: bool = True
    constants: VerificationConstants = FROZEN


@dataclasses.dataclass
class SweepRow:
    index: int
    tag: str
    j_target: float | None = None
    clamped: bool = False
    aubin_j: float = np.nan
    ding_f: float = np.nan
    aubin_i: float = np.nan
    osc: float = np.nan
    min_rho: float = np.nan
    mono_min_increment: float = np.nan
    ding_residual: float = np.nan
    h_bound_margin_min: float = np.nan
    sign_change_ok: bool = True
    endpoint_gap_margin_min: float = np.nan
    mtk_margin: float = np.nan
    window_margin_min: float = np.nan
    k_max: float = np.nan
    shift_margin_min: float = np.nan
    flow_udot_margin_min: float = np.nan
    flow_u1_margin_min: float = np.nan
    error: str = ""

    CSV_HEADER = (
        "index", "tag", "j_target", "clamped", "J", "F", "I", "osc", "min_rho",
        "mono_min_increment", "ding_residual", "h_bound_margin_min",
        "sign_change_ok", "endpoint_gap_margin_min", "mtk_margin",
        "window_margin_min", "k_max", "shift_margin_min",
        "flow_udot_margin_min", "flow_u1_margin_min", "error",
    )

    def csv_row(self):
        return (
            self.index, self.tag,
            float("nan") if self.j_target is None else self.j_target,
            int(self.clamped), self.aubin_j, self.ding_f, self.aubin_i,
            self.osc, self.min_rho, self.mono_min_increment,
            self.ding_residual, self.h_bound_margin_min,
            int(self.sign_change_ok), self.endpoint_gap_margin_min,
            self.mtk_margin, self.window_margin_min, self.k_max,
            self.shift_margin_min, self.flow_udot_margin_min,
            self.flow_u1_margin_min, self.error,
        )


@dataclasses.dataclass
class SweepReport:
    spec: FamilySpec
    config: SweepConfig
    rows: list[SweepRow]
    a_fit: float = np.nan
    b_fit: float = np.nan
    tight_rows: int = 0
    error_fraction: float = 0.0
    sweep_failed: bool = False
    # mobius-only counterpoint data
    f_over_j: list[tuple[float, float, float]] | None = None  # (a, J, F/J)
    no_positive_a: bool | None = None

    @property
    def completed_rows(self) -> list[SweepRow]:
        return [r for r in self.rows if not r.error]


def fit_envelope(j_values, f_values, b_max: float = 10.0) -> tuple[float, float, int]:
    """Lower-envelope fit: maximize A s.t. F_k >= A J_k - B, 0 <= B <= b_max.

    Returns (a_fit, b_fit, tight_row_count).  With all J = 0 the slope is
    unconstrained and reported as A_CAP.  Note the geometry of this LP: the
    feasible region is bounded by B <= b_max whose boundary the optimum always
    touches when every J_k > 0, so generically exactly one data row is tight.
    """
    j = np.asarray(j_values, dtype=float)
    f = np.asarray(f_values, dtype=float)
    if j.size == 0 or np.all(j <= 1e-300):
        return A_CAP, 0.0, int(np.sum(np.abs(f) <= 1e-12))
    res = linprog(
        c=[-1.0, 0.0],
        A_ub=np.column_stack([j, -np.ones_like(j)]),
        b_ub=f,
        bounds=[(0.0, A_CAP), (0.0, b_max)],
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"envelope LP failed: {res.message}")
    a_fit, b_fit = float(res.x[0]), float(res.x[1])
    resid = f - (a_fit * j - b_fit)
    tight = int(np.sum(np.abs(resid) <= 1e-9 * np.maximum(1.0, np.abs(f))))
    return a_fit, b_fit, tight


def _evaluate_row(spec: FamilySpec, config: SweepConfig, grid, ke, index: int) -> SweepRow:
    row = SweepRow(index=index, tag=f"{spec.kind}-{index:03d}")
    try:
        phi, meta = make_member(spec, grid, index)
    except TargetUnreachable as exc:
        if not (config.clamp_unreachable and spec.kind == "even_legendre"):
            row.error = f"TargetUnreachable: {exc}"
            return row
        clamped_spec = dataclasses.replace(
            spec, target_j=None, amplitudes=(0.98,)
        )
        phi, meta = make_member(clamped_spec, grid, index)
        row.clamped = True
        row.j_target = exc.target
        row.error = ""
    except Exception as exc:  # recorded, sweep continues
        row.error = f"{type(exc).__name__}: {exc}"
        return row
    if row.j_target is None:
        row.j_target = meta.get("j_target")
    try:
        rep = functional_report(phi, ke, tag=row.tag)
        row.aubin_j, row.ding_f = rep.aubin_j, rep.ding_f
        row.aubin_i, row.osc = rep.aubin_i, rep.osc
        row.min_rho = float(np.min(metric_from_potential(phi, grid).rho.values))
        if config.with_paths and phi.parity == "even":
            _add_path_diagnostics(row, phi, grid, config)
    except Exception as exc:
        row.error = f"{type(exc).__name__}: {exc}"
    return row


def _add_path_diagnostics(row: SweepRow, phi, grid, config: SweepConfig) -> None:
    trace = trace_path(
        phi,
        default_t_grid(config.t_points),
        grid,
        tol=config.solver_tol,
    )
    inv = path_invariant_report(trace)
    row.mono_min_increment = inv.monotonicity_min_increment
    row.h_bound_margin_min = float(np.min(inv.h_bound_margins))
    row.sign_change_ok = inv.sign_change_ok
    row.ding_residual = ding_identity_check(trace).identity_residual
    if trace.t0 is not None:
        gaps = endpoint_gap_margins(trace)
        row.endpoint_gap_margin_min = min(m for _, m in gaps)
    frac = fractional_certificate(trace, constants=config.constants)
    row.mtk_margin = frac.mtk_margin
    row.window_margin_min = float(np.min(frac.window_margins))
    lin = linear_certificate(trace, constants=config.constants)
    row.k_max = lin.k_max
    row.shift_margin_min = float(np.min(lin.shift_margins))
    if config.with_flows:
        _add_flow_diagnostics(row, trace, config)


def _add_flow_diagnostics(row: SweepRow, trace, config: SweepConfig) -> None:
    udot_min, u1_min = np.inf, np.inf
    policy = FlowPolicy()
    for t_sample in config.flow_sample_ts:
        state = trace.state_at(t_sample)
        eta0 = metric_from_potential(trace.phi + state.phi_t, trace.grid)
        ftrace = flow(eta0, 1.0, policy)
        bounds = flow_bounds_margins(ftrace)
        h0 = bounds.h0_sup
        udot_min = min(udot_min, float(np.min(bounds.udot_margins + 1e-4 * h0)))
        u1_min = min(
            u1_min, 3.0 * h0 * (1.0 + 1e-4) - ftrace.u_final.sup()
        )
    row.flow_udot_margin_min = udot_min
    row.flow_u1_margin_min = u1_min


def run_sweep(spec: FamilySpec, config: SweepConfig | None = None) -> SweepReport:
    """Run the family sweep; per-row errors are recorded and the sweep
    continues, failing only when more than the error quota of rows error."""
    config = config or SweepConfig()
    grid = build_grid(config.grid_n)
    ke = kahler_einstein_background(grid)
    report = SweepReport(spec=spec, config=config, rows=[])
    indices = list(range(spec.size))
    if config.workers > 1:
        with concurrent.futures.ThreadPoolExecutor(config.workers) as pool:
            rows = list(
                pool.map(lambda k: _evaluate_row(spec, config, grid, ke, k), indices)
            )
    else:
        rows = [_evaluate_row(spec, config, grid, ke, k) for k in indices]
    report.rows = rows
    n_err = sum(1 for r in rows if r.error)
    report.error_fraction = n_err / max(1, len(rows))
    report.sweep_failed = report.error_fraction > config.error_quota
    done = report.completed_rows
    if spec.kind == "mobius":
        table = []
        for r in done:
            a = spec.amplitudes[r.index % len(spec.amplitudes)] if spec.amplitudes else (1, 2, 4, 8, 16, 32)[r.index % 6]
            ratio = r.ding_f / r.aubin_j if r.aubin_j > 0 else 0.0
            table.append((float(a), r.aubin_j, ratio))
        report.f_over_j = table
        max_f = max((abs(r.ding_f) for r in done), default=np.inf)
        max_j = max((r.aubin_j for r in done), default=0.0)
        report.no_positive_a = bool(max_f < 1e-6 and max_j > 5.0)
    elif done:
        report.a_fit, report.b_fit, report.tight_rows = fit_envelope(
            [r.aubin_j for r in done], [r.ding_f for r in done], config.b_max
        )
    return report


def reevaluate_functionals(
    report: SweepReport, grid_n: int
) -> tuple[float, float, list[tuple[float, float]]]:
    """Re-evaluate the report's potentials on a finer grid (zero-padded
    coefficients) and refit the envelope; used for resolution stability."""
    spec, config = report.spec, report.config
    fine = build_grid(grid_n)
    ke = kahler_einstein_background(fine)
    pairs = []
    for row in report.completed_rows:
        if row.clamped:
            member_spec = dataclasses.replace(spec, target_j=None, amplitudes=(0.98,))
        else:
            member_spec = spec
        phi, _ = make_member(member_spec, build_grid(config.grid_n), row.index)
        from .geometry import PotentialField

        phi_fine = PotentialField.from_coeffs(fine, phi.coeffs, phi.parity)
        rep = functional_report(phi_fine, ke)
        pairs.append((rep.aubin_j, rep.ding_f))
    a_fit, b_fit, _ = fit_envelope(
        [p[0] for p in pairs], [p[1] for p in pairs], config.b_max
    )
    return a_fit, b_fit, pairs


# ---------------------------------------------------------------------------
# report output


def write_sweep_csv(report: SweepReport, path):
    return write_csv(
        path, SweepRow.CSV_HEADER, [r.csv_row() for r in report.rows]
    )


def write_sweep_json(report: SweepReport, path):
    payload = {
        "family": dataclasses.asdict(report.spec),
        "grid_n": report.config.grid_n,
        "a_fit": report.a_fit,
        "b_fit": report.b_fit,
        "tight_rows": report.tight_rows,
        "error_fraction": report.error_fraction,
        "sweep_failed": report.sweep_failed,
        "no_positive_a": report.no_positive_a,
        "f_over_j": report.f_over_j,
        "rows": len(report.rows),
    }
    return write_json_report(path, payload)


def emit_plots(report: SweepReport, out_dir) -> list:
    """Write the (J, F) scatter CSV plus a gnuplot script drawing the fit."""
    from .io import resolve_out_dir

    out = resolve_out_dir(out_dir)
    rows = []
    for r in report.completed_rows:
        fitted = (
            report.a_fit * r.aubin_j - report.b_fit
            if np.isfinite(report.a_fit)
            else float("nan")
        )
        rows.append((r.aubin_j, r.ding_f, fitted))
    scatter = write_csv(out / "scatter_j_f.csv", ("J", "F", "fit"), rows)
    script = out / "plot_j_f.gp"
    script.write_text(
        "set datafile separator ','\n"
        "set xlabel 'J'\n"
        "set ylabel 'F'\n"
        "set key left top\n"
        f"plot 'scatter_j_f.csv' skip 1 using 1:2 with points title 'family', \\\n"
        f"     'scatter_j_f.csv' skip 1 using 1:3 with lines title "
        f"'A*J - B (A={report.a_fit:.4g}, B={report.b_fit:.4g})'\n"
    )
    return [scatter, script]
