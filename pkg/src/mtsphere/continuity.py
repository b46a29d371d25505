"""Continuity-method solver for the path of Monge-Ampere equations.

Given a cone potential phi with metric omega = metric_from_potential(phi),
the path potential phi_t solves, for t in [0, 1],

    1 + lap(phi + phi_t) = e^{h_omega - t phi_t} * (1 + lap(phi)),

pointwise at the collocation nodes.  The t = 1 endpoint is exact:
phi_1 = -phi + c with c the Ricci-potential normalization constant of omega.
The path is marched downward from t = 1 by damped Newton continuation in the
Legendre-Galerkin basis restricted to the active parity sector.

Everything needed by the path diagnostics lives here as well: the Ding-type
energy identity F(phi) = integral of (I-J)(phi_t) dt, the threshold time t0
cut out by the window function g(t) = (1-t)^{1-alpha} (1+2(1-t)||phi_t||)^alpha,
the endpoint-gap bound ||phi_1 - phi_t|| <= 100 (1-t) ||phi_t|| + 1 on
[t0, 1], and the two inequality certificates (fractional exponent from the
oscillation window, linear via the bounded-oscillation mechanism).

trace_path is sequential in t (each state seeds the next); traces of
independent potentials can run concurrently.  A PathTrace is immutable once
returned.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline

from .errors import (
    ConeBoundary,
    ConfigurationError,
    ContinuationError,
    IncompleteTrace,
    NewtonDiverged,
    SingularLinearization,
)
from .functionals import dirichlet_energy, functional_report
from .geometry import (
    COMPLEX_DIM,
    MetricState,
    PotentialField,
    SphereGrid,
    kahler_einstein_background,
    laplacian,
    metric_from_potential,
)

DEFAULT_TOL = 1e-10
_COND_LIMIT = 1e12
_MAX_NEWTON = 60
_MAX_HALVINGS = 40


@dataclasses.dataclass(frozen=True)
class PathState:
    t: float
    phi_t: PotentialField
    residual_sup: float
    newton_iters: int


@dataclasses.dataclass(frozen=True)
class HolderParams:
    """Holder-window parameters: p > 2n, kappa in (0,1), alpha=(p+kappa-2)/(p-1).

    At n = 1 we additionally require p > 3 - 2*kappa so that alpha > 1/2.
    D is the window threshold; when left None it is filled from the fitted
    verification constants.
    """

    p: float = 2.75
    kappa: float = 0.25
    d_threshold: float | None = None

    def __post_init__(self):
        if self.p <= 2 * COMPLEX_DIM:
            raise ConfigurationError(f"need p > {2 * COMPLEX_DIM}, got p={self.p}")
        if not (0.0 < self.kappa < 1.0):
            raise ConfigurationError(f"need kappa in (0,1), got {self.kappa}")
        if self.p <= 3.0 - 2.0 * self.kappa:
            raise ConfigurationError(
                f"need p > 3 - 2 kappa = {3 - 2 * self.kappa}, got p={self.p}"
            )

    @property
    def alpha(self) -> float:
        return (self.p + self.kappa - 2.0) / (self.p - 1.0)

    @property
    def gamma(self) -> float:
        return 1.0 - self.alpha


@dataclasses.dataclass
class PathTrace:
    """The continuity-path record, states ordered by descending t."""

    grid: SphereGrid
    phi: PotentialField
    omega: MetricState
    phi1: PotentialField
    states: list[PathState]
    iminusj: np.ndarray
    sup_norms: np.ndarray
    osc_to_end: np.ndarray
    h_sup: np.ndarray
    holder: HolderParams
    t0: float | None = None

    @property
    def ts(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def complete(self) -> bool:
        return bool(self.states) and self.states[-1].t == 0.0

    def state_at(self, t: float) -> PathState:
        k = int(np.argmin(np.abs(self.ts - t)))
        return self.states[k]


def default_t_grid(n_points: int = 65) -> np.ndarray:
    """Descending grid on [0, 1] clustered at t = 1 (sine spacing)."""
    if n_points < 3:
        raise ConfigurationError("need at least 3 path points")
    k = np.arange(n_points)
    return np.sin(np.pi * k / (2 * (n_points - 1)))[::-1].copy()


def sector_indices(parity: str, max_degree: int) -> np.ndarray:
    if parity == "even":
        return np.arange(0, max_degree + 1, 2)
    return np.arange(0, max_degree + 1)


def endpoint_t1(phi: PotentialField, omega: MetricState) -> PathState:
    """The exact t = 1 state: phi_1 = -phi + c, c from the h normalization."""
    phi1 = -phi + omega.normalization
    residual = _residual_nodes(1.0, phi1, phi, omega)
    return PathState(1.0, phi1, float(np.max(np.abs(residual))), 0)


def _residual_nodes(
    t: float, phi_t: PotentialField, phi: PotentialField, omega: MetricState
) -> np.ndarray:
    # e^{h_omega} rho_omega = e^{c - phi} exactly, which sidesteps the
    # log/exp round trip through rho.
    grid = omega.grid
    exponent = omega.normalization - phi.values - t * phi_t.values
    return omega.rho.values + laplacian(phi_t).values - np.exp(exponent)


def solve_at_t(
    t: float,
    guess: PotentialField,
    phi: PotentialField,
    omega: MetricState,
    grid: SphereGrid | None = None,
    tol: float = DEFAULT_TOL,
) -> PathState:
    """Damped-Newton solve of the path equation at a single t.

    The linear systems use a dense factorization in the Legendre-Galerkin
    basis restricted to the active parity sector.  At t = 0 the constant mode
    is excluded from the unknowns and fixed afterwards by the continuity
    normalization mean(phi_0 * rho_0) = 0.  A condition estimate above 1e12
    raises SingularLinearization; in the full (mixed-parity) sector at t = 1
    this is the expected signature of the degree-1 kernel of lap + 1.
    """
    grid = grid or omega.grid
    parity = "even" if (phi.parity == "even" and guess.parity == "even") else "mixed"
    sector = sector_indices(parity, grid.max_degree)
    if t == 0.0:
        sector = sector[sector != 0]

    coeffs = guess.coeffs.copy()
    phi_t = PotentialField.from_coeffs(grid, coeffs, parity)
    rho_t = omega.rho.values + laplacian(phi_t).values
    if np.min(rho_t) <= 0.0:
        raise ConeBoundary(t, float(np.min(rho_t)))

    residual = _residual_nodes(t, phi_t, phi, omega)
    res_sup = float(np.max(np.abs(residual)))
    _check_conditioning(t, phi_t, phi, omega, grid, sector)
    iters = 0
    while res_sup > tol:
        if iters >= _MAX_NEWTON:
            raise NewtonDiverged(t, res_sup, iters)
        jac = _jacobian(t, phi_t, phi, omega, grid, sector)
        rhs = -(grid.analysis @ residual)[sector]
        step = np.linalg.solve(jac, rhs)
        accepted = False
        cone_blocked = True
        alpha = 1.0
        for _ in range(_MAX_HALVINGS):
            trial = coeffs.copy()
            trial[sector] += alpha * step
            cand = PotentialField.from_coeffs(grid, trial, parity)
            rho_cand = omega.rho.values + laplacian(cand).values
            if np.min(rho_cand) <= 0.0:
                alpha *= 0.5
                continue
            cone_blocked = False
            r_cand = _residual_nodes(t, cand, phi, omega)
            if np.max(np.abs(r_cand)) < res_sup:
                coeffs, phi_t, residual = trial, cand, r_cand
                res_sup = float(np.max(np.abs(r_cand)))
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            if cone_blocked:
                raise ConeBoundary(t, float(np.min(rho_cand)))
            raise NewtonDiverged(t, res_sup, iters)
        iters += 1
    if t == 0.0:
        rho0 = omega.rho.values + laplacian(phi_t).values
        shift = grid.mean(phi_t.values * rho0)
        phi_t = phi_t - shift
        residual = _residual_nodes(t, phi_t, phi, omega)
        res_sup = float(np.max(np.abs(residual)))
    return PathState(float(t), phi_t, res_sup, iters)


def _jacobian(t, phi_t, phi, omega, grid, sector):
    exponent = omega.normalization - phi.values - t * phi_t.values
    weight = t * np.exp(exponent)
    mult = grid.analysis[sector] @ (weight[:, None] * grid.synthesis[:, sector])
    return np.diag(-grid.minus_lap_eigs[sector]) + mult


def _check_conditioning(t, phi_t, phi, omega, grid, sector):
    jac = _jacobian(t, phi_t, phi, omega, grid, sector)
    cond = np.linalg.cond(jac)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise SingularLinearization(t, cond)


def trace_path(
    phi: PotentialField,
    t_grid: np.ndarray | None = None,
    grid: SphereGrid | None = None,
    tol: float = DEFAULT_TOL,
    holder: HolderParams | None = None,
) -> PathTrace:
    """March the path from the exact t = 1 endpoint down the given t grid.

    The predictor is the previous solution (secant extrapolation once two
    states exist).  Solver failures raise ContinuationError carrying the
    partial trace and the failing t.
    """
    grid = grid or phi.grid
    if phi.parity != "even":
        raise ConfigurationError(
            "trace_path needs an even-parity potential (invariant sector); "
            "odd/mixed fields hit the degree-1 kernel at t = 1"
        )
    if holder is None:
        holder = _default_holder()
    if t_grid is None:
        t_grid = default_t_grid()
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid[0] != 1.0 or np.any(np.diff(t_grid) >= 0.0):
        raise ConfigurationError("t grid must descend from exactly 1.0")

    omega = metric_from_potential(phi, grid)
    states = [endpoint_t1(phi, omega)]
    for t in t_grid[1:]:
        if len(states) >= 2:
            s1, s2 = states[-1], states[-2]
            slope = (t - s1.t) / (s1.t - s2.t)
            guess = s1.phi_t + slope * (s1.phi_t - s2.phi_t)
            rho_guess = omega.rho.values + laplacian(guess).values
            if np.min(rho_guess) <= 0.0:
                guess = s1.phi_t
        else:
            guess = states[-1].phi_t
        try:
            states.append(solve_at_t(float(t), guess, phi, omega, grid, tol))
        except (NewtonDiverged, ConeBoundary, SingularLinearization) as exc:
            partial = _assemble_trace(grid, phi, omega, states, holder)
            raise ContinuationError(float(t), partial, exc) from exc
    trace = _assemble_trace(grid, phi, omega, states, holder)
    trace.t0 = compute_t0(trace, holder)
    return trace


def _default_holder() -> HolderParams:
    from .constants import FROZEN

    return HolderParams(d_threshold=FROZEN.d_threshold)


def _assemble_trace(grid, phi, omega, states, holder) -> PathTrace:
    phi1 = states[0].phi_t
    iminusj = np.array([dirichlet_energy(s.phi_t) / 2.0 for s in states])
    sup_norms = np.array([s.phi_t.sup() for s in states])
    osc_to_end = np.array([(s.phi_t - phi1).osc() for s in states])
    h_sup = np.array(
        [metric_from_potential(phi + s.phi_t, grid).h_sup for s in states]
    )
    return PathTrace(
        grid=grid,
        phi=phi,
        omega=omega,
        phi1=phi1,
        states=list(states),
        iminusj=iminusj,
        sup_norms=sup_norms,
        osc_to_end=osc_to_end,
        h_sup=h_sup,
        holder=holder,
    )


# ---------------------------------------------------------------------------
# identities and diagnostics along a trace


@dataclasses.dataclass(frozen=True)
class DingReport:
    """Residuals of the energy identity F = integral of (I-J) dt."""

    f_value: float
    integral: float
    identity_residual: float
    interior_ts: np.ndarray
    interior_residuals: np.ndarray


def ding_identity_check(trace: PathTrace) -> DingReport:
    """Check F(phi) = int_0^1 (I-J)(phi_t) dt and the running-mean identity.

    The running-mean identity, checked at every interior grid t, is

        -mean(phi_t * rho_{phi_t}) = (I-J)(phi_t) - (1/t) int_0^t (I-J) ds.
    """
    if not trace.complete:
        raise IncompleteTrace("ding_identity_check needs a trace reaching t = 0")
    grid = trace.grid
    ke = kahler_einstein_background(grid)
    f_value = functional_report(trace.phi, ke).ding_f
    ts = trace.ts[::-1]  # ascending
    vals = trace.iminusj[::-1]
    integral = float(simpson(vals, x=ts))
    running = CubicSpline(ts, vals).antiderivative()
    interior_ts, interior_res = [], []
    for k, state in enumerate(trace.states):
        t = state.t
        if t in (0.0, 1.0):
            continue
        rho_t = trace.omega.rho.values + laplacian(state.phi_t).values
        lhs = -grid.mean(state.phi_t.values * rho_t)
        rhs = trace.iminusj[k] - float(running(t)) / t
        interior_ts.append(t)
        interior_res.append(abs(lhs - rhs))
    return DingReport(
        f_value=f_value,
        integral=integral,
        identity_residual=abs(f_value - integral),
        interior_ts=np.array(interior_ts),
        interior_residuals=np.array(interior_res),
    )


def monotonicity_violation(trace: PathTrace) -> float:
    """Most negative consecutive increment of (I-J) along ascending t."""
    diffs = np.diff(trace.iminusj[::-1])
    return float(np.min(diffs, initial=0.0))


def window_values(trace: PathTrace, holder: HolderParams) -> np.ndarray:
    """g(t) = (1-t)^{1-alpha} (1 + 2 (1-t) ||phi_t||)^alpha on the trace grid."""
    a = holder.alpha
    one_minus_t = 1.0 - trace.ts
    return one_minus_t ** (1.0 - a) * (1.0 + 2.0 * one_minus_t * trace.sup_norms) ** a


def compute_t0(trace: PathTrace, holder: HolderParams | None = None) -> float | None:
    """Largest grid-bracketed root of g(t) = D, by bisection on interpolated g.

    Returns None when g < D on the whole grid (the certificate then uses
    t = 1/2).  Brackets are scanned from t = 1 leftward and the leftmost
    crossing inside the winning bracket is taken.
    """
    holder = holder or trace.holder
    d = holder.d_threshold
    if d is None:
        d = _default_holder().d_threshold
    ts = trace.ts  # descending from 1
    g = window_values(trace, holder)
    if np.all(g < d):
        return None
    bracket = None
    for k in range(len(ts) - 1):
        lo, hi = g[k], g[k + 1]  # ts[k] > ts[k+1]
        if (lo - d) * (hi - d) <= 0.0 and not (lo == d and hi == d):
            bracket = k
            break
    if bracket is None:
        return None
    t_hi, t_lo = ts[bracket], ts[bracket + 1]
    g_hi, g_lo = g[bracket], g[bracket + 1]

    def interp(t):
        w = (t - t_lo) / (t_hi - t_lo)
        return g_lo + w * (g_hi - g_lo)

    lo_t, hi_t = t_lo, t_hi
    for _ in range(200):
        mid = 0.5 * (lo_t + hi_t)
        # keep the leftmost crossing: move right only when still below D
        if (interp(mid) - d) * (interp(lo_t) - d) > 0.0:
            lo_t = mid
        else:
            hi_t = mid
        if hi_t - lo_t < 1e-14:
            break
    return float(0.5 * (lo_t + hi_t))


def endpoint_gap_margins(trace: PathTrace, t0: float | None = None) -> list[tuple[float, float]]:
    """Margins of ||phi_1 - phi_t|| <= 100 (1-t) ||phi_t|| + 1 for t >= t0."""
    cut = trace.t0 if t0 is None else t0
    if cut is None:
        raise ConfigurationError("endpoint_gap_margins needs a threshold time")
    rows = []
    for k, state in enumerate(trace.states):
        if state.t < cut:
            continue
        lhs = (trace.phi1 - state.phi_t).sup()
        rhs = 100.0 * (1.0 - state.t) * trace.sup_norms[k] + 1.0
        rows.append((state.t, rhs - lhs))
    return rows


# ---------------------------------------------------------------------------
# certificates


@dataclasses.dataclass(frozen=True)
class FractionalCertificate:
    """Step toward F >= A J^gamma - B through the oscillation window."""

    t_cert: float
    used_fallback_half: bool
    f_value: float
    j_value: float
    osc_phi: float
    window_margins: np.ndarray     # F - (1-t)(J - osc(phi_t - phi_1)) per grid t
    mtk_lhs: float
    mtk_rhs: float
    mtk_margin: float
    c1: float
    c2: float
    alpha: float


def fractional_certificate(trace: PathTrace, holder=None, constants=None) -> FractionalCertificate:
    from .constants import FROZEN

    constants = constants or FROZEN
    holder = holder or trace.holder
    grid = trace.grid
    ke = kahler_einstein_background(grid)
    rep = functional_report(trace.phi, ke)
    f_value, j_value = rep.ding_f, rep.aubin_j
    one_minus_t = 1.0 - trace.ts
    window = (one_minus_t / COMPLEX_DIM) * (j_value - trace.osc_to_end)
    margins = f_value - window
    t0 = trace.t0
    fallback = t0 is None
    t_cert = 0.5 if fallback else t0
    alpha = holder.alpha
    rhs = constants.c2 * j_value / (2.0 * rep.osc + 2.0) ** alpha - (
        2.0 / COMPLEX_DIM
    ) * constants.c1
    return FractionalCertificate(
        t_cert=t_cert,
        used_fallback_half=fallback,
        f_value=f_value,
        j_value=j_value,
        osc_phi=rep.osc,
        window_margins=margins,
        mtk_lhs=f_value,
        mtk_rhs=rhs,
        mtk_margin=f_value - rhs,
        c1=constants.c1,
        c2=constants.c2,
        alpha=alpha,
    )


@dataclasses.dataclass(frozen=True)
class LinearCertificate:
    """Bounded-oscillation mechanism on [1/2, 1] toward F >= A J - B."""

    ts: np.ndarray
    k_ratios: np.ndarray           # osc(phi_t - phi_1) / (J(phi_t - phi_1) + 1)
    k_max: float
    shift_margins: np.ndarray      # n(1-t) osc(phi_t - phi_1) - F(phi_t - phi_1)
    t_prime: float | None
    j_at_t_prime: float
    k_used: float
    gamma: float
    a_gamma: float


def linear_certificate(trace: PathTrace, k_est: float | None = None, constants=None) -> LinearCertificate:
    """Evaluate the bounded-oscillation chain on the grid points in [1/2, 1].

    Reports the empirical K(t), the margin of
    F(phi_t - phi_1) <= n (1-t) osc(phi_t - phi_1), and the balance time t'
    solving n K (1-t') J(phi_{t'} - phi_1)^{1-gamma} = A_gamma / 2 when a
    grid-interpolated root exists (else the t = 1/2 bound applies).
    """
    from .constants import FROZEN

    constants = constants or FROZEN
    if not trace.states or trace.states[-1].t > 0.5:
        raise IncompleteTrace("linear_certificate needs the trace to cover [1/2, 1]")
    grid = trace.grid
    ke = kahler_einstein_background(grid)
    ts, k_ratios, margins, j_shift = [], [], [], []
    for k, state in enumerate(trace.states):
        if state.t < 0.5:
            continue
        shift = state.phi_t - trace.phi1
        rep = functional_report(shift, ke)
        o = trace.osc_to_end[k]
        ts.append(state.t)
        k_ratios.append(o / (rep.aubin_j + 1.0))
        margins.append(COMPLEX_DIM * (1.0 - state.t) * o - rep.ding_f)
        j_shift.append(rep.aubin_j)
    ts = np.array(ts)
    k_ratios = np.array(k_ratios)
    margins = np.array(margins)
    j_shift = np.array(j_shift)
    k_used = float(np.max(k_ratios)) if k_est is None else k_est
    gamma = constants.gamma
    balance = COMPLEX_DIM * k_used * (1.0 - ts) * j_shift ** (1.0 - gamma) - constants.a_gamma / 2.0
    t_prime = _bracketed_root(ts, balance)
    if t_prime is None:
        j_at = float(j_shift[np.argmin(np.abs(ts - 0.5))])
    else:
        j_at = float(np.interp(t_prime, ts[::-1], j_shift[::-1]))
    return LinearCertificate(
        ts=ts,
        k_ratios=k_ratios,
        k_max=float(np.max(k_ratios)),
        shift_margins=margins,
        t_prime=t_prime,
        j_at_t_prime=j_at,
        k_used=k_used,
        gamma=gamma,
        a_gamma=constants.a_gamma,
    )


def _bracketed_root(ts_desc: np.ndarray, vals: np.ndarray) -> float | None:
    for k in range(len(ts_desc) - 1):
        a, b = vals[k], vals[k + 1]
        if a == 0.0:
            return float(ts_desc[k])
        if a * b < 0.0:
            t_hi, t_lo = ts_desc[k], ts_desc[k + 1]
            for _ in range(200):
                mid = 0.5 * (t_lo + t_hi)
                v = np.interp(mid, [t_lo, t_hi], [b, a])
                if v * a > 0.0:
                    t_hi = mid
                else:
                    t_lo = mid
                if t_hi - t_lo < 1e-14:
                    break
            return float(0.5 * (t_lo + t_hi))
    return None


# ---------------------------------------------------------------------------
# per-state invariants


@dataclasses.dataclass(frozen=True)
class PathInvariantReport:
    monotonicity_min_increment: float
    sign_change_ok: bool
    h_bound_margins: np.ndarray    # 2(1-t)||phi_t|| + tol - ||h_{omega_{phi_t}}||
    residual_max: float


def path_invariant_report(trace: PathTrace, tol: float = 1e-8) -> PathInvariantReport:
    sign_ok = all(
        np.min(s.phi_t.values) < 1e-10 and np.max(s.phi_t.values) > -1e-10
        for s in trace.states
    )
    h_margins = 2.0 * (1.0 - trace.ts) * trace.sup_norms + tol - trace.h_sup
    return PathInvariantReport(
        monotonicity_min_increment=monotonicity_violation(trace),
        sign_change_ok=sign_ok,
        h_bound_margins=h_margins,
        residual_max=float(max(s.residual_sup for s in trace.states)),
    )


def normalization_residuals(trace: PathTrace) -> np.ndarray:
    """mean((t phidot_t + phi_t) rho_{phi_t}) at interior states, O(dt^2).

    phidot is a centered (three-point, nonuniform) difference in t.
    """
    grid = trace.grid
    out = []
    for k in range(1, len(trace.states) - 1):
        prev_s, state, next_s = trace.states[k - 1], trace.states[k], trace.states[k + 1]
        h1 = state.t - prev_s.t
        h2 = next_s.t - state.t
        # nonuniform centered derivative
        w_prev = -h2 / (h1 * (h1 + h2))
        w_mid = (h2 - h1) / (h1 * h2)
        w_next = h1 / (h2 * (h1 + h2))
        phidot = (
            w_prev * prev_s.phi_t.values
            + w_mid * state.phi_t.values
            + w_next * next_s.phi_t.values
        )
        rho_t = trace.omega.rho.values + laplacian(state.phi_t).values
        out.append(
            grid.mean((state.t * phidot + state.phi_t.values) * rho_t)
        )
    return np.array(out)
