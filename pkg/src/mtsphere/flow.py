"""Normalized Kahler-Ricci flow used as a unit-time smoother.

From a background metric eta_0 = rho_0 * omega_round with Ricci potential
h_0, the flow potential u(s) solves

    du/ds = log((rho_0 + lap u) / rho_0) + u - h_0,     u(0) = 0,

integrated by adaptive implicit midpoint (A-stable; the +u term is unstable
and the log-Laplacian is stiff, so explicit schemes would need tiny steps
near the positivity boundary).  Along the flow h_s = -du/ds + c_s is the
Ricci potential of eta_s, with c_s fixed by mean(e^{h_s} rho_s) = 1 and
c_0 = 0.

The runtime-checked estimates live here too: the supremum bounds
||du/ds|| <= e^s ||h_0|| and sup(|h_s|^2 + s |grad h_s|_s^2) <= 4 e^{2s}
||h_0||^2, the extremal Laplacian bound min(e^{-s} lap_s h_s) >= min(lap_0
h_0), the unit-time decay ratio for the centered h_1, and the smoothing
construction psi_t = phi_1 - phi_t - u_t - a_t with its norm checks.

One flow trace is built sequentially; flows for different path states are
independent and safe to run concurrently.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from numpy.polynomial import legendre as npleg

from .errors import NotInKahlerCone, PositivityCollapse, StiffnessBailout
from .functionals import dirichlet_energy, log_mean_exp
from .geometry import (
    COMPLEX_DIM,
    SPHERE_AREA,
    MetricState,
    PotentialField,
    SphereGrid,
    gradient_norm_sq,
    laplacian,
    metric_from_potential,
)

_E = float(np.e)


@dataclasses.dataclass(frozen=True)
class FlowPolicy:
    err_per_unit: float = 1e-8
    ds_init: float = 1.0 / 32.0
    ds_max: float = 0.25
    ds_min: float = 1e-12
    max_steps: int = 100_000
    newton_tol: float = 1e-12
    fixed_steps: int | None = None

    def halved(self) -> "FlowPolicy":
        """Policy for step-halving self-convergence reruns."""
        return dataclasses.replace(
            self,
            ds_init=self.ds_init / 2.0,
            ds_max=self.ds_max / 2.0,
            err_per_unit=self.err_per_unit / 8.0,
            fixed_steps=None if self.fixed_steps is None else 2 * self.fixed_steps,
        )


@dataclasses.dataclass
class FlowTrace:
    grid: SphereGrid
    background: MetricState
    s_grid: np.ndarray
    u: list[PotentialField]
    udot: list[PotentialField]
    h_s: list[PotentialField]
    c_s: np.ndarray

    @property
    def u_final(self) -> PotentialField:
        return self.u[-1]

    def rho_at(self, k: int) -> np.ndarray:
        return self.background.rho.values + laplacian(self.u[k]).values


class _StepReject(Exception):
    """Internal: positivity guard tripped or the implicit solve stalled."""


def _flow_rhs(u_vals, lap_u_vals, background: MetricState) -> np.ndarray:
    rho_s = background.rho.values + lap_u_vals
    if np.min(rho_s) <= 0.0:
        raise _StepReject
    return (
        np.log(rho_s / background.rho.values)
        + u_vals
        - background.ricci_potential.values
    )


def _implicit_midpoint_step(
    coeffs: np.ndarray,
    ds: float,
    background: MetricState,
    grid: SphereGrid,
    sector: np.ndarray,
    parity: str,
    newton_tol: float,
) -> np.ndarray:
    """One implicit-midpoint step in coefficient space; raises _StepReject."""
    synth = grid.synthesis
    u_vals = synth @ coeffs
    lap_u = synth @ (-grid.minus_lap_eigs * coeffs)
    g0 = _flow_rhs(u_vals, lap_u, background)
    v = coeffs.copy()
    v[sector] += ds * (grid.analysis @ g0)[sector]  # explicit predictor
    eigs_s = -grid.minus_lap_eigs[sector]
    for _ in range(12):
        mid = 0.5 * (coeffs + v)
        mid_vals = synth @ mid
        lap_mid = synth @ (-grid.minus_lap_eigs * mid)
        rho_mid = background.rho.values + lap_mid
        if np.min(rho_mid) <= 0.0:
            raise _StepReject
        g_mid = _flow_rhs(mid_vals, lap_mid, background)
        resid_c = v - coeffs - ds * (grid.analysis @ g_mid)
        resid_sup = float(np.max(np.abs(synth @ resid_c)))
        if resid_sup <= newton_tol:
            # final positivity check at the step endpoint
            if np.min(background.rho.values + synth @ (-grid.minus_lap_eigs * v)) <= 0.0:
                raise _StepReject
            return v
        kernel = grid.analysis[sector] @ (
            (1.0 / rho_mid)[:, None] * (synth[:, sector] * eigs_s[None, :])
        )
        jac = np.eye(sector.size) - 0.5 * ds * (kernel + np.eye(sector.size))
        dv = np.linalg.solve(jac, -resid_c[sector])
        v = v.copy()
        v[sector] += dv
    raise _StepReject


def flow(
    background: MetricState, s_end: float = 1.0, policy: FlowPolicy | None = None
) -> FlowTrace:
    """Integrate the flow from u = 0 to s_end and fill the h_s record.

    Adaptive mode uses step doubling (accept when the Richardson error
    estimate stays below err_per_unit * ds); any step whose density loses
    positivity is halved.  fixed_steps forces a uniform grid (used by the
    self-convergence checks).
    """
    policy = policy or FlowPolicy()
    grid = background.grid
    parity = background.potential.parity
    parity = "even" if parity == "even" else "mixed"
    sector = np.arange(0, grid.max_degree + 1, 2 if parity == "even" else 1)

    coeffs = np.zeros(grid.max_degree + 1)
    s_list = [0.0]
    u_list = [PotentialField.zero(grid)]
    udot_list = [-1.0 * background.ricci_potential]

    def record(s, c):
        u_field = PotentialField.from_coeffs(grid, c, parity)
        g = _flow_rhs(u_field.values, laplacian(u_field).values, background)
        s_list.append(s)
        u_list.append(u_field)
        udot_list.append(PotentialField.from_values(grid, g, parity))

    if policy.fixed_steps is not None:
        ds = s_end / policy.fixed_steps
        s = 0.0
        for _ in range(policy.fixed_steps):
            try:
                coeffs = _implicit_midpoint_step(
                    coeffs, ds, background, grid, sector, parity, policy.newton_tol
                )
            except _StepReject:
                raise PositivityCollapse(
                    f"fixed-step flow lost positivity at s={s:.6f}"
                ) from None
            s += ds
            record(s, coeffs)
    else:
        s = 0.0
        ds = min(policy.ds_init, policy.ds_max, s_end)
        steps = 0
        while s < s_end - 1e-14:
            if steps > policy.max_steps:
                raise StiffnessBailout(f"flow exceeded {policy.max_steps} steps")
            ds = min(ds, policy.ds_max, s_end - s)
            try:
                one = _implicit_midpoint_step(
                    coeffs, ds, background, grid, sector, parity, policy.newton_tol
                )
                half = _implicit_midpoint_step(
                    coeffs, ds / 2, background, grid, sector, parity, policy.newton_tol
                )
                two = _implicit_midpoint_step(
                    half, ds / 2, background, grid, sector, parity, policy.newton_tol
                )
            except _StepReject:
                ds *= 0.5
                if ds < policy.ds_min:
                    raise PositivityCollapse(
                        f"flow step collapsed below {policy.ds_min} at s={s:.6f}"
                    ) from None
                steps += 1
                continue
            err = float(np.max(np.abs(grid.synthesis @ (two - one)))) / 3.0
            budget = policy.err_per_unit * ds
            if err <= budget:
                coeffs = two
                s += ds
                record(s, coeffs)
            factor = 0.9 * np.sqrt(budget / err) if err > 0.0 else 2.0
            ds = ds * float(np.clip(factor, 0.25, 2.0))
            steps += 1

    trace = FlowTrace(
        grid=grid,
        background=background,
        s_grid=np.array(s_list),
        u=u_list,
        udot=udot_list,
        h_s=[],
        c_s=np.zeros(len(s_list)),
    )
    return h_along_flow(trace)


def h_along_flow(trace: FlowTrace) -> FlowTrace:
    """Fill h_s = -du/ds + c_s with c_s from mean(e^{h_s} rho_s) = 1."""
    grid = trace.grid
    h_fields = []
    cs = np.zeros(len(trace.s_grid))
    for k in range(len(trace.s_grid)):
        rho_s = trace.rho_at(k)
        minus_udot = -trace.udot[k].values
        cs[k] = -log_mean_exp(grid, minus_udot, rho_s)
        h_fields.append(
            PotentialField.from_values(grid, minus_udot + cs[k], trace.udot[k].parity)
        )
    trace.h_s = h_fields
    trace.c_s = cs
    return trace


# ---------------------------------------------------------------------------
# runtime-checked flow estimates


@dataclasses.dataclass(frozen=True)
class FlowBoundsReport:
    """Margins (bound minus observed) of the maximum-principle flow bounds."""

    s_grid: np.ndarray
    h0_sup: float
    udot_margins: np.ndarray       # e^s ||h0|| - ||udot_s||
    energy_margins: np.ndarray     # 4 e^{2s} ||h0||^2 - sup(|h_s|^2 + s |grad h_s|_s^2)
    laplacian_margins: np.ndarray  # min(e^{-s} lap_s h_s) - min(lap_0 h_0), extremal
    laplacian_pointwise: np.ndarray  # pointwise variant, logged but not asserted
    c_margins: np.ndarray          # e^s ||h0|| - |c_s|


def flow_bounds_margins(trace: FlowTrace) -> FlowBoundsReport:
    grid = trace.grid
    bg = trace.background
    h0 = bg.ricci_potential
    h0_sup = h0.sup()
    lap0_h0 = laplacian(h0).values / bg.rho.values
    lap0_min = float(np.min(lap0_h0))
    n_s = len(trace.s_grid)
    udot_m = np.zeros(n_s)
    energy_m = np.zeros(n_s)
    lap_m = np.zeros(n_s)
    lap_pw = np.zeros(n_s)
    c_m = np.zeros(n_s)
    for k, s in enumerate(trace.s_grid):
        rho_s_vals = trace.rho_at(k)
        rho_s = PotentialField.from_values(grid, rho_s_vals, trace.u[k].parity)
        h_s = trace.h_s[k]
        udot_m[k] = np.exp(s) * h0_sup - trace.udot[k].sup()
        grad_sq = gradient_norm_sq(h_s, rho_s, grid).values
        energy = np.max(h_s.values**2 + s * grad_sq)
        energy_m[k] = 4.0 * np.exp(2 * s) * h0_sup**2 - energy
        lap_s_h = laplacian(h_s).values / rho_s_vals
        lap_m[k] = float(np.min(np.exp(-s) * lap_s_h)) - lap0_min
        lap_pw[k] = float(np.min(np.exp(-s) * lap_s_h - lap0_h0))
        c_m[k] = np.exp(s) * h0_sup - abs(trace.c_s[k])
    return FlowBoundsReport(
        s_grid=trace.s_grid,
        h0_sup=h0_sup,
        udot_margins=udot_m,
        energy_margins=energy_m,
        laplacian_margins=lap_m,
        laplacian_pointwise=lap_pw,
        c_margins=c_m,
    )


@dataclasses.dataclass(frozen=True)
class SmoothingDecayReport:
    """Unit-time decay of the centered Ricci potential v = h_1 - mean_1(h_1)."""

    v_sup: float
    h0_sup: float
    ratio: float                 # ||v|| / (||h0||^{(p-2)/(p-1)} (1-t)^{1/(p-1)})
    gradient_margin: float       # 2 V n e ||v|| (1-t) - int |grad v|_1^2 eta_1
    lap_bound_margin: float      # n e (1-t) - sup(-lap_1 h_1)
    equivalence_violated: bool
    rho1_min: float
    rho1_max: float


def smoothing_decay_check(
    trace: FlowTrace, t: float, p: float = 6.0, equiv_bound: float = 2.0
) -> SmoothingDecayReport:
    """Check the unit-time decay estimate for a flow started from a path metric.

    Requires the flow background to be a path metric omega_{phi_t} with the
    given t < 1.  The metric-equivalence hypothesis rho_1 in [1/A, A] is
    reported, not fatal, mirroring its role as an assumption.
    """
    grid = trace.grid
    k_end = len(trace.s_grid) - 1
    rho1_vals = trace.rho_at(k_end)
    rho1_min, rho1_max = float(np.min(rho1_vals)), float(np.max(rho1_vals))
    violated = rho1_min < 1.0 / equiv_bound or rho1_max > equiv_bound
    h1 = trace.h_s[k_end]
    mean1 = grid.mean(h1.values * rho1_vals)
    v = h1 - mean1
    v_sup = v.sup()
    h0_sup = trace.background.ricci_potential.sup()
    one_minus_t = 1.0 - t
    if h0_sup == 0.0 or one_minus_t <= 0.0:
        ratio = 0.0
    else:
        ratio = v_sup / (
            h0_sup ** ((p - 2.0) / (p - 1.0)) * one_minus_t ** (1.0 / (p - 1.0))
        )
    # conformal invariance of the Dirichlet integral: int |grad v|_1^2 eta_1
    # equals V * E(v) for any conformal metric
    grad_integral = SPHERE_AREA * dirichlet_energy(v)
    grad_margin = (
        2.0 * SPHERE_AREA * COMPLEX_DIM * _E * v_sup * one_minus_t - grad_integral
    )
    lap1_h1 = laplacian(h1).values / rho1_vals
    lap_bound_margin = COMPLEX_DIM * _E * one_minus_t - float(np.max(-lap1_h1))
    return SmoothingDecayReport(
        v_sup=v_sup,
        h0_sup=h0_sup,
        ratio=ratio,
        gradient_margin=grad_margin,
        lap_bound_margin=lap_bound_margin,
        equivalence_violated=violated,
        rho1_min=rho1_min,
        rho1_max=rho1_max,
    )


# ---------------------------------------------------------------------------
# smoothing construction for a path state


@dataclasses.dataclass(frozen=True)
class SmoothedBounds:
    u_margin: float             # 3 ||h0|| + tol - ||u_t||
    a_margin: float             # 7 (1-t) ||phi_t|| + tol - |a_t|
    ma3_residual: float         # consistency of the two routes to h_smoothed
    exp_mean_residual: float    # |mean(e^psi) - 1|


@dataclasses.dataclass(frozen=True)
class SmoothedState:
    t: float
    u_t: PotentialField
    a_t: float
    psi_t: PotentialField
    h_smoothed: PotentialField
    h0_sup: float
    bounds: SmoothedBounds


def smooth_path_state(
    state,
    phi1: PotentialField,
    omega: MetricState,
    grid: SphereGrid | None = None,
    policy: FlowPolicy | None = None,
    tol: float = 1e-6,
) -> SmoothedState:
    """Run the unit-time flow from omega_{phi_t} and build psi_t.

    psi_t = phi_1 - phi_t - u_t - a_t with a_t fixed by mean(e^{psi_t}) = 1;
    h_smoothed is the Ricci potential of the metric with potential
    phi + phi_t + u_t.  The returned bounds carry the norm checks
    ||u_t|| <= 3 ||h_0|| + tol and |a_t| <= 7 (1-t) ||phi_t|| + tol.
    """
    grid = grid or omega.grid
    phi = -1.0 * phi1 + omega.normalization
    eta0 = metric_from_potential(phi + state.phi_t, grid)
    ftrace = flow(eta0, 1.0, policy)
    u_t = ftrace.u_final
    gap = phi1 - state.phi_t - u_t
    a_t = log_mean_exp(grid, gap.values, np.ones(grid.n_nodes))
    psi = gap - a_t
    smoothed = metric_from_potential(phi + state.phi_t + u_t, grid)
    h_sm = smoothed.ricci_potential
    one_minus_lap_psi = 1.0 - laplacian(psi).values
    if np.min(one_minus_lap_psi) <= 0.0:
        raise NotInKahlerCone(np.min(one_minus_lap_psi), "smoothed potential")
    ma3 = float(
        np.max(np.abs(-np.log(one_minus_lap_psi) + psi.values - h_sm.values))
    )
    exp_mean = abs(grid.mean(np.exp(psi.values)) - 1.0)
    h0_sup = eta0.h_sup
    bounds = SmoothedBounds(
        u_margin=3.0 * h0_sup + tol - u_t.sup(),
        a_margin=7.0 * (1.0 - state.t) * state.phi_t.sup() + tol - abs(a_t),
        ma3_residual=ma3,
        exp_mean_residual=exp_mean,
    )
    return SmoothedState(
        t=state.t,
        u_t=u_t,
        a_t=a_t,
        psi_t=psi,
        h_smoothed=h_sm,
        h0_sup=h0_sup,
        bounds=bounds,
    )


# ---------------------------------------------------------------------------
# Holder quotients along meridians


def conformal_meridian_distances(
    grid: SphereGrid, rho: PotentialField | None, resolution: int = 4096
) -> np.ndarray:
    """Cumulative meridian arc length S(theta_i) for the metric rho * g_round.

    Circle-invariant fields vary only along meridians, so the great-circle
    distance rescaled by sqrt(rho) along the meridian is the exact geodesic
    distance between latitude circles.  Returned per collocation node.
    """
    theta_fine = np.linspace(0.0, np.pi, resolution)
    if rho is None:
        s_fine = theta_fine
    else:
        rho_fine = npleg.legval(np.cos(theta_fine), rho.coeffs)
        if np.min(rho_fine) <= 0.0:
            raise NotInKahlerCone(np.min(rho_fine), "holder distance density")
        integrand = np.sqrt(rho_fine)
        s_fine = np.concatenate(
            ([0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(theta_fine)))
        )
    return np.interp(grid.theta, theta_fine, s_fine)


def stratified_pairs(n_nodes: int, n_pairs: int = 1000) -> list[tuple[int, int]]:
    """Deterministic node pairs stratified by index separation."""
    n_strata = 16
    offsets = np.unique(
        np.geomspace(1, n_nodes - 1, n_strata).astype(int)
    )
    per = max(1, n_pairs // len(offsets))
    pairs = []
    for off in offsets:
        starts = np.linspace(0, n_nodes - 1 - off, per).astype(int)
        pairs.extend((int(i), int(i + off)) for i in np.unique(starts))
    return pairs


def holder_quotient(
    f: PotentialField,
    rho: PotentialField | None,
    kappa: float,
    n_pairs: int = 1000,
) -> float:
    """max over sampled node pairs of |f(x) - f(y)| / d_rho(x, y)^kappa."""
    grid = f.grid
    arc = conformal_meridian_distances(grid, rho)
    best = 0.0
    for i, j in stratified_pairs(grid.n_nodes, n_pairs):
        d = abs(arc[i] - arc[j])
        if d == 0.0:
            continue
        q = abs(f.values[i] - f.values[j]) / d**kappa
        if q > best:
            best = q
    return best


@dataclasses.dataclass(frozen=True)
class SmallnessReport:
    """C^{2,kappa}-style proxy norm of the smoothed potential."""

    sup: float
    lap_sup: float
    lap_holder: float

    @property
    def proxy(self) -> float:
        return self.sup + self.lap_sup + self.lap_holder


def smallness_diagnostic(smoothed: SmoothedState, kappa: float = 0.25) -> SmallnessReport:
    psi = smoothed.psi_t
    lap_psi = laplacian(psi)
    return SmallnessReport(
        sup=psi.sup(),
        lap_sup=lap_psi.sup(),
        lap_holder=holder_quotient(lap_psi, None, kappa),
    )
