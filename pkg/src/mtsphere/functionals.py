"""Energy functionals on potentials: Dirichlet energy, Aubin I/J, Ding F.

On the sphere (complex dimension n = 1) the Aubin functionals collapse to
the Dirichlet energy:

    I(phi) = E(phi) = mean(phi * (-lap phi)),   J(phi) = E(phi) / 2,

independently of the background metric in the class, so I = 2J exactly.
The Ding functional against a background metric omega keeps its full form

    F_omega(phi) = J(phi) - mean(phi * rho_omega)
                   - log(mean(e^{h_omega - phi} * rho_omega)).
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import NotInKahlerCone
from .geometry import (
    COMPLEX_DIM,
    MetricState,
    PotentialField,
    SphereGrid,
    laplacian,
    metric_from_potential,
)


@dataclasses.dataclass(frozen=True)
class FunctionalReport:
    """One functional evaluation; serializes to a single CSV row."""

    tag: str
    aubin_i: float
    aubin_j: float
    ding_f: float
    ding_f0: float
    mean_term: float
    log_term: float
    osc: float

    def csv_row(self):
        return (
            self.tag,
            self.aubin_i,
            self.aubin_j,
            self.ding_f,
            self.ding_f0,
            self.mean_term,
            self.log_term,
            self.osc,
        )


def dirichlet_energy(phi: PotentialField) -> float:
    """E(phi) = mean(phi * (-lap phi)) >= 0, evaluated spectrally."""
    grid = phi.grid
    ell = np.arange(grid.max_degree + 1)
    # mean(P_l^2) = 1/(2l+1)
    return float(np.sum(grid.minus_lap_eigs * phi.coeffs**2 / (2 * ell + 1)))


def dirichlet_pairing(f: PotentialField, g: PotentialField) -> float:
    """Bilinear form mean(f * (-lap g)), symmetric in (f, g)."""
    grid = f.grid
    ell = np.arange(grid.max_degree + 1)
    return float(np.sum(grid.minus_lap_eigs * f.coeffs * g.coeffs / (2 * ell + 1)))


def _require_cone(phi: PotentialField, background: MetricState) -> None:
    rho = background.rho.values + laplacian(phi).values
    m = float(np.min(rho))
    if m <= 0.0:
        raise NotInKahlerCone(m, "background + phi leaves the cone")


def energy_i_j(phi: PotentialField, background: MetricState) -> tuple[float, float]:
    """The Aubin energies (I, J) = (E, E/2) of phi against the background."""
    _require_cone(phi, background)
    e = dirichlet_energy(phi)
    return e, e / 2.0


def i_crosscheck_residual(phi: PotentialField, background: MetricState) -> float:
    """|spectral I - quadrature mean(phi*(rho_bg - rho_{bg+phi}))|.

    The two expressions agree by integration by parts; the residual is pure
    quadrature/aliasing error and should be at roundoff level for
    band-limited fields.
    """
    _require_cone(phi, background)
    grid = phi.grid
    diff = -laplacian(phi).values  # rho_bg - rho_{bg+phi}
    quad = grid.mean(phi.values * diff)
    return abs(dirichlet_energy(phi) - quad)


def log_mean_exp(grid: SphereGrid, exponent: np.ndarray, density: np.ndarray) -> float:
    """log(mean(e^exponent * density)) with the max subtracted for stability."""
    peak = float(np.max(exponent))
    return peak + float(np.log(grid.mean(np.exp(exponent - peak) * density)))


def functional_report(
    phi: PotentialField, background: MetricState, tag: str = ""
) -> FunctionalReport:
    """Full functional evaluation of phi against a background metric."""
    _require_cone(phi, background)
    grid = phi.grid
    e = dirichlet_energy(phi)
    j = e / 2.0
    mean_term = grid.mean(phi.values * background.rho.values)
    log_term = log_mean_exp(
        grid,
        background.ricci_potential.values - phi.values,
        background.rho.values,
    )
    f = j - mean_term - log_term
    return FunctionalReport(
        tag=tag,
        aubin_i=e,
        aubin_j=j,
        ding_f=f,
        ding_f0=j - mean_term,
        mean_term=mean_term,
        log_term=log_term,
        osc=phi.osc(),
    )


def ding_f(phi: PotentialField, background: MetricState) -> float:
    return functional_report(phi, background).ding_f


@dataclasses.dataclass(frozen=True)
class CocycleResidual:
    f: float
    f0: float


def cocycle_residual(
    phi1: PotentialField, phi2: PotentialField, background: MetricState
) -> CocycleResidual:
    """|F(phi1+phi2) - F(phi1) - F_{omega_{phi1}}(phi2)|, and the same for F0.

    Both cocycle identities hold analytically; the residuals measure
    quadrature error only.
    """
    shifted = metric_from_potential(background.potential + phi1, background.grid)
    whole = functional_report(phi1 + phi2, background)
    first = functional_report(phi1, background)
    second = functional_report(phi2, shifted)
    return CocycleResidual(
        f=abs(whole.ding_f - first.ding_f - second.ding_f),
        f0=abs(whole.ding_f0 - first.ding_f0 - second.ding_f0),
    )


def osc(phi: PotentialField) -> float:
    """Oscillation max - min over collocation nodes."""
    return phi.osc()


def oscillation_bound_triple(
    phi0: PotentialField, phi1: PotentialField, background: MetricState
) -> tuple[float, float, float]:
    """(|J(phi1)-J(phi0)|, |(I-J)(phi1)-(I-J)(phi0)|, osc(phi1-phi0)).

    The caller asserts lhs_J <= rhs and lhs_IJ <= n * rhs with n = 1.
    """
    _require_cone(phi0, background)
    _require_cone(phi1, background)
    e0 = dirichlet_energy(phi0)
    e1 = dirichlet_energy(phi1)
    lhs_j = abs(e1 - e0) / 2.0
    lhs_ij = abs(e1 - e0) / 2.0  # I - J = J at n = 1
    return lhs_j, lhs_ij, (phi1 - phi0).osc()


def sandwich_gap(report: FunctionalReport) -> float:
    """|I - 2J| / max(1, I); collapses to zero at n = 1."""
    return abs(report.aubin_i - 2.0 * report.aubin_j) / max(1.0, report.aubin_i)


N_DEPENDENT_OSC_FACTOR = COMPLEX_DIM  # the I-J continuity bound carries n * osc
