"""Spectral discretization of circle-invariant functions on the round 2-sphere.

Fields are functions of mu = cos(theta) represented both by values at
Gauss-Legendre nodes and by Legendre coefficients (Galerkin truncation at
degree L = N - 1).  The sphere is the unit round sphere, area 4*pi, and the
Laplacian used throughout is the complex (dbar-) Laplacian, i.e. half the
real Laplace-Beltrami operator, so that

    area form ratio      omega_phi / omega_round = 1 + lap(phi),
    spectral action      lap: c_l  ->  -l(l+1)/2 * c_l,

and the degree-1 harmonics span the eigenvalue-1 space of -lap.

All types are immutable values after construction and all operations are
pure functions, so everything here is safe to evaluate concurrently.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from numpy.polynomial import legendre as npleg

from .errors import ConfigurationError, NotInKahlerCone

SPHERE_AREA = 4.0 * np.pi  # V for the unit round sphere
COMPLEX_DIM = 1  # n; bounds quote their n-dependence explicitly

_PARITIES = ("even", "odd", "mixed")


@dataclasses.dataclass(frozen=True)
class SphereGrid:
    """Gauss-Legendre collocation grid in mu = cos(theta).

    weights already contain the 2*pi azimuthal factor, so w @ values is an
    area integral over the sphere and w.sum() == 4*pi.  Quadrature is exact
    for polynomials in mu up to degree 2N - 1; the Galerkin truncation degree
    is L = N - 1.
    """

    n_nodes: int
    mu: np.ndarray
    weights: np.ndarray
    max_degree: int
    synthesis: np.ndarray      # S[i, l] = P_l(mu_i)
    analysis: np.ndarray       # c = analysis @ values (exact on band-limited data)
    minus_lap_eigs: np.ndarray  # l(l+1)/2
    grad_factor: np.ndarray    # G[i, l] = (1 - mu^2) * P_l'(mu_i)
    dealias: bool = False

    def integrate(self, values: np.ndarray) -> float:
        return float(self.weights @ values)

    def mean(self, values: np.ndarray) -> float:
        return self.integrate(values) / SPHERE_AREA

    def to_coeffs(self, values: np.ndarray) -> np.ndarray:
        return self.analysis @ values

    def to_values(self, coeffs: np.ndarray) -> np.ndarray:
        return self.synthesis @ coeffs

    @property
    def theta(self) -> np.ndarray:
        return np.arccos(self.mu)


def build_grid(n: int, dealias: bool = False) -> SphereGrid:
    """Build the collocation grid with N nodes.  Requires N >= 8."""
    if n < 8:
        raise ConfigurationError(f"need at least 8 nodes, got {n}")
    mu, w_gl = npleg.leggauss(n)
    weights = 2.0 * np.pi * w_gl
    degree = n - 1
    synthesis = npleg.legvander(mu, degree)
    ell = np.arange(degree + 1)
    analysis = ((2 * ell + 1) / SPHERE_AREA)[:, None] * (synthesis.T * weights)
    eigs = ell * (ell + 1) / 2.0
    # (1 - mu^2) P_l' = l (P_{l-1} - mu P_l); row l = 0 vanishes.
    grad = np.zeros_like(synthesis)
    grad[:, 1:] = ell[1:] * (synthesis[:, :-1] - mu[:, None] * synthesis[:, 1:])
    return SphereGrid(
        n_nodes=n,
        mu=mu,
        weights=weights,
        max_degree=degree,
        synthesis=synthesis,
        analysis=analysis,
        minus_lap_eigs=eigs,
        grad_factor=grad,
        dealias=dealias,
    )


def _combine_parity(a: str, b: str) -> str:
    if a == b:
        return a
    return "mixed"


@dataclasses.dataclass(frozen=True)
class PotentialField:
    """One scalar field on the grid: node values plus Legendre coefficients.

    coeffs is the Galerkin projection of values; the two agree exactly for
    band-limited data.  parity='even' guarantees the odd coefficients are
    exactly zero (enforced at construction).
    """

    grid: SphereGrid
    values: np.ndarray
    coeffs: np.ndarray
    parity: str

    @classmethod
    def from_values(cls, grid: SphereGrid, values, parity: str = "mixed"):
        if parity not in _PARITIES:
            raise ConfigurationError(f"unknown parity {parity!r}")
        values = np.asarray(values, dtype=float)
        coeffs = grid.to_coeffs(values)
        if parity == "even":
            coeffs = coeffs.copy()
            coeffs[1::2] = 0.0
        elif parity == "odd":
            coeffs = coeffs.copy()
            coeffs[0::2] = 0.0
        return cls(grid, values, coeffs, parity)

    @classmethod
    def from_coeffs(cls, grid: SphereGrid, coeffs, parity: str | None = None):
        coeffs = np.asarray(coeffs, dtype=float)
        full = np.zeros(grid.max_degree + 1)
        full[: coeffs.size] = coeffs
        if parity is None:
            parity = _infer_parity(full)
        if parity == "even":
            full[1::2] = 0.0
        elif parity == "odd":
            full[0::2] = 0.0
        return cls(grid, grid.to_values(full), full, parity)

    @classmethod
    def constant(cls, grid: SphereGrid, value: float):
        c = np.zeros(grid.max_degree + 1)
        c[0] = value
        return cls(grid, np.full(grid.n_nodes, float(value)), c, "even")

    @classmethod
    def zero(cls, grid: SphereGrid):
        return cls.constant(grid, 0.0)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def osc(self) -> float:
        return float(np.max(self.values) - np.min(self.values))

    def mean(self) -> float:
        return float(self.coeffs[0])

    def __add__(self, other):
        if isinstance(other, PotentialField):
            return PotentialField(
                self.grid,
                self.values + other.values,
                self.coeffs + other.coeffs,
                _combine_parity(self.parity, other.parity),
            )
        return self._shift(float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, PotentialField):
            return PotentialField(
                self.grid,
                self.values - other.values,
                self.coeffs - other.coeffs,
                _combine_parity(self.parity, other.parity),
            )
        return self._shift(-float(other))

    def __neg__(self):
        return PotentialField(self.grid, -self.values, -self.coeffs, self.parity)

    def __mul__(self, scalar: float):
        s = float(scalar)
        return PotentialField(self.grid, s * self.values, s * self.coeffs, self.parity)

    __rmul__ = __mul__

    def _shift(self, c: float):
        coeffs = self.coeffs.copy()
        coeffs[0] += c
        parity = self.parity if self.parity != "odd" else "mixed"
        return PotentialField(self.grid, self.values + c, coeffs, parity)

    def eval_at(self, mu: np.ndarray) -> np.ndarray:
        """Evaluate the Legendre series at arbitrary mu in [-1, 1]."""
        return npleg.legval(mu, self.coeffs)


def _infer_parity(coeffs: np.ndarray) -> str:
    scale = np.max(np.abs(coeffs))
    if scale == 0.0:
        return "even"
    if np.max(np.abs(coeffs[1::2])) <= 1e-13 * scale:
        return "even"
    if np.max(np.abs(coeffs[0::2])) <= 1e-13 * scale:
        return "odd"
    return "mixed"


def laplacian(phi: PotentialField) -> PotentialField:
    """Complex Laplacian: spectrally c_l -> -l(l+1)/2 c_l."""
    grid = phi.grid
    coeffs = -grid.minus_lap_eigs * phi.coeffs
    return PotentialField(grid, grid.to_values(coeffs), coeffs, phi.parity)


def inverse_laplacian(phi: PotentialField) -> PotentialField:
    """Solve lap(u) = phi on the mean-free sector; u has zero mean."""
    grid = phi.grid
    coeffs = np.zeros_like(phi.coeffs)
    coeffs[1:] = phi.coeffs[1:] / (-grid.minus_lap_eigs[1:])
    return PotentialField(grid, grid.to_values(coeffs), coeffs, phi.parity)


def gradient_norm_sq(
    f: PotentialField, rho: PotentialField | None, grid: SphereGrid
) -> PotentialField:
    """Pointwise |grad f|^2 with respect to the conformal metric rho * g_round.

    Normalized so that mean(|grad f|^2_rho * rho) equals the Dirichlet pairing
    mean(f * (-lap f)); for the round metric (rho = 1) this is
    (1 - mu^2) f'(mu)^2 / 2.  Conformal scaling divides by rho.
    """
    g = (grid.grad_factor @ f.coeffs)  # (1 - mu^2) f'
    base = g * g / (2.0 * (1.0 - grid.mu**2))
    parity = "even" if f.parity in ("even", "odd") else "mixed"
    if rho is not None:
        if np.min(rho.values) <= 0.0:
            raise NotInKahlerCone(np.min(rho.values) - 1.0, "gradient_norm_sq")
        base = base / rho.values
        parity = _combine_parity(parity, "even" if rho.parity == "even" else "mixed")
    return PotentialField.from_values(grid, base, parity)


@dataclasses.dataclass(frozen=True)
class MetricState:
    """A conformal metric rho * omega_round together with its Ricci potential.

    rho = 1 + lap(potential) > 0 everywhere; the Ricci potential is
    h = -log(rho) - potential + c with c chosen so mean(e^h * rho) = 1.
    """

    grid: SphereGrid
    potential: PotentialField
    rho: PotentialField
    ricci_potential: PotentialField
    normalization: float

    @property
    def h_sup(self) -> float:
        return self.ricci_potential.sup()


def metric_from_potential(phi: PotentialField, grid: SphereGrid | None = None) -> MetricState:
    """Build the metric state of omega_round + i/2 ddbar(phi).

    Raises NotInKahlerCone when 1 + lap(phi) fails to be positive at a node.
    """
    grid = grid or phi.grid
    rho_vals = 1.0 + laplacian(phi).values
    rho_min = float(np.min(rho_vals))
    if rho_min <= 0.0:
        raise NotInKahlerCone(rho_min, "metric_from_potential")
    parity = "even" if phi.parity == "even" else "mixed"
    rho = PotentialField.from_values(grid, rho_vals, parity)
    h_raw = -np.log(rho_vals) - phi.values
    # normalize mean(e^h rho) = 1 with the shift computed stably
    peak = float(np.max(h_raw))
    c = -(peak + np.log(grid.mean(np.exp(h_raw - peak) * rho_vals)))
    h = PotentialField.from_values(grid, h_raw + c, parity)
    return MetricState(grid, phi, rho, h, c)


def kahler_einstein_background(grid: SphereGrid) -> MetricState:
    """The round (Kahler-Einstein) background: rho = 1, h = 0."""
    return metric_from_potential(PotentialField.zero(grid), grid)


def potential_from_density(rho_minus_one: PotentialField) -> PotentialField:
    """Invert rho = 1 + lap(phi) on the mean-free sector (phi has zero mean)."""
    return inverse_laplacian(rho_minus_one)
