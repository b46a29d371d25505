"""Potential-family generators for sweeps.

Three seeded families live here:

* ``even_legendre`` -- circle-invariant, even-parity potentials (the
  invariant sector where the linear energy inequality is expected to hold).
  Shapes are drawn as random symmetric density droplets and converted to
  potentials, which makes the draws cone-efficient: generic random Legendre
  coefficients waste almost their entire positivity budget on high-degree
  oscillation and cap out near J ~ 1e-2.
* ``mobius`` -- pullbacks of the round metric under axis dilations.  These
  are the equality cases of the sharp Moser-Trudinger bound: F = 0 while J
  grows like 2*log(a), so no linear lower bound with positive slope can hold
  on this (non-invariant) family.
* ``bump`` -- localized single-bump potentials of either sign, used to mix
  parities when testing the F >= 0 floor.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import ConfigurationError, TargetUnreachable
from .functionals import dirichlet_energy
from .geometry import (
    PotentialField,
    SphereGrid,
    inverse_laplacian,
    laplacian,
)

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclasses.dataclass(frozen=True)
class FamilySpec:
    """What to generate: family kind, size, seed and amplitude policy.

    Exactly one of ``amplitudes`` (cone-fraction multipliers in [0, 1]) or
    ``target_j`` (a (lo, hi) range of Dirichlet targets, log-spaced over the
    family) should be given.  even_legendre uses only even degrees >= 2, so
    members have zero projection on the eigenvalue-1 space; mobius members
    are circle-invariant but not even.
    """

    kind: str
    seed: int = 0
    size: int = 1
    degree_cap: int = 32
    amplitudes: tuple[float, ...] | None = None
    target_j: tuple[float, float] | None = None
    cone_margin: float = 0.05

    def __post_init__(self):
        if self.kind not in ("even_legendre", "mobius", "bump", "perp_lambda"):
            raise ConfigurationError(f"unknown family kind {self.kind!r}")
        if self.amplitudes is not None and self.target_j is not None:
            raise ConfigurationError("give amplitudes or target_j, not both")


def golden_section_minimize(f, lo: float, hi: float, iters: int = 120) -> float:
    """Deterministic golden-section minimizer on [lo, hi]."""
    a, b = float(lo), float(hi)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
        if b - a < 1e-15 * max(1.0, abs(b)):
            break
    return 0.5 * (a + b)


def max_cone_scale(shape: PotentialField, cone_margin: float) -> float:
    """Largest s with min(1 + s * lap(shape)) >= cone_margin."""
    lap_min = float(np.min(laplacian(shape).values))
    if lap_min >= 0.0:
        return np.inf
    return (1.0 - cone_margin) / (-lap_min)


def rescale_to_target_j(
    shape: PotentialField, target: float, cone_margin: float
) -> PotentialField:
    """Scale a shape to hit a Dirichlet target J inside the cone.

    J(s * shape) = s^2 J(shape) is located by golden-section search on
    [0, s_max]; raises TargetUnreachable when even s_max falls short.
    """
    j_unit = dirichlet_energy(shape) / 2.0
    if target == 0.0 or j_unit == 0.0:
        if target > 0.0:
            raise TargetUnreachable(target, 0.0)
        return 0.0 * shape
    s_max = max_cone_scale(shape, cone_margin)
    if not np.isfinite(s_max):
        s_max = np.sqrt(target / j_unit) * 2.0
    j_max = s_max**2 * j_unit
    if j_max < target * (1.0 - 1e-9):
        raise TargetUnreachable(target, j_max)
    s = golden_section_minimize(
        lambda s: abs(s * s * j_unit - target), 0.0, s_max
    )
    return s * shape


# ---------------------------------------------------------------------------
# mobius family


def mobius_potential(grid: SphereGrid, a: float) -> PotentialField:
    """Potential of the round metric pulled back by the axis dilation z -> a z.

    In mu = cos(theta) the stereographic radius satisfies
    r^2 = (1 + mu)/(1 - mu) and the potential reduces to the stable form

        phi_a(mu) = 2 log( ((1 - mu) + a^2 (1 + mu)) / (2a) ),

    normalized symmetrically (phi_a(-1) = -2 log a, phi_a(1) = 2 log a).
    The pulled-back area density is rho_a = 4 a^2 / ((1-mu) + a^2(1+mu))^2.
    """
    if a < 1.0:
        raise ConfigurationError(f"dilation parameter must satisfy a >= 1, got {a}")
    mu = grid.mu
    denom = (1.0 - mu) + a * a * (1.0 + mu)
    vals = 2.0 * (np.log(denom) - np.log(2.0 * a))
    parity = "even" if a == 1.0 else "mixed"
    phi = PotentialField.from_values(grid, vals, parity)
    _validate_mobius(grid, phi, a)
    return phi


def mobius_density(grid: SphereGrid, a: float) -> np.ndarray:
    mu = grid.mu
    denom = (1.0 - mu) + a * a * (1.0 + mu)
    return 4.0 * a * a / denom**2


def _validate_mobius(grid: SphereGrid, phi: PotentialField, a: float) -> None:
    vol = grid.mean(mobius_density(grid, a))
    if abs(vol - 1.0) > 1e-10:
        raise ConfigurationError(
            f"grid N={grid.n_nodes} cannot resolve the a={a} dilation "
            f"(volume defect {vol - 1.0:.3e}); increase N"
        )
    rho_min = float(np.min(1.0 + laplacian(phi).values))
    if rho_min <= 0.0:
        raise ConfigurationError(
            f"projected a={a} potential leaves the cone at N={grid.n_nodes} "
            f"(min density {rho_min:.3e}); increase N"
        )


def gen_mobius(grid: SphereGrid, a_values) -> list[PotentialField]:
    return [mobius_potential(grid, a) for a in a_values]


# ---------------------------------------------------------------------------
# even_legendre family


def _droplet_shape(grid: SphereGrid, rng: np.random.Generator, degree_cap: int) -> PotentialField:
    """Random even shape potential from a symmetric density draw.

    A few Gaussian bumps in mu (mirrored to enforce even parity, biased
    toward the poles where concentration buys the most energy) are projected
    onto even Legendre degrees 2..degree_cap and inverted through the
    Laplacian.  The result is mean-free with exactly zero odd coefficients.
    """
    mu = grid.mu
    n_bumps = int(rng.integers(1, 4))
    density = np.zeros_like(mu)
    for _ in range(n_bumps):
        center = 1.0 - rng.uniform(0.0, 0.6) ** 2  # polar bias
        width = rng.uniform(3.0 / degree_cap, 0.35)
        height = rng.uniform(0.3, 1.0)
        density += height * (
            np.exp(-0.5 * ((mu - center) / width) ** 2)
            + np.exp(-0.5 * ((mu + center) / width) ** 2)
        )
    bumps = PotentialField.from_values(grid, density, "even")
    coeffs = bumps.coeffs.copy()
    coeffs[0] = 0.0
    coeffs[degree_cap + 1 :] = 0.0
    source = PotentialField.from_coeffs(grid, coeffs, "even")
    return inverse_laplacian(source)


def make_even_member(
    spec: FamilySpec, grid: SphereGrid, index: int
) -> tuple[PotentialField, dict]:
    """Generate member ``index`` of an even_legendre family.

    Returns (field, meta); raises TargetUnreachable when the requested J
    exceeds what the cone and the degree cap permit for this draw.
    """
    if spec.degree_cap > grid.max_degree:
        raise ConfigurationError("degree_cap exceeds the grid truncation degree")
    rng = np.random.default_rng([spec.seed, index])
    shape = _droplet_shape(grid, rng, spec.degree_cap)
    meta = {"index": index, "kind": spec.kind}
    if spec.target_j is not None:
        target = _member_target(spec, index)
        meta["j_target"] = target
        phi = rescale_to_target_j(shape, target, spec.cone_margin)
    else:
        frac = 1.0 if spec.amplitudes is None else spec.amplitudes[index % len(spec.amplitudes)]
        s_max = max_cone_scale(shape, spec.cone_margin)
        phi = (frac * s_max) * shape
        meta["cone_fraction"] = frac
    return phi, meta


def _member_target(spec: FamilySpec, index: int) -> float:
    lo, hi = spec.target_j
    if spec.size == 1:
        return lo
    return float(np.geomspace(lo, hi, spec.size)[index])


def gen_even_legendre(spec: FamilySpec, grid: SphereGrid) -> list[PotentialField]:
    return [make_even_member(spec, grid, k)[0] for k in range(spec.size)]


# ---------------------------------------------------------------------------
# bump family (mixed parity, for the F >= 0 floor)


def make_bump_member(
    spec: FamilySpec, grid: SphereGrid, index: int
) -> tuple[PotentialField, dict]:
    rng = np.random.default_rng([spec.seed, 7919 + index])
    center = rng.uniform(-0.9, 0.9)
    width = rng.uniform(3.0 / spec.degree_cap, 0.5)
    sign = 1.0 if rng.uniform() < 0.5 else -1.0
    vals = np.exp(-0.5 * ((grid.mu - center) / width) ** 2)
    coeffs = grid.to_coeffs(vals)
    coeffs[spec.degree_cap + 1 :] = 0.0
    coeffs[0] = 0.0
    shape = sign * PotentialField.from_coeffs(grid, coeffs, "mixed")
    frac = rng.uniform(0.1, 0.95)
    if spec.amplitudes is not None:
        frac = spec.amplitudes[index % len(spec.amplitudes)]
    phi = (frac * max_cone_scale(shape, spec.cone_margin)) * shape
    return phi, {"index": index, "kind": spec.kind, "cone_fraction": frac}


# ---------------------------------------------------------------------------
# exploratory: circle-invariant, orthogonal to the eigenvalue-1 space but
# not even.  No inequality is asserted on this family; it exists to probe the
# open orthogonality question.


def make_perp_lambda_member(
    spec: FamilySpec, grid: SphereGrid, index: int
) -> tuple[PotentialField, dict]:
    rng = np.random.default_rng([spec.seed, 104729 + index])
    coeffs = np.zeros(grid.max_degree + 1)
    for ell in range(2, spec.degree_cap + 1):
        coeffs[ell] = rng.normal() / (1.0 + ell) ** 2
    shape = PotentialField.from_coeffs(grid, coeffs, "mixed")
    frac = rng.uniform(0.1, 0.9)
    phi = (frac * max_cone_scale(shape, spec.cone_margin)) * shape
    return phi, {"index": index, "kind": spec.kind, "cone_fraction": frac}


_MEMBER_MAKERS = {
    "even_legendre": make_even_member,
    "bump": make_bump_member,
    "perp_lambda": make_perp_lambda_member,
}


def make_member(spec: FamilySpec, grid: SphereGrid, index: int):
    """Dispatch to the family-specific member generator."""
    if spec.kind == "mobius":
        a_values = spec.amplitudes or (1, 2, 4, 8, 16, 32)
        a = a_values[index % len(a_values)]
        return mobius_potential(grid, a), {"index": index, "kind": "mobius", "a": a}
    return _MEMBER_MAKERS[spec.kind](spec, grid, index)
