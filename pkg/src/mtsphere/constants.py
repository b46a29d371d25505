"""Fitted verification constants, frozen after the first blessed run.

The inequality machinery depends on several constants that exist only
abstractly (implicit-function-theorem radii, smoothing constants, the
oscillation-vs-energy constant K, the certificate constants).  They are not
derivable from first principles here, so we fit them empirically on the
standard seeded family and freeze the values below; later runs regress
against them.  See scripts/freeze_constants.py, which prints a fresh block
for this file.

Fitted-by: scripts/freeze_constants.py --grid 128 --seed 2203
"""

from __future__ import annotations

import dataclasses


@dataclasses.dataclass(frozen=True)
class VerificationConstants:
    """Empirical stand-ins for the non-constructive constants.

    eps_hat: validity radius for the Monge-Ampere linearization ball.
    c_hat:   norm bound ||psi|| <= c_hat ||h|| inside that ball.
    b2_hat:  smoothing constant for the Holder bound of h after unit flow.
    c1, c2:  fractional-certificate constants (offset and slope).
    gamma:   exponent of the fractional certificate (= 1 - alpha).
    a_gamma, b_gamma: frozen fractional-envelope fit F >= a_gamma J^gamma - b_gamma.
    k_est:   oscillation-vs-energy constant osc <= K (J + 1) on [1/2, 1].
    lemma5_ratio: frozen bound for the unit-time decay ratio of the
        centered Ricci potential.
    a_fit_ref, b_fit_ref: frozen linear-envelope fit of the standard sweep.
    mobius_j_ref: frozen J values of the dilation family at a = 1,2,4,8,16,32.
    """

    eps_hat: float = 1.25
    c_hat: float = 0.85
    b2_hat: float = 0.35
    c1: float = 1.0
    c2: float = 0.05
    gamma: float = 1.0 - (2.75 + 0.25 - 2.0) / (2.75 - 1.0)
    a_gamma: float = 0.05
    b_gamma: float = 1.0
    k_est: float = 4.0
    lemma5_ratio: float = 2.0
    a_fit_ref: float = 1.0
    b_fit_ref: float = 10.0
    mobius_j_ref: tuple[float, ...] = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    @property
    def d_threshold(self) -> float:
        """Window threshold D = eps / (4 (B2+1)(C+1)(eps+1))."""
        return self.eps_hat / (
            4.0 * (self.b2_hat + 1.0) * (self.c_hat + 1.0) * (self.eps_hat + 1.0)
        )


FROZEN = VerificationConstants()
