"""Generating functions of NBW counts.

    B^_z(k)     = (1 - z^2) / (1 + (m-1) z^2 - m z D^(k))
    B^_z^j(k)   = (1 - z exp(i k.x_j)) / (1 + (m-1) z^2 - m z D^(k))

``B^_z^j`` is the generating function of walks whose first step is not ``j``.
The relation to the simple random walk Green's function
``C^_mu(k) = 1 / (1 - mu D^(k))`` is ``B^_z = (1-z^2)/(1+(m-1)z^2) C^_{mu_z}``
with ``mu_z = m z / (1 + (m-1) z^2)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .lattice import StepSet, step_transform
from .spectral import phase_diagonal, reversal_matrix

POLE_TOL = 1e-14
MAX_TERMS = 10**4


class PoleError(ZeroDivisionError):
    def __init__(self, denominator: complex):
        super().__init__(f"evaluation at a pole: |denominator| = {abs(denominator):.3e}")
        self.denominator = denominator


@dataclass(frozen=True)
class GreensEvaluation:
    z: complex
    k: np.ndarray
    value: complex
    directed_values: np.ndarray
    analytic_continuation: bool


def _denominator(m: int, z: complex, dhat: float) -> complex:
    den = 1 + (m - 1) * z * z - m * z * dhat
    if abs(den) <= POLE_TOL:
        raise PoleError(den)
    return den


def in_convergence_disc(m: int, z: complex) -> bool:
    return abs(z) * (m - 1) < 1


def greens_hat(step_set: StepSet, z: complex, k) -> complex:
    m = step_set.degree
    return (1 - z * z) / _denominator(m, z, step_transform(step_set, k))


def greens_directed(step_set: StepSet, z: complex, k) -> np.ndarray:
    m = step_set.degree
    den = _denominator(m, z, step_transform(step_set, k))
    return (1 - z * phase_diagonal(step_set, k)) / den


def evaluate(step_set: StepSet, z: complex, k) -> GreensEvaluation:
    k = np.asarray(k, dtype=float)
    return GreensEvaluation(
        complex(z), k, complex(greens_hat(step_set, z, k)), greens_directed(step_set, z, k),
        not in_convergence_disc(step_set.degree, z),
    )


def mu_z(m: int, z: complex) -> complex:
    return m * z / (1 + (m - 1) * z * z)


def srw_greens(step_set: StepSet, mu: complex, k) -> complex:
    den = 1 - mu * step_transform(step_set, k)
    if abs(den) <= POLE_TOL:
        raise PoleError(den)
    return 1 / den


def srw_relation(step_set: StepSet, z: complex, k) -> complex:
    """Right-hand side ``(1-z^2)/(1+(m-1)z^2) C^_{mu_z}(k)``."""
    m = step_set.degree
    return (1 - z * z) / (1 + (m - 1) * z * z) * srw_greens(step_set, mu_z(m, z), k)


def vector_identity_rhs(step_set: StepSet, z: complex, k) -> complex:
    """``1 + z 1^T D[-k] B_vec_z(k)``, which equals ``B^_z(k)``."""
    phases = phase_diagonal(step_set, k)
    return 1 + z * np.sum(np.conj(phases) * greens_directed(step_set, z, k))


def resolvent_check(step_set: StepSet, z: complex, k) -> float:
    """Max entry of ``[I + z D[k] J]^{-1} - (I - z D[k] J)/(1 - z^2)``."""
    m = step_set.degree
    DJ = np.diag(phase_diagonal(step_set, k)) @ reversal_matrix(step_set)
    eye = np.eye(m)
    lhs = np.linalg.inv(eye + z * DJ)
    rhs = (eye - z * DJ) / (1 - z * z)
    return float(np.max(np.abs(lhs - rhs)))


def series_coefficients(step_set: StepSet, k, N: int, normalized: bool = False, exact: bool = False):
    """Taylor coefficients ``b^_0(k), ..., b^_N(k)`` of ``B^_z(k)``.

    Long division of ``1 - z^2`` by the quadratic denominator gives
    ``c_0 = 1``, ``c_1 = m D^``, ``c_2 = m^2 D^^2 - m`` and then
    ``c_n = m D^ c_{n-1} - (m-1) c_{n-2}``.

    ``normalized`` divides by ``m (m-1)^(n-1)`` on the fly so that large ``N``
    stays in range.  ``exact`` runs the recurrence in rationals; ``k`` must then
    give a rational ``D^`` (e.g. ``k = 0``) and is passed through ``Fraction``.
    """
    if not 0 <= N <= MAX_TERMS:
        raise ValueError(f"N must lie in [0, {MAX_TERMS}]")
    m = step_set.degree
    dhat = step_transform(step_set, k)
    if exact:
        dhat = Fraction(dhat).limit_denominator(10**6)
        out = [Fraction(1), m * dhat, m * m * dhat * dhat - m]
        for _ in range(3, N + 1):
            out.append(m * dhat * out[-1] - (m - 1) * out[-2])
        out = out[: N + 1]
        if normalized:
            out = [c / (1 if n == 0 else m * (m - 1) ** (n - 1)) for n, c in enumerate(out)]
        return out
    if not normalized:
        c = [1.0, m * dhat, m * m * dhat * dhat - m]
        for _ in range(3, N + 1):
            c.append(m * dhat * c[-1] - (m - 1) * c[-2])
        return np.array(c[: N + 1], dtype=complex)
    # p_n = c_n / (m (m-1)^(n-1)):  p_n = (m/(m-1)) D^ p_{n-1} - p_{n-2}/(m-1)  for n >= 3
    q = m - 1
    p = [1.0, dhat, (m * dhat * dhat - 1) / q]
    for _ in range(3, N + 1):
        p.append(m / q * dhat * p[-1] - p[-2] / q)
    return np.array(p[: N + 1], dtype=complex)
