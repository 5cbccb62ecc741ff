"""Transition-matrix algebra of the non-backtracking walk in Fourier space.

The ``m x m`` matrix ``A[k] = (C - J) D[-k]`` propagates the per-direction
transforms: ``b_vec_n(k) = A[k]^n 1`` and ``b^_n(k) = 1^T D[-k] b_vec_{n-1}(k)``.
Its two k-dependent eigenvalues solve ``lam^2 = m D^(k) lam - (m - 1)``; every
other eigenvalue is ``+1`` or ``-1``.

Quantities that grow like ``(m-1)^n`` are carried either as ratios against
``b^_n(0) = m (m-1)^(n-1)`` or as :class:`Scaled` mantissa/exponent pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space

from .lattice import StepSet, step_transform, step_transform_many

DEGENERATE_RTOL = 1e-7
ZERO_SUM_TOL = 1e-12


def degenerate_tolerance(m: int) -> float:
    """Eigenvalue gap below which the confluent (Jordan) formulas are used."""
    return DEGENERATE_RTOL * max(m - 1, 1)


# -- matrices ----------------------------------------------------------------

def phase_diagonal(step_set: StepSet, k) -> np.ndarray:
    """Diagonal of ``D[k]``: ``exp(i k.x)`` for each step ``x``."""
    k = np.asarray(k, dtype=float)
    return np.exp(1j * (step_set.array @ k))


def reversal_matrix(step_set: StepSet) -> np.ndarray:
    m = step_set.degree
    J = np.zeros((m, m))
    J[np.arange(m), step_set.reversal] = 1.0
    return J


@dataclass(frozen=True)
class TransitionMatrix:
    order: int
    entries: np.ndarray
    wave: np.ndarray


def build_matrix(step_set: StepSet, k) -> TransitionMatrix:
    """``A[k] = (C - J) D[-k]``; entry ``(a, b)`` is ``exp(-i k.x_b)`` unless ``b`` reverses ``a``."""
    k = np.asarray(k, dtype=float)
    m = step_set.degree
    mask = np.ones((m, m)) - reversal_matrix(step_set)
    entries = mask * np.conj(phase_diagonal(step_set, k))[None, :]
    return TransitionMatrix(m, entries, k.copy())


# -- dominant eigenvalues ------------------------------------------------------

@dataclass(frozen=True)
class SpectralPair:
    lambda_plus: complex
    lambda_minus: complex
    degenerate: bool
    discriminant: float
    step_hat: float

    @property
    def gap(self) -> complex:
        return self.lambda_plus - self.lambda_minus


def _roots(dhat, m):
    """Roots ``F_pm(x; m) = (m x ± sqrt((m x)^2 - 4(m-1))) / 2`` (principal branch)."""
    dhat = np.asarray(dhat, dtype=float)
    disc = (m * dhat) ** 2 - 4.0 * (m - 1)
    root = np.sqrt(disc.astype(complex))
    return (m * dhat + root) / 2, (m * dhat - root) / 2, disc


def pair_from_step_hat(dhat: float, m: int) -> SpectralPair:
    lp, lm, disc = _roots(dhat, m)
    lp, lm = complex(lp), complex(lm)
    return SpectralPair(lp, lm, abs(lp - lm) <= degenerate_tolerance(m), float(disc), float(dhat))


def dominant_eigenvalues(step_set: StepSet, k) -> SpectralPair:
    return pair_from_step_hat(step_transform(step_set, k), step_set.degree)


# -- eigenbasis ----------------------------------------------------------------

@dataclass(frozen=True)
class EigenBasis:
    """Right eigenvectors of ``A[k]`` as columns of ``vectors``.

    In the degenerate case ``lambda_+ = lambda_-`` the column at
    ``generalized`` is the all-ones vector, which satisfies
    ``A 1 = v(1) + lambda 1`` rather than an eigen-equation.
    """

    values: np.ndarray
    vectors: np.ndarray
    labels: tuple[str, ...]
    degenerate: bool = False
    generalized: int | None = None

    def residuals(self, matrix: np.ndarray) -> np.ndarray:
        """Relative residuals ``|A v - lam v| / |v|`` (generalized relation for the Jordan column)."""
        out = np.empty(len(self.values))
        for j, lam in enumerate(self.values):
            v = self.vectors[:, j]
            r = matrix @ v - lam * v
            if j == self.generalized:
                r = r - self.vectors[:, 0]
            out[j] = np.linalg.norm(r) / np.linalg.norm(v)
        return out


def _dominant_vector(lam, phases):
    return lam * np.ones_like(phases) - phases


def _sign_family(step_set: StepSet, k, sign: int):
    """Eigenvectors of ``A[k]`` for eigenvalue ``-sign``.

    Built from ``u = e^{ik_i} e_i + sign * e_{-i}``, which satisfies
    ``J D[-k] u = sign * u``.  A ``u`` with zero coordinate sum is annihilated
    by ``C D[-k]`` and is an eigenvector on its own; the remaining ones are
    combined pairwise against the first of them so that the sums cancel.
    """
    d, m = step_set.dim, step_set.degree
    us, sums = [], []
    for i in range(1, d + 1):
        u = np.zeros(m, dtype=complex)
        u[step_set.direction(i)] = np.exp(1j * k[i - 1])
        u[step_set.direction(-i)] = sign
        us.append(u)
        sums.append(u.sum())
    zero = [i for i in range(d) if abs(sums[i]) <= ZERO_SUM_TOL]
    rest = [i for i in range(d) if abs(sums[i]) > ZERO_SUM_TOL]
    vecs = [us[i] for i in zero]
    if rest:
        rho = rest[0]
        vecs += [us[rho] * sums[i] - us[i] * sums[rho] for i in rest[1:]]
    return vecs


def eigenbasis(step_set: StepSet, k) -> EigenBasis:
    """Complete eigensystem of ``A[k]``.

    Nearest-neighbour sets with ``d >= 2`` use explicit constructions: the
    dominant pair ``v = lam 1 - D[k] 1`` and the ``(d-1)``-fold ``±1``
    eigenspaces built from the reversal-pair vectors, including the branches
    where some ``k_i`` is ``0`` (eigenvalue +1) or ``pi`` (eigenvalue -1).
    Other step sets take the ``±1`` eigenspaces from a dense null-space
    computation.
    """
    k = np.asarray(k, dtype=float)
    m = step_set.degree
    pair = dominant_eigenvalues(step_set, k)
    phases = phase_diagonal(step_set, k)
    if not (step_set.is_nearest_neighbor and step_set.dim >= 2):
        return _dense_eigenbasis(step_set, k, pair, phases)

    lp, lm = pair.lambda_plus, pair.lambda_minus
    vp = _dominant_vector(lp, phases)
    vm = _dominant_vector(lm, phases)
    minus_family = _sign_family(step_set, k, +1)   # eigenvalue -1
    plus_family = _sign_family(step_set, k, -1)    # eigenvalue +1
    scale = math.sqrt(m) * max(1.0, abs(lp))
    # At k = 0 (resp. k = pi-vector) lambda_- = 1 (resp. lambda_+ = -1) and the
    # dominant construction vanishes; the family then has one spare vector.
    if np.linalg.norm(vm) <= 1e-12 * scale and len(plus_family) == step_set.dim:
        vm = plus_family.pop(0)
    if np.linalg.norm(vp) <= 1e-12 * scale and len(minus_family) == step_set.dim:
        vp = minus_family.pop(0)

    if pair.degenerate:
        lam = (lp + lm) / 2
        first = [_dominant_vector(lam, phases), np.ones(m, dtype=complex)]
        values = [lam, lam]
        labels = ["+1", "generalized"]
        generalized = 1
    else:
        first = [vp, vm]
        values = [lp, lm]
        labels = ["+1", "-1"]
        generalized = None
    vectors = first + minus_family + plus_family
    values += [-1.0] * len(minus_family) + [1.0] * len(plus_family)
    labels += [f"{i}" for i in range(2, 2 + len(minus_family))]
    labels += [f"-{i}" for i in range(2, 2 + len(plus_family))]
    return EigenBasis(np.array(values, dtype=complex), np.column_stack(vectors), tuple(labels),
                      pair.degenerate, generalized)


def _dense_eigenbasis(step_set, k, pair, phases):
    m = step_set.degree
    A = build_matrix(step_set, k).entries
    values, vectors, labels = [], [], []
    lp, lm = pair.lambda_plus, pair.lambda_minus
    tol = 1e-9
    if pair.degenerate:
        lam = (lp + lm) / 2
        vectors += [_dominant_vector(lam, phases), np.ones(m, dtype=complex)]
        values += [lam, lam]
        labels += ["+1", "generalized"]
        generalized = 1
    else:
        generalized = None
        for lam, lab in ((lp, "+1"), (lm, "-1")):
            if abs(lam - 1) > tol and abs(lam + 1) > tol:
                vectors.append(_dominant_vector(lam, phases))
                values.append(lam)
                labels.append(lab)
    eye = np.eye(m)
    for sigma in (-1.0, 1.0):
        basis = null_space(A - sigma * eye, rcond=1e-10)
        for j in range(basis.shape[1]):
            vectors.append(basis[:, j])
            values.append(sigma)
            labels.append(f"{'+' if sigma > 0 else '-'}null{j}")
    return EigenBasis(np.array(values, dtype=complex), np.column_stack(vectors), tuple(labels),
                      pair.degenerate, generalized)


# -- b^_n(k) ---------------------------------------------------------------------

def _ratio(dhat, m: int, n: int):
    """``b^_n / b^_n(0)`` from the closed form, vectorised over ``dhat``."""
    dhat = np.asarray(dhat, dtype=float)
    if n == 0:
        return np.ones(dhat.shape, dtype=complex)
    if n == 1:
        return dhat.astype(complex)
    lp, lm, _ = _roots(dhat, m)
    q = m - 1
    mp, mm = lp / q, lm / q
    gap = lp - lm
    degenerate = np.abs(gap) <= degenerate_tolerance(m)
    safe_gap = np.where(degenerate, 1.0, gap)
    closed = (dhat * q * (mp ** n - mm ** n) - (mp ** (n - 1) - mm ** (n - 1))) / safe_gap
    mu = (mp + mm) / 2
    confluent = n * dhat * mu ** (n - 1) - (n - 1) * mu ** (n - 2) / q
    return np.where(degenerate, confluent, closed)


def bn_ratio(step_set: StepSet, k, n: int) -> complex:
    """Characteristic function ``b^_n(k) / b^_n(0)`` of the ``n``-step endpoint."""
    if n < 0:
        raise ValueError("n must be non-negative")
    return complex(_ratio(step_transform(step_set, k), step_set.degree, n))


def bn_ratio_many(step_set: StepSet, ks, n: int) -> np.ndarray:
    return _ratio(step_transform_many(step_set, ks), step_set.degree, n)


def total_count(m: int, n: int) -> int:
    """Number of ``n``-step NBWs, ``m (m-1)^(n-1)`` (1 for ``n = 0``)."""
    return 1 if n == 0 else m * (m - 1) ** (n - 1)


def bn_hat(step_set: StepSet, k, n: int) -> complex:
    """Fourier transform ``b^_n(k) = sum_x b_n(x) exp(i k.x)``.

    Overflows to ``inf`` once ``(m-1)^n`` leaves double range; use
    :func:`bn_ratio` for large ``n``.
    """
    m = step_set.degree
    try:
        norm = float(total_count(m, n))
    except OverflowError:
        norm = math.inf
    return bn_ratio(step_set, k, n) * norm


def bn_vec(step_set: StepSet, k, n: int) -> np.ndarray:
    """Per-direction transforms ``b_vec_n(k) = A[k]^n 1``.

    ``b_vec_n = [(l+^(n+1) - l-^(n+1)) 1 - (l+^n - l-^n) D[k] 1] / (l+ - l-)``, and in
    the confluent case ``(n+1) l^n 1 - n l^(n-1) D[k] 1``.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    m = step_set.degree
    ones = np.ones(m, dtype=complex)
    if n == 0:
        return ones
    pair = dominant_eigenvalues(step_set, k)
    phases = phase_diagonal(step_set, k)
    lp, lm = pair.lambda_plus, pair.lambda_minus
    if pair.degenerate:
        lam = (lp + lm) / 2
        return (n + 1) * lam ** n * ones - n * lam ** (n - 1) * phases
    gap = lp - lm
    return ((lp ** (n + 1) - lm ** (n + 1)) * ones - (lp ** n - lm ** n) * phases) / gap


# -- matrix powers ---------------------------------------------------------------

@dataclass(frozen=True)
class Scaled:
    """Value ``mantissa * base**exponent``."""

    mantissa: np.ndarray
    exponent: int
    base: int

    def value(self) -> np.ndarray:
        return self.mantissa * float(self.base) ** self.exponent


def _power_apply(matrix: np.ndarray, n: int, vector: np.ndarray) -> np.ndarray:
    out = np.asarray(vector, dtype=complex).copy()
    base = matrix.astype(complex)
    while n:
        if n & 1:
            out = base @ out
        n >>= 1
        if n:
            base = base @ base
    return out


def matrix_power_apply(step_set: StepSet, k, n: int, vector) -> Scaled:
    """``A[k]^n v`` by repeated squaring of ``A[k] / (m-1)``; returns a :class:`Scaled`."""
    if n < 0:
        raise ValueError("n must be non-negative")
    q = max(step_set.degree - 1, 1)
    A = build_matrix(step_set, k).entries / q
    return Scaled(_power_apply(A, n, vector), n, q)


def _segments(n: int, breakpoints) -> list[int]:
    ts = [float(t) for t in breakpoints]
    if not ts or any(b <= a for a, b in zip([0.0] + ts, ts)) or ts[-1] > 1 + 1e-12:
        raise ValueError(f"breakpoints must satisfy 0 < t_1 < ... < t_N <= 1, got {ts}")
    marks = [0] + [math.floor(t * n + 1e-9) for t in ts]
    seg = [b - a for a, b in zip(marks, marks[1:])]
    if any(s < 1 for s in seg):
        raise ValueError(f"every segment needs at least one step; got lengths {seg} for n={n}")
    return seg


def fdd_char_function(step_set: StepSet, n: int, breakpoints, waves) -> complex:
    """Joint characteristic function of the increments of a uniform ``n``-step NBW.

    ``E[exp(i sum_r k_r . (w_{floor(t_r n)} - w_{floor(t_{r-1} n)}))]`` evaluated as
    ``1^T D[-k_1] A(k_1)^(eta_1 - 1) prod_r A(k_r)^eta_r 1`` over the total count.
    Steps after ``floor(t_N n)`` are unconstrained and cancel.
    """
    waves = [np.asarray(w, dtype=float) for w in waves]
    if len(waves) != len(breakpoints):
        raise ValueError("need one wave per breakpoint")
    seg = _segments(n, breakpoints)
    m = step_set.degree
    q = max(m - 1, 1)
    vec = np.ones(m, dtype=complex)
    for r in range(len(seg) - 1, 0, -1):
        vec = _power_apply(build_matrix(step_set, waves[r]).entries / q, seg[r], vec)
    vec = _power_apply(build_matrix(step_set, waves[0]).entries / q, seg[0] - 1, vec)
    return complex(np.conj(phase_diagonal(step_set, waves[0])) @ vec / m)


# -- bounds ------------------------------------------------------------------------

def eigenvalue_bound(step_set: StepSet, k) -> float:
    """``max(1/sqrt(m-1), |D^(k)|)``, which dominates ``|b^_n(k)| / b^_n(0)`` to the power ``n-1``."""
    m = step_set.degree
    return max(1.0 / math.sqrt(m - 1), abs(step_transform(step_set, k)))


def eigenvalue_bound_many(step_set: StepSet, ks) -> np.ndarray:
    m = step_set.degree
    return np.maximum(1.0 / math.sqrt(m - 1), np.abs(step_transform_many(step_set, ks)))


def dominant_modulus_bound(dhat: float, m: int) -> float:
    """Upper bound on ``max(|lambda_+|, |lambda_-|)``.

    ``sqrt(m-1)`` (attained) in the complex regime; otherwise the tangent bound of
    the concave root ``F_+`` at ``x = 1``, applied to ``|D^|``:
    ``(m-1)[1 - (1 - |D^|) m / (m-2)]``.  For ``D^ < 0`` the larger root is
    ``lambda_-``, and ``|lambda_+| = F_-(|D^|)`` lies in ``[1, sqrt(m-1)]``.
    """
    disc = (m * dhat) ** 2 - 4 * (m - 1)
    if disc <= 0:
        return math.sqrt(m - 1)
    return (m - 1) * (1 - (1 - abs(dhat)) * m / (m - 2))


def lambda_plus_bound_printed(dhat: float, m: int) -> float:
    """Case bound on ``|lambda_+|`` as published; its third case (``D^ <= 0``, real roots)
    understates ``|lambda_+| = F_-(|D^|) >= 1`` and is kept for comparison only."""
    disc = (m * dhat) ** 2 - 4 * (m - 1)
    if disc <= 0:
        return math.sqrt(m - 1)
    if dhat >= 0:
        return (m - 1) * (1 - (1 - dhat) * m / (m - 2))
    return 1.0
