"""NBW on finite tori ``(Z/rZ)^d`` and the hypercube ``{0,1}^m``.

Two independent routes to ``p_n(x)``: a dynamic programme over
``(incoming direction, position)`` with modular arithmetic, and the inverse
Fourier transform of ``b^_n(k) / b^_n(0)`` over the dual grid.  On top of
these sit exact uniform mixing times and the closed-form deviation bounds for
the three families ``hamming``, ``nn`` and ``hypercube``.

Uniform mixing time::

    T(xi) = first n such that max_x (p_n(x) + p_{n+1}(x)) / 2 <= (1 + xi) / V
            holds at n and at every later step up to the horizon.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from typing import Iterator

import numpy as np

from .lattice import StepSet, TorusSpec, hamming, hypercube, nearest_neighbor, step_transform_many
from .spectral import _ratio

log = logging.getLogger(__name__)

NEGATIVE_CLAMP = -1e-12
ROUNDOFF_FLOOR = -1e-14
DEFAULT_STATE_CAP = 10**7
HORIZON_FACTOR = 50
FALLBACK_HORIZON = 200
TIE_TOL = 1e-9


class HypothesesUnmet(ValueError):
    """Parameters fall outside the hypotheses of the requested bound."""


class NegativeProbability(ArithmeticError):
    pass


@dataclass(frozen=True)
class TorusDistribution:
    """``p_n`` on a torus; ``probabilities`` has shape ``(r,) * d``.

    Object dtype holding :class:`Fraction` on the exact route, float otherwise.
    """

    spec: TorusSpec
    n: int
    probabilities: np.ndarray
    exact: bool = False

    def __getitem__(self, x):
        return self.probabilities[self.spec.reduce(x)]

    def total(self):
        return self.probabilities.sum()

    def as_float(self) -> np.ndarray:
        return self.probabilities.astype(float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(self.spec.dim)] + ["p"])
        for x in self.spec.points():
            v = self.probabilities[tuple(x)]
            w.writerow(list(map(int, x)) + [_fmt(v)])
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _check_torus(step_set: StepSet, spec: TorusSpec) -> None:
    if step_set.modulus != spec.width or step_set.dim != spec.dim:
        raise ValueError(
            f"step set (dim={step_set.dim}, modulus={step_set.modulus}) does not live on "
            f"T_(r={spec.width}, d={spec.dim})"
        )


def torus_spec_for(step_set: StepSet) -> TorusSpec:
    if step_set.modulus is None:
        raise ValueError("step set has no modulus")
    return TorusSpec(step_set.dim, step_set.modulus)


# -- DP route --------------------------------------------------------------------------

def _layers(step_set: StepSet, nmax: int, exact: bool, cap: int) -> Iterator[np.ndarray]:
    """Yield ``p_0, ..., p_nmax`` as arrays of shape ``(r,) * d``.

    ``P[j][x]``: probability of being at ``x`` having arrived by step ``j``.
    """
    spec = torus_spec_for(step_set)
    m = step_set.degree
    states = m * spec.volume
    if states > cap:
        raise RuntimeError(f"torus DP needs {states} states > cap {cap}")
    axes = tuple(range(spec.dim))
    origin = (0,) * spec.dim
    if exact:
        zero = np.zeros(spec.shape, dtype=object)
        zero[...] = Fraction(0)
        one = Fraction(1)
        first, cont = Fraction(1, m), Fraction(1, m - 1)
    else:
        zero = np.zeros(spec.shape)
        one, first, cont = 1.0, 1.0 / m, 1.0 / (m - 1)
    p0 = zero.copy()
    p0[origin] = one
    yield p0
    if nmax == 0:
        return
    steps = [tuple(int(c) for c in s) for s in step_set.array]
    P = []
    for s in steps:
        layer = zero.copy()
        layer[spec.reduce(s)] = first
        P.append(layer)
    total = sum(P[1:], P[0].copy())
    yield total
    rev = step_set.reversal
    for _ in range(2, nmax + 1):
        P = [np.roll((total - P[rev[j]]) * cont, shift=steps[j], axis=axes) for j in range(m)]
        total = sum(P[1:], P[0].copy())
        yield total


def iter_torus_counts(step_set: StepSet, nmax: int, exact: bool = True,
                      cap: int = DEFAULT_STATE_CAP) -> Iterator[TorusDistribution]:
    spec = torus_spec_for(step_set)
    for n, layer in enumerate(_layers(step_set, nmax, exact, cap)):
        yield TorusDistribution(spec, n, layer, exact)


def torus_counts(step_set: StepSet, spec: TorusSpec, n: int, exact: bool = True,
                 cap: int = DEFAULT_STATE_CAP) -> TorusDistribution:
    """``p_n`` by dynamic programming; exact rationals unless ``exact=False``."""
    _check_torus(step_set, spec)
    dist = None
    for dist in iter_torus_counts(step_set, n, exact, cap):
        pass
    return dist


# -- Fourier route ----------------------------------------------------------------------

def _fft_dual_grid(spec: TorusSpec) -> np.ndarray:
    """Waves ``2 pi j / r`` in FFT index order, shape ``(r^d, d)``.  Equivalent mod ``2 pi``
    to the centred dual grid, and the step transform is ``2 pi``-periodic."""
    idx = np.indices(spec.shape).reshape(spec.dim, -1).T
    return 2 * np.pi / spec.width * idx


def ratio_on_dual_grid(step_set: StepSet, spec: TorusSpec, n: int) -> np.ndarray:
    """``b^_n(k) / b^_n(0)`` on the dual grid, FFT-ordered, shape ``(r,) * d``."""
    dhat = step_transform_many(step_set, _fft_dual_grid(spec))
    return _ratio(dhat, step_set.degree, n).reshape(spec.shape)


def _clamp(p: np.ndarray, where: str) -> np.ndarray:
    low = float(p.min())
    if low < NEGATIVE_CLAMP:
        raise NegativeProbability(f"{where}: probability {low:.3e} below {NEGATIVE_CLAMP}")
    if low < 0:
        level = logging.WARNING if low < ROUNDOFF_FLOOR else logging.DEBUG
        log.log(level, "%s: clamping negative probabilities (min %.3e) to 0", where, low)
        p = np.where(p < 0, 0.0, p)
    return p


def torus_distribution_fourier(step_set: StepSet, spec: TorusSpec, n: int) -> TorusDistribution:
    """``p_n(x) = V^-1 sum_k [b^_n(k)/b^_n(0)] exp(i k.x)`` via ``numpy.fft.ifftn``."""
    _check_torus(step_set, spec)
    p = np.fft.ifftn(ratio_on_dual_grid(step_set, spec, n)).real
    return TorusDistribution(spec, n, _clamp(p, f"fourier route n={n}"))


# -- hypercube ------------------------------------------------------------------------------

def krawtchouk(m: int) -> np.ndarray:
    """``K[a, w] = sum_j (-1)^j C(w, j) C(m-w, a-j)``: the sum of ``(-1)^(k.x)`` over
    the ``k`` of weight ``a`` for any fixed ``x`` of weight ``w``."""
    K = np.zeros((m + 1, m + 1))
    for a in range(m + 1):
        for w in range(m + 1):
            K[a, w] = sum((-1) ** j * comb(w, j) * comb(m - w, a - j) for j in range(0, min(a, w) + 1))
    return K


def hypercube_weight_distribution(m: int, n: int) -> np.ndarray:
    """``p_n(x)`` as a function of the weight ``|x|``, length ``m + 1``."""
    if m < 3:
        raise HypothesesUnmet("hypercube distribution needs m >= 3 (m = 2 is the deterministic 4-cycle)")
    dhat = 1.0 - 2.0 * np.arange(m + 1) / m
    ratio = _ratio(dhat, m, n).real
    return _clamp(2.0 ** (-m) * ratio @ krawtchouk(m), f"hypercube m={m} n={n}")


def hypercube_distribution(m: int, n: int) -> TorusDistribution:
    by_weight = hypercube_weight_distribution(m, n)
    spec = TorusSpec(m, 2)
    weights = np.indices(spec.shape).sum(axis=0)
    return TorusDistribution(spec, n, by_weight[weights])


# -- families and stationary targets ---------------------------------------------------

FAMILIES = ("hamming", "nn", "hypercube")


@dataclass(frozen=True)
class Family:
    """Parameterised torus family: ``hamming`` (r, d), ``nn`` (r, d) or ``hypercube`` (m)."""

    name: str
    r: int | None = None
    d: int | None = None
    m: int | None = None

    def __post_init__(self):
        if self.name not in FAMILIES:
            raise ValueError(f"unknown family {self.name!r}; choose from {FAMILIES}")
        if self.name == "hypercube":
            if self.m is None:
                raise ValueError("hypercube needs m")
        elif self.r is None or self.d is None:
            raise ValueError(f"{self.name} needs r and d")

    @property
    def step_set(self) -> StepSet:
        if self.name == "hamming":
            return hamming(self.r, self.d)
        if self.name == "nn":
            return nearest_neighbor(self.d, modulus=self.r)
        return hypercube(self.m)

    @property
    def spec(self) -> TorusSpec:
        return TorusSpec(self.m, 2) if self.name == "hypercube" else TorusSpec(self.d, self.r)

    @property
    def degree(self) -> int:
        if self.name == "hamming":
            return self.d * (self.r - 1)
        if self.name == "nn":
            return 2 * self.d
        return self.m

    @property
    def volume(self) -> int:
        return self.spec.volume

    @property
    def bipartite(self) -> bool:
        return self.name == "hypercube" or (self.name == "nn" and self.r % 2 == 0)

    def params(self) -> dict:
        out = {"family": self.name}
        if self.name == "hypercube":
            out["m"] = self.m
        else:
            out.update(r=self.r, d=self.d)
        return out

    def label(self) -> str:
        return ", ".join(f"{k}={v}" for k, v in self.params().items())


def stationary_target(family: Family, n: int) -> np.ndarray:
    """Limit law at step ``n``: uniform, or ``2/V`` on the parity class of ``n`` when bipartite."""
    spec = family.spec
    V = spec.volume
    if not family.bipartite:
        return np.full(spec.shape, 1.0 / V)
    parity = np.indices(spec.shape).sum(axis=0) % 2
    return np.where(parity == n % 2, 2.0 / V, 0.0)


def check_hypotheses(family: Family) -> None:
    if family.name == "hypercube":
        if family.m < 3:
            raise HypothesesUnmet(f"hypercube needs m >= 3, got m={family.m}")
        return
    if family.r < 3:
        raise HypothesesUnmet(f"{family.name} torus needs r >= 3, got r={family.r}")
    if family.degree < 3:
        raise HypothesesUnmet(
            f"{family.label()} has degree {family.degree}: NBW is a deterministic rotation "
            "and the spectral bound 1/sqrt(m-1) is trivial"
        )


# -- closed-form bounds ------------------------------------------------------------------

@dataclass(frozen=True)
class BoundEvaluation:
    """Right-hand side of a deviation bound and its walk-length thresholds.

    ``threshold`` is the operative one: the deviation inequality is asserted for
    ``n > threshold``.  ``mixing_bound`` is the bound on the uniform mixing time.
    """

    family: Family
    xi: float
    n: int
    rhs: float
    threshold: float
    mixing_bound: float
    thresholds: dict = field(default_factory=dict)

    @property
    def applies(self) -> bool:
        return self.n > self.threshold


def hamming_threshold(r: int, d: int, xi: float) -> float:
    """``d(r-1)/r * log((r-1) / ((1+xi)^(1/d) - 1))``."""
    return d * (r - 1) / r * math.log((r - 1) / ((1 + xi) ** (1 / d) - 1))


def nn_threshold_stated(r: int, d: int, xi: float) -> float:
    """``log(2 / ((1+xi/2)^(1/d) - 1)) / (1 - cos(2 pi / r))`` as printed."""
    return math.log(2 / ((1 + xi / 2) ** (1 / d) - 1)) / (1 - math.cos(2 * math.pi / r))


def nn_threshold_corrected(r: int, d: int, xi: float) -> float:
    """The printed threshold with the factor ``d`` carried by the exponent ``-(n-1)(1-cos k)/d``."""
    return 1 + d * nn_threshold_stated(r, d, xi)


def nn_sum_term(r: int, d: int, n: int) -> float:
    """``2 [(sum_{k in T*_{r,1}} exp(-(n-1)(1 - cos k)/d))^d - 1]``; times ``1/V`` this bounds
    the non-trivial Fourier modes."""
    ks = TorusSpec(1, r).dual_axis()
    s = float(np.exp(-(n - 1) * (1 - np.cos(ks)) / d).sum())
    return 2 * (s**d - 1)


def nn_threshold_operative(r: int, d: int, xi: float, limit: int = 10**7) -> int:
    """Smallest ``n`` with ``nn_sum_term(r, d, n) <= xi``; the term decreases in ``n``."""
    lo, hi = 1, 1
    while nn_sum_term(r, d, hi) > xi:
        lo, hi = hi, hi * 2
        if hi > limit:
            raise RuntimeError("operative threshold search diverged")
    while lo < hi:
        mid = (lo + hi) // 2
        if nn_sum_term(r, d, mid) <= xi:
            hi = mid
        else:
            lo = mid + 1
    return hi


def hypercube_threshold_stated(m: int, xi: float) -> float:
    """``m (log m + log xi) / 2`` as printed; negative whenever ``xi < 1/m``."""
    return m * (math.log(m) + math.log(xi)) / 2


def hypercube_threshold_proof(m: int, xi: float) -> float:
    """``-(m/2) log((1 + xi/2)^(1/m) - 1)``."""
    return -(m / 2) * math.log((1 + xi / 2) ** (1 / m) - 1)


def hypercube_mixing_bound(m: int, xi: float, eps: float = 0.1) -> float:
    """``(m/2)(1 + eps) log(2m / xi)``."""
    return m * (1 + eps) / 2 * math.log(2 * m / xi)


def bound_evaluators(family: Family, xi: float, n: int, eps: float = 0.1) -> BoundEvaluation:
    """Deviation bound ``(m-1)^(-(n-1)/2) + xi / V`` with the family's thresholds.

    Raises :class:`HypothesesUnmet` outside the bound hypotheses.
    """
    if xi <= 0:
        raise ValueError("xi must be positive")
    check_hypotheses(family)
    m, V = family.degree, family.volume
    rhs = (m - 1) ** (-(n - 1) / 2) + xi / V
    if family.name == "hamming":
        thr = hamming_threshold(family.r, family.d, xi)
        return BoundEvaluation(family, xi, n, rhs, thr, math.ceil(thr) + 1, {"stated": thr})
    if family.name == "nn":
        op = nn_threshold_operative(family.r, family.d, xi)
        thresholds = {
            "stated": nn_threshold_stated(family.r, family.d, xi),
            "corrected": nn_threshold_corrected(family.r, family.d, xi),
            "operative": op,
            "stated_rhs": (2 * family.d - 1) ** (-n / 2) + xi / V,
        }
        # deviation inequality needs n - 1 >= op - 1, i.e. n > op - 1
        return BoundEvaluation(family, xi, n, rhs, op - 1, op, thresholds)
    thresholds = {
        "stated": hypercube_threshold_stated(m, xi),
        "proof": hypercube_threshold_proof(m, xi),
    }
    return BoundEvaluation(family, xi, n, rhs, thresholds["proof"],
                           hypercube_mixing_bound(m, xi, eps), thresholds)


# -- mixing time -----------------------------------------------------------------------

@dataclass
class MixingReport:
    family: Family
    xi: float
    horizon: int
    curve: np.ndarray          # max_x |avg_n(x) - 1/V| * V
    upper: np.ndarray          # max_x avg_n(x) * V
    deviation: np.ndarray      # max_x |p_n(x) - target_n(x)|
    t_mix: int | None
    paper_bound: float | None
    status: str                # "mixed" | "horizon" | "hypotheses-unmet"
    note: str = ""
    bound_rhs: np.ndarray | None = None
    thresholds: dict = field(default_factory=dict)

    @property
    def within_bound(self) -> bool | None:
        if self.status == "hypotheses-unmet":
            return None
        if self.t_mix is None:
            return False
        return self.t_mix <= self.paper_bound

    @property
    def deviation_violations(self) -> list[int]:
        """Steps above the threshold where ``max|p_n - target| > rhs``."""
        if self.bound_rhs is None:
            return []
        thr = self.thresholds.get("operative_n", math.inf)
        return [n for n in range(len(self.deviation))
                if n > thr and self.deviation[n] > self.bound_rhs[n] + 1e-12]

    def summary(self) -> dict:
        return {
            **self.family.params(),
            "xi": self.xi,
            "t_mix": self.t_mix,
            "paper_bound": self.paper_bound,
            "within_bound": self.within_bound,
            "status": self.status,
            "horizon": self.horizon,
            "thresholds": self.thresholds,
            "note": self.note,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "mixing_deviation", "averaged_max", "pointwise_deviation", "bound"])
        for n in range(len(self.curve)):
            b = "" if self.bound_rhs is None else repr(float(self.bound_rhs[n]))
            w.writerow([n, repr(float(self.curve[n])), repr(float(self.upper[n])),
                        repr(float(self.deviation[n])), b])
        return buf.getvalue()


def _exact_upper(step_set: StepSet, n: int) -> Fraction:
    """Exact ``max_x V (p_n(x) + p_{n+1}(x)) / 2``."""
    spec = torus_spec_for(step_set)
    layers = list(_layers(step_set, n + 1, True, DEFAULT_STATE_CAP))
    avg = (layers[n] + layers[n + 1]) * Fraction(spec.volume, 2)
    return max(avg.flat)


def mixing_time(family: Family, xi: float, horizon: int | None = None, eps: float = 0.1) -> MixingReport:
    """Exact uniform mixing time by scanning the DP curve up to ``horizon``.

    Default horizon is ``50 * paper_bound``.  Near-ties with ``1 + xi`` are
    settled in exact rational arithmetic.
    """
    if xi <= 0:
        raise ValueError("xi must be positive")
    step_set = family.step_set
    V = family.volume
    note = ""
    try:
        ev = bound_evaluators(family, xi, 1, eps)
        paper_bound = ev.mixing_bound
        thresholds = dict(ev.thresholds)
        thresholds["operative_n"] = ev.threshold
        status_ok = True
    except HypothesesUnmet as exc:
        paper_bound, thresholds, status_ok, note = None, {}, False, str(exc)
    if horizon is None:
        horizon = max(int(math.ceil(HORIZON_FACTOR * paper_bound)), 10) if paper_bound else FALLBACK_HORIZON
    layers = [np.asarray(p, dtype=float) for p in _layers(step_set, horizon + 1, False, DEFAULT_STATE_CAP)]
    curve = np.empty(horizon + 1)
    upper = np.empty(horizon + 1)
    deviation = np.empty(horizon + 1)
    ok = np.empty(horizon + 1, dtype=bool)
    xi_exact = Fraction(str(xi))
    targets = (stationary_target(family, 0), stationary_target(family, 1))
    for n in range(horizon + 1):
        avg = (layers[n] + layers[n + 1]) / 2 * V
        curve[n] = np.max(np.abs(avg - 1))
        upper[n] = np.max(avg)
        deviation[n] = np.max(np.abs(layers[n] - targets[n % 2]))
        if abs(upper[n] - (1 + xi)) <= TIE_TOL:
            ok[n] = _exact_upper(step_set, n) <= 1 + xi_exact
        else:
            ok[n] = upper[n] <= 1 + xi
    t_mix = None
    for n in range(horizon, -1, -1):
        if not ok[n]:
            break
        t_mix = n
    rhs = None
    if status_ok:
        m = family.degree
        rhs = (m - 1) ** (-(np.arange(horizon + 1) - 1) / 2) + xi / V
    status = "hypotheses-unmet" if not status_ok else ("mixed" if t_mix is not None else "horizon")
    return MixingReport(family, xi, horizon, curve, upper, deviation, t_mix, paper_bound,
                        status, note, rhs, thresholds)
