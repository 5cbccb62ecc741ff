"""Cross-validation checks run by ``nbw audit`` and the acceptance tests.

Each check returns a :class:`CheckResult`.  Tolerances are keyword arguments
so callers can pin them explicitly.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from . import exact_count, greens, spectral, torus
from .lattice import StepSet, TorusSpec, hamming, hypercube, nearest_neighbor, step_transform
from .sampler_clt import (
    CHUNK,
    empirical_covariance,
    endpoint_char_function_exact,
    fdd_gaussian_check,
    gaussian_limit,
    sample_endpoints,
)


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0
    skipped: list = field(default_factory=list)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({len(self.skipped)} skipped)" if self.skipped else ""
        return f"{status} {self.name} [{self.seconds:.2f}s]{extra}"

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "seconds": round(self.seconds, 3),
                "details": _jsonable(self.details), "skipped": _jsonable(self.skipped)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def _timed(name: str, fn: Callable[[], tuple[bool, dict] | tuple[bool, dict, list]]) -> CheckResult:
    t0 = time.perf_counter()
    out = fn()
    passed, details = out[0], out[1]
    skipped = out[2] if len(out) > 2 else []
    return CheckResult(name, bool(passed), details, time.perf_counter() - t0, skipped)


def threads() -> int:
    env = os.environ.get("NBW_THREADS")
    return max(1, int(env)) if env else 1


def _map(fn, items):
    w = threads()
    if w == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=w) as pool:
        return list(pool.map(fn, items))


def degenerate_wave(d: int) -> np.ndarray:
    """A wave with ``(d D^(k))^2 = 2d - 1`` exactly in floating point, up to roundoff:
    all mass in the first coordinate, ``cos k_1 = sqrt(2d-1) - (d-1)``."""
    k = np.zeros(d)
    k[0] = math.acos(math.sqrt(2 * d - 1) - (d - 1))
    return k


# -- 1: eigen-residuals ----------------------------------------------------------------------

def check_eigen_residuals(dims=(2, 3, 4), samples: int = 200, tol: float = 1e-10,
                          independence: float = 1e-8, seed: int = 20240101) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        worst, worst_at, dependent, degenerate_seen = 0.0, None, [], 0
        for d in dims:
            s = nearest_neighbor(d)
            ks = list(rng.uniform(-np.pi, np.pi, size=(samples, d)))
            ks += [np.zeros(d), np.full(d, np.pi), degenerate_wave(d)]
            for k in ks:
                A = spectral.build_matrix(s, k).entries
                basis = spectral.eigenbasis(s, k)
                res = basis.residuals(A)
                if res.max() > worst:
                    worst, worst_at = float(res.max()), (d, k.tolist())
                if basis.degenerate:
                    degenerate_seen += 1
                    continue
                V = basis.vectors / np.linalg.norm(basis.vectors, axis=0)
                smin = np.linalg.svd(V, compute_uv=False)[-1]
                if smin <= independence:
                    dependent.append((d, k.tolist(), float(smin)))
        passed = worst <= tol and not dependent and degenerate_seen >= len(dims)
        return passed, {"worst_residual": worst, "worst_at": worst_at, "tolerance": tol,
                        "dependent_bases": dependent, "degenerate_points": degenerate_seen}
    return _timed("eigen_residuals", run)


# -- 2: three-way b^_n(k) -----------------------------------------------------------------------

def check_three_way(cases=((2, 10), (3, 6)), samples: int = 20, tol: float = 1e-9,
                    seed: int = 20240102) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        worst, worst_at = 0.0, None
        for d, nmax in cases:
            s = nearest_neighbor(d)
            ks = rng.uniform(-np.pi, np.pi, size=(samples, d))
            hist = [exact_count.endpoint_histogram(s, n) for n in range(nmax + 1)]
            for k in ks:
                series = greens.series_coefficients(s, k, nmax)
                for n in range(nmax + 1):
                    spec_val = spectral.bn_hat(s, k, n)
                    enum_val = exact_count.fourier_of_counts(hist[n], k)
                    scale = max(abs(enum_val), 1.0)
                    err = max(abs(spec_val - enum_val), abs(series[n] - enum_val),
                              abs(series[n] - spec_val)) / scale
                    if err > worst:
                        worst, worst_at = err, (d, n, k.tolist())
        return worst <= tol, {"worst_relative": worst, "worst_at": worst_at, "tolerance": tol,
                              "paths_enumerated_max": exact_count.total_nbw(4, 10)}
    return _timed("three_way_bn_hat", run)


# -- 3: exact count identities -----------------------------------------------------------------

def check_count_identities(cases=((2, 10), (3, 6)), enum_cases=((2, 8), (3, 5))) -> CheckResult:
    def run():
        details, ok = {}, True
        for d, nmax in cases:
            s = nearest_neighbor(d)
            prev = None
            for field_n in exact_count.iter_count_walks(s, nmax):
                n = field_n.n
                expected = exact_count.total_nbw(s.degree, n)
                if field_n.total() != expected:
                    ok = False
                    details[f"total d={d} n={n}"] = (field_n.total(), expected)
                if prev is not None and not exact_count.check_identities(prev, field_n):
                    ok = False
                    details[f"identities d={d} n={n}"] = False
                prev = field_n
        for d, nmax in enum_cases:
            s = nearest_neighbor(d)
            for n in range(nmax + 1):
                if exact_count.endpoint_histogram(s, n) != exact_count.count_walks(s, n).as_dict():
                    ok = False
                    details[f"enumeration d={d} n={n}"] = "mismatch"
        table = exact_count.count_walks(nearest_neighbor(2), 2).as_dict()
        hist = sorted(table.values())
        details["d2_n2_histogram"] = hist
        ok &= hist == [1, 1, 1, 1, 2, 2, 2, 2]
        return ok, details
    return _timed("count_identities", run)


# -- 4: second moment ---------------------------------------------------------------------------

def check_second_moment(nmax: int = 30) -> CheckResult:
    def run():
        s = nearest_neighbor(2)
        d = 2
        fields = list(exact_count.iter_count_walks(s, nmax))
        e2 = exact_count.second_moment(s, 2, fields[2])
        e3 = exact_count.second_moment(s, 3, fields[3])
        gaps = [abs(exact_count.second_moment(s, n, fields[n]) / n - Fraction(d, d - 1))
                for n in range(1, nmax + 1)]
        monotone = all(b < a for a, b in zip(gaps, gaps[1:]))
        closed = all(exact_count.second_moment_closed_form(s, n) == exact_count.second_moment(s, n, fields[n])
                     for n in range(nmax + 1))
        printed = {n: (str(exact_count.second_moment(s, n, fields[n])),
                       str(exact_count.second_moment_printed(d, n))) for n in (2, 3, 4, 10)}
        passed = e2 == Fraction(8, 3) and e3 == Fraction(41, 9) and monotone and closed
        return passed, {"E2": e2, "E3": e3, "gap_monotone": monotone, "gap_at_nmax": float(gaps[-1]),
                        "closed_form_matches": closed, "exact_vs_printed": printed}
    return _timed("second_moment", run)


def check_tightness(nmax: int = 8) -> CheckResult:
    def run():
        s = nearest_neighbor(2)
        K = max(exact_count.tightness_constant(s, n)[0] for n in range(2, nmax + 1))
        ref = exact_count.tightness_reference(s.degree)
        return float(K) <= ref, {"K": K, "K_float": float(K), "reference": ref}
    return _timed("tightness", run)


# -- 5: deterministic CLT -------------------------------------------------------------------

CLT_WAVES = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (1.0, 1.0, 0.0), (0.5, -0.5, 0.0), (2.0, 0.0, 0.0))


def check_clt_deterministic(dims=(2, 3), ns=(100, 1000, 10000), tol: float = 0.01,
                            fdd_tol: float = 0.02) -> CheckResult:
    def run():
        ok, details = True, {}
        for d in dims:
            s = nearest_neighbor(d)
            sups = []
            for n in ns:
                sup = max(abs(endpoint_char_function_exact(s, n, np.array(k[:d])) - gaussian_limit(s, np.array(k[:d])))
                          for k in CLT_WAVES)
                sups.append(sup)
            decreasing = all(b < a for a, b in zip(sups, sups[1:]))
            ok &= decreasing and sups[-1] <= tol
            details[f"d={d}"] = {"sup_deviation": dict(zip(ns, sups)), "decreasing": decreasing}
        rep = fdd_gaussian_check(nearest_neighbor(2), ns[-1], (0.5, 1.0), [(1.0, 0.0), (0.0, 1.0)])
        ok &= rep.deviation <= fdd_tol
        details["fdd"] = rep.to_dict()
        return ok, details
    return _timed("clt_deterministic", run)


# -- 6: stochastic CLT -----------------------------------------------------------------------

def check_clt_stochastic(n: int = 10**4, count: int = 10**5, sigmas: float = 3.0,
                         seed: int = 20240106) -> CheckResult:
    def run():
        s = nearest_neighbor(2)
        ens = sample_endpoints(s, n, count, seed)
        est = empirical_covariance(ens)
        target = np.eye(2)
        within = est.within(target, sigmas)
        replay = sample_endpoints(s, n, min(count, CHUNK), seed)
        deterministic = bool(np.array_equal(replay.endpoints, ens.endpoints[: replay.count]))
        return within and deterministic, {"covariance": est.matrix.tolist(), "z_scores": est.z_scores(target).tolist(),
                                          "sigmas": sigmas, "replay_identical": deterministic,
                                          "n": n, "count": count, "seed": seed}
    return _timed("clt_stochastic", run)


# -- 7: pointwise Fourier bound -------------------------------------------------------------------------

def torus_grid(rs=(3, 4, 5), ds=(1, 2, 3), ms=range(2, 13)) -> list[torus.Family]:
    fams = [torus.Family(name, r=r, d=d) for name in ("hamming", "nn") for r in rs for d in ds]
    return fams + [torus.Family("hypercube", m=m) for m in ms]


def check_pointwise_bound(families=None, nmax: int = 50, slack: float = 1e-12) -> CheckResult:
    families = families or torus_grid()

    def one(fam):
        s = fam.step_set
        grid = torus._fft_dual_grid(fam.spec)
        rho = spectral.eigenvalue_bound_many(s, grid)
        worst = -math.inf
        for n in range(1, nmax + 1):
            ratio = np.abs(torus.ratio_on_dual_grid(s, fam.spec, n)).ravel()
            worst = max(worst, float(np.max(ratio - rho ** (n - 1))))
        return fam.label(), worst

    def run():
        results = _map(one, families)
        bad = [(lab, w) for lab, w in results if w > slack]
        return not bad, {"violations": bad, "worst_excess": max(w for _, w in results),
                         "families": len(families), "nmax": nmax}
    return _timed("pointwise_bound", run)


# -- 8: mixing bounds --------------------------------------------------------------------------

def check_mixing(families=None, xis=(0.01, 0.5), eps: float = 0.1) -> CheckResult:
    families = families or torus_grid()
    jobs = [(f, xi) for xi in xis for f in families]

    def one(job):
        fam, xi = job
        return torus.mixing_time(fam, xi, eps=eps)

    def run():
        reports = _map(one, jobs)
        violations, skipped, deviation_bad, table = [], [], [], []
        for rep in reports:
            row = rep.summary()
            table.append({k: row[k] for k in ("family", "r", "d", "m", "xi", "t_mix", "paper_bound", "status")
                          if k in row})
            if rep.status == "hypotheses-unmet":
                skipped.append((rep.family.label(), rep.xi, rep.note))
                continue
            if not rep.within_bound:
                violations.append({"family": rep.family.name, "params": rep.family.params(), "xi": rep.xi,
                                   "t_mix": rep.t_mix, "paper_bound": rep.paper_bound, "status": rep.status})
            bad = rep.deviation_violations
            if bad:
                deviation_bad.append((rep.family.label(), rep.xi, bad[:5]))
        return not violations and not deviation_bad, {
            "violations": violations, "deviation_violations": deviation_bad, "table": table}, skipped
    return _timed("mixing_bounds", run)


# -- 9: DP vs Fourier ----------------------------------------------------------------------------

def check_dp_fourier(families=None, nmax: int = 100, tol: float = 1e-10) -> CheckResult:
    if families is None:
        families = torus_grid(ms=range(3, 13)) + [torus.Family("nn", r=8, d=d) for d in (1, 2, 3)]
        families = [f for f in families if f.volume <= 10**4]

    def one(fam):
        s = fam.step_set
        worst = 0.0
        for dist in torus.iter_torus_counts(s, nmax, exact=False):
            if fam.name == "hypercube":
                other = torus.hypercube_distribution(fam.m, dist.n).probabilities
            else:
                other = torus.torus_distribution_fourier(s, fam.spec, dist.n).probabilities
            worst = max(worst, float(np.max(np.abs(other - dist.probabilities))))
        return fam.label(), worst

    def run():
        results = _map(one, families)
        bad = [(lab, w) for lab, w in results if w > tol]
        return not bad, {"violations": bad, "worst": max(w for _, w in results), "tolerance": tol,
                         "families": len(families)}
    return _timed("dp_vs_fourier", run)


# -- 10: Green's identities ------------------------------------------------------------------

def _general_step_set() -> StepSet:
    return StepSet(2, ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1)), name="king")


def check_greens(samples: int = 50, tol: float = 1e-12, seed: int = 20240110) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        worst = {"srw_relation": 0.0, "vector_identity": 0.0, "resolvent": 0.0}
        sets = (nearest_neighbor(2), nearest_neighbor(3), _general_step_set())
        for s in sets:
            m = s.degree
            for _ in range(samples):
                k = rng.uniform(-np.pi, np.pi, s.dim)
                z = rng.uniform(0, 0.95 / (m - 1)) * np.exp(1j * rng.uniform(0, 2 * np.pi))
                ref = greens.greens_hat(s, z, k)
                worst["srw_relation"] = max(worst["srw_relation"],
                                            abs(greens.srw_relation(s, z, k) - ref) / abs(ref))
                worst["vector_identity"] = max(worst["vector_identity"],
                                               abs(greens.vector_identity_rhs(s, z, k) - ref) / abs(ref))
                worst["resolvent"] = max(worst["resolvent"], greens.resolvent_check(s, z, k))
        return max(worst.values()) <= tol, {"worst": worst, "tolerance": tol}
    return _timed("greens_identities", run)


# -- driver -------------------------------------------------------------------------------------------

CRITERIA: dict[str, Callable[[bool], CheckResult]] = {
    "eigen_residuals": lambda quick: check_eigen_residuals(samples=50 if quick else 200),
    "three_way_bn_hat": lambda quick: check_three_way(cases=((2, 8), (3, 5)) if quick else ((2, 10), (3, 6))),
    "count_identities": lambda quick: check_count_identities(),
    "second_moment": lambda quick: check_second_moment(),
    "tightness": lambda quick: check_tightness(nmax=6 if quick else 8),
    "clt_deterministic": lambda quick: check_clt_deterministic(),
    "clt_stochastic": lambda quick: (check_clt_stochastic(n=1000, count=20000) if quick
                                     else check_clt_stochastic()),
    "pointwise_bound": lambda quick: check_pointwise_bound(nmax=20 if quick else 50),
    "mixing_bounds": lambda quick: check_mixing(xis=(0.5,) if quick else (0.01, 0.5)),
    "dp_vs_fourier": lambda quick: check_dp_fourier(nmax=30 if quick else 100),
    "greens_identities": lambda quick: check_greens(),
}


def run_audit(quick: bool = False, only=None) -> list[CheckResult]:
    names = list(CRITERIA) if not only else list(only)
    unknown = [n for n in names if n not in CRITERIA]
    if unknown:
        raise KeyError(f"unknown checks: {unknown}")
    return [CRITERIA[name](quick) for name in names]
