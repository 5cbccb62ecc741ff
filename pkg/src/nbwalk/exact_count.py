"""Exact non-backtracking walk counts by dynamic programming and brute-force enumeration.

``directed[j][x]`` holds ``b^j_n(x)``: the number of ``n``-step NBWs from the
origin to ``x`` whose first step is not step ``j``.  The recursion conditions
on the first step,

    b^j_n(x) = sum_{i != j} b^{rev(i)}_{n-1}(x - x_i),
    b_n(x)   = sum_i        b^{rev(i)}_{n-1}(x - x_i),

with ``b^j_0 = b_0 = delta_0``.  All counts are Python integers.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Iterator

import numpy as np

from .lattice import StepSet

DEFAULT_STATE_CAP = 10**7
DEFAULT_PATH_CAP = 10**7


class CapExceeded(RuntimeError):
    """A computation would exceed its configured state-space or path cap."""


@dataclass(frozen=True)
class CountField:
    """Exact endpoint counts of ``n``-step NBWs on ``Z^d``.

    ``counts`` and ``directed_counts`` are object arrays over the box
    ``[-offset, offset]^d``; index ``x + offset`` holds position ``x``.
    """

    n: int
    dim: int
    offset: int
    counts: np.ndarray
    directed_counts: np.ndarray
    step_set: StepSet

    def __getitem__(self, x) -> int:
        idx = self._index(x)
        return 0 if idx is None else int(self.counts[idx])

    def directed(self, j: int, x) -> int:
        idx = self._index(x)
        return 0 if idx is None else int(self.directed_counts[(j,) + idx])

    def _index(self, x):
        idx = tuple(int(c) + self.offset for c in x)
        if any(i < 0 or i > 2 * self.offset for i in idx):
            return None
        return idx

    def items(self) -> Iterator[tuple[tuple[int, ...], int]]:
        for idx in zip(*np.nonzero(self.counts != 0)):
            yield tuple(int(i) - self.offset for i in idx), int(self.counts[idx])

    def as_dict(self) -> dict[tuple[int, ...], int]:
        return dict(self.items())

    def total(self) -> int:
        return int(sum(c for _, c in self.items()))

    def to_csv(self, directed: bool = False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        coords = [f"x{i + 1}" for i in range(self.dim)]
        if directed:
            w.writerow(coords + ["direction", "count"])
            for j in range(self.step_set.degree):
                for idx in zip(*np.nonzero(self.directed_counts[j] != 0)):
                    x = [int(i) - self.offset for i in idx]
                    w.writerow(x + [j, int(self.directed_counts[(j,) + idx])])
        else:
            w.writerow(coords + ["count"])
            for x, c in self.items():
                w.writerow(list(x) + [c])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "dim": self.dim,
            "step_set": self.step_set.to_dict(),
            "counts": [{"x": list(x), "count": str(c)} for x, c in self.items()],
        }


def _radius(step_set: StepSet) -> int:
    return int(np.abs(step_set.array).max())


def _shift(arr: np.ndarray, step) -> np.ndarray:
    """``out[x] = arr[x - step]`` with zero fill (no wrap-around)."""
    out = np.zeros_like(arr)
    src, dst = [], []
    for s, size in zip(step, arr.shape):
        s = int(s)
        if s >= 0:
            src.append(slice(0, size - s))
            dst.append(slice(s, size))
        else:
            src.append(slice(-s, size))
            dst.append(slice(0, size + s))
    out[tuple(dst)] = arr[tuple(src)]
    return out


def iter_count_walks(step_set: StepSet, nmax: int, cap: int = DEFAULT_STATE_CAP) -> Iterator[CountField]:
    """Yield :class:`CountField` for ``n = 0, 1, ..., nmax`` on a common box."""
    if step_set.modulus is not None:
        raise ValueError("count_walks works on Z^d; use torus.torus_counts for torus step sets")
    if nmax < 0:
        raise ValueError("n must be non-negative")
    m, d = step_set.degree, step_set.dim
    offset = max(nmax * _radius(step_set), 0)
    side = 2 * offset + 1
    states = m * side**d
    if states > cap:
        raise CapExceeded(f"DP needs {states} states (m * (2nR+1)^d) > cap {cap}")
    shape = (side,) * d
    origin = (offset,) * d
    base = np.zeros(shape, dtype=object)
    base[...] = 0
    base[origin] = 1
    directed = np.empty((m,) + shape, dtype=object)
    for j in range(m):
        directed[j] = base
    yield CountField(0, d, offset, base.copy(), directed.copy(), step_set)
    rev = step_set.reversal
    steps = step_set.array
    for n in range(1, nmax + 1):
        moved = [_shift(directed[rev[i]], steps[i]) for i in range(m)]
        total = moved[0].copy()
        for arr in moved[1:]:
            total = total + arr
        new = np.empty_like(directed)
        for j in range(m):
            new[j] = total - moved[j]
        directed = new
        yield CountField(n, d, offset, total, directed, step_set)


def count_walks(step_set: StepSet, n: int, cap: int = DEFAULT_STATE_CAP) -> CountField:
    field = None
    for field in iter_count_walks(step_set, n, cap):
        pass
    return field


def check_identities(previous: CountField, current: CountField) -> bool:
    """Exact check of the three first-step recursions between consecutive layers."""
    s = current.step_set
    m = s.degree
    total = 0
    ok = True
    for i in range(m):
        shifted = _shift(previous.directed_counts[s.reversal[i]], s.array[i])
        total = total + shifted
        # b_n(x) = b^i_n(x) + b^{rev i}_{n-1}(x - x_i)
        ok &= bool(np.all(current.counts == current.directed_counts[i] + shifted))
    ok &= bool(np.all(current.counts == total))
    for j in range(m):
        rest = 0
        for i in range(m):
            if i != j:
                rest = rest + _shift(previous.directed_counts[s.reversal[i]], s.array[i])
        ok &= bool(np.all(current.directed_counts[j] == rest))
    return ok


# -- enumeration ------------------------------------------------------------------

def walk_directions(step_set: StepSet, n: int, cap: int = DEFAULT_PATH_CAP) -> np.ndarray:
    """All ``n``-step NBWs as an array of direction indices, shape ``(m (m-1)^(n-1), n)``."""
    m = step_set.degree
    count = 1 if n == 0 else m * (m - 1) ** (n - 1)
    if count > cap:
        raise CapExceeded(f"{count} walks exceed enumeration cap {cap}")
    if n == 0:
        return np.zeros((1, 0), dtype=np.int16)
    rev = np.array(step_set.reversal)
    paths = np.arange(m, dtype=np.int16).reshape(m, 1)
    choices = np.arange(m - 1)
    for _ in range(1, n):
        last = rev[paths[:, -1]]
        nxt = choices[None, :] + (choices[None, :] >= last[:, None])
        paths = np.concatenate(
            [np.repeat(paths, m - 1, axis=0), nxt.reshape(-1, 1).astype(np.int16)], axis=1
        )
    return paths


def walk_positions(step_set: StepSet, n: int, cap: int = DEFAULT_PATH_CAP) -> np.ndarray:
    """Positions ``omega_0 .. omega_n`` of every NBW, shape ``(count, n+1, d)``."""
    dirs = walk_directions(step_set, n, cap)
    steps = step_set.array[dirs]
    zero = np.zeros((dirs.shape[0], 1, step_set.dim), dtype=np.int64)
    pos = np.concatenate([zero, np.cumsum(steps, axis=1)], axis=1)
    if step_set.modulus is not None:
        pos %= step_set.modulus
    return pos


def enumerate_walks(step_set: StepSet, n: int, cap: int = DEFAULT_PATH_CAP) -> Iterator[tuple[tuple[int, ...], ...]]:
    """Yield every ``n``-step NBW once, as a tuple of positions starting at the origin."""
    for path in walk_positions(step_set, n, cap):
        yield tuple(tuple(int(c) for c in p) for p in path)


def endpoint_histogram(step_set: StepSet, n: int, cap: int = DEFAULT_PATH_CAP) -> dict[tuple[int, ...], int]:
    ends = walk_positions(step_set, n, cap)[:, -1, :]
    uniq, counts = np.unique(ends, axis=0, return_counts=True)
    return {tuple(int(c) for c in u): int(k) for u, k in zip(uniq, counts)}


def fourier_of_counts(counts, k) -> complex:
    """``sum_x b_n(x) exp(i k.x)`` for a :class:`CountField` or a ``{x: count}`` mapping."""
    items = counts.items() if isinstance(counts, (CountField, dict)) else counts
    xs, cs = [], []
    for x, c in items:
        xs.append(x)
        cs.append(float(c))
    xs = np.array(xs, dtype=float)
    k = np.asarray(k, dtype=float)
    return complex(np.sum(np.array(cs) * np.exp(1j * (xs @ k))))


# -- second moment -----------------------------------------------------------------

def second_moment(step_set: StepSet, n: int, field: CountField | None = None) -> Fraction:
    """Exact ``E|omega_n|_2^2`` under the uniform law on ``n``-step NBWs."""
    if field is None:
        field = count_walks(step_set, n)
    num = 0
    den = 0
    for x, c in field.items():
        num += c * sum(v * v for v in x)
        den += c
    return Fraction(num, den)


def second_moment_closed_form(step_set: StepSet, n: int) -> Fraction:
    """``s2 * (n + 2 sum_{j<n} (n-j) q^j)`` with ``q = 1/(m-1)``, ``s2 = mean |x|^2 over V0``.

    Follows from ``E[s_{i+1} | s_i] = s_i / (m-1)`` for the step process.
    """
    m = step_set.degree
    q = Fraction(1, m - 1)
    s2 = Fraction(int(np.sum(step_set.array**2)), m)
    return s2 * (n + 2 * sum((n - j) * q**j for j in range(1, n)))


def second_moment_printed(d: int, n: int) -> Fraction:
    """The published closed form ``d n/(d-1) + (4d-1)/(2(d-1)^2) + d/(2(d-1)^2 (2d-1)^(n-2))``.

    Kept for comparison only; its constant terms disagree with exact enumeration.
    """
    return (Fraction(d * n, d - 1) + Fraction(4 * d - 1, 2 * (d - 1) ** 2)
            + Fraction(d, 2 * (d - 1) ** 2) * Fraction(2 * d - 1) ** (2 - n))


def tightness_constant(step_set: StepSet, n: int, cap: int = DEFAULT_PATH_CAP) -> tuple[Fraction, tuple[int, int, int]]:
    """Smallest ``K`` with ``E[|D1|^2 |D2|^2] <= K (j-i)(l-j)`` over all ``0 <= i < j < l <= n``.

    ``D1 = omega_j - omega_i``, ``D2 = omega_l - omega_j``; equivalently
    ``K (t2-t1)(t3-t2) n^2`` with ``t = i/n``.  Returns ``K`` and the maximising triple.
    """
    pos = walk_positions(step_set, n, cap)
    total = pos.shape[0]
    best, arg = Fraction(0), (0, 0, 0)
    sq = {}
    for i, j in combinations(range(n + 1), 2):
        diff = pos[:, j] - pos[:, i]
        sq[i, j] = np.einsum("ij,ij->i", diff, diff)
    for i, j, l in combinations(range(n + 1), 3):
        num = int(np.dot(sq[i, j], sq[j, l]))
        val = Fraction(num, total * (j - i) * (l - j))
        if val > best:
            best, arg = val, (i, j, l)
    return best, arg


def tightness_reference(m: int) -> float:
    """``(m/(m-1))^3 (m/(m-2))^2``: the tightness constant implied by the piecewise
    overcount of NBWs together with ``E|omega_n|^2 <= n m/(m-2)``."""
    return (m / (m - 1)) ** 3 * (m / (m - 2)) ** 2


def total_nbw(m: int, n: int) -> int:
    return 1 if n == 0 else m * (m - 1) ** (n - 1)


def log_total_nbw(m: int, n: int) -> float:
    return 0.0 if n == 0 else math.log(m) + (n - 1) * math.log(m - 1)
