"""Step sets, direction indexing, torus geometry and the SRW step transform.

A :class:`StepSet` is the symmetric set of allowed single-step displacements
``V0``.  It lives either on ``Z^d`` (``modulus=None``) or on the torus
``(Z/rZ)^d`` (``modulus=r``).  On a torus a step may be its own reversal
(e.g. ``r/2 * e_i`` for even ``r``, or every step of the hypercube), which is
why torus step sets may have odd degree.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from pathlib import Path

import numpy as np

IMAG_CLAMP = 1e-14


def _centered(value: int, r: int) -> int:
    """Representative of ``value mod r`` in ``{-floor((r-1)/2), ..., ceil((r-1)/2)}``."""
    lo = -((r - 1) // 2)
    return (value - lo) % r + lo


@dataclass(frozen=True)
class StepSet:
    """Symmetric set of step vectors.

    Points are stored in a canonical sorted order; the position of a point in
    ``points`` is its direction index.  ``reversal[j]`` is the index of the
    step that undoes step ``j``.
    """

    dim: int
    points: tuple[tuple[int, ...], ...]
    modulus: int | None = None
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dimension must be positive, got {self.dim}")
        pts = []
        for p in self.points:
            p = tuple(int(c) for c in p)
            if len(p) != self.dim:
                raise ValueError(f"point {p} does not have dimension {self.dim}")
            if self.modulus is not None:
                p = tuple(_centered(c, self.modulus) for c in p)
            pts.append(p)
        if len(set(pts)) != len(pts):
            raise ValueError("step set contains duplicate points")
        if any(all(c == 0 for c in p) for p in pts):
            raise ValueError("step set must not contain the origin")
        pts = tuple(sorted(pts))
        object.__setattr__(self, "points", pts)
        lookup = {p: i for i, p in enumerate(pts)}
        rev = []
        for p in pts:
            q = self._negate(p)
            if q not in lookup:
                raise ValueError(f"step set is not symmetric: {p} present but {q} missing")
            rev.append(lookup[q])
        object.__setattr__(self, "_lookup", lookup)
        object.__setattr__(self, "reversal", tuple(rev))
        if len(pts) < 2:
            raise ValueError("step set needs at least two points")
        if self.modulus is None and len(pts) % 2:
            raise ValueError("a symmetric step set on Z^d has even degree")

    def _negate(self, p):
        if self.modulus is None:
            return tuple(-c for c in p)
        return tuple(_centered(-c, self.modulus) for c in p)

    @property
    def degree(self) -> int:
        return len(self.points)

    @cached_property
    def array(self) -> np.ndarray:
        """Points as an integer array of shape ``(m, d)``."""
        return np.array(self.points, dtype=np.int64).reshape(self.degree, self.dim)

    def index(self, point) -> int:
        p = tuple(int(c) for c in point)
        if self.modulus is not None:
            p = tuple(_centered(c, self.modulus) for c in p)
        return self._lookup[p]

    @property
    def is_nearest_neighbor(self) -> bool:
        """True for ``{±e_1, ..., ±e_d}`` with at least two distinct reversals."""
        if self.degree != 2 * self.dim:
            return False
        return set(self.points) == {tuple(_signed_unit(i, self.dim)) for i in _signed_range(self.dim)}

    def direction(self, iota: int) -> int:
        """Index of the signed unit direction ``e[iota]`` (nearest-neighbour sets)."""
        return self.index(_signed_unit(iota, self.dim))

    def to_dict(self) -> dict:
        out = {"dim": self.dim, "points": [list(p) for p in self.points]}
        if self.modulus is not None:
            out["modulus"] = self.modulus
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "StepSet":
        return cls(int(data["dim"]), tuple(tuple(p) for p in data["points"]), data.get("modulus"))


def _signed_range(d):
    return [s * i for i in range(1, d + 1) for s in (1, -1)]


def _signed_unit(iota: int, d: int) -> np.ndarray:
    """Unit vector ``e[iota]`` with ``(e[iota])_k = sign(iota) * delta(|iota|, k)``."""
    if not 1 <= abs(iota) <= d:
        raise ValueError(f"direction {iota} out of range for d={d}")
    e = np.zeros(d, dtype=np.int64)
    e[abs(iota) - 1] = 1 if iota > 0 else -1
    return e


unit_vector = _signed_unit


def reverse_direction(iota: int) -> int:
    if iota == 0:
        raise ValueError("direction index must be nonzero")
    return -iota


def wave_component(k, iota: int) -> float:
    """``k_iota`` with the convention ``k_{-i} = -k_i``."""
    k = np.asarray(k, dtype=float)
    return float(np.sign(iota) * k[abs(iota) - 1])


# -- presets -----------------------------------------------------------------

def nearest_neighbor(d: int, modulus: int | None = None) -> StepSet:
    if modulus is not None and modulus < 3:
        raise ValueError("nearest-neighbour torus needs r >= 3; use hypercube() for r = 2")
    pts = tuple(tuple(_signed_unit(i, d)) for i in _signed_range(d))
    return StepSet(d, pts, modulus, name="nn")


def hamming(r: int, d: int) -> StepSet:
    """Product of complete graphs: change exactly one coordinate to any other value."""
    if r < 2:
        raise ValueError("hamming graph needs r >= 2")
    pts = []
    for i in range(d):
        for v in range(1, r):
            p = [0] * d
            p[i] = v
            pts.append(tuple(p))
    return StepSet(d, tuple(pts), r, name=f"hamming({r})")


def hypercube(m: int) -> StepSet:
    pts = tuple(tuple(int(i == j) for j in range(m)) for i in range(m))
    return StepSet(m, pts, 2, name="hypercube")


_PRESET = re.compile(r"^\s*hamming\((\d+)\)\s*$")


def parse_step_set(text: str, dim: int) -> StepSet:
    """Resolve ``nn``, ``hamming(r)``, ``hypercube`` or a JSON file path."""
    if text == "nn":
        return nearest_neighbor(dim)
    if text == "hypercube":
        return hypercube(dim)
    match = _PRESET.match(text)
    if match:
        return hamming(int(match.group(1)), dim)
    path = Path(text)
    if path.exists():
        return StepSet.from_dict(json.loads(path.read_text()))
    return StepSet.from_dict(json.loads(text))


# -- torus -------------------------------------------------------------------

@dataclass(frozen=True)
class TorusSpec:
    dim: int
    width: int

    def __post_init__(self):
        if self.dim < 1 or self.width < 2:
            raise ValueError(f"invalid torus: d={self.dim}, r={self.width}")

    @property
    def volume(self) -> int:
        return self.width ** self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.width,) * self.dim

    def reduce(self, x) -> tuple[int, ...]:
        return tuple(int(c) % self.width for c in x)

    def dual_axis(self) -> np.ndarray:
        """One-dimensional dual frequencies ``2 pi / r * {-floor((r-1)/2), ..., ceil((r-1)/2)}``."""
        r = self.width
        lo = -((r - 1) // 2)
        hi = math.ceil((r - 1) / 2)
        return 2 * np.pi / r * np.arange(lo, hi + 1)

    def dual_indices(self) -> np.ndarray:
        """Integer labels ``j`` of the dual grid, shape ``(r^d, d)``; ``k = 2 pi j / r``."""
        r = self.width
        lo = -((r - 1) // 2)
        axis = range(lo, lo + r)
        return np.array(list(product(axis, repeat=self.dim)), dtype=np.int64).reshape(-1, self.dim)

    def dual_grid(self) -> np.ndarray:
        return 2 * np.pi / self.width * self.dual_indices()

    def points(self) -> np.ndarray:
        return np.array(list(product(range(self.width), repeat=self.dim)), dtype=np.int64).reshape(-1, self.dim)


# -- step transforms -----------------------------------------------------------

def step_transform(step_set: StepSet, k) -> float:
    """``D^(k) = (1/m) sum_{x in V0} exp(i k.x)`` (real by symmetry)."""
    k = np.asarray(k, dtype=float)
    return float(step_transform_many(step_set, k.reshape(1, -1))[0])


def step_transform_many(step_set: StepSet, ks) -> np.ndarray:
    """Vectorised :func:`step_transform` over an array of waves of shape ``(N, d)``."""
    ks = np.atleast_2d(np.asarray(ks, dtype=float))
    if ks.shape[1] != step_set.dim:
        raise ValueError(f"wave dimension {ks.shape[1]} != step set dimension {step_set.dim}")
    phases = ks @ step_set.array.T.astype(float)
    vals = np.exp(1j * phases).mean(axis=1)
    scale = max(1.0, float(np.max(np.abs(phases))) if phases.size else 1.0)
    bad = np.abs(vals.imag) > IMAG_CLAMP * scale
    if np.any(bad):
        raise ValueError(
            "step transform has a non-negligible imaginary part "
            f"({np.max(np.abs(vals.imag)):.3e}); wave not on the dual grid of this torus step set?"
        )
    return vals.real.copy()


def hamming_step_transform(d: int, r: int, a: int) -> float:
    """Closed form ``1 - r a / (d (r - 1))`` for a dual point with ``a`` nonzero components."""
    if r < 2 or not 0 <= a <= d:
        raise ValueError(f"need r >= 2 and 0 <= a <= d, got r={r}, a={a}, d={d}")
    return 1.0 - r * a / (d * (r - 1))


def hypercube_step_transform(m: int, a: int) -> float:
    if not 0 <= a <= m:
        raise ValueError(f"need 0 <= a <= m, got a={a}, m={m}")
    return 1.0 - 2.0 * a / m
