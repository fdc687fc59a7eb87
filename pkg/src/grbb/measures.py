"""Exact arithmetic on finitely-supported probability measures over Z+.

`Pmf` is the universal currency of the package: occupancy marginals,
limit laws, queue stationary laws and empirical measures are all instances.
Measures with infinite support (Poisson, geometric) are stored truncated,
with the discarded mass recorded in ``tail_mass`` so that error accounting
stays explicit.  Operations never renormalize silently.

Total variation between truncated measures is reported as the sum over the
explicit supports; a caller needing a guarantee adds (tail_p + tail_q)/2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

# Construction-time slack on "masses sum to one" and default truncation level.
TOTAL_TOL = 1e-12
TAIL_TOL = 1e-12

__all__ = [
    "Pmf",
    "JointPmf",
    "tv_distance",
    "joint_tv_distance",
    "empirical_measure",
    "product_pmf",
    "TOTAL_TOL",
    "TAIL_TOL",
]


@dataclass(frozen=True)
class Pmf:
    """Finitely supported pmf on the non-negative integers.

    support : strictly increasing int64 values with positive mass
    masses  : matching probabilities
    tail_mass : mass beyond the explicit support, lost to truncation
    """

    support: np.ndarray
    masses: np.ndarray
    tail_mass: float = 0.0

    def __post_init__(self):
        support = np.asarray(self.support, dtype=np.int64)
        masses = np.asarray(self.masses, dtype=np.float64).copy()
        if support.ndim != 1 or masses.ndim != 1 or support.shape != masses.shape:
            raise ValueError("support and masses must be 1-D arrays of equal length")
        if support.size == 0:
            raise ValueError("pmf needs at least one support point")
        if np.any(support < 0):
            raise ValueError("support values must be non-negative integers")
        if np.any(np.diff(support) <= 0):
            raise ValueError("support must be strictly increasing")
        if np.any(masses < -TOTAL_TOL):
            raise ValueError("negative mass")
        np.clip(masses, 0.0, None, out=masses)
        if not 0.0 <= self.tail_mass <= 1.0 + TOTAL_TOL:
            raise ValueError("tail_mass out of [0, 1]")
        total = float(masses.sum()) + self.tail_mass
        if abs(total - 1.0) > TOTAL_TOL:
            raise ValueError(f"masses + tail must sum to 1, got {total!r}")
        support.setflags(write=False)
        masses.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "masses", masses)

    # -- constructors --------------------------------------------------------

    @classmethod
    def from_dict(cls, d: dict, tail_mass: float = 0.0) -> "Pmf":
        items = sorted(d.items())
        vals = np.array([v for v, _ in items], dtype=np.int64)
        return cls(vals, np.array([m for _, m in items], dtype=np.float64), tail_mass)

    @classmethod
    def delta(cls, k: int) -> "Pmf":
        return cls(np.array([k]), np.array([1.0]))

    @classmethod
    def bernoulli(cls, a: float) -> "Pmf":
        if not 0.0 <= a <= 1.0:
            raise ValueError("Bernoulli parameter must lie in [0, 1]")
        if a == 0.0:
            return cls.delta(0)
        if a == 1.0:
            return cls.delta(1)
        return cls(np.array([0, 1]), np.array([1.0 - a, a]))

    @classmethod
    def binomial(cls, n: int, p: float) -> "Pmf":
        # finite support: keep every cell (zeros drop out on their own)
        vals = np.arange(n + 1)
        return _truncated(vals, stats.binom.pmf(vals, n, p), 0.0)

    @classmethod
    def poisson(cls, lam: float, tail_tol: float = TAIL_TOL) -> "Pmf":
        """Poisson(lam) truncated once the remaining upper tail is < tail_tol."""
        if lam < 0:
            raise ValueError("Poisson rate must be >= 0")
        if lam == 0.0:
            return cls.delta(0)
        # width: mean + wide safety margin, then trim
        hi = int(lam + 12.0 * math.sqrt(lam) + 30.0)
        vals = np.arange(hi + 1)
        return _truncated(vals, stats.poisson.pmf(vals, lam), tail_tol)

    @classmethod
    def geometric(cls, s: float, tail_tol: float = TAIL_TOL) -> "Pmf":
        """Geometric on Z+ with success parameter s: P(k) = s (1-s)^k."""
        if not 0.0 < s <= 1.0:
            raise ValueError("geometric success parameter must lie in (0, 1]")
        if s == 1.0:
            return cls.delta(0)
        hi = int(math.ceil(math.log(tail_tol) / math.log1p(-s))) + 2
        vals = np.arange(hi + 1)
        masses = s * np.power(1.0 - s, vals.astype(np.float64))
        return _truncated(vals, masses, tail_tol)

    # -- accessors ------------------------------------------------------------

    def mass(self, k: int) -> float:
        i = np.searchsorted(self.support, k)
        if i < self.support.size and self.support[i] == k:
            return float(self.masses[i])
        return 0.0

    @property
    def max_value(self) -> int:
        return int(self.support[-1])

    def dense(self, width: int | None = None) -> np.ndarray:
        """Masses on {0, .., width-1} (default: up to the largest support point)."""
        w = self.max_value + 1 if width is None else width
        out = np.zeros(w)
        keep = self.support < w
        out[self.support[keep]] = self.masses[keep]
        return out

    def sampling_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(values, cumulative masses) for inverse-CDF sampling kernels."""
        return self.support, np.cumsum(self.masses)

    def sample(self, rng: np.random.Generator, size: int | None = None):
        idx = np.searchsorted(np.cumsum(self.masses), rng.random(size), side="right")
        return self.support[np.minimum(idx, self.support.size - 1)]

    # -- moments and transforms ------------------------------------------------

    def mean(self) -> float:
        """Mean over the explicit support; biased low by at most the tail mass
        times the (unknown) tail values, so report tail_mass alongside."""
        return float(self.support @ self.masses)

    def variance(self) -> float:
        m = self.mean()
        return float((self.support.astype(np.float64) ** 2) @ self.masses - m * m)

    def char_fn(self, x: float) -> complex:
        return complex(np.exp(1j * x * self.support) @ self.masses)

    def mgf(self, lam: float) -> float:
        """E[exp(lam * X)] over the explicit support, lam >= 0."""
        if lam < 0:
            raise ValueError("mgf requires lam >= 0")
        return float(np.exp(lam * self.support.astype(np.float64)) @ self.masses)

    def thin(self, prob: float) -> "Pmf":
        """Bernoulli thinning: each unit survives independently with p = prob."""
        if not 0.0 <= prob <= 1.0:
            raise ValueError("thinning probability must lie in [0, 1]")
        out = np.zeros(self.max_value + 1)
        for m, w in zip(self.support, self.masses):
            out[: m + 1] += w * stats.binom.pmf(np.arange(m + 1), m, prob)
        return _truncated(np.arange(out.size), out, TAIL_TOL)

    # -- serialization ----------------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "support": [int(v) for v in self.support],
            "mass": [float(m) for m in self.masses],
            "tail": float(self.tail_mass),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Pmf":
        return cls(np.array(d["support"]), np.array(d["mass"]), float(d.get("tail", 0.0)))

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict())

    def __repr__(self) -> str:
        pairs = ", ".join(f"{int(v)}: {m:.6g}" for v, m in zip(self.support, self.masses))
        tail = f", tail={self.tail_mass:.3g}" if self.tail_mass else ""
        return f"Pmf({{{pairs}}}{tail})"


def _truncated(vals: np.ndarray, masses: np.ndarray, tail_tol: float) -> Pmf:
    """Drop zero-mass points and the largest suffix of total mass < tail_tol.

    The tail is recorded residually as 1 - (kept mass), which also absorbs any
    mass the inputs were already missing, keeping the bookkeeping exact."""
    masses = np.clip(np.asarray(masses, dtype=np.float64), 0.0, None)
    suffix = np.cumsum(masses[::-1])[::-1]
    keep_hi = int(np.searchsorted(-suffix, -tail_tol, side="right"))
    vals, masses = vals[:keep_hi], masses[:keep_hi]
    nz = masses > 0.0
    if not np.any(nz):
        raise ValueError("all mass truncated away; not a probability measure")
    vals, masses = vals[nz], masses[nz]
    return Pmf(vals, masses, max(0.0, 1.0 - float(masses.sum())))


@dataclass(frozen=True)
class JointPmf:
    """Pmf on pairs of non-negative integers, dense from (0, 0).

    masses[h, k] is the probability of the pair (h, k).
    """

    masses: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=np.float64).copy()
        if m.ndim != 2:
            raise ValueError("joint masses must be a 2-D array")
        if np.any(m < -TOTAL_TOL):
            raise ValueError("negative mass")
        np.clip(m, 0.0, None, out=m)
        if abs(float(m.sum()) - 1.0) > TOTAL_TOL:
            raise ValueError(f"joint masses must sum to 1, got {float(m.sum())!r}")
        m.setflags(write=False)
        object.__setattr__(self, "masses", m)

    @classmethod
    def from_dict(cls, d: dict) -> "JointPmf":
        h_max = max(h for h, _ in d)
        k_max = max(k for _, k in d)
        m = np.zeros((h_max + 1, k_max + 1))
        for (h, k), w in d.items():
            m[h, k] = w
        return cls(m)

    def mass(self, h: int, k: int) -> float:
        if 0 <= h < self.masses.shape[0] and 0 <= k < self.masses.shape[1]:
            return float(self.masses[h, k])
        return 0.0

    def marginal(self, axis: int = 0) -> Pmf:
        """Marginal of the first (axis=0) or second (axis=1) coordinate."""
        dense = self.masses.sum(axis=1 - axis)
        vals = np.arange(dense.size)
        nz = dense > 0.0
        return Pmf(vals[nz], dense[nz], max(0.0, 1.0 - float(dense.sum())))


def product_pmf(p: Pmf, q: Pmf) -> JointPmf:
    """Independent product p (x) q as a joint pmf on the dense grid."""
    return JointPmf(np.outer(p.dense(), q.dense()))


def tv_distance(p: Pmf, q: Pmf) -> float:
    """Total variation distance, half the l1 distance over the union of the
    explicit supports.  Exact for finitely supported laws; for truncated ones
    the absolute error is at most (p.tail_mass + q.tail_mass) / 2."""
    vals = np.union1d(p.support, q.support)
    pm = np.zeros(vals.size)
    qm = np.zeros(vals.size)
    pm[np.searchsorted(vals, p.support)] = p.masses
    qm[np.searchsorted(vals, q.support)] = q.masses
    return min(0.5 * float(np.abs(pm - qm).sum()), 1.0)


def joint_tv_distance(a: JointPmf, b: JointPmf) -> float:
    """Total variation distance between two joint pmfs."""
    rows = max(a.masses.shape[0], b.masses.shape[0])
    cols = max(a.masses.shape[1], b.masses.shape[1])
    am = np.zeros((rows, cols))
    bm = np.zeros((rows, cols))
    am[: a.masses.shape[0], : a.masses.shape[1]] = a.masses
    bm[: b.masses.shape[0], : b.masses.shape[1]] = b.masses
    return min(0.5 * float(np.abs(am - bm).sum()), 1.0)


def empirical_measure(xi: np.ndarray) -> Pmf:
    """Fraction of coordinates at each occupancy value.  Exact rationals
    (count / L), so the masses sum to one with no tail; the largest cell
    absorbs the float-summation residue (a few ulps) to keep the total
    exactly 1.0."""
    xi = np.asarray(xi)
    if xi.size == 0:
        raise ValueError("empirical measure of an empty vector")
    if np.any(xi < 0):
        raise ValueError("occupancies must be non-negative")
    vals, counts = np.unique(np.asarray(xi, dtype=np.int64), return_counts=True)
    masses = counts / xi.size
    force_exact_total(masses)
    return Pmf(vals, masses)


def force_exact_total(masses: np.ndarray) -> None:
    """Nudge cells by ulps, in place, until the float sum is exactly 1.0.

    Adjusting different cells explores different pairwise-summation rounding
    paths, so this terminates in practice after one or two attempts."""
    for i in np.argsort(-masses):
        for _ in range(3):
            residue = 1.0 - float(masses.sum())
            if residue == 0.0:
                return
            masses[i] += residue
