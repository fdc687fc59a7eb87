"""Executable couplings between the exact two-site occupancy laws and the
products of their one-site marginals.

Both constructions share the first coordinate (y1 = x1) and make the second
coordinates agree except on an explicitly controlled mismatch event, so the
sampled frequency of x2 != y2 upper-bounds the TV distance between the joint
law and the product law.  The multinomial coupling shares uniforms between
two threshold counters; the uniform-composition coupling runs two reinforced
("draw, return with one extra copy") urns with a per-draw acceptance test.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .statistics import ReassignmentLaw, one_site_marginal

__all__ = [
    "CouplingSample",
    "mb_coupling_sample",
    "be_coupling_sample",
    "mb_coupling_samples",
    "be_coupling_samples",
    "polya_second_color_samples",
    "mismatch_probability",
]


@dataclass(frozen=True)
class CouplingSample:
    """One draw of ((x1, x2), (y1, y2)); y1 equals x1 by construction."""

    x1: int
    x2: int
    y1: int
    y2: int


def urn_test_success_probability(L: int, t: int, t_c: int, f_c: int) -> float:
    """Acceptance probability of the per-draw test in the two-urn coupling.

    After t coupled draws, of which t_c picked the current color and f_c of
    those failed their test, the next draw of that color copies it into the
    second urn with probability (L+t-1)(1+t_c-f_c) / ((L+t)(1+t_c)); at t=0
    this is (L-1)/L.  The batch kernel evaluates the same expression inline.
    """
    return (L + t - 1.0) * (1.0 + t_c - f_c) / ((L + t) * (1.0 + t_c))


def mb_coupling_samples(
    L: int, N: int, ns: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """ns coupled multinomial draws; returns (x1, x2, y2) arrays (y1 = x1)."""
    if L < 2:
        raise ValueError("coupling needs L >= 2")
    if N < 0 or ns < 1:
        raise ValueError("need N >= 0 and ns >= 1")
    return _kernels.mb_coupling_batch(L, N, ns, rng)


def be_coupling_samples(
    L: int, N: int, ns: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """ns coupled uniform-composition draws; returns (x1, x2, y2) arrays."""
    if L < 2:
        raise ValueError("coupling needs L >= 2")
    if N < 0 or ns < 1:
        raise ValueError("need N >= 0 and ns >= 1")
    vals, cdf = one_site_marginal(ReassignmentLaw.BOSE_EINSTEIN, L, N).sampling_arrays()
    return _kernels.be_coupling_batch(L, N, ns, vals, cdf, rng)


def mb_coupling_sample(L: int, N: int, rng: np.random.Generator) -> CouplingSample:
    x1, x2, y2 = mb_coupling_samples(L, N, 1, rng)
    return CouplingSample(int(x1[0]), int(x2[0]), int(x1[0]), int(y2[0]))


def be_coupling_sample(L: int, N: int, rng: np.random.Generator) -> CouplingSample:
    x1, x2, y2 = be_coupling_samples(L, N, 1, rng)
    return CouplingSample(int(x1[0]), int(x2[0]), int(x1[0]), int(y2[0]))


def polya_second_color_samples(
    L: int, draws: int, ns: int, rng: np.random.Generator
) -> np.ndarray:
    """Counts of the second color over `draws` steps of an L-color reinforced
    urn; distributed as the one-site uniform-composition marginal."""
    if L < 2 or draws < 0 or ns < 1:
        raise ValueError("need L >= 2, draws >= 0, ns >= 1")
    return _kernels.polya_second_color_counts(L, draws, ns, rng)


_BLOCK = 100_000


def mismatch_probability(
    which: str | ReassignmentLaw,
    L: int,
    N: int,
    samples: int,
    rng: np.random.Generator,
    workers: int = 1,
) -> tuple[float, float]:
    """Monte Carlo estimate of P(x2 != y2) with its binomial standard error.

    Work is split into fixed 100k-sample blocks with child streams spawned
    from `rng`, so the result does not depend on the worker count.
    """
    if samples < 1_000:
        raise ValueError("need at least 1000 samples")
    law = which if isinstance(which, ReassignmentLaw) else ReassignmentLaw.from_name(str(which))
    if law is ReassignmentLaw.FERMI_DIRAC:
        raise ValueError("mismatch estimation is defined for the mb and be couplings")
    sampler = mb_coupling_samples if law is ReassignmentLaw.MAXWELL_BOLTZMANN else be_coupling_samples
    sizes = [_BLOCK] * (samples // _BLOCK)
    if samples % _BLOCK:
        sizes.append(samples % _BLOCK)
    streams = rng.spawn(len(sizes))

    def run(block: int) -> int:
        _, x2, y2 = sampler(L, N, sizes[block], streams[block])
        return int(np.count_nonzero(x2 != y2))

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            mismatches = sum(pool.map(run, range(len(sizes))))
    else:
        mismatches = sum(run(b) for b in range(len(sizes)))
    p = mismatches / samples
    return p, float(np.sqrt(p * (1.0 - p) / samples))
