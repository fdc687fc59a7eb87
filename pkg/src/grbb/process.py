"""The repeated balls-into-bins Markov chain.

States are length-L numpy vectors of non-negative ball counts.  Each step
removes one ball from every non-empty bin and reassigns the released balls
in one shot according to a `ReassignmentLaw`.  The number of reassigned
balls is always derived from the state, which makes ball-count conservation
structural rather than checked.

For tiny state spaces the module also builds the exact transition matrix
over all compositions of N into L parts, solves for the stationary vector
and computes the exact mixing time, as an oracle for the simulators.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import _kernels
from .measures import Pmf, empirical_measure
from .statistics import ReassignmentLaw

__all__ = [
    "as_occupancy",
    "grbb_step",
    "grbb_trajectory",
    "write_trajectory_csv",
    "TransitionMatrix",
    "exact_transition_matrix",
    "stationary_exact",
    "exact_mixing_time",
    "STATE_SPACE_GUARD",
]

STATE_SPACE_GUARD = 20000


def as_occupancy(counts) -> np.ndarray:
    """Validate and return an occupancy vector (int64 copy)."""
    xi = np.array(counts, dtype=np.int64)
    if xi.ndim != 1 or xi.size < 1:
        raise ValueError("occupancy vector must be 1-D and non-empty")
    if np.any(xi < 0):
        raise ValueError("ball counts must be non-negative")
    return xi


def grbb_step(law: ReassignmentLaw, state: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One step of the chain; returns a new vector with the same ball count."""
    out = as_occupancy(state)
    _kernels.grbb_step_inplace(law.law_id, out, rng)
    return out


def grbb_trajectory(
    law: ReassignmentLaw, init, T: int, rng: np.random.Generator
) -> list[Pmf]:
    """Empirical measures of the chain at times 0..T started from `init`."""
    if T < 0:
        raise ValueError("horizon must be non-negative")
    state = as_occupancy(init)
    out = [empirical_measure(state)]
    for _ in range(T):
        _kernels.grbb_step_inplace(law.law_id, state, rng)
        out.append(empirical_measure(state))
    return out


def write_trajectory_csv(trajectory: list[Pmf], path) -> None:
    """Long-format dump of a trajectory: one row per (t, value, mass)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "value", "mass"])
        for t, pmf in enumerate(trajectory):
            for v, m in zip(pmf.support, pmf.masses):
                w.writerow([t, int(v), repr(float(m))])


# -- exact finite-state analysis ------------------------------------------------


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic transition matrix over all compositions of N into L parts."""

    law: ReassignmentLaw
    L: int
    N: int
    states: tuple[tuple[int, ...], ...]
    P: np.ndarray

    def index_of(self, state) -> int:
        return self.states.index(tuple(int(v) for v in state))


def _compositions(n: int, k: int):
    """All k-tuples of non-negative integers summing to n, lexicographic."""
    if k == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in _compositions(n - first, k - 1):
            yield (first,) + rest


def _reassignment_outcomes(law: ReassignmentLaw, L: int, n: int):
    """All possible reassignment vectors of n balls into L bins with their
    probabilities, by enumeration."""
    if law is ReassignmentLaw.FERMI_DIRAC:
        w = 1.0 / math.comb(L, n)
        for pos in combinations(range(L), n):
            vec = [0] * L
            for p in pos:
                vec[p] = 1
            yield tuple(vec), w
    elif law is ReassignmentLaw.MAXWELL_BOLTZMANN:
        scale = float(L) ** n
        for comp in _compositions(n, L):
            coef = math.factorial(n)
            for c in comp:
                coef //= math.factorial(c)
            yield comp, coef / scale
    else:
        w = 1.0 / math.comb(n + L - 1, n)
        for comp in _compositions(n, L):
            yield comp, w


def exact_transition_matrix(law: ReassignmentLaw, L: int, N: int) -> TransitionMatrix:
    """Dense transition matrix by enumerating every reassignment outcome.

    Guarded to state spaces of at most STATE_SPACE_GUARD compositions; this
    is an oracle for tiny instances, not a scalable solver.  N may exceed L
    even for Fermi-Dirac reassignment: only the released balls (at most L)
    are redistributed.
    """
    if L < 1 or N < 0:
        raise ValueError("need L >= 1 and N >= 0")
    n_states = math.comb(N + L - 1, N)
    if n_states > STATE_SPACE_GUARD:
        raise ValueError(
            f"state space too large: {n_states} compositions exceeds guard {STATE_SPACE_GUARD}"
        )
    states = tuple(_compositions(N, L))
    index = {s: i for i, s in enumerate(states)}
    P = np.zeros((n_states, n_states))
    outcome_cache: dict[int, list] = {}
    for i, xi in enumerate(states):
        base = tuple(v - 1 if v > 0 else 0 for v in xi)
        nprime = sum(1 for v in xi if v > 0)
        if nprime not in outcome_cache:
            outcome_cache[nprime] = list(_reassignment_outcomes(law, L, nprime))
        for vec, w in outcome_cache[nprime]:
            nxt = tuple(b + v for b, v in zip(base, vec))
            P[i, index[nxt]] += w
    row_err = np.abs(P.sum(axis=1) - 1.0).max()
    if row_err > 1e-12:
        raise AssertionError(f"transition matrix rows deviate from 1 by {row_err}")
    return TransitionMatrix(law, L, N, states, P)


def stationary_exact(tm: TransitionMatrix, residual_tol: float = 1e-10) -> np.ndarray:
    """Stationary distribution over all states.

    The chain may have transient states; it must have exactly one closed
    communicating class, on which the stationary vector is supported.
    Raises if several closed classes exist or the l1 residual of pi P = pi
    exceeds `residual_tol`.
    """
    P = tm.P
    n = P.shape[0]
    ncomp, labels = connected_components(csr_matrix(P > 0), directed=True, connection="strong")
    open_comp = set()
    src, dst = np.nonzero(P > 0)
    for i, j in zip(src, dst):
        if labels[i] != labels[j]:
            open_comp.add(labels[i])
    closed = [c for c in range(ncomp) if c not in open_comp]
    if len(closed) != 1:
        raise ValueError(f"no unique stationary vector: {len(closed)} closed classes")
    mask = labels == closed[0]
    sub = P[np.ix_(mask, mask)]
    m = sub.shape[0]
    A = sub.T - np.eye(m)
    A[-1, :] = 1.0
    b = np.zeros(m)
    b[-1] = 1.0
    pi_sub = np.linalg.solve(A, b)
    pi_sub = np.clip(pi_sub, 0.0, None)
    pi_sub /= pi_sub.sum()
    pi = np.zeros(n)
    pi[mask] = pi_sub
    residual = float(np.abs(pi @ P - pi).sum())
    if residual > residual_tol:
        raise ValueError(f"stationary residual {residual} exceeds {residual_tol}")
    return pi


def exact_mixing_time(tm: TransitionMatrix, start="all", eps: float = 0.25, max_t: int = 100000) -> int:
    """Smallest t with TV(P^t(start, .), pi) <= eps; worst start if start='all'."""
    pi = stationary_exact(tm)
    if isinstance(start, str):
        if start != "all":
            raise ValueError("start must be a state, an index, or 'all'")
        rows = None
    elif isinstance(start, (int, np.integer)):
        rows = [int(start)]
    else:
        rows = [tm.index_of(start)]
    M = np.eye(tm.P.shape[0])
    for t in range(max_t + 1):
        if rows is None:
            dist = 0.5 * np.abs(M - pi).sum(axis=1).max()
        else:
            dist = 0.5 * np.abs(M[rows] - pi).sum(axis=1).max()
        if dist <= eps:
            return t
        M = M @ tm.P
    raise RuntimeError(f"chain failed to mix within {max_t} steps")
