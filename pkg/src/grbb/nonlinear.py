"""Mean-field side: deterministic measure recursion, single-site process,
and the unit-service queue with i.i.d. arrivals.

The measure recursion is

    F(q)({n}) = q({0}) mu(n) + sum_{k=1}^{n+1} q({k}) mu(n-k+1),

with mu = psi(law, q), i.e. the law of (eta - 1(eta>0)) + B for an
independent arrival B ~ mu.  It conserves the mean because every arrival
law in the family has mean 1 - q({0}).

The queue with arrival law mu (mean < 1) has a stationary law pi_mu with
closed-form characteristic function and mean

    pi_hat(x) = (1 - m) mu_hat(x) (e^{ix} - 1) / (e^{ix} - mu_hat(x)),
    mean(pi)  = (var(mu) + m (1 - m)) / (2 (1 - m)),

used here as independent validators of the forward-iteration solver.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .measures import Pmf, _truncated, force_exact_total, tv_distance
from .statistics import ReassignmentLaw, limit_law, psi

__all__ = [
    "UnstableQueueError",
    "evolve_measure",
    "iterate_measure",
    "simulate_nonlinear_path",
    "queue_step",
    "queue_stationary",
    "stationary_char_fn",
    "stationary_mean",
    "DriftConstants",
    "drift_constants",
    "FixedPoint",
    "fixed_point",
]

ITERATE_TAIL_TOL = 1e-14


class UnstableQueueError(ValueError):
    """Arrival mean >= 1: no stationary law exists."""


def evolve_measure(law: ReassignmentLaw, q: Pmf, tail_tol: float = ITERATE_TAIL_TOL) -> Pmf:
    """One step of the measure recursion F."""
    mu = psi(law, q, tail_tol=tail_tol)
    qd = q.dense()
    shifted = np.zeros(qd.size)
    shifted[0] = qd[0] + (qd[1] if qd.size > 1 else 0.0)
    if qd.size > 2:
        shifted[1:-1] = qd[2:]
    out = np.convolve(shifted, mu.dense())
    return _truncated(np.arange(out.size), out, tail_tol)


def iterate_measure(
    law: ReassignmentLaw, q0: Pmf, T: int, tail_tol: float = ITERATE_TAIL_TOL
) -> list[Pmf]:
    """Measure recursion iterates Q(0)=q0, .., Q(T); per-step truncation at
    tail_tol with the discarded mass accumulating in tail_mass."""
    if T < 0:
        raise ValueError("horizon must be non-negative")
    out = [q0]
    for _ in range(T):
        out.append(evolve_measure(law, out[-1], tail_tol=tail_tol))
    return out


def simulate_nonlinear_path(
    law: ReassignmentLaw, q0: Pmf, T: int, rng: np.random.Generator
) -> np.ndarray:
    """Sample path of the single-site process whose arrival law at step t is
    psi applied to the deterministic iterate Q(t)."""
    if T < 0:
        raise ValueError("horizon must be non-negative")
    iterates = iterate_measure(law, q0, max(T - 1, 0))
    means = np.array([1.0 - q.mass(0) for q in iterates[:T]])
    vals, cdf = q0.sampling_arrays()
    return _kernels.nonlinear_path(law.law_id, vals, cdf, means, rng)


# -- the unit-service queue -----------------------------------------------------


def queue_step(mu: Pmf, zeta: int, rng: np.random.Generator) -> int:
    """One queue transition: serve one customer if any, add arrivals ~ mu."""
    if zeta < 0:
        raise ValueError("queue length must be non-negative")
    b = int(mu.sample(rng))
    return zeta - (1 if zeta > 0 else 0) + b


def _require_stable(mu: Pmf) -> float:
    m = mu.mean()
    if m >= 1.0:
        raise UnstableQueueError(f"unstable queue: arrival mean {m} >= 1")
    return m


_MAX_WINDOW = 1 << 24


def queue_stationary(mu: Pmf, tol: float = 1e-10) -> Pmf:
    """Stationary law of the queue by forward iteration of the one-step kernel
    from the empty state, stopping once the successive TV change is below
    tol/10.  The result is validated against the closed-form characteristic
    function (at x = 0.1, 0.5, 1, 2) and mean to 1e-8; if validation fails
    the iteration resumes with a tighter threshold before giving up.

    If mu was truncated, its explicit window is renormalized before iterating
    (otherwise the deficit would compound over the iteration count); the
    resulting shift of the stationary law is of order mu.tail_mass / (1 - m),
    far below the validation tolerance for any reasonable truncation.
    """
    _require_stable(mu)
    mud = mu.dense()
    mud /= mud.sum()
    # an exact unit total stops the deficit/excess from compounding over the
    # iteration count
    force_exact_total(mud)
    W = max(128, 8 * mud.size + 32)
    stop = tol / 10.0
    pi = np.zeros(W)
    pi[0] = 1.0
    while True:
        _, change = _kernels.queue_iterate(pi, mud, stop, 2_000_000)
        edge = float(pi[-max(4, mud.size):].sum())
        if edge > 1e-16:
            # stationary mass reaches the window edge: widen and redo
            W *= 2
            if W > _MAX_WINDOW:
                raise RuntimeError("stationary support exceeds the window cap")
            pi = np.zeros(W)
            pi[0] = 1.0
            continue
        if change >= stop:
            raise RuntimeError("queue solver did not converge within the iteration budget")
        vals = np.arange(W)
        keep = pi > 0.0
        candidate = Pmf(vals[keep], pi[keep], max(1.0 - float(pi.sum()), 0.0))
        err = abs(candidate.mean() - stationary_mean(mu))
        for x in (0.1, 0.5, 1.0, 2.0):
            err = max(err, abs(candidate.char_fn(x) - stationary_char_fn(mu, x)))
        if err <= 1e-8:
            return candidate
        if stop < 1e-15:
            raise RuntimeError(
                f"queue solver disagrees with closed forms by {err} at machine precision"
            )
        stop *= 0.01


def stationary_char_fn(mu: Pmf, x: float) -> complex:
    """Closed-form characteristic function of the queue's stationary law."""
    m = _require_stable(mu)
    if abs(cmath.exp(1j * x) - 1.0) < 1e-12:
        return 1.0 + 0.0j
    mu_hat = mu.char_fn(x)
    eix = cmath.exp(1j * x)
    return (1.0 - m) * mu_hat * (eix - 1.0) / (eix - mu_hat)


def stationary_mean(mu: Pmf) -> float:
    """Closed-form mean of the queue's stationary law."""
    m = _require_stable(mu)
    return (mu.variance() + m * (1.0 - m)) / (2.0 * (1.0 - m))


@dataclass(frozen=True)
class DriftConstants:
    """Geometric-drift constants of the exponential Lyapunov function
    f(z) = exp(lam z): one queue step satisfies E[f] - f <= -gamma f + C."""

    lam: float
    gamma: float
    C: float
    in_range: bool  # gamma in (0, 1): lam is below the stability threshold


def drift_constants(mu: Pmf, lam: float) -> DriftConstants:
    """gamma = 1 - e^{-lam} M(lam) and C = M(lam) (1 - e^{-lam}) for the
    arrival moment generating function M, flagged by whether gamma lands in
    (0, 1)."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    _require_stable(mu)
    value = mu.mgf(lam)
    if mu.tail_mass > 0.0:
        # refuse lam where the truncated tail could distort the mgf
        est = mu.tail_mass * math.exp(lam * (mu.max_value + 1))
        if est > 1e-9 * value:
            raise ValueError(
                f"mgf unreliable under truncation at lam={lam}: tail contribution ~{est:.3g}"
            )
    gamma = 1.0 - math.exp(-lam) * value
    c = value * (1.0 - math.exp(-lam))
    return DriftConstants(lam, gamma, c, 0.0 < gamma < 1.0)


# -- mean-indexed fixed point -----------------------------------------------------


@dataclass(frozen=True)
class FixedPoint:
    """Stationary law of the mean-field recursion with prescribed mean r."""

    law: ReassignmentLaw
    r: float
    a_star: float
    pi_bar: Pmf
    residual_tv: float

    def to_json_dict(self) -> dict:
        return {
            "law": self.law.value,
            "r": self.r,
            "a_star": self.a_star,
            "pi_bar": self.pi_bar.to_json_dict(),
            "residual_tv": self.residual_tv,
        }


def _mean_at(law: ReassignmentLaw, a: float) -> float:
    """Stationary queue mean when the arrival law has mean a (= 1 - q0)."""
    return stationary_mean(limit_law(law, 1.0 - a, tail_tol=1e-14))


def fixed_point(law: ReassignmentLaw, r: float, tol: float = 1e-10) -> FixedPoint:
    """Find the arrival mean a* whose stationary queue law has mean r, by
    bisection (the stationary mean is increasing in a), then solve for that
    stationary law and verify it is fixed under the measure recursion."""
    if not 0.0 <= r < 1.0:
        raise ValueError("target mean r must lie in [0, 1)")
    lo, hi = 0.0, 1.0 - 1e-9
    if _mean_at(law, hi) < r:
        raise ValueError(f"target mean {r} not reachable below the stability bound")
    while hi - lo > 1e-15:
        mid = 0.5 * (lo + hi)
        if _mean_at(law, mid) < r:
            lo = mid
        else:
            hi = mid
    a_star = 0.5 * (lo + hi)
    arrivals = limit_law(law, 1.0 - a_star, tail_tol=1e-14)
    solver_tol = tol / 100.0
    for _ in range(3):
        pi_bar = queue_stationary(arrivals, tol=solver_tol)
        residual = tv_distance(evolve_measure(law, pi_bar), pi_bar)
        if residual <= 10.0 * tol:
            return FixedPoint(law, r, a_star, pi_bar, residual)
        solver_tol *= 0.01
    raise RuntimeError(f"fixed-point residual {residual} exceeds {10.0 * tol}")
