"""The three classical occupancy statistics and their exact laws.

For L bins and N balls:

* Fermi-Dirac: uniform over 0/1 vectors with exactly N ones (needs N <= L),
* Maxwell-Boltzmann: multinomial counts of N uniform independent throws,
* Bose-Einstein: uniform over all compositions of N into L parts.

Alongside exact samplers this module provides the closed-form one- and
two-site marginals, the single-site limit laws (Bernoulli / Poisson /
geometric), the measure map `psi` driving the mean-field recursion, the
product reference laws, and the two-site total-variation gap between the
exact joint and the product reference ("condition-1 gap").
"""

from __future__ import annotations

import enum
import math

import numpy as np
from scipy.special import gammaln

from . import _kernels
from .measures import JointPmf, Pmf, joint_tv_distance, product_pmf

__all__ = [
    "ReassignmentLaw",
    "sample_occupancy",
    "one_site_marginal",
    "two_site_joint",
    "limit_law",
    "psi",
    "reference_product_law",
    "condition1_gap",
]


class ReassignmentLaw(enum.Enum):
    """Which occupancy statistic reassigns the released balls."""

    FERMI_DIRAC = "fd"
    MAXWELL_BOLTZMANN = "mb"
    BOSE_EINSTEIN = "be"

    @property
    def law_id(self) -> int:
        """Integer tag used by the compiled kernels."""
        return {"fd": _kernels.FD, "mb": _kernels.MB, "be": _kernels.BE}[self.value]

    @property
    def lipschitz_constant(self) -> float:
        """Lipschitz bound of q -> psi(q) in total variation."""
        return {"fd": 1.0, "mb": 3.0, "be": 4.0}[self.value]

    @classmethod
    def from_name(cls, name: str) -> "ReassignmentLaw":
        key = name.strip().lower().replace("_", "-")
        aliases = {
            "fd": cls.FERMI_DIRAC,
            "fermi-dirac": cls.FERMI_DIRAC,
            "mb": cls.MAXWELL_BOLTZMANN,
            "maxwell-boltzmann": cls.MAXWELL_BOLTZMANN,
            "be": cls.BOSE_EINSTEIN,
            "bose-einstein": cls.BOSE_EINSTEIN,
        }
        if key not in aliases:
            raise ValueError(f"unknown law name {name!r} (use fd, mb or be)")
        return aliases[key]


FD = ReassignmentLaw.FERMI_DIRAC
MB = ReassignmentLaw.MAXWELL_BOLTZMANN
BE = ReassignmentLaw.BOSE_EINSTEIN


def _check_counts(law: ReassignmentLaw, L: int, N: int) -> None:
    if L < 1:
        raise ValueError("need at least one bin")
    if N < 0:
        raise ValueError("ball count must be non-negative")
    if law is FD and N > L:
        raise ValueError(f"statistic undefined: Fermi-Dirac needs N <= L, got N={N}, L={L}")


def _log_comb(n: int, k: int) -> float:
    return float(gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))


def sample_occupancy(law: ReassignmentLaw, L: int, N: int, rng: np.random.Generator) -> np.ndarray:
    """Draw one occupancy vector of length L with coordinate sum exactly N."""
    _check_counts(law, L, N)
    return _kernels.occupancy_sample(law.law_id, L, N, rng)


def one_site_marginal(law: ReassignmentLaw, L: int, N: int) -> Pmf:
    """Exact law of a single coordinate under the occupancy statistic."""
    _check_counts(law, L, N)
    if law is FD:
        return Pmf.bernoulli(N / L)
    if law is MB:
        return Pmf.binomial(N, 1.0 / L)
    if L == 1:
        return Pmf.delta(N)
    # P(k) = C(L-2+N-k, N-k) / C(L-1+N, N)
    ks = np.arange(N + 1)
    if L - 1 + N <= 64:
        masses = np.array([math.comb(L - 2 + N - k, N - k) for k in ks], dtype=np.float64)
        masses /= math.comb(L - 1 + N, N)
    else:
        log_den = _log_comb(L - 1 + N, N)
        masses = np.exp(gammaln(L - 1 + N - ks) - gammaln(N - ks + 1) - gammaln(L - 1) - log_den)
    return Pmf(ks, masses)


def two_site_joint(law: ReassignmentLaw, L: int, N: int) -> JointPmf:
    """Exact law of a coordinate pair under the occupancy statistic (L >= 2)."""
    if L < 2:
        raise ValueError("two-site law needs L >= 2")
    _check_counts(law, L, N)
    if law is FD:
        m = np.zeros((2, 2))
        denom = L * (L - 1)
        m[1, 1] = N * (N - 1) / denom
        m[1, 0] = m[0, 1] = N * (L - N) / denom
        m[0, 0] = (L - N) * (L - N - 1) / denom
        return JointPmf(m)
    if law is MB:
        if L == 2:
            # all mass on h + k = N
            m = np.zeros((N + 1, N + 1))
            for h in range(N + 1):
                m[h, N - h] = math.exp(_log_comb(N, h) - N * math.log(2.0))
            return JointPmf(m)
        h = np.arange(N + 1)[:, None]
        k = np.arange(N + 1)[None, :]
        rest = N - h - k
        with np.errstate(invalid="ignore"):
            logm = (
                gammaln(N + 1)
                - gammaln(h + 1)
                - gammaln(k + 1)
                - gammaln(np.where(rest >= 0, rest, 0) + 1)
                + (h + k) * math.log(1.0 / L)
                + np.where(rest >= 0, rest, 0) * math.log1p(-2.0 / L)
            )
        m = np.where(rest >= 0, np.exp(logm), 0.0)
        return JointPmf(m)
    # Bose-Einstein
    if L == 2:
        m = np.zeros((N + 1, N + 1))
        for h in range(N + 1):
            m[h, N - h] = 1.0 / (N + 1)
        return JointPmf(m)
    h = np.arange(N + 1)[:, None]
    k = np.arange(N + 1)[None, :]
    rest = N - h - k
    if L - 1 + N <= 64:
        denom = math.comb(L - 1 + N, N)
        m = np.zeros((N + 1, N + 1))
        for hh in range(N + 1):
            for kk in range(N + 1 - hh):
                m[hh, kk] = math.comb(L - 3 + N - hh - kk, N - hh - kk) / denom
    else:
        log_den = _log_comb(L - 1 + N, N)
        safe = np.where(rest >= 0, rest, 0)
        logm = gammaln(L - 3 + safe + 1) - gammaln(safe + 1) - gammaln(L - 2) - log_den
        m = np.where(rest >= 0, np.exp(logm), 0.0)
    return JointPmf(m)


def limit_law(law: ReassignmentLaw, q0: float, tail_tol: float = 1e-12) -> Pmf:
    """Single-site limit law for a system whose empty-bin fraction is q0.

    Bernoulli(1-q0) / Poisson(1-q0) / geometric on Z+ with success parameter
    1/(2-q0); all three have mean 1-q0.
    """
    if not 0.0 <= q0 <= 1.0:
        raise ValueError("q0 must lie in [0, 1]")
    if law is FD:
        return Pmf.bernoulli(1.0 - q0)
    if law is MB:
        return Pmf.poisson(1.0 - q0, tail_tol=tail_tol)
    return Pmf.geometric(1.0 / (2.0 - q0), tail_tol=tail_tol)


def psi(law: ReassignmentLaw, q: Pmf, tail_tol: float = 1e-12) -> Pmf:
    """Measure map driving the mean-field evolution; depends on q only
    through its mass at zero."""
    return limit_law(law, q.mass(0), tail_tol=tail_tol)


def reference_product_law(law: ReassignmentLaw, L: int, N: int, tail_tol: float = 1e-13) -> Pmf:
    """Single-site reference law at density N/L: Bernoulli(N/L), Poisson(N/L)
    or geometric with success parameter 1/(1+N/L)."""
    _check_counts(law, L, N)
    rho = N / L
    if law is FD:
        return Pmf.bernoulli(rho)
    if law is MB:
        return Pmf.poisson(rho, tail_tol=tail_tol)
    return Pmf.geometric(1.0 / (1.0 + rho), tail_tol=tail_tol)


def condition1_gap(law: ReassignmentLaw, L: int, N: int) -> float:
    """TV distance between the exact two-site joint and the product of the
    single-site reference law with itself.

    For Fermi-Dirac this equals 2N/(L(L-1)) * (1 - N/L) exactly.
    """
    joint = two_site_joint(law, L, N)
    ref = reference_product_law(law, L, N)
    return joint_tv_distance(joint, product_pmf(ref, ref))
