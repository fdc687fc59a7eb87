"""Hot numerical kernels, JIT-compiled with numba when available.

Backend selection is controlled by the ``GRBB_NUMBA`` environment variable,
read once at import time:

* ``1`` / ``on``   -- require numba (import error if it is missing),
* ``0`` / ``off``  -- run the same functions uncompiled (numpy + interpreter),
* unset / ``auto`` -- use numba if it imports, fall back otherwise.

Every kernel draws randomness from a ``numpy.random.Generator`` passed in by
the caller.  Numba consumes Generator streams bit-compatibly with numpy, and
the fallback path executes the identical function body, so both backends
produce identical output for the same seed.  ``benchmarks/bench_kernels.py``
times one against the other.

All kernels are compiled with ``nogil=True`` so independent replicas can run
on a thread pool; callers must give each thread its own Generator.
"""

import os

import numpy as np

__all__ = [
    "BACKEND",
    "FD",
    "MB",
    "BE",
    "py_func",
    "warmup",
    "fd_sample",
    "mb_sample",
    "be_sample",
    "occupancy_sample",
    "grbb_step_inplace",
    "sample_pmf",
    "iid_sample_pmf",
    "chaos_replica_sup_tv",
    "fd_time_to_flat",
    "queue_iterate",
    "queue_path",
    "nonlinear_path",
    "mb_coupling_batch",
    "be_coupling_batch",
    "polya_second_color_counts",
]

# Integer law tags shared with statistics.ReassignmentLaw.
FD = 0
MB = 1
BE = 2


def _noop_jit(*args, **kwargs):
    """Decorator that returns the function unchanged (no compilation)."""
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(fn):
        return fn

    return wrap


_flag = os.environ.get("GRBB_NUMBA", "auto").strip().lower()
if _flag in ("0", "off", "false", "no"):
    _use_numba = False
elif _flag in ("1", "on", "true", "yes", "require"):
    from numba import njit  # fail loudly when explicitly requested

    _use_numba = True
else:
    try:
        from numba import njit

        _use_numba = True
    except ImportError:
        _use_numba = False

if _use_numba:
    _jit = njit(cache=True, nogil=True)
else:
    _jit = _noop_jit

BACKEND = "numba" if _use_numba else "python"


def py_func(kernel):
    """Return the uncompiled version of a kernel (itself on the python backend)."""
    return getattr(kernel, "py_func", kernel)


@_jit
def fd_sample(L, N, rng):
    """0/1 vector with exactly N ones, uniform over the C(L, N) placements.

    Partial Fisher-Yates selection of N positions; caller enforces N <= L.
    """
    out = np.zeros(L, dtype=np.int64)
    idx = np.arange(L)
    for i in range(N):
        j = i + rng.integers(0, L - i)
        tmp = idx[i]
        idx[i] = idx[j]
        idx[j] = tmp
        out[idx[i]] = 1
    return out


@_jit
def mb_sample(L, N, rng):
    """Multinomial occupancy: N balls thrown independently and uniformly.

    Sequential conditional binomials, cell i gets Binomial(remaining, 1/(L-i)).
    """
    out = np.zeros(L, dtype=np.int64)
    remaining = N
    for i in range(L - 1):
        if remaining == 0:
            return out
        k = rng.binomial(remaining, 1.0 / (L - i))
        out[i] = k
        remaining -= k
    out[L - 1] = remaining
    return out


@_jit
def be_sample(L, N, rng):
    """Uniform composition of N into L non-negative parts (stars and bars).

    Draws a uniform (L-1)-subset of N+L-1 slots as bar positions and reads
    the gaps back as counts.
    """
    out = np.empty(L, dtype=np.int64)
    if L == 1:
        out[0] = N
        return out
    M = N + L - 1
    nbars = L - 1
    idx = np.arange(M)
    for i in range(nbars):
        j = i + rng.integers(0, M - i)
        tmp = idx[i]
        idx[i] = idx[j]
        idx[j] = tmp
    bars = np.sort(idx[:nbars])
    prev = -1
    for i in range(nbars):
        out[i] = bars[i] - prev - 1
        prev = bars[i]
    out[L - 1] = M - 1 - prev
    return out


@_jit
def occupancy_sample(law, L, N, rng):
    if law == FD:
        return fd_sample(L, N, rng)
    elif law == MB:
        return mb_sample(L, N, rng)
    return be_sample(L, N, rng)


@_jit
def grbb_step_inplace(law, state, rng):
    """One chain step: every non-empty bin releases a ball, all released balls
    are reassigned by the given occupancy law.  Ball count is conserved by
    construction: the reassignment count is derived from the state."""
    L = state.shape[0]
    nprime = 0
    for x in range(L):
        if state[x] > 0:
            state[x] -= 1
            nprime += 1
    b = occupancy_sample(law, L, nprime, rng)
    for x in range(L):
        state[x] += b[x]


@_jit
def sample_pmf(vals, cdf, rng):
    """Inverse-CDF draw from a finite pmf given as (values, cumulative masses)."""
    u = rng.random()
    i = np.searchsorted(cdf, u, side="right")
    if i >= vals.shape[0]:
        i = vals.shape[0] - 1
    return vals[i]


@_jit
def iid_sample_pmf(vals, cdf, n, rng):
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        out[i] = sample_pmf(vals, cdf, rng)
    return out


@_jit
def chaos_replica_sup_tv(law, L, T, init_vals, init_cdf, q_table, rng):
    """One mean-field replica: i.i.d. initial occupancies, T chain steps,
    running sup over t of TV(empirical measure, q_table[t]).

    q_table holds the deterministic measure recursion, row t = masses on
    {0, .., W-1}; empirical mass at values >= W is counted against zero.
    """
    W = q_table.shape[1]
    state = np.empty(L, dtype=np.int64)
    for x in range(L):
        state[x] = sample_pmf(init_vals, init_cdf, rng)
    counts = np.zeros(W, dtype=np.int64)
    sup = 0.0
    for t in range(T + 1):
        if t > 0:
            grbb_step_inplace(law, state, rng)
        for i in range(W):
            counts[i] = 0
        overflow = 0
        for x in range(L):
            v = state[x]
            if v < W:
                counts[v] += 1
            else:
                overflow += 1
        acc = 0.0
        for i in range(W):
            acc += abs(counts[i] / L - q_table[t, i])
        acc += overflow / L
        tv = 0.5 * acc
        if tv > sup:
            sup = tv
    return sup


@_jit
def fd_time_to_flat(L, N, max_steps, rng):
    """First time the Fermi-Dirac chain started from (N, 0, ..., 0) reaches a
    configuration with every bin holding at most one ball.  Returns -1 if the
    step budget runs out."""
    state = np.zeros(L, dtype=np.int64)
    state[0] = N
    for t in range(max_steps + 1):
        flat = True
        for x in range(L):
            if state[x] > 1:
                flat = False
                break
        if flat:
            return t
        grbb_step_inplace(FD, state, rng)
    return -1


@_jit
def queue_iterate(pi, mu, tv_stop, max_iters):
    """Forward kernel iteration for the unit-service queue on a fixed window.

    In place: pi <- convolve(shift_down(pi), mu) truncated to len(pi), until
    the successive TV change drops below tv_stop.  Returns (iterations run,
    last TV change).  The exact operator preserves total mass, so each step
    rescales by the computed total to stop rounding drift from compounding;
    mass genuinely convolved past the window still shows up at the edge,
    which the caller watches to decide whether to enlarge it.
    """
    W = pi.shape[0]
    K = mu.shape[0]
    shifted = np.empty(W, dtype=np.float64)
    new = np.empty(W, dtype=np.float64)
    change = 1.0
    it = 0
    while it < max_iters:
        shifted[0] = pi[0]
        if W > 1:
            shifted[0] += pi[1]
        for j in range(1, W - 1):
            shifted[j] = pi[j + 1]
        if W > 1:
            shifted[W - 1] = 0.0
        total = 0.0
        for n in range(W):
            kmax = n if n < K - 1 else K - 1
            acc = 0.0
            for k in range(kmax + 1):
                acc += mu[k] * shifted[n - k]
            new[n] = acc
            total += acc
        inv = 1.0 / total
        acc = 0.0
        for n in range(W):
            scaled = new[n] * inv
            acc += abs(scaled - pi[n])
            pi[n] = scaled
        change = 0.5 * acc
        it += 1
        if change < tv_stop:
            break
    return it, change


@_jit
def queue_path(mu_vals, mu_cdf, z0, T, rng):
    """Sample path of the unit-service queue with i.i.d. arrivals from a pmf."""
    out = np.empty(T + 1, dtype=np.int64)
    z = z0
    out[0] = z
    for t in range(1, T + 1):
        b = sample_pmf(mu_vals, mu_cdf, rng)
        if z > 0:
            z = z - 1 + b
        else:
            z = b
        out[t] = z
    return out


@_jit
def nonlinear_path(law, q0_vals, q0_cdf, arrival_means, rng):
    """Sample path of the single-site mean-field process.

    arrival_means[t] is the mean 1 - Q(t)({0}) of the step-t arrival law; the
    arrival variable is Bernoulli / Poisson / geometric-on-Z+ with that mean
    depending on the law tag.
    """
    T = arrival_means.shape[0]
    out = np.empty(T + 1, dtype=np.int64)
    eta = sample_pmf(q0_vals, q0_cdf, rng)
    out[0] = eta
    for t in range(T):
        a = arrival_means[t]
        if law == FD:
            b = 1 if rng.random() < a else 0
        elif law == MB:
            b = rng.poisson(a)
        else:
            # success parameter 1/(1+a) on {0, 1, ...}
            b = rng.geometric(1.0 / (1.0 + a)) - 1
        if eta > 0:
            eta = eta - 1 + b
        else:
            eta = b
        out[t + 1] = eta
    return out


@_jit
def mb_coupling_batch(L, N, ns, rng):
    """Coupled multinomial pair draws.

    Per sample: x1 ~ Binomial(N, 1/L); shared uniforms u_1..u_N; x2 counts
    u_k <= 1/(L-1) among the first N-x1 of them, y2 counts u_k <= 1/L among
    all N.  (x1, x2) is then the two-site multinomial occupancy law and
    (x1, y2) the product of its one-site binomial marginals.
    """
    x1s = np.empty(ns, dtype=np.int64)
    x2s = np.empty(ns, dtype=np.int64)
    y2s = np.empty(ns, dtype=np.int64)
    p_in = 1.0 / (L - 1)
    p_out = 1.0 / L
    for s in range(ns):
        x1 = rng.binomial(N, p_out)
        m = N - x1
        x2 = 0
        y2 = 0
        for k in range(N):
            u = rng.random()
            if k < m and u <= p_in:
                x2 += 1
            if u <= p_out:
                y2 += 1
        x1s[s] = x1
        x2s[s] = x2
        y2s[s] = y2
    return x1s, x2s, y2s


@_jit
def be_coupling_batch(L, N, ns, x1_vals, x1_cdf, rng):
    """Coupled uniform-composition pair draws via two reinforced urns.

    Urn A holds colors 2..L, urn B colors 1..L; both return each drawn ball
    with one extra copy of the same color.  Given x1 = n < N, each of the
    first N-n draws takes a color from A and runs a success test with
    probability (L+t-1)(1+t_c-f_c) / ((L+t)(1+t_c)); success copies the color
    into B, failure sends color 1 to B.  The last n draws come from B alone.
    x2 counts color 2 out of A, y2 counts color 2 out of B over all N draws.
    For x1 = N, x2 = 0 and y2 comes from a fresh L-color reinforced urn.

    A draw from a reinforced urn with t prior draws picks a fresh uniform
    color with probability (initial count)/(initial count + t) and otherwise
    repeats a uniformly chosen earlier draw.
    """
    x1s = np.empty(ns, dtype=np.int64)
    x2s = np.empty(ns, dtype=np.int64)
    y2s = np.empty(ns, dtype=np.int64)
    b_hist = np.empty(N, dtype=np.int64)
    a_hist = np.empty(N, dtype=np.int64)
    t_cnt = np.zeros(L + 1, dtype=np.int64)
    f_cnt = np.zeros(L + 1, dtype=np.int64)
    for s in range(ns):
        n = sample_pmf(x1_vals, x1_cdf, rng)
        x2 = 0
        y2 = 0
        if n == N:
            # fresh L-color urn, N draws, tally color 2
            for t in range(N):
                if rng.random() * (L + t) < L:
                    c = rng.integers(1, L + 1)
                else:
                    c = b_hist[rng.integers(0, t)]
                b_hist[t] = c
                if c == 2:
                    y2 += 1
        else:
            for c in range(L + 1):
                t_cnt[c] = 0
                f_cnt[c] = 0
            for t in range(N - n):
                # draw from A: L-1 initial colors plus t duplicates
                if rng.random() * (L - 1 + t) < L - 1:
                    c = 2 + rng.integers(0, L - 1)
                else:
                    c = a_hist[rng.integers(0, t)]
                a_hist[t] = c
                if c == 2:
                    x2 += 1
                tc = t_cnt[c]
                fc = f_cnt[c]
                p_succ = (L + t - 1.0) * (1.0 + tc - fc) / ((L + t) * (1.0 + tc))
                if rng.random() < p_succ:
                    bc = c
                else:
                    bc = 1
                    f_cnt[c] += 1
                t_cnt[c] += 1
                b_hist[t] = bc
                if bc == 2:
                    y2 += 1
            for t in range(N - n, N):
                if rng.random() * (L + t) < L:
                    c = rng.integers(1, L + 1)
                else:
                    c = b_hist[rng.integers(0, t)]
                b_hist[t] = c
                if c == 2:
                    y2 += 1
        x1s[s] = n
        x2s[s] = x2
        y2s[s] = y2
    return x1s, x2s, y2s


@_jit
def polya_second_color_counts(L, draws, ns, rng):
    """Number of color-2 draws in `draws` steps of an L-color reinforced urn,
    repeated ns times."""
    out = np.empty(ns, dtype=np.int64)
    hist = np.empty(max(draws, 1), dtype=np.int64)
    for s in range(ns):
        cnt = 0
        for t in range(draws):
            if rng.random() * (L + t) < L:
                c = rng.integers(1, L + 1)
            else:
                c = hist[rng.integers(0, t)]
            hist[t] = c
            if c == 2:
                cnt += 1
        out[s] = cnt
    return out


def warmup():
    """Force compilation of every kernel on tiny inputs (no-op fallback)."""
    rng = np.random.default_rng(0)
    vals = np.array([0, 1], dtype=np.int64)
    cdf = np.array([0.5, 1.0])
    occupancy_sample(FD, 2, 1, rng)
    occupancy_sample(MB, 2, 1, rng)
    occupancy_sample(BE, 2, 1, rng)
    st = np.array([1, 0], dtype=np.int64)
    grbb_step_inplace(FD, st, rng)
    iid_sample_pmf(vals, cdf, 2, rng)
    chaos_replica_sup_tv(MB, 2, 1, vals, cdf, np.full((2, 3), 1.0 / 3), rng)
    fd_time_to_flat(2, 2, 10, rng)
    queue_iterate(np.array([1.0, 0.0, 0.0]), np.array([0.5, 0.5]), 1e-3, 5)
    queue_path(vals, cdf, 0, 2, rng)
    nonlinear_path(BE, vals, cdf, np.array([0.5, 0.5]), rng)
    mb_coupling_batch(3, 2, 2, rng)
    be_coupling_batch(3, 2, 2, vals, cdf, rng)
    polya_second_color_counts(3, 2, 2, rng)
