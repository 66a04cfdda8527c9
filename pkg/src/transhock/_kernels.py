"""Hot loops: 1-D RK4 background integration and backward characteristic tracing.

Each kernel has a numba version and a pure-numpy version with identical
arithmetic.  Set ``TRANSHOCK_NO_NUMBA=1`` to force the numpy path.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
    if "NUMBA_THREADING_LAYER" not in os.environ:
        # an outdated TBB only produces a warning; prefer OpenMP, then the built-in queue
        numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False


def numba_enabled() -> bool:
    flag = os.environ.get("TRANSHOCK_NO_NUMBA", "").strip().lower()
    return HAVE_NUMBA and flag not in ("1", "true", "yes", "on")


def set_threads(n: int | None) -> int:
    """Set the worker count for parallel kernels; returns the count in effect."""
    if n is None:
        env = os.environ.get("TRANSHOCK_THREADS")
        n = int(env) if env else None
    if HAVE_NUMBA and n is not None:
        n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
        numba.set_num_threads(n)
        return n
    if HAVE_NUMBA:
        return numba.get_num_threads()
    return 1


# ---------------------------------------------------------------------------
# 1-D background ODE  u' = f u / (u^2 - c^2),  c^2 = gamma (m/u)^(gamma-1)


def _rhs_py(u, f, m, gamma):
    c2 = gamma * (m / u) ** (gamma - 1.0)
    return f * u / (u * u - c2), (u * u - c2) / c2


def _rk4_branch_py(u0, m, gamma, h, fstage, guard):
    n = (fstage.shape[0] - 1) // 2
    u = np.empty(n + 1)
    u[0] = u0
    for k in range(n):
        un = u[k]
        k1, g1 = _rhs_py(un, fstage[2 * k], m, gamma)
        k2, g2 = _rhs_py(un + 0.5 * h * k1, fstage[2 * k + 1], m, gamma)
        k3, g3 = _rhs_py(un + 0.5 * h * k2, fstage[2 * k + 1], m, gamma)
        k4, g4 = _rhs_py(un + h * k3, fstage[2 * k + 2], m, gamma)
        if min(abs(g1), abs(g2), abs(g3), abs(g4)) < guard:
            return u[: k + 1], k
        if g1 * g4 <= 0.0:
            return u[: k + 1], k
        u[k + 1] = un + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    _, gl = _rhs_py(u[n], fstage[2 * n], m, gamma)
    if abs(gl) < guard:
        return u, n
    return u, -1


if HAVE_NUMBA:

    @njit(cache=True)
    def _rhs_nb(u, f, m, gamma):
        c2 = gamma * (m / u) ** (gamma - 1.0)
        return f * u / (u * u - c2), (u * u - c2) / c2

    @njit(cache=True)
    def _rk4_branch_nb(u0, m, gamma, h, fstage, guard):
        n = (fstage.shape[0] - 1) // 2
        u = np.empty(n + 1)
        u[0] = u0
        for k in range(n):
            un = u[k]
            k1, g1 = _rhs_nb(un, fstage[2 * k], m, gamma)
            k2, g2 = _rhs_nb(un + 0.5 * h * k1, fstage[2 * k + 1], m, gamma)
            k3, g3 = _rhs_nb(un + 0.5 * h * k2, fstage[2 * k + 1], m, gamma)
            k4, g4 = _rhs_nb(un + h * k3, fstage[2 * k + 2], m, gamma)
            if min(abs(g1), abs(g2), abs(g3), abs(g4)) < guard:
                return u[: k + 1], k
            if g1 * g4 <= 0.0:
                return u[: k + 1], k
            u[k + 1] = un + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _, gl = _rhs_nb(u[n], fstage[2 * n], m, gamma)
        if abs(gl) < guard:
            return u, n
        return u, -1


def rk4_branch(u0: float, m: float, gamma: float, h: float, fstage: np.ndarray, guard: float):
    """Fixed-step RK4 for the reduced 1-D ODE.

    ``fstage`` holds the force at x0, x0+h/2, x0+h, ... (2n+1 values).
    Returns (u_nodes, fail_index); fail_index is -1 on success, otherwise the
    node index where the relative sonic gap dropped below ``guard``.
    """
    fstage = np.ascontiguousarray(fstage, dtype=np.float64)
    if numba_enabled():
        return _rk4_branch_nb(float(u0), float(m), float(gamma), float(h), fstage, float(guard))
    return _rk4_branch_py(float(u0), float(m), float(gamma), float(h), fstage, float(guard))


# ---------------------------------------------------------------------------
# Backward characteristics  dy'/dtau = I(tau, y'),  traced from every node to tau = y1[0].
#
# Trajectory storage is ragged: the node launched from slice i keeps its
# positions at slices i, i-1, ..., 0, stored at rows off[i] + (i - l).


def trajectory_offsets(n1: int) -> np.ndarray:
    i = np.arange(n1 + 1)
    return i * (i + 1) // 2


def _bilinear_py(F, a, b, h2, h3):
    n2, n3 = F.shape[-2], F.shape[-1]
    s = (a + 1.0) / h2
    t = (b + 1.0) / h3
    j = np.clip(np.floor(s).astype(np.int64), 0, n2 - 2)
    k = np.clip(np.floor(t).astype(np.int64), 0, n3 - 2)
    s = s - j
    t = t - k
    return ((1 - s) * (1 - t) * F[j, k] + s * (1 - t) * F[j + 1, k]
            + (1 - s) * t * F[j, k + 1] + s * t * F[j + 1, k + 1])


def _trace_py(I2, I3, M2, M3, h1, h2, h3, lim):
    n1, n2, n3 = I2.shape
    off = trajectory_offsets(n1)
    pos = np.empty((off[n1], n2, n3, 2))
    y2 = -1.0 + h2 * np.arange(n2)
    y3 = -1.0 + h3 * np.arange(n3)
    Y2, Y3 = np.meshgrid(y2, y3, indexing="ij")
    # current positions of all trajectories launched from slice i >= l
    a = np.broadcast_to(Y2, (n1, n2, n3)).copy()
    b = np.broadcast_to(Y3, (n1, n2, n3)).copy()
    for i in range(n1):
        pos[off[i], :, :, 0] = Y2
        pos[off[i], :, :, 1] = Y3
    worst = 0.0
    for l in range(n1 - 1, 0, -1):
        A = a[l:]
        B = b[l:]
        Im2 = M2[l]
        Im3 = M3[l]
        k1a = _bilinear_py(I2[l], A, B, h2, h3)
        k1b = _bilinear_py(I3[l], A, B, h2, h3)
        k2a = _bilinear_py(Im2, A - 0.5 * h1 * k1a, B - 0.5 * h1 * k1b, h2, h3)
        k2b = _bilinear_py(Im3, A - 0.5 * h1 * k1a, B - 0.5 * h1 * k1b, h2, h3)
        k3a = _bilinear_py(Im2, A - 0.5 * h1 * k2a, B - 0.5 * h1 * k2b, h2, h3)
        k3b = _bilinear_py(Im3, A - 0.5 * h1 * k2a, B - 0.5 * h1 * k2b, h2, h3)
        k4a = _bilinear_py(I2[l - 1], A - h1 * k3a, B - h1 * k3b, h2, h3)
        k4b = _bilinear_py(I3[l - 1], A - h1 * k3a, B - h1 * k3b, h2, h3)
        A = A - h1 / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a)
        B = B - h1 / 6.0 * (k1b + 2 * k2b + 2 * k3b + k4b)
        ex = max(float(np.max(np.abs(A))), float(np.max(np.abs(B)))) - 1.0
        worst = max(worst, ex)
        if ex > lim:
            return pos, worst
        A = np.clip(A, -1.0, 1.0)
        B = np.clip(B, -1.0, 1.0)
        a[l:] = A
        b[l:] = B
        for i in range(l, n1):
            r = off[i] + (i - l + 1)
            pos[r, :, :, 0] = A[i - l]
            pos[r, :, :, 1] = B[i - l]
    return pos, worst


if HAVE_NUMBA:

    @njit(cache=True)
    def _bilinear_nb(F, a, b, h2, h3):
        n2, n3 = F.shape
        s = (a + 1.0) / h2
        t = (b + 1.0) / h3
        j = int(np.floor(s))
        k = int(np.floor(t))
        if j < 0:
            j = 0
        elif j > n2 - 2:
            j = n2 - 2
        if k < 0:
            k = 0
        elif k > n3 - 2:
            k = n3 - 2
        s -= j
        t -= k
        return ((1 - s) * (1 - t) * F[j, k] + s * (1 - t) * F[j + 1, k]
                + (1 - s) * t * F[j, k + 1] + s * t * F[j + 1, k + 1])

    @njit(cache=True, parallel=True)
    def _trace_nb(I2, I3, Im2, Im3, h1, h2, h3, lim):
        n1, n2, n3 = I2.shape
        off = np.empty(n1 + 1, dtype=np.int64)
        for i in range(n1 + 1):
            off[i] = i * (i + 1) // 2
        pos = np.empty((off[n1], n2, n3, 2))
        worst = np.zeros(n1 * n2)
        for q in prange(n1 * n2):
            i = q // n2
            j = q % n2
            for k in range(n3):
                a = -1.0 + h2 * j
                b = -1.0 + h3 * k
                pos[off[i], j, k, 0] = a
                pos[off[i], j, k, 1] = b
                for l in range(i, 0, -1):
                    k1a = _bilinear_nb(I2[l], a, b, h2, h3)
                    k1b = _bilinear_nb(I3[l], a, b, h2, h3)
                    k2a = _bilinear_nb(Im2[l], a - 0.5 * h1 * k1a, b - 0.5 * h1 * k1b, h2, h3)
                    k2b = _bilinear_nb(Im3[l], a - 0.5 * h1 * k1a, b - 0.5 * h1 * k1b, h2, h3)
                    k3a = _bilinear_nb(Im2[l], a - 0.5 * h1 * k2a, b - 0.5 * h1 * k2b, h2, h3)
                    k3b = _bilinear_nb(Im3[l], a - 0.5 * h1 * k2a, b - 0.5 * h1 * k2b, h2, h3)
                    k4a = _bilinear_nb(I2[l - 1], a - h1 * k3a, b - h1 * k3b, h2, h3)
                    k4b = _bilinear_nb(I3[l - 1], a - h1 * k3a, b - h1 * k3b, h2, h3)
                    a = a - h1 / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a)
                    b = b - h1 / 6.0 * (k1b + 2 * k2b + 2 * k3b + k4b)
                    ex = max(abs(a), abs(b)) - 1.0
                    if ex > worst[q]:
                        worst[q] = ex
                    a = min(1.0, max(-1.0, a))
                    b = min(1.0, max(-1.0, b))
                    r = off[i] + (i - l + 1)
                    pos[r, j, k, 0] = a
                    pos[r, j, k, 1] = b
        return pos, worst.max()


def slice_midpoints(I: np.ndarray) -> np.ndarray:
    """Cubic interpolation of I halfway between slices l-1 and l (row l; row 0 unused)."""
    n1 = I.shape[0]
    M = np.zeros_like(I)
    if n1 < 4:
        M[1:] = 0.5 * (I[1:] + I[:-1])
        return M
    M[2:n1 - 1] = (-I[0:n1 - 3] + 9.0 * I[1:n1 - 2] + 9.0 * I[2:n1 - 1] - I[3:n1]) / 16.0
    M[1] = (5.0 * I[0] + 15.0 * I[1] - 5.0 * I[2] + I[3]) / 16.0
    M[n1 - 1] = (5.0 * I[n1 - 1] + 15.0 * I[n1 - 2] - 5.0 * I[n1 - 3] + I[n1 - 4]) / 16.0
    return M


def trace_backward(I2: np.ndarray, I3: np.ndarray, h1: float, h2: float, h3: float, lim: float = np.inf):
    """Trace dy'/dtau = I backward from every node to the first slice.

    Returns (pos, worst_excursion).  ``pos[off[i] + s]`` is the position after
    s backward steps of the trajectory launched at slice i (see
    ``trajectory_offsets``).  Positions are clamped to the closed square;
    ``worst_excursion`` reports how far outside they went before clamping.
    """
    I2 = np.ascontiguousarray(I2, dtype=np.float64)
    I3 = np.ascontiguousarray(I3, dtype=np.float64)
    M2 = slice_midpoints(I2)
    M3 = slice_midpoints(I3)
    if numba_enabled():
        return _trace_nb(I2, I3, M2, M3, float(h1), float(h2), float(h3), float(lim))
    return _trace_py(I2, I3, M2, M3, float(h1), float(h2), float(h3), float(lim))


def bilinear(F: np.ndarray, a: np.ndarray, b: np.ndarray, h2: float, h3: float) -> np.ndarray:
    """Bilinear interpolation of a 2-D node array on [-1,1]^2 (vectorized)."""
    return _bilinear_py(F, np.asarray(a, dtype=float), np.asarray(b, dtype=float), h2, h3)
