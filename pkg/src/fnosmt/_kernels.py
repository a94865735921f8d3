"""Hot inner loops: feasibility projection onto the admissible input set.

Every kernel has a numba ``@njit`` version and a pure-numpy version that
perform the same floating point operations in the same order, so both paths
return bitwise-identical results.  The numba path is used when numba imports
cleanly and ``FNOSMT_DISABLE_NUMBA`` is unset (or ``0``).
"""
import os

import numpy as np

SHRINK_MARGIN = 1e-9

_disabled = os.environ.get("FNOSMT_DISABLE_NUMBA", "0").lower() not in ("", "0", "false", "no")

try:
    if _disabled:
        raise ImportError("disabled by FNOSMT_DISABLE_NUMBA")
    from numba import njit
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

USING_NUMBA = HAVE_NUMBA


# ---------------------------------------------------------------- numpy path

def _feasible_numpy(U, lo, hi, slope):
    U = np.atleast_2d(U)
    box = np.all((U >= lo) & (U <= hi), axis=1)
    diff = np.abs(np.roll(U, -1, axis=1) - U)
    return box & np.all(diff <= slope, axis=1)


def _shrink_pairs_numpy(U, first, slope):
    n = U.shape[1]
    i = np.arange(first, n, 2)
    j = (i + 1) % n
    a = U[:, i]
    b = U[:, j]
    d = b - a
    bad = np.abs(d) > slope
    mid = (a + b) * 0.5
    half = slope * (1.0 - SHRINK_MARGIN) * 0.5
    signed = np.where(d > 0.0, half, -half)
    U[:, i] = np.where(bad, mid - signed, a)
    U[:, j] = np.where(bad, mid + signed, b)


def _project_numpy(U, lo, hi, slope, max_passes):
    U = np.array(U, dtype=np.float64, copy=True)
    out = U.copy()
    ok = _feasible_numpy(U, lo, hi, slope)
    todo = np.flatnonzero(~ok)
    work = U[todo]
    done = np.zeros(len(todo), dtype=bool)
    for _ in range(max_passes):
        if done.all():
            break
        active = ~done
        W = work[active]
        np.clip(W, lo, hi, out=W)
        _shrink_pairs_numpy(W, 0, slope)
        _shrink_pairs_numpy(W, 1, slope)
        work[active] = W
        done[active] = _feasible_numpy(W, lo, hi, slope)
    out[todo] = work
    if not done.all():
        failed = todo[~done]
        # sequential sum (cumsum) so rounding matches the compiled loop
        fallback = np.clip(np.cumsum(U[failed], axis=1)[:, -1] / U.shape[1], lo, hi)
        out[failed] = fallback[:, None]
        done[:] = True
    return out


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:

    @njit(cache=True)
    def _row_feasible(u, lo, hi, slope):
        n = u.shape[0]
        for i in range(n):
            if u[i] < lo or u[i] > hi:
                return False
            j = i + 1
            if j == n:
                j = 0
            if abs(u[j] - u[i]) > slope:
                return False
        return True

    @njit(cache=True)
    def _feasible_numba(U, lo, hi, slope):
        m = U.shape[0]
        res = np.empty(m, dtype=np.bool_)
        for r in range(m):
            res[r] = _row_feasible(U[r], lo, hi, slope)
        return res

    @njit(cache=True)
    def _project_numba(U, lo, hi, slope, max_passes):
        m, n = U.shape
        out = U.copy()
        half = slope * (1.0 - SHRINK_MARGIN) * 0.5
        for r in range(m):
            u = out[r]
            if _row_feasible(u, lo, hi, slope):
                continue
            ok = False
            for _ in range(max_passes):
                for i in range(n):
                    if u[i] < lo:
                        u[i] = lo
                    elif u[i] > hi:
                        u[i] = hi
                for first in range(2):
                    for i in range(first, n, 2):
                        j = (i + 1) % n
                        a = u[i]
                        b = u[j]
                        d = b - a
                        if abs(d) > slope:
                            mid = (a + b) * 0.5
                            s = half if d > 0.0 else -half
                            u[i] = mid - s
                            u[j] = mid + s
                if _row_feasible(u, lo, hi, slope):
                    ok = True
                    break
            if not ok:
                mean = 0.0
                for i in range(n):
                    mean += U[r, i]
                mean = mean / n
                c = min(max(mean, lo), hi)
                for i in range(n):
                    u[i] = c
        return out

else:  # pragma: no cover - exercised only without numba
    _feasible_numba = None
    _project_numba = None


def _as_batch(U):
    U = np.asarray(U, dtype=np.float64)
    return np.ascontiguousarray(U.reshape(-1, U.shape[-1])), U.shape


def project_batch(U, lo, hi, slope, max_passes=50):
    """Project each row of ``U`` into the box/cyclic-slope set (heuristic, always feasible)."""
    B, shape = _as_batch(U)
    if USING_NUMBA:
        res = _project_numba(B, float(lo), float(hi), float(slope), int(max_passes))
    else:
        res = _project_numpy(B, float(lo), float(hi), float(slope), int(max_passes))
    return res.reshape(shape)


def feasible_batch(U, lo, hi, slope):
    B, shape = _as_batch(U)
    if USING_NUMBA:
        res = _feasible_numba(B, float(lo), float(hi), float(slope))
    else:
        res = _feasible_numpy(B, float(lo), float(hi), float(slope))
    return res.reshape(shape[:-1])
