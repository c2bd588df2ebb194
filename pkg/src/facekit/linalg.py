"""Symmetric eigensolver and the whitening solve behind Fisher directions."""
import warnings

import numpy as np

from .errors import NoConvergence, NotSymmetric, RankDeficient

RANK_CUTOFF = 1e-10


def _round_robin(n):
    """Pairings for one cyclic sweep: n-1 rounds (n even) of n/2 disjoint pairs."""
    idx = list(range(n)) + ([-1] if n % 2 else [])
    m = len(idx)
    rounds = []
    for _ in range(m - 1):
        pairs = [(idx[i], idx[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if p >= 0 and q >= 0]
        rounds.append((np.array([p for p, _ in pairs], dtype=np.intp),
                       np.array([q for _, q in pairs], dtype=np.intp)))
        idx = [idx[0], idx[-1]] + idx[1:-1]
    return rounds


def pin_signs(v):
    """Flip columns so each one's largest-magnitude entry is positive.

    Entries within 1e-12 (relative) of the column maximum count as ties and
    the first of them decides, so symmetric vectors pin reproducibly.
    """
    v = np.array(v, dtype=np.float64)
    if v.size == 0:
        return v
    mag = np.abs(v)
    top = mag.max(axis=0)
    lead = np.argmax(mag >= top * (1 - 1e-12), axis=0)
    sign = np.where(v[lead, np.arange(v.shape[1])] < 0, -1.0, 1.0)
    return v * sign


def jacobi_eigen_symmetric(a, tol=1e-10, max_sweeps=100):
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Parameters
    ----------
    a : (n, n) array_like
        Symmetric within ``1e-10 * ||a||``.
    tol : float
        Sweeps stop once the off-diagonal norm is below ``tol * ||a|| / 100``.
    max_sweeps : int

    Returns
    -------
    values : (n,) ndarray, descending
    vectors : (n, n) ndarray
        Orthonormal columns, each with its largest-magnitude entry positive.
    """
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    n = a.shape[0]
    norm = np.linalg.norm(a)
    if np.abs(a - a.T).max(initial=0.0) > 1e-10 * norm:
        raise NotSymmetric("matrix is not symmetric")
    A = 0.5 * (a + a.T)
    V = np.eye(n)
    target = 1e-2 * tol * norm
    rounds = _round_robin(n) if n > 1 else []

    def off(m):
        return np.linalg.norm(m - np.diag(np.diag(m)))

    sweeps = 0
    while off(A) > target:
        if sweeps == max_sweeps:
            raise NoConvergence(max_sweeps)
        sweeps += 1
        for P, Q in rounds:
            apq = A[P, Q]
            live = np.abs(apq) > 1e-300
            if not live.any():
                continue
            theta = np.where(live, (A[Q, Q] - A[P, P]) / (2.0 * np.where(live, apq, 1.0)), 0.0)
            sgn = np.where(theta >= 0, 1.0, -1.0)
            # hypot avoids overflow of theta**2 once apq is negligible
            t = np.where(live, sgn / (np.abs(theta) + np.hypot(theta, 1.0)), 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            cp, cq = A[:, P].copy(), A[:, Q].copy()
            A[:, P] = cp * c - cq * s
            A[:, Q] = cp * s + cq * c
            rp, rq = A[P, :].copy(), A[Q, :].copy()
            A[P, :] = c[:, None] * rp - s[:, None] * rq
            A[Q, :] = s[:, None] * rp + c[:, None] * rq
            vp, vq = V[:, P].copy(), V[:, Q].copy()
            V[:, P] = vp * c - vq * s
            V[:, Q] = vp * s + vq * c

    values = np.diag(A).copy()
    order = np.argsort(-values, kind="stable")
    return values[order], pin_signs(V[:, order])


def lda_directions(s_w, s_b, m):
    """Directions maximizing ``w' S_b w / w' S_w w`` via whitening of ``S_w``.

    Modes of ``S_w`` at or below ``1e-10 * d_max`` are dropped. Returned
    columns are ``S_w``-orthonormal, ordered by decreasing ratio. When fewer
    than ``m`` useful directions exist a :class:`RankDeficient` warning is
    issued and only those are returned.
    """
    s_w = np.asarray(s_w, dtype=np.float64)
    s_b = np.asarray(s_b, dtype=np.float64)
    if s_w.shape != s_b.shape or s_w.ndim != 2 or s_w.shape[0] != s_w.shape[1]:
        raise ValueError(f"scatter matrices must be square and equal in shape, got {s_w.shape}, {s_b.shape}")
    d, U = jacobi_eigen_symmetric(s_w)
    d_max = d.max(initial=0.0)
    keep = d > RANK_CUTOFF * d_max if d_max > 0 else np.zeros(len(d), dtype=bool)
    T = U[:, keep] / np.sqrt(d[keep])
    M = T.T @ s_b @ T
    lam, E = jacobi_eigen_symmetric(0.5 * (M + M.T))
    lam_max = lam.max(initial=0.0)
    useful = int(np.sum(lam > RANK_CUTOFF * lam_max)) if lam_max > 0 else 0
    if useful < m:
        warnings.warn(RankDeficient(f"only {useful} of {m} requested directions are supported"),
                      stacklevel=2)
        m = useful
    return T @ E[:, :m]
