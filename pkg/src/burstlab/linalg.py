"""Dense linear-algebra kernels: symmetric eigensolver, logarithmic norm,
spectral radius, operator norm, and a matrix-exponential oracle.

All routines operate on plain float ``numpy`` arrays. The symmetric
eigensolver is a cyclic Jacobi iteration (round-robin parallel ordering)
which is slower than LAPACK but fully deterministic, dependency-free, and
robust for the moderate dimensions used here (a few hundred at most).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DimensionError, RangeError

# Relative off-diagonal Frobenius target for the Jacobi sweep.
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 60

# Gap below which the top eigenvalue is treated as degenerate and the
# deterministic tie-breaking rule kicks in.
DEGENERACY_GAP = 1e-9


def as_square(a, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DimensionError(f"{name} has non-finite entries")
    return a


@dataclass(frozen=True)
class SymmetricEigResult:
    """Full spectrum of a symmetric matrix.

    ``eigenvalues`` sorted descending; ``eigenvectors`` holds the matching
    orthonormal eigenvectors as columns.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _round_robin_schedule(m: int):
    """Round-robin pairings of ``m`` players (m even): m-1 rounds of m/2
    disjoint pairs. Pairs within a round commute, so their Jacobi rotations
    can be applied in one vectorized update.
    """
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        rounds.append([(min(p, q), max(p, q)) for p, q in pairs])
        # rotate all but the first player
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(s) -> SymmetricEigResult:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps (in round-robin parallel ordering) until the off-diagonal
    Frobenius norm falls below ``JACOBI_TOL`` times the Frobenius norm of
    the input.
    """
    s = as_square(s, "symmetric matrix")
    d = s.shape[0]
    a = 0.5 * (s + s.T)
    if d == 1:
        return SymmetricEigResult(a[0].copy(), np.ones((1, 1)))
    v = np.eye(d)
    target = JACOBI_TOL * max(np.linalg.norm(a), np.finfo(float).tiny)

    # pad to even dimension with a decoupled dummy index
    m = d if d % 2 == 0 else d + 1
    schedule = _round_robin_schedule(m)

    def off_norm(x):
        # zero the diagonal before summing: subtracting sum(diag^2) from
        # sum(x^2) cancels catastrophically once the off-part is small
        m = x.copy()
        np.fill_diagonal(m, 0.0)
        return np.linalg.norm(m)

    for _ in range(JACOBI_MAX_SWEEPS):
        if off_norm(a) <= target:
            break
        for pairs in schedule:
            p = np.array([pq[0] for pq in pairs if pq[1] < d], dtype=int)
            q = np.array([pq[1] for pq in pairs if pq[1] < d], dtype=int)
            if p.size == 0:
                continue
            apq = a[p, q]
            live = np.abs(apq) > 0.0
            if not np.any(live):
                continue
            p, q, apq = p[live], q[live], apq[live]
            tau = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = np.sign(tau)
            t[t == 0.0] = 1.0
            t = t / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
            c = 1.0 / np.sqrt(1.0 + t * t)
            sn = t * c
            cc, sc = c[:, None], sn[:, None]
            rp, rq = a[p, :], a[q, :]
            a[p, :] = cc * rp - sc * rq
            a[q, :] = sc * rp + cc * rq
            cp, cq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = cp * cc.T - cq * sc.T
            a[:, q] = cp * sc.T + cq * cc.T
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = vp * cc.T - vq * sc.T
            v[:, q] = vp * sc.T + vq * cc.T
        a = 0.5 * (a + a.T)
    else:
        raise ConvergenceError(
            "Jacobi sweep cap exceeded",
            diagnostics={"off_norm": off_norm(a), "target": target, "dim": d},
        )

    lam = np.diag(a).copy()
    order = np.argsort(-lam, kind="stable")
    return SymmetricEigResult(lam[order], v[:, order])


def symmetric_part(a) -> np.ndarray:
    a = as_square(a)
    return 0.5 * (a + a.T)


def log_norm_2(a) -> float:
    """Euclidean logarithmic norm: largest eigenvalue of (A + A^T)/2."""
    return float(jacobi_eigh(symmetric_part(a)).eigenvalues[0])


def top_symmetric_eigpair(a) -> tuple[float, np.ndarray]:
    """Top eigenvalue of the symmetric part together with a unit eigenvector.

    Deterministic under (near-)degeneracy: within the top eigenspace
    (eigenvalue gap below ``DEGENERACY_GAP`` relative) the vector maximizing
    the first representable coordinate is chosen, and the sign is fixed so
    the largest-magnitude entry is positive.
    """
    res = jacobi_eigh(symmetric_part(a))
    lam = res.eigenvalues
    gap_tol = DEGENERACY_GAP * max(1.0, abs(lam[0]))
    in_top = lam >= lam[0] - gap_tol
    basis = res.eigenvectors[:, in_top]
    if basis.shape[1] == 1:
        vec = basis[:, 0].copy()
    else:
        # projection of the first coordinate axis onto the eigenspace
        # maximizes the first coordinate over unit vectors in the space
        vec = None
        for j in range(basis.shape[0]):
            proj = basis @ basis[j, :]
            nrm = np.linalg.norm(proj)
            if nrm > 1e-12:
                vec = proj / nrm
                break
        if vec is None:
            vec = basis[:, 0].copy()
    k = int(np.argmax(np.abs(vec)))
    if vec[k] < 0.0:
        vec = -vec
    vec = vec / np.linalg.norm(vec)
    return float(lam[0]), vec


def operator_norm_2(a) -> float:
    """Largest singular value, computed as sqrt(lambda_max(A^T A))."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DimensionError("matrix has non-finite entries")
    if a.size == 0:
        return 0.0
    gram = a.T @ a if a.shape[0] >= a.shape[1] else a @ a.T
    lam = jacobi_eigh(gram).eigenvalues[0]
    return float(np.sqrt(max(lam, 0.0)))


POWER_ITER_CAP = 10_000
POWER_ITER_TOL = 1e-10


def _gelfand_spectral_radius(a: np.ndarray) -> float:
    """Spectral radius via Gelfand's formula on repeatedly squared matrices.

    rho(A) = lim ||A^(2^m)||^(1/2^m); each squaring is renormalized to avoid
    overflow. Exact for nilpotent and norm-preserving matrices, and accurate
    to ~1e-9 relative once 2^m dwarfs log of the eigenbasis conditioning.
    """
    b = a.copy()
    log_scale = 0.0
    weight = 1.0
    est_prev = None
    for _ in range(48):
        nrm = operator_norm_2(b)
        if nrm == 0.0:
            return 0.0
        est = np.exp(log_scale + weight * np.log(nrm))
        if est_prev is not None and abs(est - est_prev) <= 1e-10 * max(1.0, est):
            return float(est)
        est_prev = est
        b = b / nrm
        log_scale += weight * np.log(nrm)
        b = b @ b
        weight *= 0.5
    return float(est_prev)


def spectral_radius(w) -> float:
    """Largest eigenvalue magnitude of a square matrix.

    Power iteration from an all-ones start vector (plus a tiny
    index-dependent perturbation to avoid unlucky orthogonal starts). On
    stagnation, e.g. for non-normal matrices with complex dominant pairs,
    falls back to Gelfand's formula via repeated squaring, which only needs
    the symmetric eigensolver. Used for stability-margin checks on network
    adjacency matrices.
    """
    w = as_square(w, "matrix")
    n = w.shape[0]
    if n == 0:
        return 0.0
    x = np.ones(n) + 1e-9 * np.arange(n) / max(n - 1, 1)
    x /= np.linalg.norm(x)
    est_prev = np.inf
    stable_hits = 0
    for it in range(POWER_ITER_CAP):
        y = w @ x
        ny = np.linalg.norm(y)
        if ny == 0.0 or not np.isfinite(ny):
            break
        est = ny
        x = y / ny
        if abs(est - est_prev) <= POWER_ITER_TOL * max(1.0, est):
            stable_hits += 1
            if stable_hits >= 4:
                return float(est)
        else:
            stable_hits = 0
        est_prev = est
    rho = _gelfand_spectral_radius(w)
    if rho is None or not np.isfinite(rho):
        raise ConvergenceError(
            "spectral radius iteration failed to converge",
            diagnostics={"last_estimate": est_prev, "iterations": POWER_ITER_CAP},
        )
    return rho


def expm_apply(a, v, t: float) -> np.ndarray:
    """Compute exp(A t) v by scaling and squaring with a truncated series.

    Test oracle for the integrator; accurate to ~1e-10 relative for
    ||A||_2 |t| up to a few tens. Raises RangeError if the result leaves
    the floating-point range.
    """
    a = as_square(a, "matrix")
    v = np.asarray(v, dtype=float)
    if v.shape != (a.shape[0],):
        raise DimensionError(f"vector shape {v.shape} does not match matrix {a.shape}")
    if not np.isfinite(t):
        raise RangeError("time must be finite")
    m = a * float(t)
    norm1 = np.linalg.norm(m, 1)
    if norm1 > 4000.0:
        raise RangeError(f"||A t|| = {norm1:.3g} too large for the series oracle")
    j = max(0, int(np.ceil(np.log2(norm1 / 0.5))) if norm1 > 0.5 else 0)
    ms = m / (2.0**j)
    # Taylor series of exp(ms); terms decay like 0.5^k / k!
    e = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for k in range(1, 40):
        term = term @ ms / k
        e = e + term
        if np.max(np.abs(term)) < 1e-20 * max(1.0, np.max(np.abs(e))):
            break
    for _ in range(j):
        e = e @ e
    out = e @ v
    if not np.all(np.isfinite(out)):
        raise RangeError("exp(A t) v overflowed the floating-point range")
    return out
