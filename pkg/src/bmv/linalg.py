"""Problem instances, pencil characteristic polynomials, roots and the trace function.

Everything downstream works in the eigenbasis of ``B``: the stored ``A`` is
the original ``A`` conjugated into that basis and ``B`` is represented by its
sorted eigenvalues.  All arrays held by the dataclasses here are read-only.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatch, NoConvergence, NotHermitian, NotPositiveSemidefinite

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class Tolerances:
    """Validation and root-finding tolerances.

    ``herm``, ``psd`` and ``comm`` are relative factors; the absolute
    thresholds scale with the matrix norms as documented on
    :func:`validate_pair`.
    """

    herm: float = 1e-10
    psd: float = 1e-10
    comm: float = 1e-12
    jacobi: float = 1e-13
    root: float = 1e-10
    real: float = 1e-9
    tie: float = 1e-9


DEFAULT_TOLERANCES = Tolerances()


def _frozen(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class HermitianPair:
    n: int
    A: np.ndarray
    B_eigs: np.ndarray
    basis: np.ndarray
    commuting: bool
    distinct_b: bool
    positive_b: bool

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen(np.asarray(self.A, dtype=complex)))
        object.__setattr__(self, "B_eigs", _frozen(np.asarray(self.B_eigs, dtype=float)))
        object.__setattr__(self, "basis", _frozen(np.asarray(self.basis, dtype=complex)))

    @property
    def a_diag(self) -> np.ndarray:
        """Real diagonal entries ``a_jj`` of ``A`` in the ``B`` eigenbasis."""
        return self.A.diagonal().real.copy()

    @property
    def B(self) -> np.ndarray:
        return np.diag(self.B_eigs).astype(complex)

    def original(self):
        """Return ``(A, B)`` rotated back to the input basis."""
        V = self.basis
        return V @ self.A @ V.conj().T, V @ self.B @ V.conj().T

    def with_B_eigs(self, b, tol: Tolerances = DEFAULT_TOLERANCES) -> "HermitianPair":
        b = np.asarray(b, dtype=float)
        return replace(self, B_eigs=b, distinct_b=_distinct(b, tol.tie), positive_b=_positive(b, tol.psd))

    def shifted(self, c: float) -> "HermitianPair":
        """Same pair with ``A`` replaced by ``A + c id``."""
        return replace(self, A=self.A + c * np.eye(self.n))


@dataclass(frozen=True)
class PolyCoeffs:
    """Monic polynomial ``sum_k coeffs[k] * x**k`` (ascending order)."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 1 or c.size < 2:
            raise ValueError("need a 1-d coefficient array of degree >= 1")
        if c[-1] != 1:
            raise ValueError("polynomial must be monic (c_n == 1)")
        object.__setattr__(self, "coeffs", _frozen(c))

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(x, self.coeffs)

    def conj(self) -> "PolyCoeffs":
        return PolyCoeffs(self.coeffs.conj())


def _distinct(b, tie) -> bool:
    b = np.sort(np.asarray(b, dtype=float))
    gaps = np.diff(b)
    scale = np.maximum(np.abs(b[:-1]), np.abs(b[1:]))
    return bool(np.all(gaps > tie * scale))


def _positive(b, psd) -> bool:
    b = np.asarray(b, dtype=float)
    return bool(np.min(b) > psd * (1.0 + np.max(np.abs(b))))


def jacobi_eigh(H, tol=None, max_sweeps=60):
    """Eigen-decomposition of a Hermitian matrix by cyclic Jacobi rotations.

    Parameters
    ----------
    H : (n, n) array_like
        Hermitian matrix.
    tol : float, optional
        Stop once the Frobenius norm of the off-diagonal part is at most
        ``tol``; defaults to ``1e-13 * ||H||_F``.

    Returns
    -------
    eigs : (n,) ndarray
        Eigenvalues in ascending order.
    V : (n, n) ndarray
        Unitary matrix whose columns are the matching eigenvectors, so that
        ``V^H H V = diag(eigs)``.
    """
    a = np.array(H, dtype=complex)
    n = a.shape[0]
    V = np.eye(n, dtype=complex)
    fro = np.linalg.norm(a)
    if tol is None:
        tol = 1e-13 * fro
    for sweep in range(max_sweeps + 1):
        off = np.linalg.norm(a - np.diag(a.diagonal()))
        if off <= tol:
            break
        if sweep == max_sweeps:
            raise NoConvergence(max_sweeps, off, what="Jacobi sweep")
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = abs(apq)
                if mag <= _EPS * 1e-3 * fro:
                    continue
                phase = apq / mag
                theta = (a[q, q].real - a[p, p].real) / (2.0 * mag)
                if theta == 0.0:
                    t = 1.0
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                J = np.array([[c, s], [-s * phase.conjugate(), c * phase.conjugate()]])
                idx = [p, q]
                a[:, idx] = a[:, idx] @ J
                a[idx, :] = J.conj().T @ a[idx, :]
                V[:, idx] = V[:, idx] @ J
                a[p, q] = a[q, p] = 0.0
    eigs = a.diagonal().real
    order = np.argsort(eigs, kind="stable")
    return eigs[order], V[:, order]


def validate_pair(A_raw, B_raw, tol: Tolerances = DEFAULT_TOLERANCES) -> HermitianPair:
    """Validate ``(A, B)`` and express it in the eigenbasis of ``B``.

    Thresholds: Hermiticity and PSD use ``tol * (1 + ||.||_max)``,
    commutation uses ``tol.comm * (1 + ||A||_F ||B||_F)`` on the original
    matrices.  Inside clusters of (relatively) tied eigenvalues of ``B`` the
    basis is further rotated so that the corresponding block of ``A`` is
    diagonal; this makes commuting pairs simultaneously diagonal.

    Raises
    ------
    DimensionMismatch, NotHermitian, NotPositiveSemidefinite
    """
    A = np.asarray(A_raw, dtype=complex)
    B = np.asarray(B_raw, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"A must be square, got shape {A.shape}")
    if B.shape != A.shape:
        raise DimensionMismatch(f"A has shape {A.shape} but B has shape {B.shape}")
    n = A.shape[0]
    if n < 1:
        raise DimensionMismatch("empty matrices")
    for name, M in (("A", A), ("B", B)):
        dev = np.max(np.abs(M - M.conj().T))
        if dev > tol.herm * (1.0 + np.max(np.abs(M))):
            raise NotHermitian(name, dev)
    A = 0.5 * (A + A.conj().T)
    B = 0.5 * (B + B.conj().T)

    b, V = jacobi_eigh(B, tol=tol.jacobi * np.linalg.norm(B))
    if b[0] < -tol.psd * (1.0 + np.max(np.abs(B))):
        raise NotPositiveSemidefinite(b[0])
    commuting = bool(np.max(np.abs(A @ B - B @ A)) <= tol.comm * (1.0 + np.linalg.norm(A) * np.linalg.norm(B)))

    At = V.conj().T @ A @ V
    start = 0
    for j in range(1, n + 1):
        if j == n or b[j] - b[j - 1] > tol.tie * max(abs(b[j]), abs(b[j - 1])):
            if j - start > 1:
                block = 0.5 * (At[start:j, start:j] + At[start:j, start:j].conj().T)
                _, W = jacobi_eigh(block)
                V[:, start:j] = V[:, start:j] @ W
            start = j
    At = V.conj().T @ A @ V
    At = 0.5 * (At + At.conj().T)
    return HermitianPair(
        n=n,
        A=At,
        B_eigs=b,
        basis=V,
        commuting=commuting,
        distinct_b=_distinct(b, tol.tie),
        positive_b=_positive(b, tol.psd),
    )


def char_poly(M) -> np.ndarray:
    """Faddeev-LeVerrier coefficients of ``det(x id - M)``.

    ``M`` may carry leading batch dimensions; the result has shape
    ``M.shape[:-2] + (n + 1,)`` in ascending order with a unit last entry.
    """
    M = np.asarray(M, dtype=complex)
    n = M.shape[-1]
    eye = np.eye(n, dtype=complex)
    coeffs = np.zeros(M.shape[:-2] + (n + 1,), dtype=complex)
    coeffs[..., n] = 1.0
    Mk = np.zeros_like(M)
    for k in range(1, n + 1):
        Mk = M @ Mk + coeffs[..., n - k + 1, None, None] * eye
        coeffs[..., n - k] = -np.trace(M @ Mk, axis1=-2, axis2=-1) / k
    return coeffs


def pencil(pair: HermitianPair, z):
    """``A - z B`` in the ``B`` eigenbasis, batched over the shape of ``z``."""
    z = np.asarray(z, dtype=complex)
    return pair.A - z[..., None, None] * np.diag(pair.B_eigs)


def pencil_char_polys(pair: HermitianPair, z) -> np.ndarray:
    return char_poly(pencil(pair, z))


def char_poly_at(pair: HermitianPair, z: complex) -> PolyCoeffs:
    """Monic coefficients of ``det(lam id - (A - z B))`` at a single ``z``."""
    return PolyCoeffs(pencil_char_polys(pair, complex(z)))


def _horner(coeffs, x):
    # coeffs (m, n+1) ascending, x (m, k); returns p(x), p'(x)
    n = coeffs.shape[-1] - 1
    p = np.broadcast_to(coeffs[:, n, None], x.shape).astype(complex)
    dp = np.zeros_like(p)
    for k in range(n - 1, -1, -1):
        dp = dp * x + p
        p = p * x + coeffs[:, k, None]
    return p, dp


def _initial_guess(coeffs):
    m, n1 = coeffs.shape
    n = n1 - 1
    center = -coeffs[:, n - 1] / n
    k = np.arange(n)
    bound = np.max(np.abs(coeffs[:, :n]) ** (1.0 / (n - k)), axis=1)
    radius = 2.0 * bound + np.abs(center) + 1e-3
    angles = 2 * np.pi * k / n + 0.7
    return center[:, None] + radius[:, None] * np.exp(1j * angles)[None, :]


def roots_batch(coeffs, init=None, tol_root: float = DEFAULT_TOLERANCES.root, max_iter: int = 500) -> np.ndarray:
    """Aberth-Ehrlich roots for a batch of monic polynomials.

    Parameters
    ----------
    coeffs : (m, n+1) array
        Ascending monic coefficients.
    init : (m, n) array, optional
        Warm-start approximations (e.g. roots at a neighbouring point of a
        continuation path).  Defaults to a perturbed circle enclosing all
        roots.

    Returns
    -------
    (m, n) complex array of roots, each polished by one Newton step.

    Raises
    ------
    NoConvergence
        If some root residual exceeds ``tol_root * (1 + |root|)**n``.
    """
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=complex))
    m, n1 = coeffs.shape
    n = n1 - 1
    if n < 1:
        raise ValueError("degree must be >= 1")
    if n == 1:
        return -coeffs[:, :1].copy()
    if init is None:
        x = _initial_guess(coeffs)
    else:
        x = np.array(np.broadcast_to(init, (m, n)), dtype=complex)
        # separate coincident seeds, Aberth needs distinct starting points
        scale = 1e-7 * (1.0 + np.abs(x))
        x = x + scale * np.exp(1j * (np.arange(n) + 0.3))[None, :]
    active = np.ones(m, dtype=bool)
    last_step = np.full(m, np.inf)
    offdiag = ~np.eye(n, dtype=bool)
    it = 0
    while active.any() and it < max_iter:
        it += 1
        xa = x[active]
        p, dp = _horner(coeffs[active], xa)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(dp != 0, p / dp, p)
            diff = xa[:, :, None] - xa[:, None, :]
            inv = np.where(offdiag, 1.0 / np.where(offdiag, diff, 1.0), 0.0)
            denom = 1.0 - ratio * inv.sum(axis=2)
            w = np.where((denom != 0) & np.isfinite(denom), ratio / denom, ratio)
        w = np.where(np.isfinite(w), w, 0.0)
        x[active] = xa - w
        step = np.max(np.abs(w) / (1.0 + np.abs(xa)), axis=1)
        # stop at 4 eps, or once the correction stalls at the rounding floor
        stalled = (step < 1e-9) & (step > 0.25 * last_step[active])
        done = (step <= 4 * _EPS) | stalled | np.all(p == 0, axis=1)
        last_step[active] = step
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    # one Newton polish, kept only where it lowers the residual
    p, dp = _horner(coeffs, x)
    with np.errstate(divide="ignore", invalid="ignore"):
        xn = np.where(dp != 0, x - p / dp, x)
    pn, _ = _horner(coeffs, xn)
    better = np.isfinite(xn) & (np.abs(pn) < np.abs(p))
    x = np.where(better, xn, x)
    res = np.where(better, np.abs(pn), np.abs(p))
    bound = tol_root * (1.0 + np.abs(x)) ** n
    if not np.all(res <= bound) or not np.all(np.isfinite(x)):
        worst = float(np.nanmax(res / bound)) if np.all(np.isfinite(res)) else float("inf")
        raise NoConvergence(it, worst, what="Aberth-Ehrlich")
    return x


def poly_roots(p: PolyCoeffs, init=None) -> np.ndarray:
    """Multiset of the ``n`` complex roots of a monic polynomial (no ordering contract)."""
    return roots_batch(p.coeffs[None, :], None if init is None else np.asarray(init)[None, :])[0]


def pencil_roots(pair: HermitianPair, z, init=None) -> np.ndarray:
    """Eigenvalues of ``A - z B`` as char-poly roots, batched: shape ``z.shape + (n,)``."""
    z = np.asarray(z, dtype=complex)
    flat = z.reshape(-1)
    coeffs = pencil_char_polys(pair, flat)
    if init is not None:
        init = np.asarray(init).reshape(flat.size, pair.n)
    return roots_batch(coeffs, init).reshape(z.shape + (pair.n,))


def trace_exp_matrix(M):
    """``Tr exp(M)`` as the sum of exponentials of the char-poly roots of ``M``."""
    M = np.asarray(M, dtype=complex)
    coeffs = char_poly(M).reshape(-1, M.shape[-1] + 1)
    return np.exp(roots_batch(coeffs)).sum(axis=-1).reshape(M.shape[:-2])


def trace_exp(pair: HermitianPair, z):
    """``f(z) = Tr exp(A - z B)`` for scalar or array ``z``."""
    z = np.asarray(z, dtype=complex)
    if not np.any(z.imag):
        # Hermitian on the real axis: a symmetric eigensolver is backward stable
        lam = np.linalg.eigvalsh(pencil(pair, z.real))
    else:
        lam = pencil_roots(pair, z)
    out = np.exp(lam).sum(axis=-1)
    return complex(out) if out.ndim == 0 else out
