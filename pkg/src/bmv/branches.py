"""Branch points of the spectral curve and labeled continuation of eigenvalue branches.

Labels follow the asymptotics at infinity: branch ``j`` (0-based here, 1-based
in user-facing text) is the eigenvalue of ``A - zB`` that behaves like
``a_jj - z b_j`` for large ``|z|``.  Because the real axis carries no branch
points, labels picked on a large real anchor can be carried anywhere by
continuation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CollisionGuardTripped, DegenerateB, LabelAmbiguity, NumericalError
from .linalg import HermitianPair, pencil_roots, roots_batch

RADIUS_MARGIN = 1.5
R_MIN = 1.0
N_MIN = 256
PAIRING_MARGIN = 3.0
MERGE_TOL = 1e-5
LEVEL_RATIO = 4.0
GUARD_STEP = 0.2


@dataclass(frozen=True)
class BranchPoint:
    """A zero of the discriminant.

    ``permutation[j]`` is the label reached by continuing branch ``j`` once
    around a small positive loop about ``z``, with labels carried in from
    infinity along the ray through ``z``.
    """

    z: complex
    order: int
    genuine: bool
    permutation: tuple = ()

    def mixes(self, k: int) -> bool:
        """True if the local monodromy moves a label across the split ``{0..k-1} | {k..n-1}``."""
        return any((j < k) != (p < k) for j, p in enumerate(self.permutation))

    def to_json(self):
        return {"z": [self.z.real, self.z.imag], "order": self.order, "genuine": self.genuine}


@dataclass(frozen=True)
class Labeling:
    """Labeled eigenvalues ``values[j] = lambda_j(z)`` at a single point."""

    z: complex
    values: np.ndarray


@dataclass(frozen=True)
class Segment:
    """Straight path; with ``guard`` zeros given, steps shrink near them.

    Each graded step is at most ``GUARD_STEP`` times the distance to the
    nearest guard point, so an avoided crossing can never be jumped by the
    linear predictor of the tracker.
    """

    start: complex
    end: complex
    samples: int = 32
    guard: tuple = ()

    def points(self):
        base = self.start + (self.end - self.start) * np.linspace(0.0, 1.0, self.samples + 1)
        if not self.guard:
            return base
        g = np.asarray(self.guard, dtype=complex)
        length = abs(self.end - self.start)
        u = (self.end - self.start) / length if length else 0.0
        floor = 1e-6 * (1.0 + abs(self.start) + abs(self.end))
        out, x = [self.start], 0.0
        while x < length:
            here = self.start + x * u
            x = min(length, x + GUARD_STEP * max(np.min(np.abs(g - here)), floor), x + length / self.samples)
            out.append(self.start + x * u)
        out[-1] = self.end
        return np.array(out, dtype=complex)


@dataclass(frozen=True)
class Arc:
    center: complex
    radius: float
    theta0: float
    theta1: float
    samples: int = 256

    def points(self):
        th = self.theta0 + (self.theta1 - self.theta0) * np.arange(self.samples + 1) / self.samples
        return self.center + self.radius * np.exp(1j * th)


def path_points(path) -> np.ndarray:
    pieces = [np.asarray(p.points(), dtype=complex) for p in path]
    out = [pieces[0]]
    for prev, cur in zip(pieces, pieces[1:]):
        if abs(cur[0] - prev[-1]) > 1e-9 * (1.0 + abs(prev[-1])):
            raise ValueError("path pieces are not contiguous")
        out.append(cur[1:])
    return np.concatenate(out)


@dataclass(frozen=True)
class BranchTable:
    anchor: np.ndarray  # (n, 2): a_jj, b_j
    z: np.ndarray  # (m,)
    values: np.ndarray  # (m, n), column j is lambda_j
    path: tuple = ()

    def conj(self) -> "BranchTable":
        return BranchTable(self.anchor, self.z.conj(), self.values.conj(), self.path)

    def closing_permutation(self) -> tuple:
        """Permutation between the last and first rows (meaningful for closed paths)."""
        return _permutation(self.values[0], self.values[-1])


@dataclass(frozen=True)
class SpectralContour:
    """Positively oriented circle with ``nodes`` equispaced trapezoidal nodes."""

    radius: float
    nodes: int = N_MIN
    enclosed: tuple = ()
    center: complex = 0.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("contour radius must be positive")
        if self.nodes % 2 or self.nodes < 8:
            raise ValueError("node count must be even")

    @property
    def z(self) -> np.ndarray:
        k = np.arange(self.nodes)
        return self.center + self.radius * np.exp(2j * np.pi * k / self.nodes)

    @property
    def weights(self) -> np.ndarray:
        """Weights ``w_k`` with ``(1/2 pi i) \\oint F dz ~= sum_k w_k F(z_k)``."""
        return (self.z - self.center) / self.nodes

    def unit_residual(self) -> float:
        """``|(1/2 pi i) \\oint dz/(z - c) - 1|`` by the same rule."""
        return abs(np.sum(self.weights / (self.z - self.center)) - 1.0)

    def refined(self) -> "SpectralContour":
        return SpectralContour(self.radius, 2 * self.nodes, self.enclosed, self.center)


def _match(pred, roots, margin):
    n = pred.size
    if n == 1:
        return roots.copy()
    D = np.abs(pred[:, None] - roots[None, :])
    assign = np.argmin(D, axis=1)
    if np.unique(assign).size != n:
        return None
    rows = np.arange(n)
    d1 = D[rows, assign]
    D[rows, assign] = np.inf
    d2 = D.min(axis=1)
    if np.any(d2 < margin * d1) or not np.all(d2 > 0):
        return None
    return roots[assign]


def _permutation(start, end):
    D = np.abs(end[:, None] - start[None, :])
    perm = np.argmin(D, axis=1)
    if np.unique(perm).size != perm.size:
        raise LabelAmbiguity("loop end values do not match start values one-to-one")
    return tuple(int(p) for p in perm)


class _Tracker:
    def __init__(self, pair, z0, v0, margin, max_depth):
        self.pair = pair
        self.margin = margin
        self.max_depth = max_depth
        self.hist = [(complex(z0), np.asarray(v0, dtype=complex))]

    def predict(self, z):
        z1, v1 = self.hist[-1]
        if len(self.hist) < 2:
            return v1
        z0, v0 = self.hist[-2]
        if z1 == z0:
            return v1
        return v1 + (v1 - v0) * ((z - z1) / (z1 - z0))

    def advance(self, z, roots, depth=0):
        matched = _match(self.predict(z), roots, self.margin)
        if matched is not None:
            self.hist = [self.hist[-1], (complex(z), matched)]
            return matched
        if depth >= self.max_depth:
            raise CollisionGuardTripped(f"cannot pair eigenvalues unambiguously near z={complex(z):.6g}")
        z1 = self.hist[-1][0]
        subs = z1 + (z - z1) * np.array([0.25, 0.5, 0.75])
        for zz, rr in zip(subs, pencil_roots(self.pair, subs)):
            self.advance(zz, rr, depth + 1)
        return self.advance(z, roots, depth + 1)


def continue_branches(pair: HermitianPair, path, init: Labeling, margin=PAIRING_MARGIN, max_depth=40) -> BranchTable:
    """Analytically continue labeled branches along a path.

    Consecutive root sets are paired by nearest match against a linear
    prediction; whenever the runner-up distance is less than ``margin`` times
    the pairing distance the step is subdivided.

    Raises
    ------
    CollisionGuardTripped
        The path passes too close to a branch point to pair roots reliably.
    """
    path = tuple(path)
    pts = path_points(path)
    if abs(pts[0] - init.z) > 1e-9 * (1.0 + abs(init.z)):
        raise ValueError("path must start at the labeling point")
    tracker = _Tracker(pair, pts[0], init.values, margin, max_depth)
    rows = [np.asarray(init.values, dtype=complex)]
    for z, r in zip(pts[1:], pencil_roots(pair, pts[1:])):
        rows.append(tracker.advance(z, r))
    anchor = np.column_stack([pair.a_diag, pair.B_eigs])
    return BranchTable(anchor, pts, np.array(rows), path)


def label_branches_at_anchor(pair: HermitianPair, t0: float, direction: complex = 1.0, max_retries: int = 10) -> Labeling:
    """Label roots at ``z = t0 * direction`` by proximity to ``a_jj - z b_j``.

    The anchor is pushed outward by factors of two until every pairing
    distance is at most a quarter of the smallest gap between predictions.
    """
    if not pair.distinct_b:
        raise DegenerateB("labels at infinity need distinct b_j")
    a, b = pair.a_diag, pair.B_eigs
    direction = complex(direction) / abs(direction)
    for _ in range(max_retries + 1):
        z = t0 * direction
        pred = a - z * b
        roots = pencil_roots(pair, z)
        D = np.abs(pred[:, None] - roots[None, :])
        assign = np.argmin(D, axis=1)
        gap = np.min(np.abs(pred[:, None] - pred[None, :]) + np.diag(np.full(pair.n, np.inf)))
        if np.unique(assign).size == pair.n and np.all(D[np.arange(pair.n), assign] <= 0.25 * gap):
            return Labeling(z, roots[assign])
        t0 *= 2.0
    raise LabelAmbiguity(f"asymptotic labeling still ambiguous at |z|={t0:.3g}")


def anchor_radius(branch_pts, radius_margin=RADIUS_MARGIN) -> float:
    rmax = max([abs(bp.z) for bp in branch_pts], default=0.0)
    return 2.0 * radius_margin * max(rmax, 1.0)


def discriminant(pair: HermitianPair, z) -> np.ndarray:
    """``prod_{i<j} (lambda_i - lambda_j)**2`` of the char poly at ``z`` (batched)."""
    r = pencil_roots(pair, z)
    n = pair.n
    out = np.ones(r.shape[:-1], dtype=complex)
    for i in range(n):
        for j in range(i + 1, n):
            out = out * (r[..., i] - r[..., j]) ** 2
    return out


def discriminant_coefficients(pair: HermitianPair, radius: float) -> np.ndarray:
    """Coefficients of ``w -> disc(radius * w)`` by interpolation on roots of unity."""
    deg = pair.n * (pair.n - 1)
    m = 1 << int(math.ceil(math.log2(2 * (deg + 1))))
    w = np.exp(2j * np.pi * np.arange(m) / m)
    c = np.fft.fft(discriminant(pair, radius * w)) / m
    scale = np.max(np.abs(c))
    if np.max(np.abs(c[deg + 1 :]), initial=0.0) > 1e-6 * scale:
        raise NumericalError("discriminant interpolation shows aliasing above the expected degree")
    return c[: deg + 1]


def winding_number(pair: HermitianPair, radius: float, samples: int | None = None) -> int:
    deg = pair.n * (pair.n - 1)
    samples = samples or 16 * deg + 64
    z = radius * np.exp(2j * np.pi * np.arange(samples + 1) / samples)
    d = discriminant(pair, z)
    return int(round(np.sum(np.angle(d[1:] / d[:-1])) / (2 * np.pi)))


def default_search_radius(pair: HermitianPair) -> float:
    b = pair.B_eigs
    gap = np.min(np.diff(b)) if pair.n > 1 else 1.0
    return 4.0 * (1.0 + np.linalg.norm(pair.A)) * (1.0 + 1.0 / gap)


def _zeros_on(pair, rho):
    c = discriminant_coefficients(pair, rho)
    lead = np.flatnonzero(np.abs(c) > 0)[-1]
    roots = rho * roots_batch((c[: lead + 1] / c[lead])[None, :])[0]
    # zeros lost to underflow of the leading coefficients sit far outside
    return np.concatenate([roots, np.full(c.size - 1 - lead, np.inf)])


def _discriminant_zeros(pair, search_radius):
    deg = pair.n * (pair.n - 1)
    rho = search_radius
    for _ in range(9):
        if winding_number(pair, rho) == deg:
            break
        rho *= 2.0
    else:
        raise NumericalError("discriminant zeros not contained in the search radius after 8 doublings")
    z = _zeros_on(pair, rho)
    rho = 1.1 * np.max(np.abs(z[np.isfinite(z)])) + 1e-3
    # zeros may span orders of magnitude: each level keeps only its own annulus,
    # counted by the argument principle and picked by modulus rank
    found = []
    outer = deg
    while outer:
        inner = winding_number(pair, rho / LEVEL_RATIO) if rho > 1e-6 else 0
        z = _zeros_on(pair, rho)
        z = z[np.argsort(np.abs(z), kind="stable")]
        found.extend(z[inner:outer])
        outer = inner
        rho /= LEVEL_RATIO
    # merge numerically split multiple zeros
    zs = sorted(found, key=lambda v: (v.real, v.imag))
    groups = []
    for v in zs:
        for g in groups:
            if abs(np.mean(g) - v) <= MERGE_TOL * (1.0 + abs(v)):
                g.append(v)
                break
        else:
            groups.append([v])
    return [complex(np.mean(g)) for g in groups], rho


def _root_multiplicity(pair, z):
    r = pencil_roots(pair, z)
    tau = 1e-3 * (1.0 + np.max(np.abs(r)))
    return int(max(np.sum(np.abs(r - ri) <= tau) for ri in r))


def _local_permutation(pair, z, rho, t_anchor, guard=()):
    u = z / abs(z) if abs(z) > 1e-12 else 1.0 + 0j
    start = z + rho * u
    loop = Arc(z, rho, float(np.angle(u)), float(np.angle(u)) + 2 * np.pi, 128)
    last_error = None
    for delta in (0.0, 0.07, -0.07, 0.2, -0.2):
        ud = u * np.exp(1j * delta)
        try:
            init = label_branches_at_anchor(pair, t_anchor, ud)
            if delta == 0.0:
                approach = (Segment(init.z, start, 64, guard),)
            else:
                r0 = abs(start)
                th = float(np.angle(ud))
                approach = (Segment(init.z, r0 * ud, 64, guard), Arc(0.0, r0, th, th - delta, 32))
                if abs(approach[-1].points()[-1] - start) > 1e-9 * (1 + abs(start)):
                    approach = approach + (Segment(approach[-1].points()[-1], start, 8),)
            table = continue_branches(pair, approach + (loop,), init)
        except CollisionGuardTripped as exc:
            last_error = exc
            continue
        n_loop = loop.samples
        return _permutation(table.values[-n_loop - 1], table.values[-1])
    raise last_error


def branch_points(pair: HermitianPair, search_radius: float | None = None) -> list:
    """All discriminant zeros, each classified by a small-loop monodromy test.

    The discriminant (a polynomial of degree ``n(n-1)`` in ``z``) is
    recovered by FFT interpolation of root products, after its winding
    number certifies that every zero lies inside ``search_radius`` (doubled
    up to eight times otherwise).

    Returns
    -------
    list of BranchPoint, sorted by modulus then argument.
    """
    if not pair.distinct_b:
        raise DegenerateB("branch points need distinct b_j")
    if pair.n == 1:
        return []
    zeros, _ = _discriminant_zeros(pair, search_radius or default_search_radius(pair))
    zeros.sort(key=lambda v: (round(abs(v), 12), np.angle(v)))
    t_anchor = anchor_radius([BranchPoint(z, 2, True) for z in zeros])
    out = []
    for i, z in enumerate(zeros):
        others = [abs(z - w) for j, w in enumerate(zeros) if j != i]
        rho = min(0.5, 0.4 * min(others, default=np.inf))
        perm = _local_permutation(pair, z, rho, t_anchor, tuple(zeros))
        genuine = perm != tuple(range(pair.n))
        order = max(2, _root_multiplicity(pair, z)) if genuine else _root_multiplicity(pair, z)
        out.append(BranchPoint(z, max(order, 2), genuine, perm))
    return out


def certified_contour(branch_pts, radius_factor=RADIUS_MARGIN, nodes=N_MIN, min_radius=R_MIN) -> SpectralContour:
    """Circle about 0 enclosing every discriminant zero with the given margin."""
    if radius_factor < 1.5:
        raise ValueError("radius_factor must be >= 1.5")
    rmax = max([abs(bp.z) for bp in branch_pts], default=0.0)
    return SpectralContour(max(min_radius, radius_factor * rmax), nodes, tuple(branch_pts))


def split_radius(branch_pts, k, radius_factor=RADIUS_MARGIN, min_radius=R_MIN, clearance=0.2) -> float:
    """Smallest safe radius for sums over the label set ``{0..k-1}``.

    Only branch points whose monodromy mixes the set with its complement
    must be enclosed; the circle is then pushed outward until it keeps a
    relative ``clearance`` from every other discriminant zero.
    """
    mixing = [abs(bp.z) for bp in branch_pts if bp.genuine and bp.mixes(k)]
    R = max(min_radius, radius_factor * max(mixing, default=0.0))
    radii = sorted(abs(bp.z) for bp in branch_pts)
    moved = True
    while moved:
        moved = False
        for r in radii:
            if abs(r - R) < clearance * R:
                R = max(R, radius_factor * r)
                moved = True
    return R


def contour_table(pair: HermitianPair, contour: SpectralContour, branch_pts=(), init: Labeling | None = None) -> BranchTable:
    """Labeled branches at the contour nodes plus the closing node.

    Without ``init`` the labels come from the asymptotic anchor on the
    positive real axis and are carried in along it to ``z = center + R``.
    """
    c, R, N = complex(contour.center), contour.radius, contour.nodes
    start = c + R
    if init is None:
        if c != 0:
            roots = np.sort_complex(pencil_roots(pair, start))
            init = Labeling(start, roots)
            lead = ()
        else:
            t0 = max(anchor_radius(branch_pts), 2.0 * R)
            init = label_branches_at_anchor(pair, t0)
            lead = (Segment(init.z, start, 48, tuple(bp.z for bp in branch_pts)),)
    else:
        lead = () if abs(init.z - start) <= 1e-9 * (1 + abs(start)) else (Segment(init.z, start, 48, tuple(bp.z for bp in branch_pts)),)
    arc = Arc(c, R, 0.0, 2 * np.pi, N)
    table = continue_branches(pair, lead + (arc,), init)
    return BranchTable(table.anchor, table.z[-N - 1 :], table.values[-N - 1 :], (arc,))


def monodromy_permutation(pair: HermitianPair, contour: SpectralContour, init: Labeling | None = None, branch_pts=()) -> tuple:
    """Label permutation after one positive loop of ``contour``.

    For a contour about the origin enclosing every genuine branch point this
    must be the identity; callers treat anything else as a verification
    failure.
    """
    return contour_table(pair, contour, branch_pts, init).closing_permutation()


def real_axis_values(pair: HermitianPair, ts, branch_pts=()) -> np.ndarray:
    """Labeled ``lambda_j(t)`` at real points, continued along the real axis from the anchor."""
    ts = np.asarray(ts, dtype=float)
    t0 = max(anchor_radius(branch_pts), 2.0 * float(np.max(ts)))
    init = label_branches_at_anchor(pair, t0)
    order = np.argsort(-ts)
    pts = np.concatenate([[init.z.real], ts[order]])
    guard = tuple(bp.z for bp in branch_pts)
    pieces = tuple(Segment(pts[i], pts[i + 1], 16, guard) for i in range(len(pts) - 1) if pts[i] != pts[i + 1])
    if not pieces:
        return np.repeat(init.values[None, :], ts.size, axis=0)
    table = continue_branches(pair, pieces, Labeling(complex(pts[0]), init.values))
    out = np.empty((ts.size, pair.n), dtype=complex)
    for idx, t in zip(order, ts[order]):
        out[idx] = table.values[np.argmin(np.abs(table.z - t))]
    return out
