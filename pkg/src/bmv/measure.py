"""Construction of the representing measure: atoms at ``b_j`` plus a density on ``[b_1, b_n]``.

The density at ``s`` is the contour integral

    omega(s) = (1/2 pi i) sum_{j: b_j < s} \\oint e^{lambda_j(z) + s z} dz

evaluated by the trapezoidal rule on a circle about the origin.  For each
label split ``{j: b_j < s}`` the circle only has to enclose branch points
that exchange a label inside the split with one outside it, so every
interval between consecutive atoms gets its own (smallest admissible)
circle.  Since the sum over *all* branches is entire in ``z``, the same
value is also minus the integral over the complementary labels; the form
with the smaller exponential growth on the circle is used by default.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .branches import (
    RADIUS_MARGIN,
    BranchTable,
    SpectralContour,
    branch_points,
    contour_table,
    split_radius,
)
from .errors import CancellationOverflow, DegenerateB, NotCommuting, NumericalError
from .linalg import HermitianPair
from .summation import exact_sum, neumaier_sum

log = logging.getLogger(__name__)

_EPS = np.finfo(float).eps
CANCELLATION_RATIO = 1e12
CANCEL_ATOL = 1e-6
REFINE_RTOL = 1e-10
MAX_NODES = 8192
DEFAULT_NODES_PER_INTERVAL = 32


@dataclass(frozen=True)
class BmvMeasure:
    atom_locations: np.ndarray
    atom_weights: np.ndarray
    density_s: np.ndarray
    density_w: np.ndarray
    density_err: np.ndarray
    quad_weights: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def atoms(self):
        return list(zip(self.atom_locations.tolist(), self.atom_weights.tolist()))

    @property
    def is_atomic(self) -> bool:
        return self.density_s.size == 0

    def with_density_value(self, i: int, value: float) -> "BmvMeasure":
        """Copy with one density sample overwritten (fault injection)."""
        w = self.density_w.copy()
        w[i] = value
        return replace(self, density_w=w)

    def to_json(self) -> dict:
        return {
            "atoms": [{"b": float(b), "w": float(w)} for b, w in zip(self.atom_locations, self.atom_weights)],
            "density": [
                {"s": float(s), "w": float(w), "err": float(e)}
                for s, w, e in zip(self.density_s, self.density_w, self.density_err)
            ],
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, data: dict) -> "BmvMeasure":
        atoms = data["atoms"]
        dens = data["density"]
        meta = dict(data.get("meta", {}))
        b = np.array([a["b"] for a in atoms], dtype=float)
        s = np.array([d["s"] for d in dens], dtype=float)
        m = int(meta.get("nodes_per_interval", 0))
        qw = _grid(b, m)[1] if s.size else np.zeros(0)
        return cls(
            atom_locations=b,
            atom_weights=np.array([a["w"] for a in atoms], dtype=float),
            density_s=s,
            density_w=np.array([d["w"] for d in dens], dtype=float),
            density_err=np.array([d.get("err", 0.0) for d in dens], dtype=float),
            quad_weights=qw,
            meta=meta,
        )

    def density_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["s", "omega"])
        for s, w in zip(self.density_s, self.density_w):
            writer.writerow([repr(float(s)), repr(float(w))])
        return buf.getvalue()


def _grid(b, m):
    """Interior Gauss-Legendre nodes and weights on each ``(b_k, b_{k+1})``."""
    if m <= 0 or len(b) < 2:
        return np.zeros(0), np.zeros(0)
    x, w = np.polynomial.legendre.leggauss(m)
    nodes, weights = [], []
    for lo, hi in zip(b[:-1], b[1:]):
        half = 0.5 * (hi - lo)
        nodes.append(0.5 * (hi + lo) + half * x)
        weights.append(half * w)
    return np.concatenate(nodes), np.concatenate(weights)


def build_commuting(pair: HermitianPair, epsilon: float = 0.0) -> BmvMeasure:
    """Purely atomic measure ``sum_j e^{a_j} delta_{b_j}`` of a commuting pair."""
    if not pair.commuting:
        raise NotCommuting("pair does not commute; use build_measure")
    empty = np.zeros(0)
    return BmvMeasure(
        atom_locations=pair.B_eigs.copy(),
        atom_weights=np.exp(pair.a_diag),
        density_s=empty,
        density_w=empty,
        density_err=empty,
        quad_weights=empty,
        meta={"R": [], "N": [], "epsilon": float(epsilon), "nodes_per_interval": 0, "commuting": True},
    )


def perturb_B(pair: HermitianPair, epsilon: float) -> HermitianPair:
    """Replace ``B`` by ``B + epsilon * diag(1, ..., n)`` in the eigenbasis of ``B``."""
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    if epsilon == 0:
        return pair
    return pair.with_B_eigs(pair.B_eigs + epsilon * np.arange(1, pair.n + 1))


@dataclass(frozen=True)
class IntervalPlan:
    """Contour and labeled branch table used for the label split ``{0..k-1}``."""

    k: int
    contour: SpectralContour
    table: BranchTable
    refinement_delta: float


def _contour_sum(pair, s, contour, table, form):
    """Return ``(value, err, form)`` of the trapezoidal contour sum."""
    a, b = pair.a_diag, pair.B_eigs
    n = pair.n
    inside = b < s
    k = int(inside.sum())
    if k == 0:
        return 0.0, 0.0, "direct"
    R = contour.radius
    if form == "auto":
        if k == n:
            form = "complement"
        else:
            form = "complement" if (b[-1] - s) < (s - b[0]) else "direct"
    if form == "direct":
        idx, sign = np.flatnonzero(inside), 1.0
    elif form == "complement":
        idx, sign = np.flatnonzero(~inside), -1.0
    else:
        raise ValueError(f"unknown form {form!r}")
    if idx.size == 0:
        return 0.0, 0.0, form
    N = contour.nodes
    z = contour.z
    lam = table.values[:N, idx]
    scaled = np.exp(lam - a[idx] + s * z[:, None]) * contour.weights[:, None]
    weights = np.exp(a[idx])
    partial = np.array([neumaier_sum(scaled[:, j]) for j in range(idx.size)])
    total = sign * neumaier_sum(partial * weights)
    terms = scaled * weights
    magnitude = np.abs(terms)
    if magnitude.max() > CANCELLATION_RATIO * abs(total):
        log.debug("cancellation monitor tripped at s=%g, escalating to exact summation", s)
        total = sign * exact_sum(terms)
    roundoff = 8 * _EPS * (1.0 + R * (np.max(np.abs(b)) + abs(s)) + np.max(np.abs(a))) * magnitude.sum()
    if roundoff > CANCEL_ATOL * (1.0 + abs(total)):
        raise CancellationOverflow(
            f"omega({s:g}) loses all accuracy on the R={R:.3g} circle (rounding bound {roundoff:.2e})"
        )
    return float(total.real), float(max(abs(total.imag), roundoff)), form


def omega_at(pair: HermitianPair, s: float, contour: SpectralContour | None = None, table: BranchTable | None = None, form: str = "auto"):
    """Density ``omega(s)`` and an error estimate.

    With ``contour`` and ``table`` given the sum is evaluated on exactly those
    nodes; otherwise a :class:`Construction` picks the contour for the label
    split of ``s``.  ``s`` equal to an atom location is the left limit.

    Returns
    -------
    (value, err_estimate)
    """
    if s <= pair.B_eigs[0]:
        return 0.0, 0.0
    _require_regular(pair)
    if contour is None or table is None:
        return Construction(pair).omega(s, form=form)
    value, err, _ = _contour_sum(pair, s, contour, table, form)
    return value, err


def _require_regular(pair):
    if not pair.distinct_b:
        raise DegenerateB("repeated eigenvalues of B")
    if not pair.positive_b:
        raise DegenerateB("B has a zero eigenvalue")


class Construction:
    """Shared branch points and per-split contours for one pair.

    Plans are built lazily and cached; every public result is a pure
    function of the pair and the constructor options.
    """

    def __init__(self, pair: HermitianPair, radius_factor: float = RADIUS_MARGIN, contour_nodes: int = 256):
        _require_regular(pair)
        if radius_factor < 1.5:
            raise ValueError("radius_factor must be >= 1.5")
        self.pair = pair
        self.radius_factor = radius_factor
        self.contour_nodes = contour_nodes
        self._bps = None
        self._plans = {}

    @property
    def branch_points(self):
        if self._bps is None:
            self._bps = branch_points(self.pair)
        return self._bps

    def _probe(self, k):
        b = self.pair.B_eigs
        return 0.5 * (b[k - 1] + b[k]) if k < self.pair.n else b[-1] + 0.5

    def plan(self, k: int) -> IntervalPlan:
        """Contour for sums over labels ``{0..k-1}`` with node count refined until stable."""
        if k in self._plans:
            return self._plans[k]
        bps = self.branch_points
        R = split_radius(bps, k, self.radius_factor)
        enclosed = tuple(bp for bp in bps if abs(bp.z) < R)
        s = self._probe(k)
        N = self.contour_nodes
        while True:
            fine = SpectralContour(R, 2 * N, enclosed)
            if fine.unit_residual() > 1e-12:
                raise NumericalError("contour quadrature fails the dz/z test")
            table = contour_table(self.pair, fine, bps)
            perm = table.closing_permutation()
            if any((j < k) != (p < k) for j, p in enumerate(perm)):
                raise NumericalError(f"circle R={R:.4g} does not separate labels 1..{k} from the rest")
            coarse = SpectralContour(R, N, enclosed)
            coarse_table = BranchTable(table.anchor, table.z[::2], table.values[::2], table.path)
            v_fine, e_fine, _ = _contour_sum(self.pair, s, fine, table, "direct" if k < self.pair.n else "complement")
            v_coarse, _, _ = _contour_sum(self.pair, s, coarse, coarse_table, "direct" if k < self.pair.n else "complement")
            delta = abs(v_fine - v_coarse)
            if delta <= REFINE_RTOL * abs(v_fine) + 2 * e_fine or 2 * N >= MAX_NODES:
                break
            N *= 2
        plan = IntervalPlan(k, fine, table, delta)
        self._plans[k] = plan
        return plan

    def omega(self, s: float, form: str = "auto"):
        b = self.pair.B_eigs
        if s <= b[0]:
            return 0.0, 0.0
        k = int(np.sum(b < s))
        p = self.plan(k)
        value, err, _ = _contour_sum(self.pair, s, p.contour, p.table, form)
        return value, max(err, p.refinement_delta)


def build_measure(
    pair: HermitianPair,
    nodes_per_interval: int = DEFAULT_NODES_PER_INTERVAL,
    radius_factor: float = RADIUS_MARGIN,
    contour_nodes: int = 256,
    epsilon: float = 0.0,
    construction: Construction | None = None,
) -> BmvMeasure:
    """Atoms ``(b_j, e^{a_jj})`` plus density samples at Gauss-Legendre nodes.

    Commuting pairs are delegated to :func:`build_commuting`.  Pairs with
    repeated or zero ``b_j`` raise :class:`DegenerateB`; regularize them with
    :func:`perturb_B` first.
    """
    if pair.commuting:
        return build_commuting(pair, epsilon)
    _require_regular(pair)
    cons = construction or Construction(pair, radius_factor, contour_nodes)
    b = pair.B_eigs
    s_all, qw = _grid(b, nodes_per_interval)
    values = np.empty_like(s_all)
    errs = np.empty_like(s_all)
    for i, s in enumerate(s_all):
        values[i], errs[i] = cons.omega(float(s))
    plans = [cons.plan(k) for k in range(1, pair.n)]
    meta = {
        "R": [float(p.contour.radius) for p in plans],
        "N": [int(p.contour.nodes) for p in plans],
        "epsilon": float(epsilon),
        "nodes_per_interval": int(nodes_per_interval),
        "commuting": False,
    }
    return BmvMeasure(
        atom_locations=b.copy(),
        atom_weights=np.exp(pair.a_diag),
        density_s=s_all,
        density_w=values,
        density_err=errs,
        quad_weights=qw,
        meta=meta,
    )
