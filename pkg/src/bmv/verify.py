"""Independent checks of a constructed measure against ``f(t) = Tr e^{A - tB}``."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .branches import (
    Arc,
    Labeling,
    SpectralContour,
    certified_contour,
    continue_branches,
    contour_table,
    real_axis_values,
)
from .errors import BmvError, OracleUnstable, PoleTooCloseToContour
from .linalg import HermitianPair, trace_exp
from .measure import BmvMeasure, Construction
from .summation import exact_sum

DEFAULT_T_GRID = (0.0, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0)
PROOF_TS = (0.7, 1.3)


@dataclass(frozen=True)
class VerifyTolerances:
    laplace_rel: float = 1e-6
    negativity: float = 1e-6
    support: float = 1e-6
    mass_rel: float = 1e-6
    oracle_abs: float = 1e-4
    oracle_rel: float = 1e-3
    diamond: float = 1e-8
    residue: float = 1e-6

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise ValueError(f"tolerance {name} must be positive")


def laplace_of_measure(measure: BmvMeasure, t: float) -> float:
    """``sum_j w_j e^{-t b_j} + sum_i q_i w(s_i) e^{-t s_i}``, summed exactly in ascending ``s``."""
    s = np.concatenate([measure.atom_locations, measure.density_s])
    w = np.concatenate([measure.atom_weights, measure.quad_weights * measure.density_w])
    order = np.argsort(s, kind="stable")
    return math.fsum((w[order] * np.exp(-t * s[order])).tolist())


# ----------------------------------------------------------------------------
# inverse Laplace oracle


def _jump_coefficients(pair: HermitianPair):
    """Coefficients ``c1, c2`` of ``lambda_j(z) = a_jj - z b_j + c1/z + c2/z^2 + ...``.

    They come from perturbation theory of ``B - A/z`` around the eigenbasis of
    ``B`` and give the jump of the density and of its slope at each ``b_j``.
    """
    A, b = pair.A, pair.B_eigs
    n = pair.n
    c1 = np.zeros(n)
    c2 = np.zeros(n)
    for j in range(n):
        others = [k for k in range(n) if k != j]
        d = {k: b[j] - b[k] for k in others}
        s2 = sum(abs(A[j, k]) ** 2 / d[k] for k in others)
        s3 = sum(A[j, k] * A[k, l] * A[l, j] / (d[k] * d[l]) for k in others for l in others)
        s3 -= A[j, j].real * sum(abs(A[j, k]) ** 2 / d[k] ** 2 for k in others)
        c1[j] = -s2
        c2[j] = complex(s3).real
    return c1, c2


class LineOracle:
    """Density from the Bromwich integral on the imaginary axis.

    The atomic part and the first two orders of the jumps at each ``b_j`` are
    subtracted in closed form, which leaves a transform decaying like
    ``|y|^{-3}``; the remainder is integrated by the trapezoidal rule.
    """

    def __init__(self, pair: HermitianPair, step: float = 0.2, cutoff: float = 2000.0, alpha: float = 1.0, tol: float = 1e-6):
        self.pair = pair
        self.step = step
        self.cutoff = cutoff
        self.alpha = alpha
        self.tol = tol
        self._atoms = np.exp(pair.a_diag)
        if pair.commuting:
            self._jump = self._slope = np.zeros(pair.n)
        else:
            c1, c2 = _jump_coefficients(pair)
            self._jump = c1
            self._slope = 0.5 * c1**2 + c2 + alpha * c1
        self._cache = {}

    def _remainder(self, y):
        p = 1j * y
        b = self.pair.B_eigs
        e = self._atoms[None, :] * np.exp(-p[:, None] * b[None, :])
        q = p[:, None] + self.alpha
        model = e * (self._jump / q + self._slope / q**2)
        return trace_exp(self.pair, p) - e.sum(axis=1) - model.sum(axis=1)

    def _samples(self):
        if not self._cache:
            h = self.step / 2
            y = h * np.arange(int(round(2 * self.cutoff / h)) + 1)
            self._cache["fine"] = (y, self._remainder(y))
        return self._cache["fine"]

    def _model_density(self, s):
        u = s - self.pair.B_eigs
        on = u > 0
        terms = self._atoms * np.exp(-self.alpha * u) * (self._jump + self._slope * u)
        return math.fsum(terms[on].tolist())

    @staticmethod
    def _line(s, y, G, h):
        terms = G * np.exp(1j * y * s)
        terms[0] *= 0.5
        return h / math.pi * exact_sum(terms).real

    def __call__(self, s: float) -> tuple[float, float]:
        """``(omega_oracle(s), refinement change)``.

        Raises
        ------
        OracleUnstable
            Halving the step and doubling the cutoff moves the value by more than ``tol``.
        """
        if self.pair.commuting:
            return 0.0, 0.0
        y, G = self._samples()
        # coarse rule: twice the step, half the cutoff
        m = (y.size - 1) // 2
        coarse = self._line(s, y[: m + 1 : 2], G[: m + 1 : 2], self.step)
        fine = self._line(s, y, G, self.step / 2)
        delta = abs(fine - coarse)
        if delta > self.tol:
            raise OracleUnstable(f"inverse Laplace value at s={s:g} moved by {delta:.2e} under refinement")
        return self._model_density(s) + fine, delta


def bromwich_oracle(pair: HermitianPair, s: float, **options) -> float:
    """Density at ``s`` from ``f`` alone, without any branch tracking."""
    return LineOracle(pair, **options)(s)[0]


# ----------------------------------------------------------------------------
# residue identities


@dataclass(frozen=True)
class IdentityResiduals:
    t: float
    radius: float
    diamond: float
    residues: list
    diamond_terms: list
    residue_values: list

    def to_json(self):
        return {
            "t": self.t,
            "R": self.radius,
            "diamond": self.diamond,
            "residue": self.residues,
            "diamond_terms": [[v.real, v.imag] for v in self.diamond_terms],
            "residue_values": [[v.real, v.imag] for v in self.residue_values],
        }


def _circle_mean(values):
    return exact_sum(values) / values.shape[0]


def proof_identity_check(
    pair: HermitianPair,
    t: float,
    contour: SpectralContour | None = None,
    branch_pts=None,
    nodes: int = 512,
) -> IdentityResiduals:
    """Replay the residue identities on a circle ``|z| = R > t`` with ``t`` cut out.

    The region is the disk of ``contour`` minus a small disk about ``t``.  On
    it each ``e^{lambda_j(z) + b_j (z - t)} / (z - t)`` integrates to
    ``e^{a_jj - b_j t} - e^{lambda_j(t)}``: the outer circle sees only the
    expansion at infinity, the inner one (negatively oriented) only the
    pole.  With ``b_n`` in place of ``b_j`` the summed integrand is entire
    apart from that pole, so the same region gives zero.

    Raises
    ------
    PoleTooCloseToContour
        ``|R - t| < 0.1 R``.
    """
    a, b = pair.a_diag, pair.B_eigs
    n = pair.n
    if pair.commuting:
        branch_pts = []
    elif branch_pts is None:
        branch_pts = Construction(pair).branch_points
    if contour is None:
        base = certified_contour(branch_pts, nodes=nodes)
        contour = SpectralContour(max(base.radius, t / 0.85), nodes, base.enclosed)
    R = contour.radius
    if abs(R - t) < 0.1 * R:
        raise PoleTooCloseToContour(f"t={t:g} is within 10% of the contour radius {R:g}")
    if t >= R:
        raise PoleTooCloseToContour(f"t={t:g} lies outside the contour radius {R:g}")
    dist = min([abs(bp.z - t) for bp in branch_pts], default=np.inf)
    rho = min(0.5, 0.4 * dist, 0.5 * (R - t))
    M = 256

    z = contour.z
    w = t + rho * np.exp(2j * np.pi * np.arange(M) / M)
    if pair.commuting:
        lam_out = a[None, :] - z[:, None] * b[None, :]
        lam_in = a[None, :] - w[:, None] * b[None, :]
        lam_t = a - t * b
    else:
        lam_out = contour_table(pair, contour, branch_pts).values[:-1]
        lam_t = real_axis_values(pair, [t], branch_pts)[0]
        start = real_axis_values(pair, [t + rho], branch_pts)[0]
        loop = Arc(t, rho, 0.0, 2 * np.pi, M)
        lam_in = continue_branches(pair, (loop,), Labeling(complex(t + rho), start)).values[:-1]

    dz_out = z / (z - t)  # (1/2 pi i) dz/(z-t) = dz_out * dtheta/2pi
    outer = np.array([_circle_mean(np.exp(lam_out[:, j] + b[j] * (z - t)) * dz_out) for j in range(n)])
    inner = np.array([-_circle_mean(np.exp(lam_in[:, j] + b[j] * (w - t))) for j in range(n)])
    star = outer + inner
    expected = np.exp(a - b * t) - np.exp(lam_t)
    residues = [float(abs(v)) for v in star - expected]

    # the b_n-weighted terms; the j = n one coincides with star_n
    outer_n = np.array([_circle_mean(np.exp(lam_out[:, j] + b[-1] * (z - t)) * dz_out) for j in range(n)])
    inner_n = np.array([-_circle_mean(np.exp(lam_in[:, j] + b[-1] * (w - t))) for j in range(n)])
    terms = [complex(v) for v in outer_n + inner_n]

    # the summed integrand is entire away from t: use the smallest admissible circle
    R_d = max(1.0, t / 0.85)
    zd = R_d * np.exp(2j * np.pi * np.arange(nodes) / nodes)
    fd = trace_exp(pair, zd) if not pair.commuting else np.exp(_linear_branches(a, b, zd)).sum(axis=1)
    fw = trace_exp(pair, w) if not pair.commuting else np.exp(_linear_branches(a, b, w)).sum(axis=1)
    diamond = _circle_mean(fd * np.exp(b[-1] * (zd - t)) * zd / (zd - t)) - _circle_mean(fw * np.exp(b[-1] * (w - t)))
    return IdentityResiduals(
        t=float(t),
        radius=float(R),
        diamond=float(abs(diamond)),
        residues=residues,
        diamond_terms=terms,
        residue_values=[complex(v) for v in star],
    )


def _linear_branches(a, b, z):
    """Exact branches ``a_j - z b_j`` of a commuting pair at points ``z``."""
    return a[None, :] - z[:, None] * b[None, :]


# ----------------------------------------------------------------------------
# report


@dataclass
class VerificationReport:
    laplace_residuals: list = field(default_factory=list)
    min_density: float = 0.0
    max_density: float = 0.0
    support_leakage: float = 0.0
    mass_balance: float = 0.0
    monotone: bool = True
    oracle_gaps: list = field(default_factory=list)
    proof_identities: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.flags) and all(self.flags.values()) and not self.errors

    def to_json(self) -> dict:
        out = asdict(self)
        out["pass"] = self.passed
        return out


def default_probes(pair: HermitianPair, count: int = 5) -> list:
    """Interior points of ``(b_1, b_n)`` kept away from the atoms."""
    b = pair.B_eigs
    lo, hi = float(b[0]), float(b[-1])
    if hi - lo <= 1e-9 * (1 + abs(hi)):
        return []
    width = hi - lo
    out = []
    for i in range(count):
        s = lo + width * (i + 0.5) / count
        near = b[np.argmin(np.abs(b - s))]
        if abs(s - near) < 0.02 * width:
            s = near + (0.02 * width if s >= near else -0.02 * width)
        out.append(float(s))
    return out


def verify(
    pair: HermitianPair,
    measure: BmvMeasure,
    t_grid=DEFAULT_T_GRID,
    s_probe_points=None,
    tolerances: VerifyTolerances = VerifyTolerances(),
    proof_ts=PROOF_TS,
    construction: Construction | None = None,
    oracle: LineOracle | None = None,
) -> VerificationReport:
    """Run every check and collect the residuals; failures are reported, not raised."""
    tol = tolerances
    rep = VerificationReport()
    rep.meta = {
        "n": pair.n,
        "atom_weight": "exp(a_jj), diagonal of A in the eigenbasis of B",
        "commuting": bool(pair.commuting),
        "t_grid": [float(t) for t in t_grid],
    }
    b = pair.B_eigs

    laplace_ok = True
    values = []
    for t in sorted(float(t) for t in t_grid):
        L = laplace_of_measure(measure, t)
        f = trace_exp(pair, t).real
        rel = abs(L - f) / abs(f)
        rep.laplace_residuals.append([t, abs(L - f), rel])
        laplace_ok &= rel <= tol.laplace_rel
        values.append(L)
    rep.flags["laplace"] = bool(laplace_ok)

    total = trace_exp(pair, 0.0).real
    rep.mass_balance = abs(laplace_of_measure(measure, 0.0) - total)
    rep.flags["mass"] = rep.mass_balance <= tol.mass_rel * total

    if b[-1] > 0:
        rep.monotone = bool(all(x > y for x, y in zip(values, values[1:])))
    rep.flags["monotone"] = rep.monotone

    w = measure.density_w
    rep.min_density = float(w.min()) if w.size else 0.0
    rep.max_density = float(w.max()) if w.size else 0.0
    rep.flags["nonnegative"] = rep.min_density >= -tol.negativity * (1.0 + max(rep.max_density, 0.0))

    inside = measure.density_s.size == 0 or bool(
        np.all((measure.density_s >= b[0]) & (measure.density_s <= b[-1]))
    )
    need_contours = not pair.commuting
    try:
        if need_contours:
            cons = construction or Construction(pair)
            leak = [abs(cons.omega(s, form="direct")[0]) for s in (b[0] - 0.5, b[-1] + 0.5, b[-1] + 2.0)]
            rep.support_leakage = float(max(leak))
        rep.flags["support"] = inside and rep.support_leakage <= tol.support

        probes = default_probes(pair) if s_probe_points is None else [float(s) for s in s_probe_points]
        orc = oracle or LineOracle(pair)
        gap_tol = max(tol.oracle_abs, tol.oracle_rel * rep.max_density)
        oracle_ok = True
        for s in probes:
            value = cons.omega(s)[0] if need_contours else 0.0
            ref, _ = orc(s)
            rep.oracle_gaps.append([s, abs(value - ref)])
            oracle_ok &= abs(value - ref) <= gap_tol
        rep.flags["oracle"] = bool(oracle_ok)

        proof_ok = True
        bps = cons.branch_points if need_contours else []
        for t in proof_ts:
            res = proof_identity_check(pair, t, branch_pts=bps)
            rep.proof_identities.append(res.to_json())
            proof_ok &= res.diamond <= tol.diamond and max(res.residues) <= tol.residue
        rep.flags["proof_identities"] = bool(proof_ok)
    except BmvError as exc:
        rep.errors.append(f"{type(exc).__name__}: {exc}")
    return rep
