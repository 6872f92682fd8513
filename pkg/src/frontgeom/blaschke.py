"""Equiaffine (Blaschke) structure of convex surfaces in R^3.

For a locally strongly convex immersion f the affine metric h, the affine
normal xi and the affine shape operator S (phi = S here) are produced as
truncated jets, so every downstream consumer (tracing, classification,
curvature integrals) works unchanged with phi = S:

    L_ij   = det3(f_u, f_v, f_{u_i u_j})          (sign fixed so L > 0)
    h_ij   = L_ij / (det L)^{1/4}
    xi     = (1/2) Delta_h f                       (Laplace-Beltrami of h)
    D_X xi = -S(X)                                 (apolarity makes this
                                                    tangential; the normal
                                                    component is recorded)

The map p -> xi(p) is the affine normal map; its differential drops rank
exactly where det S vanishes, which is the singular set traced by the
generic machinery.  Everything is computed per chart on arrays of points;
jet orders are chosen so that an order-m shape operator needs f at order
m + 4 (so order-2 jets of S on a surface given at order 6).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bundle import BundleHom, ChartJets, christoffel_from_metric, det2
from .errors import (
    CriteriaMismatch,
    FrontConditionViolated,
    LinearSolveFailure,
    NotConvex,
)
from .singular import (
    analyze_curve,
    curve_point,
    find_a3_points,
    null_direction,
    trace_singular_set,
    a3_sign_from_front,
)

GRAM_FLOOR = 1e-14
# Cross-check thresholds for the dlam(eta) criteria: agreement of the two
# classifier formulas at vertices, the zero-matching distance (relative to
# total curve parameter), and the exclusion window around each located A3.
CRITERIA_AGREE_TOL = 1e-9
CRITERIA_PARAM_TOL = 1e-6
CRITERIA_A3_WINDOW = 0.05
CRITERIA_EDGE_FLOOR = 1e-8


def _dot3(A, B):
    return A[0] * B[0] + A[1] * B[1] + A[2] * B[2]


def _cross3(A, B):
    return [
        A[1] * B[2] - A[2] * B[1],
        A[2] * B[0] - A[0] * B[2],
        A[0] * B[1] - A[1] * B[0],
    ]


def _det3(A, B, C):
    return (
        A[0] * (B[1] * C[2] - B[2] * C[1])
        - A[1] * (B[0] * C[2] - B[2] * C[0])
        + A[2] * (B[0] * C[1] - B[1] * C[0])
    )


def _trunc3(vec, k):
    return [c.truncated(k) for c in vec]


def _pipeline(emb, chart_id, U, V, n_h, need_xi=False, need_alpha=False):
    """Per-chart Blaschke data as jets.

    h comes out at order n_h, xi at n_h - 1, the shape operator at n_h - 2.
    The immersion is evaluated at order n_h + 2.
    """
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    f = emb.jets(chart_id, U, V, n_h + 2)
    fu = [c.du() for c in f]
    fv = [c.dv() for c in f]
    fuu = [c.du() for c in fu]
    fuv = [c.dv() for c in fu]
    fvv = [c.dv() for c in fv]
    fu_h = _trunc3(fu, n_h)
    fv_h = _trunc3(fv, n_h)
    L = [
        [_det3(fu_h, fv_h, fuu), _det3(fu_h, fv_h, fuv)],
        [None, _det3(fu_h, fv_h, fvv)],
    ]
    L[1][0] = L[0][1]
    detL = det2(L)
    dmin = float(np.min(detL.value))
    if dmin <= 0.0:
        bad = int(np.count_nonzero(detL.value <= 0.0))
        raise NotConvex(
            f"det L <= 0 at {bad} of {detL.value.size} points of chart "
            f"{chart_id!r} (min {dmin:.3e}); the surface is not locally "
            "strongly convex there"
        )
    s00 = L[0][0].value
    if np.all(s00 < 0.0):
        # L is negative definite: the parametrization is inward-oriented;
        # flipping the transversal orientation flips L.
        L = [[-L[0][0], -L[0][1]], [-L[1][0], -L[1][1]]]
    elif not np.all(s00 > 0.0):
        raise NotConvex(
            f"L changes definiteness across chart {chart_id!r} (impossible "
            "for a connected strongly convex patch; check the immersion)"
        )
    q = detL.sqrt().sqrt()  # (det L)^{1/4} > 0
    qinv = q.reciprocal()
    h = [[L[i][j] * qinv for j in range(2)] for i in range(2)]
    out = {
        "f": f,
        "fu": fu,
        "fv": fv,
        "fij": ((fuu, fuv), (fuv, fvv)),
        "L": L,
        "detL": detL,
        "q": q,
        "h": h,
    }
    if not (need_xi or need_alpha):
        return out

    # det h = sqrt(det L) = q^2, so sqrt(det h) = q and
    # sqrt(det h) h^{ij} = adj(h)^{ij} / q.
    n_xi = n_h - 1
    adj = [[h[1][1], -h[0][1]], [-h[1][0], h[0][0]]]
    P = [
        [(adj[i][0] * fu_h[k] + adj[i][1] * fv_h[k]) * qinv for k in range(3)]
        for i in range(2)
    ]
    qinv_1 = q.truncated(n_xi).reciprocal()
    xi = [(P[0][k].du() + P[1][k].dv()) * qinv_1 * 0.5 for k in range(3)]
    out["xi"] = xi
    if not need_alpha:
        return out

    m = n_h - 2
    fu_m = _trunc3(fu, m)
    fv_m = _trunc3(fv, m)
    g = [[_dot3(fu_m, fu_m), _dot3(fu_m, fv_m)], [None, _dot3(fv_m, fv_m)]]
    g[1][0] = g[0][1]
    detg = det2(g)
    scale = float(np.median(g[0][0].value * g[1][1].value))
    if float(np.min(detg.value)) <= GRAM_FLOOR * max(scale, 1e-300):
        raise LinearSolveFailure(
            f"tangent Gram matrix is numerically singular on chart {chart_id!r}"
        )
    detg_inv = detg.reciprocal()
    dxi = ([c.du() for c in xi], [c.dv() for c in xi])
    alpha = [[None, None], [None, None]]
    worst = 0.0
    for i in range(2):
        w = dxi[i]
        r1 = _dot3(w, fu_m)
        r2 = _dot3(w, fv_m)
        a = (g[1][1] * r1 - g[0][1] * r2) * detg_inv
        b = (g[0][0] * r2 - g[0][1] * r1) * detg_inv
        alpha[0][i] = -a
        alpha[1][i] = -b
        # Equiaffine condition: D_X xi must be tangential.  Record the
        # relative size of the normal remainder.
        rv = np.stack(
            [
                w[k].value - a.value * fu_m[k].value - b.value * fv_m[k].value
                for k in range(3)
            ]
        )
        wn = np.sqrt(sum(w[k].value ** 2 for k in range(3)))
        wfloor = np.median(wn) if np.median(wn) > 0 else 1.0
        rel = np.sqrt(np.sum(rv**2, axis=0)) / np.maximum(wn, 1e-12 * wfloor)
        worst = max(worst, float(np.max(rel)))
    G1 = [
        [_dot3(_trunc3(fu, m + 1), _trunc3(fu, m + 1)), _dot3(_trunc3(fu, m + 1), _trunc3(fv, m + 1))],
        [None, _dot3(_trunc3(fv, m + 1), _trunc3(fv, m + 1))],
    ]
    G1[1][0] = G1[0][1]
    out.update(
        alpha=alpha,
        G1=G1,
        G=[[G1[i][j].truncated(m) for j in range(2)] for i in range(2)],
        Gamma=christoffel_from_metric(G1),
        normal_residual=worst,
    )
    return out


class BlaschkeStructure:
    """Blaschke equipment of a convex immersed surface.

    Wraps a SurfaceEmbedding and produces the affine metric, affine normal,
    affine shape operator, affine normal map and conormal per chart.
    """

    def __init__(self, embedding, validate_embedding=True):
        if validate_embedding:
            embedding.validate()
        self.embedding = embedding
        self.atlas = embedding.atlas

    def chart_data(self, chart_id, U, V, order):
        """Full pipeline with the shape operator at the requested order."""
        return _pipeline(
            self.embedding, chart_id, U, V, order + 2, need_xi=True, need_alpha=True
        )


def blaschke_metric(s: BlaschkeStructure, chart_id, p, order=0):
    """Affine metric h as a 2x2 nested list of jets at the given order."""
    d = _pipeline(s.embedding, chart_id, p[0], p[1], order)
    return d["h"]


def affine_normal(s: BlaschkeStructure, chart_id, p, order=0):
    """Affine normal xi = (1/2) Delta_h f as three jets at the given order."""
    d = _pipeline(s.embedding, chart_id, p[0], p[1], order + 1, need_xi=True)
    return d["xi"]


class BlaschkeFrames:
    """Frame provider for BundleHom with phi the affine shape operator.

    e_metric selects the bundle metric on E = TM: "first" uses the first
    fundamental form of the immersion, "blaschke" the affine metric h.  The
    traced singular set and the census must not depend on this choice.
    """

    def __init__(self, structure: BlaschkeStructure, e_metric="first"):
        if e_metric not in ("first", "blaschke"):
            raise ValueError(f"unknown e_metric {e_metric!r}")
        self.structure = structure
        self.e_metric = e_metric
        self.normal_residual = {}

    def chart_jets(self, chart_id, U, V, order) -> ChartJets:
        d = self.structure.chart_data(chart_id, U, V, order)
        prev = self.normal_residual.get(chart_id, 0.0)
        self.normal_residual[chart_id] = max(prev, d["normal_residual"])
        if self.e_metric == "first":
            return ChartJets(G=d["G"], Gamma=d["Gamma"], phi=d["alpha"])
        h1 = [[d["h"][i][j].truncated(order + 1) for j in range(2)] for i in range(2)]
        Gh = [[h1[i][j].truncated(order) for j in range(2)] for i in range(2)]
        return ChartJets(G=Gh, Gamma=christoffel_from_metric(h1), phi=d["alpha"])


def convexity_check(s: BlaschkeStructure, n=128, margin=0.0):
    """Smallest eigenvalue of L over interior grids of all charts.

    Raises NotConvex when it is not strictly positive; returns the minimum.
    """
    worst = np.inf
    for chart in s.atlas.charts:
        gs = s.atlas.grid(chart.id, n)
        U, V = gs.U.ravel(), gs.V.ravel()
        keep = chart.contains(U, V, margin)
        d = _pipeline(s.embedding, chart.id, U[keep], V[keep], 0)
        L = d["L"]
        a, b, c = L[0][0].value, L[0][1].value, L[1][1].value
        tr = a + c
        disc = np.sqrt(np.maximum((a - c) ** 2 + 4 * b * b, 0.0))
        worst = min(worst, float(np.min((tr - disc) / 2.0)))
    if worst <= 0.0:
        raise NotConvex(f"smallest eigenvalue of L is {worst:.3e} <= 0 on a {n}x{n} grid")
    return worst


def affine_shape_operator(s: BlaschkeStructure, e_metric="first", precheck_n=0) -> BundleHom:
    """Bundle homomorphism phi = affine shape operator on E = TM.

    precheck_n > 0 runs convexity_check on that grid first (convexity is
    always enforced pointwise during evaluation regardless).
    """
    if precheck_n:
        convexity_check(s, n=precheck_n)
    return BundleHom(s.atlas, BlaschkeFrames(s, e_metric=e_metric))


class BlaschkeNormalMap:
    """The map p -> xi(p) into R^3 (the affine normal map)."""

    def __init__(self, structure: BlaschkeStructure):
        self.structure = structure
        self.atlas = structure.atlas

    def jets(self, chart_id, U, V, order=0):
        d = _pipeline(self.structure.embedding, chart_id, U, V, order + 1, need_xi=True)
        return d["xi"]

    def values(self, chart_id, U, V):
        return np.stack([c.value for c in self.jets(chart_id, U, V, 0)])

    def min_singular_value(self, chart_id, U, V):
        """Smallest singular value of the 3x2 differential d(xi) per point."""
        xi = self.jets(chart_id, U, V, 1)
        D = np.stack(
            [np.stack([c.du().value for c in xi], axis=-1),
             np.stack([c.dv().value for c in xi], axis=-1)],
            axis=-2,
        )  # (..., 2, 3)
        return np.linalg.svd(D, compute_uv=False)[..., -1]


def blaschke_normal_map(s: BlaschkeStructure) -> BlaschkeNormalMap:
    return BlaschkeNormalMap(s)


def rank_cross_check(s: BlaschkeStructure, hom=None, n=256, sv_tol=1e-6, lam_tol=1e-6):
    """Compare the rank-drop locus of d(xi) with the zero set of lambda.

    On each chart's owned region the predicates {smallest singular value of
    d(xi) < sv_tol} and {|lambda| < lam_tol} are evaluated on an n x n grid;
    returns the agreement fraction and the disagreeing points per chart.
    """
    nm = blaschke_normal_map(s)
    hom = hom or affine_shape_operator(s)
    total = 0
    agree = 0
    disagreements = {}
    for chart in s.atlas.charts:
        gs = s.atlas.grid(chart.id, n)
        U, V = gs.U.ravel(), gs.V.ravel()
        keep = s.atlas.owns(chart.id, U, V) & chart.contains(U, V)
        U, V = U[keep], V[keep]
        sv = nm.min_singular_value(chart.id, U, V)
        lam = hom.lambda_values(chart.id, U, V)
        a = (sv < sv_tol) == (np.abs(lam) < lam_tol)
        total += a.size
        agree += int(np.count_nonzero(a))
        if not np.all(a):
            disagreements[chart.id] = np.stack([U[~a], V[~a]], axis=-1)
    return {
        "agreement": agree / max(total, 1),
        "n_points": total,
        "disagreements": disagreements,
    }


# ---------------------------------------------------------------------------
# conormal and front conditions


def _conormal_jets(s: BlaschkeStructure, chart_id, U, V, order=1):
    """Conormal nu with nu(f_u) = nu(f_v) = 0 and nu(xi) = 1, as jets."""
    d = _pipeline(s.embedding, chart_id, U, V, order + 1, need_xi=True)
    fu = _trunc3(d["fu"], order)
    fv = _trunc3(d["fv"], order)
    cr = _cross3(fu, fv)
    xi = _trunc3(d["xi"], order)
    denom = _dot3(cr, xi)
    if np.any(np.abs(denom.value) <= 0.0):
        raise FrontConditionViolated(
            f"affine normal is tangent to the surface on chart {chart_id!r}"
        )
    dinv = denom.reciprocal()
    nu = [c * dinv for c in cr]
    return nu, d


def front_checks(s: BlaschkeStructure, n=65, sv_tol=1e-12, det_tol=1e-12, pairing_tol=1e-8):
    """Verify that the conormal-and-normal pair is a nondegenerate front.

    Per chart, over an interior grid:
      * min smallest singular value of the 2x3 matrix (nu_u; nu_v),
      * min |det3(nu, nu_u, nu_v)| (raw and Hadamard-scaled),
      * max |nu_{u_i}(f_{u_j}) + h_ij| relative to the scale of h.
    Raises FrontConditionViolated when any minimum falls at or below its
    tolerance or the pairing residual exceeds pairing_tol.
    """
    report = {
        "min_sv": np.inf,
        "min_det3": np.inf,
        "min_det3_scaled": np.inf,
        "max_pairing_residual": 0.0,
        "max_tangency": 0.0,
    }
    for chart in s.atlas.charts:
        gs = s.atlas.grid(chart.id, n)
        U, V = gs.U.ravel(), gs.V.ravel()
        keep = chart.contains(U, V)
        U, V = U[keep], V[keep]
        nu, d = _conormal_jets(s, chart.id, U, V, order=1)
        nu_u = np.stack([c.du().value for c in nu])  # (3, N)
        nu_v = np.stack([c.dv().value for c in nu])
        nuv = np.stack([c.value for c in nu])
        D = np.stack([nu_u, nu_v], axis=0).transpose(2, 0, 1)  # (N, 2, 3)
        sv = np.linalg.svd(D, compute_uv=False)[..., -1]
        report["min_sv"] = min(report["min_sv"], float(np.min(sv)))
        det = (
            nuv[0] * (nu_u[1] * nu_v[2] - nu_u[2] * nu_v[1])
            - nuv[1] * (nu_u[0] * nu_v[2] - nu_u[2] * nu_v[0])
            + nuv[2] * (nu_u[0] * nu_v[1] - nu_u[1] * nu_v[0])
        )
        norms = (
            np.sqrt(np.sum(nuv**2, axis=0))
            * np.sqrt(np.sum(nu_u**2, axis=0))
            * np.sqrt(np.sum(nu_v**2, axis=0))
        )
        report["min_det3"] = min(report["min_det3"], float(np.min(np.abs(det))))
        report["min_det3_scaled"] = min(
            report["min_det3_scaled"], float(np.min(np.abs(det) / np.maximum(norms, 1e-300)))
        )
        # nu(f_{u_j}) must vanish; differentiate: nu_{u_i}(f_{u_j}) = -nu(f_{u_i u_j})
        # = -h_ij by the Gauss formula.  Check the pairing directly.
        h = d["h"]
        hs = float(np.median(np.abs(h[0][0].value) + np.abs(h[1][1].value))) or 1.0
        fu0 = np.stack([c.value for c in d["fu"]])
        fv0 = np.stack([c.value for c in d["fv"]])
        fb = (fu0, fv0)
        dn = (nu_u, nu_v)
        for i in range(2):
            for j in range(2):
                pair = np.sum(dn[i] * fb[j], axis=0)
                res = np.abs(pair + h[i][j].value) / hs
                report["max_pairing_residual"] = max(
                    report["max_pairing_residual"], float(np.max(res))
                )
        for j in range(2):
            tang = np.abs(np.sum(nuv * fb[j], axis=0))
            report["max_tangency"] = max(report["max_tangency"], float(np.max(tang)))
    if report["min_sv"] <= sv_tol:
        raise FrontConditionViolated(
            f"d(nu) drops rank: smallest singular value {report['min_sv']:.3e}"
        )
    if report["min_det3_scaled"] <= det_tol:
        raise FrontConditionViolated(
            f"(nu, nu_u, nu_v) degenerates: scaled det3 {report['min_det3_scaled']:.3e}"
        )
    if report["max_pairing_residual"] > pairing_tol:
        raise FrontConditionViolated(
            f"nu_u(f_u) + h residual {report['max_pairing_residual']:.3e} "
            f"exceeds {pairing_tol:.1e}"
        )
    return report


def structure_residuals(s: BlaschkeStructure, n=33):
    """Residuals of the defining structure equations over interior grids.

    * equiaffine: relative normal component of D_X xi (should vanish),
    * gauss: the xi-component of f_{u_i u_j} in the (f_u, f_v, xi) frame
      must equal h_ij (this pins the normalization of both h and xi),
    * h_spd: smallest eigenvalue of h (must be positive).
    """
    out = {"equiaffine": 0.0, "gauss": 0.0, "h_min_eig": np.inf}
    for chart in s.atlas.charts:
        gs = s.atlas.grid(chart.id, n)
        U, V = gs.U.ravel(), gs.V.ravel()
        keep = chart.contains(U, V)
        U, V = U[keep], V[keep]
        d = s.chart_data(chart.id, U, V, 0)
        out["equiaffine"] = max(out["equiaffine"], d["normal_residual"])
        h = d["h"]
        a, b, c = h[0][0].value, h[0][1].value, h[1][1].value
        disc = np.sqrt(np.maximum((a - c) ** 2 + 4 * b * b, 0.0))
        out["h_min_eig"] = min(out["h_min_eig"], float(np.min((a + c - disc) / 2)))
        # Solve f_ij = A f_u + B f_v + C xi pointwise; C must equal h_ij.
        M = np.stack(
            [
                np.stack([c_.value for c_ in d["fu"]], axis=-1),
                np.stack([c_.value for c_ in d["fv"]], axis=-1),
                np.stack([c_.value for c_ in d["xi"]], axis=-1),
            ],
            axis=-1,
        )  # (N, 3, 3) columns fu, fv, xi
        hs = float(np.median(np.abs(a) + np.abs(c))) or 1.0
        for i in range(2):
            for j in range(2):
                rhs = np.stack([c_.value for c_ in d["fij"][i][j]], axis=-1)
                coef = np.linalg.solve(M, rhs[..., None])[..., 2, 0]
                res = np.abs(coef - h[i][j].value) / hs
                out["gauss"] = max(out["gauss"], float(np.max(res)))
    return out


def overlap_residuals(s: BlaschkeStructure, n=19, order=0):
    """Chart-overlap consistency of h (2-tensor), xi (ambient vector) and
    the shape operator (conjugation by the transition Jacobian)."""
    from .fields3d import _overlap_samples

    out = {"h": 0.0, "xi": 0.0, "alpha": 0.0}
    for tr in s.atlas.transitions.values():
        U, V, Ut, Vt = _overlap_samples(s.atlas, tr, n)
        if U.size == 0:
            continue
        J = tr.jacobian(U, V)  # (N, 2, 2), d(dst)/d(src)
        ds = s.chart_data(tr.src, U, V, order)
        dd = s.chart_data(tr.dst, Ut, Vt, order)

        def mat(dat, key):
            m = dat[key]
            return np.stack(
                [
                    np.stack([m[0][0].value, m[0][1].value], axis=-1),
                    np.stack([m[1][0].value, m[1][1].value], axis=-1),
                ],
                axis=-2,
            )

        hs, hd = mat(ds, "h"), mat(dd, "h")
        pull = np.swapaxes(J, -1, -2) @ hd @ J
        sc = np.median(np.abs(hs).sum(axis=(-1, -2)))
        out["h"] = max(out["h"], float(np.max(np.abs(pull - hs)) / sc))
        xs = np.stack([c.value for c in ds["xi"]])
        xd = np.stack([c.value for c in dd["xi"]])
        xsc = np.median(np.sqrt(np.sum(xs**2, axis=0)))
        out["xi"] = max(out["xi"], float(np.max(np.abs(xs - xd)) / xsc))
        As, Ad = mat(ds, "alpha"), mat(dd, "alpha")
        conj = np.linalg.solve(J, Ad @ J)
        asc = np.median(np.abs(As).sum(axis=(-1, -2)))
        out["alpha"] = max(out["alpha"], float(np.max(np.abs(conj - As)) / asc))
    return out


# ---------------------------------------------------------------------------
# census


@dataclass
class CensusResult:
    s_plus: int
    s_minus: int
    chi_minus: int
    curves: list
    records: list = field(default_factory=list)
    complex: object = None
    hom: object = None

    @property
    def identity_holds(self):
        return self.s_plus - self.s_minus == 2 * self.chi_minus

    def __iter__(self):
        return iter((self.s_plus, self.s_minus, self.chi_minus, self.curves))


def _dlam_eta_at(hom, chart_id, pt, eta_ref):
    """(dlam(eta)/|grad|, eta^T H eta, |grad|) at a point, eta aligned to eta_ref."""
    u, v = float(pt[0]), float(pt[1])
    lam = hom.lambda_jet(chart_id, u, v, 2)
    grad = np.array([lam.partial(1, 0), lam.partial(0, 1)])
    gn = float(np.hypot(*grad))
    eta = null_direction(hom, chart_id, np.array([u, v]))
    if float(np.dot(eta, eta_ref)) < 0:
        eta = -eta
    H = np.array(
        [[lam.partial(2, 0), lam.partial(1, 1)], [lam.partial(1, 1), lam.partial(0, 2)]]
    )
    z = float(np.dot(grad, eta))
    d2 = float(eta @ H @ eta)
    return z / max(gn, 1e-300), d2, gn, eta


def dlam_eta_zeros(hom, curve, bisections=50):
    """Parameters along the curve where dlam(eta) = 0, by sign change plus
    bisection on the Newton-projected curve.  Independent of the psi-based
    A3 search apart from the shared curve geometry."""
    taus, total = curve.chord_parameter()
    zeros = []
    samples = []  # (t, z, eta)
    for li, leg in enumerate(curve.legs):
        grad = curve.data["grad"][li]
        eta = curve.data["eta"][li]
        gn = np.maximum(np.hypot(grad[:, 0], grad[:, 1]), 1e-300)
        z = (grad[:, 0] * eta[:, 0] + grad[:, 1] * eta[:, 1]) / gn
        for k in range(len(z)):
            samples.append((taus[li][k], z[k], eta[k], li))
    for k in range(1, len(samples)):
        t0, z0, e0, _ = samples[k - 1]
        t1, z1, e1, _ = samples[k]
        if z0 == 0.0:
            zeros.append(t0)
            continue
        if z0 * z1 < 0.0:
            a, b, za = t0, t1, z0
            eref = e0
            for _ in range(bisections):
                mid = 0.5 * (a + b)
                cid, pt = curve_point(hom, curve, mid)
                zm, _, _, eref = _dlam_eta_at(hom, cid, pt, eref)
                if za * zm <= 0.0:
                    b = mid
                else:
                    a, za = mid, zm
                if b - a < 1e-12 * max(total, 1.0):
                    break
            zeros.append(0.5 * (a + b))
    if curve.closed and len(samples) > 1:
        hol = curve.data.get("eta_holonomy", 1)
        t0, z0, e0, _ = samples[-1]
        t1, z1 = total, hol * samples[0][1]
        if z0 * z1 < 0.0:
            a, b, za = t0, t1, z0
            eref = e0
            for _ in range(bisections):
                mid = 0.5 * (a + b)
                cid, pt = curve_point(hom, curve, mid % total)
                zm, _, _, eref = _dlam_eta_at(hom, cid, pt, eref)
                if za * zm <= 0.0:
                    b = mid
                else:
                    a, za = mid, zm
            zeros.append((0.5 * (a + b)) % total)
    return sorted(zeros)


def criteria_cross_check(hom, curve, records):
    """Check every classifier verdict against the dlam(eta) criteria.

    Cuspidal-edge points must have dlam(eta) != 0; located A3 points must
    have dlam(eta) = 0, a nonzero second eta-derivative of lambda, and
    dlam != 0; and the zero set of dlam(eta) along the curve must coincide
    with the psi zeros within CRITERIA_PARAM_TOL of the curve parameter.
    Raises CriteriaMismatch otherwise.
    """
    taus, total = curve.chord_parameter()
    span = max(total, 1e-300)
    a3_t = sorted(r.arc_param for r in records)

    def near_a3(t):
        for ta in a3_t:
            d = abs(t - ta)
            if curve.closed:
                d = min(d, total - d)
            if d < CRITERIA_A3_WINDOW * span:
                return True
        return False

    # Vertex-level agreement of the two formulas, and the edge criterion.
    for li in range(len(curve.legs)):
        grad = curve.data["grad"][li]
        eta = curve.data["eta"][li]
        psi = curve.data["psi"][li]
        gn = np.maximum(np.hypot(grad[:, 0], grad[:, 1]), 1e-300)
        z = (grad[:, 0] * eta[:, 0] + grad[:, 1] * eta[:, 1]) / gn
        dev = float(np.max(np.abs(np.abs(z) - np.abs(psi))))
        if dev > CRITERIA_AGREE_TOL:
            raise CriteriaMismatch(
                f"psi and dlam(eta) disagree at a curve vertex (|delta| = {dev:.3e})"
            )
        for k in range(len(z)):
            if not near_a3(taus[li][k]) and abs(z[k]) <= CRITERIA_EDGE_FLOOR:
                raise CriteriaMismatch(
                    "vertex classified as cuspidal edge has dlam(eta) = "
                    f"{z[k]:.3e} at parameter {taus[li][k]:.6g}"
                )

    # A3-level criteria at the refined points.
    for r in records:
        li = r.leg
        ks = int(np.argmin(np.abs(taus[li] - r.arc_param)))
        eref = curve.data["eta"][li][min(ks, len(curve.data["eta"][li]) - 1)]
        zrel, d2, gn, _ = _dlam_eta_at(hom, r.chart_id, r.point, eref)
        if abs(zrel) > CRITERIA_PARAM_TOL:
            raise CriteriaMismatch(
                f"A3 point at parameter {r.arc_param:.6g} has dlam(eta)/|dlam| "
                f"= {zrel:.3e}"
            )
        if gn <= 0.0:
            raise CriteriaMismatch("dlam vanishes at an A3 point (degenerate)")
        if abs(d2) * span <= 1e-10 * gn:
            raise CriteriaMismatch(
                f"second eta-derivative of lambda vanishes at A3 point "
                f"(|d2| = {d2:.3e})"
            )

    # Zero sets must match as subsets of the parameter line.
    zeros = dlam_eta_zeros(hom, curve)
    if len(zeros) != len(a3_t):
        raise CriteriaMismatch(
            f"{len(a3_t)} psi zeros but {len(zeros)} dlam(eta) zeros on a curve"
        )
    for ta, tz in zip(a3_t, sorted(zeros)):
        d = abs(ta - tz)
        if curve.closed:
            d = min(d, total - d)
        if d > CRITERIA_PARAM_TOL * span:
            raise CriteriaMismatch(
                f"psi zero at {ta:.9g} vs dlam(eta) zero at {tz:.9g} "
                f"(distance {d:.3e} > {CRITERIA_PARAM_TOL:.1e} * length)"
            )
    return True


def swallowtail_census(
    s: BlaschkeStructure,
    grid_n=256,
    e_metric="first",
    hom=None,
    n0=64,
    cross_check=True,
    want_complex=True,
) -> CensusResult:
    """Count signed swallowtails of the affine normal map and chi(M^-).

    Traces the singular set of the affine shape operator, classifies the
    A3 points by the image cusp of the affine normal map, cross-checks
    every verdict against the dlam(eta) criteria, and builds the two-region
    complex for the Euler numbers.
    """
    from . import topology

    hom = hom or affine_shape_operator(s, e_metric=e_metric)
    nu_jets = blaschke_normal_map(s).jets
    curves = trace_singular_set(hom, grid_n=grid_n)
    records = []
    for c in curves:
        analyze_curve(hom, s.atlas, c)
        recs = find_a3_points(hom, s.atlas, c)
        for r in recs:
            a3_sign_from_front(hom, r, c, nu_jets)
        if cross_check:
            criteria_cross_check(hom, c, recs)
        records.extend(recs)
    s_plus = sum(1 for r in records if r.sign == 1)
    s_minus = sum(1 for r in records if r.sign == -1)
    cx = None
    chi_minus = 0
    if want_complex:
        cx = topology.refine_until_stable(hom, curves=curves, n0=n0)
        chi_minus = topology.euler_char(cx, "minus")
    return CensusResult(
        s_plus=s_plus,
        s_minus=s_minus,
        chi_minus=chi_minus,
        curves=curves,
        records=records,
        complex=cx,
        hom=hom,
    )
