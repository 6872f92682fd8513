"""Shape operators of embedded surfaces and differentials of tangent fields.

Two concrete sources of bundle homomorphisms phi: TM^2 -> TM^2:

* an embedded surface f: M^2 -> R^3, with phi the Weingarten map -d(nu)
  expressed in the tangent frame (f_u, f_v) and the first fundamental form
  as bundle metric (with its Levi-Civita connection), and
* a tangent vector field X with a choice of metric, with phi(v) = D_v X
  for the Levi-Civita connection of that metric.  det phi in an orthonormal
  frame is the rotation of X; its zero set is the singular set.

The ambient space is flat R^3 throughout.
"""

from __future__ import annotations

import numpy as np

from .bundle import (
    BundleHom,
    ChartJets,
    christoffel_from_metric,
    det2,
)
from .errors import AtA3Point, DegenerateFrame, GluingError, ImmersionFailure
from .expr import Expr, jet_eval, jet_eval_many, parse, substitute
from .jets import Jet, compose
from .singular import W_FLOOR, curve_point, levelset_curve_jets

OVERLAP_TOL = 1e-10
FIELD_RANK_FLOOR = 1e-12


def _as_expr(e):
    return e if isinstance(e, Expr) else parse(e)


def _dot3(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _cross3(a, b):
    return [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]


def ambient_expr(text, chart_exprs):
    """Parse an expression in ambient x, y, z and restrict it to a chart."""
    e = parse(text, variables=("x", "y", "z"))
    x, y, z = chart_exprs
    return substitute(e, {"x": x, "y": y, "z": z})


# Stereographic parametrizations of the unit sphere; (u, v) = 0 sits at the
# chart's name pole and the transition (u, v) -> (u, -v)/(u^2+v^2) matches
# the sphere atlas.
UNIT_SPHERE_CHARTS = {
    "south": (
        "2*u/(1 + u^2 + v^2)",
        "2*v/(1 + u^2 + v^2)",
        "(u^2 + v^2 - 1)/(1 + u^2 + v^2)",
    ),
    "north": (
        "2*u/(1 + u^2 + v^2)",
        "-2*v/(1 + u^2 + v^2)",
        "(1 - u^2 - v^2)/(1 + u^2 + v^2)",
    ),
}


def sphere_embedding(atlas, ambient=("x", "y", "z")) -> "SurfaceEmbedding":
    """Embedding built from ambient-coordinate expressions on the unit sphere.

    Each of the three strings/Exprs is a function of x, y, z; substituting a
    stereographic chart of the unit sphere yields the chart expressions.
    Example: ("1*x", "1.2*y", "1.5*z") is an ellipsoid.
    """
    comps = {}
    for cid, triple in UNIT_SPHERE_CHARTS.items():
        chart_exprs = tuple(parse(t) for t in triple)
        comps[cid] = tuple(
            ambient_expr(s, chart_exprs) if isinstance(s, str) else substitute(s, dict(zip(("x", "y", "z"), chart_exprs)))
            for s in ambient
        )
    return SurfaceEmbedding(atlas, comps)


def _interior_grid(chart, n):
    u0, u1, v0, v1 = chart.bounds
    us = np.linspace(u0, u1, n + 2)[1:-1]
    vs = np.linspace(v0, v1, n + 2)[1:-1]
    return np.meshgrid(us, vs, indexing="ij")


def _overlap_samples(atlas, tr, n=25):
    """Sample points of the source chart whose transition image lies in the
    target chart (clip disks respected on both sides)."""
    src = atlas.chart(tr.src)
    dst = atlas.chart(tr.dst)
    U, V = _interior_grid(src, n)
    U, V = U.ravel(), V.ravel()
    ok = src.contains(U, V)
    with np.errstate(invalid="ignore", divide="ignore"):
        Ut, Vt = tr.apply(U, V)
        ok &= np.isfinite(Ut) & np.isfinite(Vt)
        ok &= dst.contains(np.where(ok, Ut, 0.0), np.where(ok, Vt, 0.0))
    return U[ok], V[ok], Ut[ok], Vt[ok]


class SurfaceEmbedding:
    """Per-chart immersion f: (u, v) -> R^3 given as three expressions."""

    def __init__(self, atlas, components):
        self.atlas = atlas
        self.components = {
            cid: tuple(_as_expr(e) for e in triple) for cid, triple in components.items()
        }
        for chart in atlas.charts:
            if chart.id not in self.components:
                raise GluingError(f"no embedding expressions for chart {chart.id!r}")

    def jets(self, chart_id, U, V, order):
        return jet_eval_many(self.components[chart_id], (U, V), order)

    def values(self, chart_id, U, V):
        return np.stack(
            [j.value for j in jet_eval_many(self.components[chart_id], (U, V), 0)]
        )

    def normal_values(self, chart_id, U, V):
        f = self.jets(chart_id, U, V, 1)
        fu = [c.du().value for c in f]
        fv = [c.dv().value for c in f]
        nrm = np.stack(_cross3(fu, fv))
        return nrm / np.linalg.norm(nrm, axis=0)

    def validate(self, n=33):
        """Immersion on a sample grid; agreement of charts on overlaps."""
        for chart in self.atlas.charts:
            U, V = _interior_grid(chart, n)
            inside = chart.contains(U, V)
            f = self.jets(chart.id, U, V, 1)
            fu = [c.du().value for c in f]
            fv = [c.dv().value for c in f]
            norm = np.linalg.norm(np.stack(_cross3(fu, fv)), axis=0)[inside]
            scale = float(np.median(norm)) or 1.0
            if norm.size and np.min(norm) <= 1e-12 * scale:
                raise ImmersionFailure(
                    f"|f_u x f_v| vanishes on chart {chart.id!r} (min {np.min(norm):.3e})"
                )
        for tr in self.atlas.transitions.values():
            U, V, Ut, Vt = _overlap_samples(self.atlas, tr)
            if U.size == 0:
                continue
            fa = self.values(tr.src, U, V)
            fb = self.values(tr.dst, Ut, Vt)
            err = float(np.max(np.abs(fa - fb)))
            if err > OVERLAP_TOL:
                raise GluingError(
                    f"embedding disagrees on overlap {tr.src}->{tr.dst} by {err:.3e}"
                )
        return self


class EmbeddingShapeFrames:
    """Frame provider: first fundamental form + Weingarten map from f-jets."""

    def __init__(self, embedding):
        self.embedding = embedding

    def chart_jets(self, chart_id, U, V, order):
        f = self.embedding.jets(chart_id, U, V, order + 2)
        fu = [c.du() for c in f]  # order + 1
        fv = [c.dv() for c in f]
        G1 = [[_dot3(fu, fu), _dot3(fu, fv)], [_dot3(fv, fu), _dot3(fv, fv)]]
        gam = christoffel_from_metric(G1)
        G = [[G1[r][c].truncated(order) for c in range(2)] for r in range(2)]

        n_raw = _cross3(fu, fv)
        norm2 = _dot3(n_raw, n_raw)
        if np.min(np.asarray(norm2.value)) <= 0.0:
            raise ImmersionFailure(f"normal vanishes on chart {chart_id!r}")
        norm = norm2.sqrt()
        nu = [c / norm for c in n_raw]  # order + 1
        # phi(d_i) = -d_i nu = a f_u + b f_v: solve the Gram system
        fu0 = [c.truncated(order) for c in fu]
        fv0 = [c.truncated(order) for c in fv]
        det = det2(G)
        phi = [[None, None], [None, None]]
        for i, d in enumerate(("du", "dv")):
            mnu = [getattr(c, d)() for c in nu]  # order
            r1 = -_dot3(mnu, fu0)
            r2 = -_dot3(mnu, fv0)
            phi[0][i] = (G[1][1] * r1 - G[0][1] * r2) / det
            phi[1][i] = (G[0][0] * r2 - G[1][0] * r1) / det
        return ChartJets(G, gam, phi)


def shape_operator(embedding, validate=True) -> BundleHom:
    """Weingarten map of an embedded surface as a bundle homomorphism."""
    if validate:
        embedding.validate()
    return BundleHom(embedding.atlas, EmbeddingShapeFrames(embedding))


def normal_map_jets(embedding):
    """Jets of the oriented unit normal, as a front-map provider.

    The returned callable has the (chart_id, U, V, order) signature the
    image-cusp swallowtail classifier expects.  The differential of the unit
    normal drops rank exactly where the shape operator does, and its
    pull-back of the ambient metric is the same ds^2 the classifier's sign
    definition refers to.
    """

    def jets(chart_id, U, V, order=0):
        f = embedding.jets(chart_id, U, V, order + 1)
        fu = [c.du() for c in f]
        fv = [c.dv() for c in f]
        n_raw = _cross3(fu, fv)
        norm = _dot3(n_raw, n_raw).sqrt()
        return [c / norm for c in n_raw]

    return jets


def field_map_jets(field):
    """Jets of (X^1, X^2, 0): the field itself as a plane front map.

    Only meaningful when the metric is Euclidean in the chart coordinates
    (so the Levi-Civita connection vanishes and dX equals phi = DX); the
    irrotational cusps are then literal plane-map cusps of X and the
    image-cusp classifier applies verbatim.
    """

    def jets(chart_id, U, V, order=0):
        x1, x2 = (jet_eval(e, (U, V), order) for e in field.X[chart_id])
        shape = np.broadcast(np.asarray(U, float), np.asarray(V, float)).shape
        return [x1, x2, Jet.constant(np.zeros(shape), order)]

    return jets


def flat_metric_exprs():
    return [[parse("1"), parse("0")], [parse("0"), parse("1")]]


def round_sphere_metric_exprs():
    conf = parse("4 / (1 + u^2 + v^2)^2")
    return [[conf, parse("0")], [parse("0"), conf]]


def default_metric(atlas):
    if atlas.topology_tag == "sphere":
        return {c.id: round_sphere_metric_exprs() for c in atlas.charts}
    return {c.id: flat_metric_exprs() for c in atlas.charts}


class TangentVectorField:
    """A vector field X (coefficient pair per chart) plus a metric on M^2."""

    def __init__(self, atlas, X, metric=None):
        self.atlas = atlas
        self.X = {cid: tuple(_as_expr(e) for e in pair) for cid, pair in X.items()}
        if metric is None:
            self.metric = default_metric(atlas)
        else:
            self.metric = {
                cid: [[_as_expr(e) for e in row] for row in m] for cid, m in metric.items()
            }

    def values(self, chart_id, U, V):
        return np.stack([jet_eval(e, (U, V), 0).value for e in self.X[chart_id]])

    def validate(self, n=25):
        for chart in self.atlas.charts:
            U, V = _interior_grid(chart, n)
            G = [
                [jet_eval(self.metric[chart.id][r][c], (U, V), 0).value for c in range(2)]
                for r in range(2)
            ]
            tr_ = G[0][0] + G[1][1]
            det = G[0][0] * G[1][1] - G[0][1] * G[1][0]
            if np.min(tr_) <= 0 or np.min(det) <= 0:
                raise DegenerateFrame(f"metric not positive definite on chart {chart.id!r}")
        for tr in self.atlas.transitions.values():
            U, V, Ut, Vt = _overlap_samples(self.atlas, tr)
            if U.size == 0:
                continue
            J = tr.jacobian(U, V)
            Xs = self.values(tr.src, U, V)
            Xd = self.values(tr.dst, Ut, Vt)
            pushed = np.einsum("nij,jn->in", J, Xs)
            err = float(np.max(np.abs(pushed - Xd)))
            if err > OVERLAP_TOL:
                raise GluingError(
                    f"vector field does not transform on overlap {tr.src}->{tr.dst}"
                    f" (err {err:.3e})"
                )
        return self


class FieldDifferentialFrames:
    """Frame provider for phi(v) = D_v X, D the Levi-Civita connection."""

    def __init__(self, field):
        self.field = field

    def chart_jets(self, chart_id, U, V, order):
        G1 = [
            [jet_eval(self.field.metric[chart_id][r][c], (U, V), order + 1) for c in range(2)]
            for r in range(2)
        ]
        gam = christoffel_from_metric(G1)  # order
        G = [[G1[r][c].truncated(order) for c in range(2)] for r in range(2)]
        X1 = [jet_eval(e, (U, V), order + 1) for e in self.field.X[chart_id]]
        X0 = [c.truncated(order) for c in X1]
        phi = [[None, None], [None, None]]
        for i, d in enumerate(("du", "dv")):
            for k in range(2):
                acc = getattr(X1[k], d)()
                for a in range(2):
                    acc = acc + gam[i][a][k] * X0[a]
                phi[k][i] = acc
        return ChartJets(G, gam, phi)


def rotation_field(field, validate=True) -> BundleHom:
    """phi(v) = D_v X as a bundle homomorphism on E = TM^2."""
    if validate:
        field.validate()
        _check_field_rank(field)
    return BundleHom(field.atlas, FieldDifferentialFrames(field))


def _check_field_rank(field, n=33):
    """Reject fields whose differential is everywhere degenerate."""
    frames = FieldDifferentialFrames(field)
    worst = 0.0
    for chart in field.atlas.charts:
        U, V = _interior_grid(chart, n)
        cj = frames.chart_jets(chart.id, U, V, 0)
        lam = np.abs((det2(cj.G).sqrt() * det2(cj.phi)).value)
        phi_scale = max(
            float(np.max(np.abs(cj.phi[r][c].value))) for r in range(2) for c in range(2)
        )
        worst = max(worst, float(np.max(lam)) / max(phi_scale, 1e-30) ** 2)
    if worst < FIELD_RANK_FLOOR:
        raise DegenerateFrame(
            "the differential of X is everywhere degenerate (rot(X) vanishes "
            "identically); its zero set is not a curve"
        )


def rotation_values(field_or_hom, chart_id, U, V):
    """rot(X) = mu(D_{e1}X, D_{e2}X) for a positively oriented orthonormal
    frame e1, e2 of the base metric.

    This is det of the coordinate matrix of phi; it coincides with lambda
    whenever det G = 1 (the flat metrics used for vector fields) and equals
    lambda / sqrt(det G) in general.
    """
    if isinstance(field_or_hom, BundleHom):
        cj = field_or_hom.chart_jets(chart_id, U, V, 0)
    else:
        cj = FieldDifferentialFrames(field_or_hom).chart_jets(chart_id, U, V, 0)
    return det2(cj.phi).value


def irrotational_curvature(field, curve, t, hom=None):
    """kappa_s at chord parameter t of a traced rotation curve.

    Computed directly as mu(X', X'') / |X'|^3 with X' = D_{gamma'} X and
    X'' = D_{gamma'} X', assembled from jets of X along the level-set
    parametrization -- an independent path from singular.singular_curvature
    (no sign factor: the positive-frame convention keeps M^+ on the left).
    """
    h = hom if hom is not None else rotation_field(field, validate=False)
    chart_id, p = curve_point(h, curve, t)
    P = p.reshape(1, 2)
    U, V, (tun, tvn) = levelset_curve_jets(h, chart_id, P)
    cj = h.chart_jets(chart_id, P[:, 0], P[:, 1], 2)

    def on_curve(e):
        return compose(jet_eval(e, (P[:, 0], P[:, 1]), 2), (U, V))

    X_t = [on_curve(e) for e in field.X[chart_id]]
    gam_t = [
        [[compose(cj.Gamma[a][i][k], (U, V)) for k in range(2)] for i in range(2)]
        for a in range(2)
    ]
    G0 = np.array(
        [[cj.G[r][c].value for c in range(2)] for r in range(2)]
    ).reshape(2, 2)
    vel = (U.du(), V.du())  # order-1 jets of (u'(t), v'(t))
    # X' = dX/dt + Gamma(gamma', X) as order-1 jets in t
    Xp = []
    for k in range(2):
        acc = X_t[k].du()
        for a in range(2):
            for i in range(2):
                acc = acc + vel[a].truncated(1) * gam_t[a][i][k].truncated(1) * X_t[i].truncated(1)
        Xp.append(acc)
    # X'' = dX'/dt + Gamma(gamma', X') as values
    Xpp = []
    for k in range(2):
        acc = Xp[k].du().value
        for a in range(2):
            for i in range(2):
                acc = acc + vel[a].value * gam_t[a][i][k].value * Xp[i].value
        Xpp.append(acc)
    Xp0 = np.array([Xp[0].value, Xp[1].value]).ravel()
    Xpp0 = np.array(Xpp).ravel()
    detG = G0[0, 0] * G0[1, 1] - G0[0, 1] * G0[1, 0]
    mu = np.sqrt(max(float(detG), 0.0)) * (Xp0[0] * Xpp0[1] - Xp0[1] * Xpp0[0])
    speed = float(np.sqrt(max(Xp0 @ G0 @ Xp0, 0.0)))
    if speed <= W_FLOOR * max(float(np.hypot(tun[0], tvn[0])), 1e-300):
        raise AtA3Point("irrotational curvature requested at (or too near) an A3 point")
    return float(mu / speed**3)
