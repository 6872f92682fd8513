"""Bundle homomorphisms phi: TM^2 -> E with a metric connection on E.

A BundleHom packages, per chart: a rank-2 frame of E, the metric of E in
that frame (G), the connection coefficients of a metric connection D
(Gamma[a][i][j] with D_{d_a} s_i = Gamma[a][i][j] s_j), and the matrix of
phi (columns are phi(d_u), phi(d_v) in the frame).  All fields are produced
as jets by a frame provider, so the same machinery serves expression-defined
bundles and bundles derived from surface embeddings.

From these it computes the signed area density lambda (d(hat A) = lambda
du ^ dv), the connection form omega of the orthonormalized frame, the
curvature K = (d_u omega_v - d_v omega_u)/lambda, pull-back metrics, and
geodesic curvatures of chart curves.  The coherence (Codazzi-type) residual
is reported purely as a diagnostic; nothing downstream assumes it vanishes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateFrame,
    DomainError,
    NotArclength,
    SingularPointError,
)
from .expr import Expr, jet_eval, parse
from .jets import Jet, compose

ARCLENGTH_TOL = 1e-6


class PointClass(enum.Enum):
    PLUS = "plus"
    MINUS = "minus"
    SINGULAR = "singular"


@dataclass
class ChartJets:
    """All per-chart fields as jets at one common order."""

    G: list  # 2x2 nested list of Jet
    Gamma: list  # [a][i][j] nested list of Jet
    phi: list  # 2x2 nested list of Jet; columns phi(d_u), phi(d_v)


# -- small 2x2 helpers over jets (or anything with * and +) -----------------

def det2(M):
    return M[0][0] * M[1][1] - M[0][1] * M[1][0]


def mat_vec(M, x):
    return [M[0][0] * x[0] + M[0][1] * x[1], M[1][0] * x[0] + M[1][1] * x[1]]


def g_dot(G, x, y):
    return (
        G[0][0] * x[0] * y[0]
        + G[0][1] * x[0] * y[1]
        + G[1][0] * x[1] * y[0]
        + G[1][1] * x[1] * y[1]
    )


def _zero_like(j: Jet) -> Jet:
    return Jet(j.order, np.zeros_like(j.coeffs))


# -- frame providers ---------------------------------------------------------

class ExprFrameFields:
    """Frame data given directly as Expr matrices per chart.

    metric[cid] and phi[cid] are 2x2 nested lists of Expr; gamma[cid] is a
    [2][2][2] nested list of Expr (may be omitted for the flat connection).
    """

    def __init__(self, metric, phi, gamma=None):
        self.metric = metric
        self.phi = phi
        self.gamma = gamma or {}

    def chart_jets(self, chart_id, U, V, order) -> ChartJets:
        def j(e):
            return jet_eval(e, (U, V), order)

        G = [[j(self.metric[chart_id][r][c]) for c in range(2)] for r in range(2)]
        P = [[j(self.phi[chart_id][r][c]) for c in range(2)] for r in range(2)]
        if chart_id in self.gamma:
            gam = [
                [[j(self.gamma[chart_id][a][i][k]) for k in range(2)] for i in range(2)]
                for a in range(2)
            ]
        else:
            zero = _zero_like(G[0][0])
            gam = [[[zero for _ in range(2)] for _ in range(2)] for _ in range(2)]
        return ChartJets(G, gam, P)


class LeviCivitaFrameFields:
    """E = TM with a given metric and its Levi-Civita connection.

    Christoffel symbols are derived from jets of the metric, so no symbolic
    differentiation of the metric expressions is needed.
    """

    def __init__(self, metric, phi):
        self.metric = metric
        self.phi = phi

    def chart_jets(self, chart_id, U, V, order) -> ChartJets:
        def j(e, o):
            return jet_eval(e, (U, V), o)

        G1 = [[j(self.metric[chart_id][r][c], order + 1) for c in range(2)] for r in range(2)]
        P = [[j(self.phi[chart_id][r][c], order) for c in range(2)] for r in range(2)]
        G = [[G1[r][c].truncated(order) for c in range(2)] for r in range(2)]
        gam = christoffel_from_metric(G1)
        return ChartJets(G, gam, P)


def christoffel_from_metric(G1):
    """Gamma[a][i][j] of the Levi-Civita connection from metric jets.

    G1 entries must be one order higher than the wanted Gamma order.
    """
    dG = [
        [[G1[r][c].du() for c in range(2)] for r in range(2)],
        [[G1[r][c].dv() for c in range(2)] for r in range(2)],
    ]
    G = [[G1[r][c].truncated(G1[0][0].order - 1) for c in range(2)] for r in range(2)]
    det = det2(G)
    inv = [[G[1][1] / det, -G[0][1] / det], [-G[1][0] / det, G[0][0] / det]]
    gam = [[[None, None] for _ in range(2)] for _ in range(2)]
    for a in range(2):
        for i in range(2):
            for k in range(2):
                # Gamma^k_{a i} = 1/2 g^{k l} (d_a g_{l i} + d_i g_{l a} - d_l g_{a i})
                s = None
                for l in range(2):
                    term = dG[a][l][i] + dG[i][l][a] - dG[l][a][i]
                    contrib = inv[k][l] * term
                    s = contrib if s is None else s + contrib
                gam[a][i][k] = s * 0.5
    return gam


class PerturbedFrameFields:
    """Wrap a provider with D' = D + a (x) J, J the metric rotation of E.

    `a_jets(chart_id, U, V, order) -> (Jet, Jet)` supplies the 1-form
    components (a_u, a_v) in each chart; the perturbation stays metric
    because J is skew-adjoint for the bundle metric.
    """

    def __init__(self, base, a_jets):
        self.base = base
        self.a_jets = a_jets

    def chart_jets(self, chart_id, U, V, order) -> ChartJets:
        cj = self.base.chart_jets(chart_id, U, V, order)
        a_u, a_v = self.a_jets(chart_id, U, V, order)
        G = cj.G
        det = det2(G)
        root = det.sqrt()
        inv = [[G[1][1] / det, -G[0][1] / det], [-G[1][0] / det, G[0][0] / det]]
        # J s_i = Jmat[k][i] s_k with <J x, y> = sqrt(det G) * eps(x, y).
        eps = [[0.0, 1.0], [-1.0, 0.0]]
        Jmat = [[None, None], [None, None]]
        for k in range(2):
            for i in range(2):
                Jmat[k][i] = root * (inv[k][0] * eps[0][i] + inv[k][1] * eps[1][i])
        a = (a_u, a_v)
        gam = [[[None, None] for _ in range(2)] for _ in range(2)]
        for ax in range(2):
            for i in range(2):
                for k in range(2):
                    gam[ax][i][k] = cj.Gamma[ax][i][k] + a[ax] * Jmat[k][i]
        return ChartJets(G, gam, cj.phi)


def one_form_from_function_pair(f_exprs, g_exprs):
    """a = f dg as a jet provider; f, g given as global functions per chart."""

    def a_jets(chart_id, U, V, order):
        fj = jet_eval(f_exprs[chart_id], (U, V), order + 1)
        gj = jet_eval(g_exprs[chart_id], (U, V), order + 1)
        f = fj.truncated(order)
        return f * gj.du(), f * gj.dv()

    return a_jets


# -- the bundle homomorphism --------------------------------------------------

class BundleHom:
    def __init__(self, atlas, frames, mu_normalized=True, mu_policy="rescale"):
        if not mu_normalized and mu_policy == "reject":
            raise ValueError("area form must satisfy mu(e1, e2) = 1 on orthonormal frames")
        self.atlas = atlas
        self.frames = frames
        self._lam_scale = {}

    def chart_jets(self, chart_id, U, V, order) -> ChartJets:
        return self.frames.chart_jets(chart_id, U, V, order)

    # -- lambda and classification ----------------------------------------

    def lambda_jet(self, chart_id, U, V, order) -> Jet:
        cj = self.chart_jets(chart_id, U, V, order)
        return det2(cj.G).sqrt() * det2(cj.phi)

    def lambda_values(self, chart_id, U, V):
        return self.lambda_jet(chart_id, U, V, 0).value

    def singular_tolerance(self, chart_id) -> float:
        """Guard threshold: 1e-9 times the chart-median |lambda|."""
        if chart_id not in self._lam_scale:
            c = self.atlas.chart(chart_id)
            u0, u1, v0, v1 = c.bounds
            us = np.linspace(u0, u1, 33)
            vs = np.linspace(v0, v1, 33)
            U, V = np.meshgrid(us, vs, indexing="ij")
            lam = np.abs(self.lambda_values(chart_id, U, V))
            med = float(np.median(lam))
            self._lam_scale[chart_id] = med if med > 0 else 1.0
        return 1e-9 * self._lam_scale[chart_id]

    def classify_point(self, chart_id, U, V, tol_sing=None):
        lam = self.lambda_values(chart_id, U, V)
        if tol_sing is None:
            tol_sing = self.singular_tolerance(chart_id)
        lam_arr = np.asarray(lam)
        out = np.where(
            lam_arr > tol_sing, PointClass.PLUS,
            np.where(lam_arr < -tol_sing, PointClass.MINUS, PointClass.SINGULAR),
        )
        return out.item() if out.shape == () else out

    # -- connection form and curvature -------------------------------------

    @staticmethod
    def _orthonormalize(G):
        """Oriented Gram-Schmidt: columns of A are the new frame in the old."""
        try:
            a = G[0][0].sqrt().reciprocal()
            w = G[1][1] - G[0][1] * G[0][1] / G[0][0]
            s_inv = w.sqrt().reciprocal()
        except DomainError as exc:
            raise DegenerateFrame(f"bundle metric not positive definite: {exc}") from exc
        A01 = -(G[0][1] / G[0][0]) * s_inv
        zero = _zero_like(a)
        return [[a, A01], [zero, s_inv]]

    def omega_jets(self, chart_id, U, V, order):
        """Connection form (omega_u, omega_v) of the orthonormalized frame.

        Convention: D_X e1 = -omega(X) e2 for the oriented orthonormal frame
        (e1, e2); one extra derivative of the metric is consumed.
        """
        cj = self.chart_jets(chart_id, U, V, order + 1)
        return self._omega_from_chart_jets(cj)

    @staticmethod
    def _omega_from_chart_jets(cj: ChartJets):
        order = cj.G[0][0].order
        A = BundleHom._orthonormalize(cj.G)
        Gt = [[cj.G[r][c].truncated(order - 1) for c in range(2)] for r in range(2)]
        e2 = [A[0][1].truncated(order - 1), A[1][1].truncated(order - 1)]
        out = []
        for ax, d in ((0, Jet.du), (1, Jet.dv)):
            B = []
            for jrow in range(2):
                b = d(A[jrow][0])
                for i in range(2):
                    b = b + cj.Gamma[ax][i][jrow].truncated(order - 1) * A[i][0].truncated(order - 1)
                B.append(b)
            out.append(-g_dot(Gt, B, e2))
        return out[0], out[1]

    def curl_omega_jet(self, chart_id, U, V, order) -> Jet:
        """Jet of d_u omega_v - d_v omega_u (the coefficient of d omega)."""
        w_u, w_v = self.omega_jets(chart_id, U, V, order + 1)
        return w_v.du() - w_u.dv()

    def gaussian_curvature(self, chart_id, U, V, tol_sing=None):
        """K = (d_u omega_v - d_v omega_u) / lambda away from the singular set."""
        lam = self.lambda_values(chart_id, U, V)
        if tol_sing is None:
            tol_sing = self.singular_tolerance(chart_id)
        if np.any(np.abs(lam) <= tol_sing):
            raise SingularPointError("Gaussian curvature requested on the singular set")
        curl = self.curl_omega_jet(chart_id, U, V, 0).value
        return curl / lam

    # -- pull-back metric -----------------------------------------------------

    def pullback_metric(self, chart_id, U, V):
        """ds2 as values, shape (..., 2, 2)."""
        cj = self.chart_jets(chart_id, U, V, 0)
        P = [[cj.phi[r][c].value for c in range(2)] for r in range(2)]
        G = [[cj.G[r][c].value for c in range(2)] for r in range(2)]
        Pm = np.stack([np.stack(r, axis=-1) for r in P], axis=-2)
        Gm = np.stack([np.stack(r, axis=-1) for r in G], axis=-2)
        return np.swapaxes(Pm, -1, -2) @ Gm @ Pm

    # -- coherence diagnostic ---------------------------------------------------

    def coherence_residual(self, chart_id, U, V):
        """|D_u phi(d_v) - D_v phi(d_u)| in the bundle metric (values)."""
        cj = self.chart_jets(chart_id, U, V, 1)
        col_u = [cj.phi[0][0], cj.phi[1][0]]
        col_v = [cj.phi[0][1], cj.phi[1][1]]
        R = []
        for jrow in range(2):
            r = col_v[jrow].du() - col_u[jrow].dv()
            for i in range(2):
                r = r + cj.Gamma[0][i][jrow].truncated(0) * col_v[i].truncated(0)
                r = r - cj.Gamma[1][i][jrow].truncated(0) * col_u[i].truncated(0)
            R.append(r.value)
        G = [[cj.G[r][c].value for c in range(2)] for r in range(2)]
        q = (
            G[0][0] * R[0] * R[0]
            + 2.0 * G[0][1] * R[0] * R[1]
            + G[1][1] * R[1] * R[1]
        )
        return np.sqrt(np.maximum(q, 0.0))

    def metric_compatibility_residual(self, chart_id, U, V):
        """max | d_a<s_i,s_j> - <D_a s_i,s_j> - <s_i,D_a s_j> | over indices."""
        cj = self.chart_jets(chart_id, U, V, 1)
        worst = 0.0
        G0 = [[cj.G[r][c].truncated(0) for c in range(2)] for r in range(2)]
        for ax, d in ((0, Jet.du), (1, Jet.dv)):
            for i in range(2):
                for jj in range(2):
                    lhs = d(cj.G[i][jj]).value
                    rhs = 0.0
                    for k in range(2):
                        rhs = rhs + cj.Gamma[ax][i][k].truncated(0).value * G0[k][jj].value
                        rhs = rhs + cj.Gamma[ax][jj][k].truncated(0).value * G0[i][k].value
                    worst = np.maximum(worst, np.abs(lhs - rhs))
        return worst


# -- curves in a chart ---------------------------------------------------------

@dataclass(frozen=True)
class ChartCurve:
    """Analytic curve t |-> (u(t), v(t)) inside one chart."""

    chart_id: str
    u: Expr
    v: Expr
    t0: float = 0.0
    t1: float = 1.0

    def jets(self, t, order):
        t = np.asarray(t, dtype=float)
        zero = np.zeros_like(t)
        ju = jet_eval(self.u, (t, zero), order, variables=("t", "_s"))
        jv = jet_eval(self.v, (t, zero), order, variables=("t", "_s"))
        return ju, jv

    def points(self, t):
        ju, jv = self.jets(t, 0)
        return ju.value, jv.value


def fields_along_curve(h: BundleHom, curve: ChartCurve, t, order):
    """Chart jets composed with the curve: everything becomes a jet in t."""
    ju, jv = curve.jets(t, order)
    cj = h.chart_jets(curve.chart_id, ju.value, jv.value, order)

    def on_curve(bij):
        return compose(bij, (ju, jv))

    G = [[on_curve(cj.G[r][c]) for c in range(2)] for r in range(2)]
    P = [[on_curve(cj.phi[r][c]) for c in range(2)] for r in range(2)]
    gam = [
        [[on_curve(cj.Gamma[a][i][k]) for k in range(2)] for i in range(2)]
        for a in range(2)
    ]
    return ju, jv, ChartJets(G, gam, P)


def covariant_deriv_along(cj_t: ChartJets, du_t: Jet, dv_t: Jet, W):
    """(D_t W)^j = dW^j/dt + Gamma^j_{a i} gamma-dot^a W^i, as jets in t."""
    order = W[0].order - 1
    vel = (du_t.truncated(order), dv_t.truncated(order))
    out = []
    for jrow in range(2):
        r = W[jrow].du()
        for a in range(2):
            for i in range(2):
                r = r + vel[a] * cj_t.Gamma[a][i][jrow].truncated(order) * W[i].truncated(order)
        out.append(r)
    return out


def geodesic_curvatures(h: BundleHom, curve: ChartCurve, t, want_kappa_g=True):
    """(kappa_g or None, kappa_hat_g) at parameter values t.

    kappa_hat_g = mu(W, D_t W)/|W|^3 with W = phi(gamma-dot); it stays
    defined across the singular set and is parametrization-invariant.
    kappa_g is computed only off the singular set and only when t is
    arclength for the pull-back metric (|W| = 1 within 1e-6), via the
    pulled-back connection; otherwise NotArclength is raised.
    """
    order = 3
    ju, jv, cj_t = fields_along_curve(h, curve, t, order)
    du_t, dv_t = ju.du(), jv.du()
    P = [[cj_t.phi[r][c].truncated(order - 1) for c in range(2)] for r in range(2)]
    W = mat_vec(P, (du_t, dv_t))
    DW = covariant_deriv_along(cj_t, du_t, dv_t, W)

    G = [[cj_t.G[r][c].truncated(order - 2) for c in range(2)] for r in range(2)]
    root = det2(G).sqrt()
    W0 = [W[0].truncated(order - 2), W[1].truncated(order - 2)]
    mu_w_dw = root * (W0[0] * DW[1] - W0[1] * DW[0])
    norm2 = g_dot(G, W0, W0)
    speed = np.sqrt(norm2.value)
    kappa_hat = mu_w_dw.value / speed**3

    if not want_kappa_g:
        return None, kappa_hat

    lam = h.lambda_values(curve.chart_id, *curve.points(t))
    tol = h.singular_tolerance(curve.chart_id)
    if np.any(np.abs(lam) <= tol):
        return None, kappa_hat
    if np.any(np.abs(speed - 1.0) > ARCLENGTH_TOL):
        raise NotArclength("curve parameter is not arclength for the pull-back metric")

    # Pull D back through phi: D-bar_t gamma-dot = phi^{-1} D_t (phi gamma-dot),
    # then kappa_g = ds2(D-bar, n) with n the positively oriented unit normal.
    detP = det2([[P[0][0].truncated(order - 2), P[0][1].truncated(order - 2)],
                 [P[1][0].truncated(order - 2), P[1][1].truncated(order - 2)]])
    dP = detP.value
    DW0 = [DW[0].value, DW[1].value]
    # Solve phi x = D_t W (values suffice for kappa_g itself).
    p00 = P[0][0].truncated(0).value
    p01 = P[0][1].truncated(0).value
    p10 = P[1][0].truncated(0).value
    p11 = P[1][1].truncated(0).value
    xbar = [
        (p11 * DW0[0] - p01 * DW0[1]) / dP,
        (-p10 * DW0[0] + p00 * DW0[1]) / dP,
    ]
    # ds2(xbar, n): n positively oriented unit ds2-normal of gamma-dot.
    vel = np.stack([du_t.value, dv_t.value], axis=-1)
    ds2 = h.pullback_metric(curve.chart_id, *curve.points(t))
    det_ds2 = ds2[..., 0, 0] * ds2[..., 1, 1] - ds2[..., 0, 1] * ds2[..., 1, 0]
    rootds = np.sqrt(np.maximum(det_ds2, 0.0))
    # n^a = eps^{ab} ds2_{bc} gdot^c / sqrt(det ds2) gives ds2(gdot, n) = 0,
    # |n| = |gdot| = 1, and (gdot, n) positively oriented for the chart.
    low = np.einsum("...ab,...b->...a", ds2, vel)
    n = np.stack([-low[..., 1], low[..., 0]], axis=-1) / rootds[..., None]
    x_arr = np.stack(xbar, axis=-1)
    kap = np.einsum("...a,...ab,...b->...", x_arr, ds2, n)
    return kap, kappa_hat
