"""Closed oriented surfaces as chart atlases, with masked quadrature.

Two topologies are shipped: the sphere (two stereographic charts glued by
the inversion (u,v) |-> (u,-v)/(u^2+v^2), which is z |-> 1/z in the complex
coordinate z = u + iv and therefore orientation-preserving) and the flat
torus (one doubly periodic chart [0,2pi)^2).  A window "atlas" wraps a plain
rectangle for diagnostics and tests.

Integration of a 2-form density uses composite 4-point Gauss-Legendre cells
under a partition of unity.  A mask restricts integration to a region; cells
straddling the mask boundary are quartered a few levels and finished with a
cut-cell rule: the zero set of the (signed) mask is located on cell edges by
linear interpolation, the inside part becomes a polygon, and the density is
integrated over a centroid fan of that polygon with a degree-2 triangle
rule.  Pass a signed mask (positive inside) for full accuracy; a boolean
mask is accepted and treated as +/-1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NoConvergence
from .expr import Expr, parse, evaluate, jet_eval

TWO_PI = 2.0 * np.pi

# Stereographic chart radius and the radii over which the bump weight falls
# from 1 to 0.  bump support [0, 1.25] sits inside the chart disk r <= sqrt(2)
# and the two supports overlap on 0.8 < r < 1.25.
SPHERE_CHART_RADIUS = float(np.sqrt(2.0))
BUMP_INNER = 0.8
BUMP_OUTER = 1.25

# Curves are attributed to the chart in which they sit inside this radius.
SPHERE_CORE_RADIUS = 1.05


@dataclass(frozen=True)
class Chart:
    id: str
    bounds: tuple  # (u_min, u_max, v_min, v_max)
    periodic: tuple = (False, False)
    clip_radius: float | None = None  # domain is the rectangle cut to r <= clip

    def wrap(self, U, V):
        """Normalize periodic coordinates into the fundamental rectangle."""
        u0, u1, v0, v1 = self.bounds
        U = np.asarray(U, dtype=float)
        V = np.asarray(V, dtype=float)
        if self.periodic[0]:
            U = u0 + np.mod(U - u0, u1 - u0)
        if self.periodic[1]:
            V = v0 + np.mod(V - v0, v1 - v0)
        return U, V

    def contains(self, U, V, margin: float = 0.0):
        u0, u1, v0, v1 = self.bounds
        U = np.asarray(U, dtype=float)
        V = np.asarray(V, dtype=float)
        ok = np.ones(np.broadcast(U, V).shape, dtype=bool)
        if not self.periodic[0]:
            ok &= (U >= u0 - margin) & (U <= u1 + margin)
        if not self.periodic[1]:
            ok &= (V >= v0 - margin) & (V <= v1 + margin)
        if self.clip_radius is not None:
            ok &= np.hypot(U, V) <= self.clip_radius + margin
        return ok


@dataclass(frozen=True)
class Transition:
    src: str
    dst: str
    exprs: tuple  # (Expr for u', Expr for v')

    def apply(self, U, V):
        env = {"u": np.asarray(U, dtype=float), "v": np.asarray(V, dtype=float)}
        return evaluate(self.exprs[0], env), evaluate(self.exprs[1], env)

    def jets(self, U, V, order: int):
        return (
            jet_eval(self.exprs[0], (U, V), order),
            jet_eval(self.exprs[1], (U, V), order),
        )

    def jacobian(self, U, V):
        """Matrix (..., 2, 2) of d(u',v')/d(u,v)."""
        ju, jv = self.jets(U, V, 1)
        row0 = np.stack([ju.partial(1, 0), ju.partial(0, 1)], axis=-1)
        row1 = np.stack([jv.partial(1, 0), jv.partial(0, 1)], axis=-1)
        return np.stack([row0, row1], axis=-2)


@dataclass
class GridSample:
    """Nodes of an n x n sample of a chart domain plus a payload slot."""

    chart_id: str
    n: int
    U: np.ndarray
    V: np.ndarray
    payload: dict = field(default_factory=dict)


class Atlas:
    """Charts + transitions + partition-of-unity weights for one surface."""

    def __init__(self, charts, transitions, weights, topology_tag):
        self.charts = list(charts)
        self._by_id = {c.id: c for c in self.charts}
        self.transitions = dict(transitions)
        self._weights = dict(weights)
        self.topology_tag = topology_tag

    def chart(self, chart_id: str) -> Chart:
        return self._by_id[chart_id]

    @property
    def chart_ids(self):
        return [c.id for c in self.charts]

    @property
    def euler_characteristic(self):
        return {"sphere": 2, "torus": 0}.get(self.topology_tag)

    def transition(self, src: str, dst: str) -> Transition:
        return self.transitions[(src, dst)]

    def other_chart(self, chart_id: str):
        others = [c.id for c in self.charts if c.id != chart_id]
        return others[0] if others else None

    def weight(self, chart_id: str):
        """Partition-of-unity weight as a vectorized callable (U,V) -> w."""
        return self._weights[chart_id]

    def owns(self, chart_id: str, U, V):
        """True where this chart is the preferred owner of the point."""
        if self.topology_tag == "sphere":
            return np.hypot(np.asarray(U, float), np.asarray(V, float)) <= SPHERE_CORE_RADIUS
        return np.ones(np.broadcast(np.asarray(U), np.asarray(V)).shape, dtype=bool)

    def grid(self, chart_id: str, n: int, pad: float = 0.0) -> GridSample:
        if n < 16:
            raise ValueError("grid resolution must be at least 16")
        c = self.chart(chart_id)
        u0, u1, v0, v1 = c.bounds
        # Periodic directions omit the duplicate seam node.
        us = np.linspace(u0 + pad, u1 - pad, n, endpoint=not c.periodic[0])
        vs = np.linspace(v0 + pad, v1 - pad, n, endpoint=not c.periodic[1])
        U, V = np.meshgrid(us, vs, indexing="ij")
        return GridSample(chart_id, n, U, V)


def _bump(r):
    """Quintic C^2 cutoff: 1 on r <= BUMP_INNER, 0 on r >= BUMP_OUTER."""
    t = np.clip((np.asarray(r, dtype=float) - BUMP_INNER) / (BUMP_OUTER - BUMP_INNER), 0.0, 1.0)
    return 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)


def _sphere_weight(U, V):
    r = np.hypot(np.asarray(U, dtype=float), np.asarray(V, dtype=float))
    here = _bump(r)
    with np.errstate(divide="ignore"):
        r_other = np.where(r > 0.0, 1.0 / np.where(r > 0.0, r, 1.0), np.inf)
    other = _bump(r_other)
    return here / (here + other)


def _unit_weight(U, V):
    return np.ones(np.broadcast(np.asarray(U), np.asarray(V)).shape, dtype=float)


def make_sphere_atlas() -> Atlas:
    """Two stereographic charts; u=v=0 sits at the chart's name pole."""
    lim = SPHERE_CHART_RADIUS
    bounds = (-lim, lim, -lim, lim)
    south = Chart("south", bounds, clip_radius=lim)
    north = Chart("north", bounds, clip_radius=lim)
    inv_u = parse("u/(u^2 + v^2)")
    inv_v = parse("-v/(u^2 + v^2)")
    transitions = {
        ("south", "north"): Transition("south", "north", (inv_u, inv_v)),
        ("north", "south"): Transition("north", "south", (inv_u, inv_v)),
    }
    weights = {"south": _sphere_weight, "north": _sphere_weight}
    return Atlas([south, north], transitions, weights, "sphere")


def make_torus_atlas() -> Atlas:
    chart = Chart("torus", (0.0, TWO_PI, 0.0, TWO_PI), periodic=(True, True))
    return Atlas([chart], {}, {"torus": _unit_weight}, "torus")


def make_window_atlas(bounds=(-1.0, 1.0, -1.0, 1.0)) -> Atlas:
    chart = Chart("window", tuple(float(b) for b in bounds))
    return Atlas([chart], {}, {"window": _unit_weight}, "window")


# ---------------------------------------------------------------------------
# quadrature

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)

_CHUNK_CELLS = 120_000  # ~2M sample points per evaluation batch


def _gauss_over_cells(f, u0, u1, v0, v1):
    """4x4 Gauss-Legendre integral of f over each axis-aligned cell."""
    total = np.zeros(u0.shape)
    for lo in range(0, u0.size, _CHUNK_CELLS):
        sl = slice(lo, lo + _CHUNK_CELLS)
        uc = 0.5 * (u0[sl] + u1[sl])[:, None]
        uh = 0.5 * (u1[sl] - u0[sl])[:, None]
        vc = 0.5 * (v0[sl] + v1[sl])[:, None]
        vh = 0.5 * (v1[sl] - v0[sl])[:, None]
        un = uc + uh * _GL_NODES  # (C, 4)
        vn = vc + vh * _GL_NODES
        F = f(un[:, :, None], vn[:, None, :])  # (C, 4, 4)
        W = (uh * _GL_WEIGHTS)[:, :, None] * (vh * _GL_WEIGHTS)[:, None, :]
        total[sl] = np.sum(F * W, axis=(1, 2))
    return total


def _clip_cell_polygon(corners, values):
    """Vertices of {mask >= 0} inside one cell, by linear edge interpolation.

    corners: list of 4 (u,v) in CCW order; values: mask at those corners.
    """
    poly = []
    for k in range(4):
        a, b = k, (k + 1) % 4
        va, vb = values[a], values[b]
        if va >= 0.0:
            poly.append(corners[a])
        if (va >= 0.0) != (vb >= 0.0):
            t = va / (va - vb)
            pa, pb = corners[a], corners[b]
            poly.append((pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])))
    return poly


def _polygon_fan(poly):
    """(points, weights) of a degree-2 rule over the centroid fan of poly."""
    k = len(poly)
    if k < 3:
        return [], []
    cx = sum(p[0] for p in poly) / k
    cy = sum(p[1] for p in poly) / k
    pts, wts = [], []
    for i in range(k):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % k]
        area = 0.5 * ((x1 - cx) * (y2 - cy) - (x2 - cx) * (y1 - cy))
        if area == 0.0:
            continue
        # Midpoints of the triangle's edges integrate quadratics exactly.
        pts.extend([
            (0.5 * (cx + x1), 0.5 * (cy + y1)),
            (0.5 * (x1 + x2), 0.5 * (y1 + y2)),
            (0.5 * (x2 + cx), 0.5 * (y2 + cy)),
        ])
        wts.extend([area / 3.0, area / 3.0, area / 3.0])
    return pts, wts


def _mask_values(mask, U, V):
    m = np.asarray(mask(U, V))
    if m.dtype == bool:
        m = np.where(m, 1.0, -1.0)
    return m


def _integrate_level(f, bounds, n, mask, split_depth):
    u_lo, u_hi, v_lo, v_hi = bounds
    ue = np.linspace(u_lo, u_hi, n + 1)
    ve = np.linspace(v_lo, v_hi, n + 1)

    if mask is None:
        U0, V0 = np.meshgrid(ue[:-1], ve[:-1], indexing="ij")
        U1, V1 = np.meshgrid(ue[1:], ve[1:], indexing="ij")
        vals = _gauss_over_cells(f, U0.ravel(), U1.ravel(), V0.ravel(), V1.ravel())
        return float(np.sum(vals))

    UE, VE = np.meshgrid(ue, ve, indexing="ij")
    MC = _mask_values(mask, UE, VE)  # corner values (n+1, n+1)
    um = 0.5 * (ue[:-1] + ue[1:])
    vm = 0.5 * (ve[:-1] + ve[1:])
    UM, VM = np.meshgrid(um, vm, indexing="ij")
    MM = _mask_values(mask, UM, VM)  # center values (n, n)

    c00, c10 = MC[:-1, :-1], MC[1:, :-1]
    c01, c11 = MC[:-1, 1:], MC[1:, 1:]
    lo = np.minimum(np.minimum(c00, c10), np.minimum(c01, c11))
    hi = np.maximum(np.maximum(c00, c10), np.maximum(c01, c11))
    lo = np.minimum(lo, MM)
    hi = np.maximum(hi, MM)

    inside = lo >= 0.0
    straddle = ~inside & (hi >= 0.0)

    total = 0.0
    iu, iv = np.nonzero(inside)
    if iu.size:
        vals = _gauss_over_cells(f, ue[iu], ue[iu + 1], ve[iv], ve[iv + 1])
        total += float(np.sum(vals))

    su, sv = np.nonzero(straddle)
    rect_u0, rect_u1 = ue[su], ue[su + 1]
    rect_v0, rect_v1 = ve[sv], ve[sv + 1]

    for _ in range(split_depth):
        if rect_u0.size == 0:
            break
        # Quarter every straddling rectangle.
        um_ = 0.5 * (rect_u0 + rect_u1)
        vm_ = 0.5 * (rect_v0 + rect_v1)
        u0 = np.concatenate([rect_u0, um_, rect_u0, um_])
        u1 = np.concatenate([um_, rect_u1, um_, rect_u1])
        v0 = np.concatenate([rect_v0, rect_v0, vm_, vm_])
        v1 = np.concatenate([vm_, vm_, rect_v1, rect_v1])
        # Classify children on a 3x3 probe.
        pu = u0[:, None, None] + (u1 - u0)[:, None, None] * np.array([0.0, 0.5, 1.0])[None, :, None]
        pv = v0[:, None, None] + (v1 - v0)[:, None, None] * np.array([0.0, 0.5, 1.0])[None, None, :]
        pm = _mask_values(mask, np.broadcast_arrays(pu, pv)[0], np.broadcast_arrays(pu, pv)[1])
        cmin = pm.min(axis=(1, 2))
        cmax = pm.max(axis=(1, 2))
        child_in = cmin >= 0.0
        child_straddle = ~child_in & (cmax >= 0.0)
        if np.any(child_in):
            vals = _gauss_over_cells(f, u0[child_in], u1[child_in], v0[child_in], v1[child_in])
            total += float(np.sum(vals))
        rect_u0, rect_u1 = u0[child_straddle], u1[child_straddle]
        rect_v0, rect_v1 = v0[child_straddle], v1[child_straddle]

    if rect_u0.size:
        # Cut-cell finish: polygon-clip each remaining rectangle and build a
        # global degree-2 point set so the density is evaluated in one call.
        cu = np.stack([rect_u0, rect_u1, rect_u1, rect_u0], axis=1)
        cv = np.stack([rect_v0, rect_v0, rect_v1, rect_v1], axis=1)
        mcorn = _mask_values(mask, cu, cv)
        pts, wts = [], []
        for k in range(rect_u0.size):
            corners = list(zip(cu[k], cv[k]))
            poly = _clip_cell_polygon(corners, mcorn[k])
            p, w = _polygon_fan(poly)
            pts.extend(p)
            wts.extend(w)
        if pts:
            P = np.array(pts)
            W = np.array(wts)
            total += float(np.sum(f(P[:, 0], P[:, 1]) * W))

    return total


def integrate_rect(f, bounds, *, rtol=1e-6, mask=None, n0=16, n_max=1024, split_depth=3):
    """Composite Gauss-Legendre integral with resolution doubling.

    Doubles the cell grid until two successive values agree to
    rtol*(1+|value|); raises NoConvergence with the last two values if the
    resolution cap is hit first.
    """
    history = []
    n = n0
    while n <= n_max:
        history.append(_integrate_level(f, bounds, n, mask, split_depth))
        if len(history) >= 2 and abs(history[-1] - history[-2]) <= rtol * (1.0 + abs(history[-1])):
            return history[-1]
        n *= 2
    last = history[-1]
    previous = history[-2] if len(history) >= 2 else None
    gap = abs(last - previous) if previous is not None else float("nan")
    raise NoConvergence(
        f"quadrature did not converge by n={n_max} (gap {gap:.3e})",
        last=last,
        previous=previous,
    )


def integrate(atlas, density, mask=None, *, rtol=1e-6, n0=16, n_max=1024, split_depth=3):
    """Integral of a 2-form over the surface (or over {mask >= 0}).

    density(chart_id, U, V) gives the coefficient against du ^ dv in each
    chart; mask(chart_id, U, V), if given, is a signed indicator (positive
    inside the region).  Charts are combined through the partition of unity
    and accumulated in chart order, so results are reproducible bit-for-bit.
    """
    total = 0.0
    for chart in atlas.charts:
        w = atlas.weight(chart.id)

        def fw(U, V, _cid=chart.id, _w=w):
            return np.asarray(density(_cid, U, V)) * _w(U, V)

        cmask = None
        if mask is not None:
            def cmask(U, V, _cid=chart.id):
                return mask(_cid, U, V)

        total += integrate_rect(
            fw, chart.bounds, rtol=rtol, mask=cmask, n0=n0, n_max=n_max, split_depth=split_depth
        )
    return total
