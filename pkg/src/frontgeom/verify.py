"""Numerical verification of the Gauss-Bonnet-type identities.

Every check computes both sides of one identity from scratch: Euler numbers
from the stabilized region complex, signed swallowtail counts from the
classifier, curvature integrals by adaptive quadrature of the curl of the
connection form, boundary terms by composite Gauss-Legendre rules along
arclength arcs, and singular-curvature integrals with excised/extrapolated
A3 neighborhoods.  Each result is a report row with an explicit tolerance:
integer identities must hold exactly, float identities are re-run at a
doubled trace resolution and must keep passing without the residual growing.

Reports serialize to deterministic JSON (schema 1): no timestamps or
wall-clock, keys sorted, row order fixed by check order, so re-running the
same scene reproduces the report byte for byte.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .atlas import integrate
from .bundle import BundleHom, geodesic_curvatures
from .errors import (
    TriangleTouchesSigma,
    UnclassifiedSingularity,
)
from .expr import jet_eval
from .fields3d import (
    field_map_jets,
    normal_map_jets,
    rotation_field,
    rotation_values,
    shape_operator,
)
from .singular import (
    a3_sign,
    a3_sign_from_front,
    analyze_curve,
    find_a3_points,
    integrate_kappa_s,
    trace_singular_set,
)
from .topology import refine_until_stable

TWO_PI = 2.0 * np.pi

TRIANGLE_TOL = 1e-6
GLOBAL_TOL = 1e-2  # minus-region curvature balance (absolute)
GLOBAL_TOL_2PI = 1e-2 * TWO_PI  # total-curvature balance (absolute)
CHI_E_ROUND_TOL = 0.05  # measured integral must sit this close to an integer
RTOL_SMOOTH = 1e-7  # quadrature tolerance for integrals of smooth densities
RTOL_MASKED = 1e-4  # quadrature tolerance for region-masked integrals

# Endpoint matching / transversality guards for triangle domains.
VERTEX_TOL = 1e-8
TRANSVERSAL_SIN = 1e-9


# ---------------------------------------------------------------------------
# report plumbing


@dataclass
class ReportRow:
    """One identity: both sides, the residual, and the verdict."""

    name: str
    kind: str  # "integer" | "float"
    lhs: float
    rhs: float
    residual: float
    tolerance: float
    passed: bool
    notes: dict = field(default_factory=dict)


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to text."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


class VerificationReport:
    """Accumulates rows, integer summaries, provenance, and forensics."""

    SCHEMA = 1

    def __init__(self, title=""):
        self.title = title
        self.rows = []
        self.integers = {}
        self.provenance = {}
        self.forensics = {}

    def add(self, row: ReportRow) -> ReportRow:
        self.rows.append(row)
        return row

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_dict(self) -> dict:
        out = {
            "schema": self.SCHEMA,
            "title": self.title,
            "passed": self.passed,
            "rows": [
                {
                    "name": r.name,
                    "kind": r.kind,
                    "lhs": r.lhs,
                    "rhs": r.rhs,
                    "residual": r.residual,
                    "tolerance": r.tolerance,
                    "passed": r.passed,
                    "notes": r.notes,
                }
                for r in self.rows
            ],
            "integers": self.integers,
            "provenance": self.provenance,
        }
        if self.forensics:
            out["forensics"] = self.forensics
        return _clean(out)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def lines(self):
        """One human-readable pass/fail line per row."""
        out = []
        for r in self.rows:
            tag = "PASS" if r.passed else "FAIL"
            if r.kind == "integer":
                out.append(
                    f"{tag}  {r.name}: {r.lhs:g} == {r.rhs:g} (exact)"
                )
            else:
                out.append(
                    f"{tag}  {r.name}: |{r.lhs:.9g} - {r.rhs:.9g}| = "
                    f"{r.residual:.3e} <= {r.tolerance:.1e}"
                )
        return out


def _int_row(name, lhs, rhs, notes=None, extra_ok=True) -> ReportRow:
    lhs, rhs = int(lhs), int(rhs)
    return ReportRow(
        name=name,
        kind="integer",
        lhs=lhs,
        rhs=rhs,
        residual=abs(lhs - rhs),
        tolerance=0.0,
        passed=(lhs == rhs) and extra_ok,
        notes=notes or {},
    )


def _float_row(name, lhs, rhs, tol, notes=None, extra_ok=True) -> ReportRow:
    lhs, rhs = float(lhs), float(rhs)
    residual = abs(lhs - rhs)
    return ReportRow(
        name=name,
        kind="float",
        lhs=lhs,
        rhs=rhs,
        residual=residual,
        tolerance=float(tol),
        passed=bool(residual <= tol) and extra_ok,
        notes=notes or {},
    )


def forensic_bundle(curves) -> dict:
    """Diagnostic dump attached to reports when an identity fails."""
    out = []
    for ci, c in enumerate(curves):
        out.append(
            {
                "index": ci,
                "closed": bool(c.closed),
                "flags": list(c.flags),
                "eta_holonomy": int(c.data.get("eta_holonomy", 1)),
                "legs": [
                    {"chart": leg.chart_id, "n_vertices": int(len(leg.pts))}
                    for leg in c.legs
                ],
                "a3": [
                    {
                        "kind": r.kind,
                        "chart": r.chart_id,
                        "point": [float(r.point[0]), float(r.point[1])],
                        "arc_param": float(r.arc_param),
                        "sign": r.sign,
                        "exponents": list(r.exponents) if r.exponents else None,
                        "flags": list(r.flags),
                    }
                    for r in c.a3
                ],
            }
        )
    return {"curves": out}


# ---------------------------------------------------------------------------
# shared numerics


def _curl_density(h: BundleHom):
    def density(chart_id, U, V):
        return h.curl_omega_jet(chart_id, U, V, 0).value

    return density


def _region_mask(h: BundleHom, region: str):
    s = 1.0 if region == "plus" else -1.0

    def mask(chart_id, U, V):
        return s * h.lambda_values(chart_id, U, V)

    return mask


def integral_d_omega(h: BundleHom, rtol=RTOL_SMOOTH) -> float:
    """Integral of the curl of the connection form over the whole surface."""
    return integrate(h.atlas, _curl_density(h), rtol=rtol)


def integral_curl_region(h: BundleHom, region: str, rtol=RTOL_MASKED) -> float:
    """Signed-form curvature integral over one lambda-sign region."""
    return integrate(h.atlas, _curl_density(h), mask=_region_mask(h, region), rtol=rtol)


def integral_k_unsigned(h: BundleHom, rtol=RTOL_MASKED):
    """Integral of K against the unsigned pull-back area, as (total, plus, minus).

    K dA equals the curl density on the plus region and minus it on the
    minus region; both parts stay bounded across the singular set.
    """
    plus = integral_curl_region(h, "plus", rtol=rtol)
    minus = integral_curl_region(h, "minus", rtol=rtol)
    return plus - minus, plus, minus


def total_kappa_s(h: BundleHom, curves) -> float:
    return sum(integrate_kappa_s(h, c) for c in curves)


def classify_singular_set(h: BundleHom, *, grid_n=256, front_jets=None, signs=True):
    """Trace, analyze, locate A3 points, and (optionally) sign them.

    Swallowtail signs come from the image-cusp classifier when a front map
    is available and from the vanishing-order ladder otherwise.
    """
    curves = trace_singular_set(h, grid_n=grid_n)
    records = []
    for c in curves:
        analyze_curve(h, h.atlas, c)
        recs = find_a3_points(h, h.atlas, c)
        if signs:
            for r in recs:
                if front_jets is not None:
                    a3_sign_from_front(h, r, c, front_jets)
                else:
                    a3_sign(h, r, c)
        records.extend(recs)
    return curves, records


def _signed_counts(records):
    plus = minus = 0
    for r in records:
        if r.kind != "A3":
            continue
        if r.sign not in (1, -1):
            raise UnclassifiedSingularity(
                f"A3 point at {tuple(r.point)} in chart {r.chart_id!r} has no sign"
            )
        if r.sign == 1:
            plus += 1
        else:
            minus += 1
    return plus, minus


def _records_of(curves):
    return [r for c in curves for r in c.a3]


# ---------------------------------------------------------------------------
# local identity: triangle with regular-arc sides


def _arc_samples(arc, m):
    t = np.linspace(arc.t0, arc.t1, m)
    u, v = arc.points(t)
    return t, np.stack([np.atleast_1d(u), np.atleast_1d(v)], axis=-1)


def _arc_tangent(arc, t):
    ju, jv = arc.jets(np.atleast_1d(float(t)), 1)
    return np.array([float(ju.du().value[0]), float(jv.du().value[0])])


def _interior_angle(h, chart_id, p, t_in, t_out):
    """ds^2 angle of the sector on the chart-left of the corner.

    Returns (angle, |sin| of the normalized turn) -- the latter is the
    transversality measure.
    """
    S = h.pullback_metric(chart_id, np.array([p[0]]), np.array([p[1]]))[0]
    dot = float(t_in @ S @ t_out)
    det_s = float(S[0, 0] * S[1, 1] - S[0, 1] * S[1, 0])
    cross = float(t_in[0] * t_out[1] - t_in[1] * t_out[0])
    sin_term = math.sqrt(max(det_s, 0.0)) * cross
    eps = math.atan2(sin_term, dot)
    n_in = math.sqrt(max(float(t_in @ S @ t_in), 0.0))
    n_out = math.sqrt(max(float(t_out @ S @ t_out), 0.0))
    sin_norm = abs(sin_term) / max(n_in * n_out, 1e-300)
    return math.pi - eps, sin_norm


_GL4_X, _GL4_W = np.polynomial.legendre.leggauss(4)
_GL12_X, _GL12_W = np.polynomial.legendre.leggauss(12)


def _gauss_nodes_1d(t0, t1, n_seg):
    edges = np.linspace(t0, t1, n_seg + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
    half = 0.5 * (edges[1:] - edges[:-1])[:, None]
    nodes = (mid + half * _GL4_X).ravel()
    weights = (half * _GL4_W).ravel()
    return nodes, weights


def _kappa_g_integral(h, arc, n_seg):
    t, w = _gauss_nodes_1d(arc.t0, arc.t1, n_seg)
    kap, _ = geodesic_curvatures(h, arc, t)
    if kap is None:
        raise TriangleTouchesSigma("an arc of the triangle meets the singular set")
    return float(np.sum(kap * w))


def _fan_quadrature(polygon):
    """Gauss nodes and signed weights over the centroid fan of a polygon.

    Signed triangle areas make the result exact for any simple polygon
    (overlapping fan triangles cancel), so star-shapedness is not needed.
    Fan triangles are long and thin: 12 nodes along the radial direction,
    4 across the chord.
    """
    c = polygon.mean(axis=0)
    p1 = polygon
    p2 = np.roll(polygon, -1, axis=0)
    e1 = p1 - c
    e2 = p2 - c
    cross = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]  # (N,) signed
    s = _GL12_X[:, None] * 0.5 + 0.5  # (12,1) radial nodes on [0,1]
    t = _GL4_X[None, :] * 0.5 + 0.5  # (1,4) chordwise nodes
    ws = _GL12_W[:, None] * 0.5
    wt = _GL4_W[None, :] * 0.5
    # F(s,t) = c + s * ((1-t) e1 + t e2); |dF| = s * cross
    blend = (1.0 - t)[..., None] * e1[:, None, None, :] + t[..., None] * e2[:, None, None, :]
    pts = c + s[..., None] * blend  # (N, 12, 4, 2)
    wq = (ws * wt) * s * cross[:, None, None]  # (N, 12, 4)
    return pts.reshape(-1, 2), wq.ravel()


def check_triangle(h: BundleHom, arcs, *, tol=TRIANGLE_TOL, boundary_samples=1536,
                   kappa_segments=192, report=None) -> ReportRow:
    """Angle excess of a curvilinear triangle versus its curvature integrals.

    The three arcs must close up head-to-tail, be parametrized by arclength
    of the pull-back metric, lie in one chart with the enclosed domain on
    their left, and stay clear of the singular set.  The row compares
    (sum of interior angles - pi) against the boundary integral of the
    geodesic curvature plus the interior integral of the curvature function
    against the unsigned pull-back area.
    """
    arcs = list(arcs)
    if len(arcs) != 3:
        raise ValueError("a triangle needs exactly three arcs")
    cid = arcs[0].chart_id
    if any(a.chart_id != cid for a in arcs):
        raise ValueError("all three arcs must live in the same chart")

    m = boundary_samples
    samples = [_arc_samples(a, m + 1)[1] for a in arcs]
    for i in range(3):
        gap = np.hypot(*(samples[i][-1] - samples[(i + 1) % 3][0]))
        if gap > VERTEX_TOL:
            raise ValueError(
                f"arc {i} ends {gap:.2e} away from the start of arc {(i + 1) % 3}"
            )

    polygon = np.concatenate([s[:-1] for s in samples])
    area2 = float(
        np.sum(
            polygon[:, 0] * np.roll(polygon[:, 1], -1)
            - np.roll(polygon[:, 0], -1) * polygon[:, 1]
        )
    )
    if area2 <= 0.0:
        raise ValueError(
            "the triangle must lie on the left of its arcs "
            "(traverse the boundary counterclockwise in the chart)"
        )

    tol_sing = h.singular_tolerance(cid)
    lam_boundary = h.lambda_values(cid, polygon[:, 0], polygon[:, 1])
    if np.min(np.abs(lam_boundary)) <= tol_sing:
        raise TriangleTouchesSigma("triangle boundary meets the singular set")

    # Interior angles from the ds^2 geometry at the three corners.
    angles = []
    trans = []
    for i in range(3):
        a_in = arcs[i]
        a_out = arcs[(i + 1) % 3]
        p = samples[(i + 1) % 3][0]
        t_in = _arc_tangent(a_in, a_in.t1)
        t_out = _arc_tangent(a_out, a_out.t0)
        ang, sin_norm = _interior_angle(h, cid, p, t_in, t_out)
        if sin_norm < TRANSVERSAL_SIN:
            raise ValueError(f"arcs meet tangentially at vertex {i}")
        angles.append(ang)
        trans.append(sin_norm)

    # Boundary term at two resolutions (the fine value is reported).
    kg_coarse = sum(_kappa_g_integral(h, a, kappa_segments) for a in arcs)
    kg = sum(_kappa_g_integral(h, a, 2 * kappa_segments) for a in arcs)

    # Interior term: curl of the connection form over the polygonized domain,
    # with the sign that converts the signed form to K dA on this region.
    pts, wq = _fan_quadrature(polygon)
    lam_inside = h.lambda_values(cid, pts[:, 0], pts[:, 1])
    if np.min(np.abs(lam_inside)) <= tol_sing or np.min(lam_inside) * np.max(lam_inside) < 0:
        raise TriangleTouchesSigma("triangle interior meets the singular set")
    sigma = 1.0 if float(lam_inside[0]) > 0 else -1.0
    curl = h.curl_omega_jet(cid, pts[:, 0], pts[:, 1], 0).value
    k_da = sigma * float(np.sum(curl * wq))

    half = polygon[::2]
    pts_c, wq_c = _fan_quadrature(half)
    curl_c = h.curl_omega_jet(cid, pts_c[:, 0], pts_c[:, 1], 0).value
    k_da_coarse = sigma * float(np.sum(curl_c * wq_c))

    lhs = float(sum(angles) - math.pi)
    rhs = kg + k_da
    row = _float_row(
        "triangle",
        lhs,
        rhs,
        tol,
        notes={
            "statement": "angle sum - pi == boundary kappa_g integral"
            " + interior curvature integral",
            "angles": [float(a) for a in angles],
            "transversality": [float(s) for s in trans],
            "kappa_g_integral": kg,
            "curvature_integral": k_da,
            "region_sign": sigma,
            "boundary_refinement_gap": abs(kg - kg_coarse),
            "interior_refinement_gap": abs(k_da - k_da_coarse),
            "boundary_samples": boundary_samples,
            "kappa_segments": 2 * kappa_segments,
        },
    )
    if report is not None:
        report.add(row)
        report.provenance.setdefault("triangle", {}).update(
            {"boundary_samples": boundary_samples, "kappa_segments": 2 * kappa_segments}
        )
    return row


# ---------------------------------------------------------------------------
# global identities


def _float_row_refined(name, lhs, rhs_coarse, rhs_fine, tol, notes):
    """Row that must pass at both resolutions without the residual growing."""
    r_coarse = abs(lhs - rhs_coarse)
    r_fine = abs(lhs - rhs_fine)
    shrinking = (r_fine <= r_coarse) or (r_fine <= 0.01 * tol)
    notes = dict(notes)
    notes["residual_coarse"] = r_coarse
    notes["residual_decreasing"] = bool(shrinking)
    row = _float_row(name, lhs, rhs_fine, tol, notes=notes,
                     extra_ok=bool(shrinking and r_coarse <= tol))
    return row


def _refined_kappa(h, grid_n):
    """kappa_s total from a re-trace at doubled resolution (signs not needed)."""
    curves_fine, _ = classify_singular_set(h, grid_n=2 * grid_n, signs=False)
    return total_kappa_s(h, curves_fine)


def check_global(h: BundleHom, *, curves=None, report=None, grid_n=256, n0=64,
                 front_jets=None, tol=GLOBAL_TOL_2PI, tol_round=CHI_E_ROUND_TOL,
                 rtol_masked=RTOL_MASKED, rtol_smooth=RTOL_SMOOTH,
                 refine=True, count_label="S", complex_=None):
    """The two global curvature identities for a bundle homomorphism.

    Row 1 (integer): the bundle Euler number measured as the normalized
    curvature integral equals chi(M+) - chi(M-) + (signed swallowtail
    count); the measured integral must sit within ``tol_round`` of its
    integer.  Row 2 (float): 2 pi chi(M^2) equals the curvature integral
    against the unsigned pull-back area plus twice the singular-curvature
    integral; with ``refine`` the singular set is re-traced at doubled
    resolution and the residual must not grow.
    """
    if curves is None:
        curves, records = classify_singular_set(h, grid_n=grid_n, front_jets=front_jets)
    else:
        records = _records_of(curves)
    n_plus, n_minus = _signed_counts(records)

    cx = complex_ or refine_until_stable(h, curves=curves, n0=n0)
    chi_p, chi_m = cx.chi["plus"], cx.chi["minus"]
    chi_surface = h.atlas.euler_characteristic

    d_omega = integral_d_omega(h, rtol=rtol_smooth)
    chi_e_measured = d_omega / TWO_PI
    chi_e = int(round(chi_e_measured))
    round_dist = abs(chi_e_measured - chi_e)

    row1 = _int_row(
        "chi_E-count",
        chi_e,
        chi_p - chi_m + n_plus - n_minus,
        notes={
            "statement": f"chi_E == chi(M+) - chi(M-) + ({count_label}+ - {count_label}-)",
            "chi_E_measured": chi_e_measured,
            "rounding_distance": round_dist,
            "rounding_tolerance": tol_round,
        },
        extra_ok=round_dist <= tol_round,
    )

    k_da, k_plus, k_minus = integral_k_unsigned(h, rtol=rtol_masked)
    kappa = total_kappa_s(h, curves)
    lhs2 = TWO_PI * chi_surface
    notes2 = {
        "statement": "2 pi chi(M) == int K dA + 2 int kappa_s",
        "K_dA": k_da,
        "K_dA_plus_part": k_plus,
        "K_dA_minus_part": k_minus,
        "kappa_s_integral": kappa,
    }
    if refine:
        kappa_fine = _refined_kappa(h, grid_n)
        notes2["kappa_s_integral_refined"] = kappa_fine
        notes2["trace_grids"] = [grid_n, 2 * grid_n]
        row2 = _float_row_refined(
            "total-curvature", lhs2, k_da + 2.0 * kappa, k_da + 2.0 * kappa_fine,
            tol, notes2,
        )
    else:
        row2 = _float_row("total-curvature", lhs2, k_da + 2.0 * kappa, tol, notes=notes2)

    if report is not None:
        report.add(row1)
        report.add(row2)
        report.integers.update(
            {
                "chi_plus": chi_p,
                "chi_minus": chi_m,
                f"{count_label}_plus": n_plus,
                f"{count_label}_minus": n_minus,
                "chi_E": chi_e,
            }
        )
        report.provenance.setdefault("global", {}).update(
            {
                "grid_n": grid_n,
                "complex_n": cx.n,
                "rtol_masked": rtol_masked,
                "rtol_smooth": rtol_smooth,
                "refined": bool(refine),
            }
        )
        if not (row1.passed and row2.passed):
            report.forensics.update(forensic_bundle(curves))
    return row1, row2


def check_theorem1(h: BundleHom, *, curves=None, report=None, grid_n=256, n0=64,
                   front_jets=None, tol=GLOBAL_TOL, rtol_masked=RTOL_MASKED,
                   refine=True, count_label="S", complex_=None):
    """The tangent-bundle specialization: minus-region count and curvature.

    Row 1 (integer, exact): 2 chi(M-) equals the signed swallowtail count.
    Row 2 (float): the signed-form curvature integral over the minus region
    equals the singular-curvature integral over the whole singular set.
    """
    if curves is None:
        curves, records = classify_singular_set(h, grid_n=grid_n, front_jets=front_jets)
    else:
        records = _records_of(curves)
    n_plus, n_minus = _signed_counts(records)

    cx = complex_ or refine_until_stable(h, curves=curves, n0=n0)
    chi_m = cx.chi["minus"]

    row1 = _int_row(
        "minus-count",
        2 * chi_m,
        n_plus - n_minus,
        notes={"statement": f"2 chi(M-) == {count_label}+ - {count_label}-"},
    )

    k_minus_signed = integral_curl_region(h, "minus", rtol=rtol_masked)
    kappa = total_kappa_s(h, curves)
    notes2 = {
        "statement": "int_{M-} K dAhat == int kappa_s",
        "kappa_s_integral": kappa,
    }
    if refine:
        kappa_fine = _refined_kappa(h, grid_n)
        notes2["kappa_s_integral_refined"] = kappa_fine
        notes2["trace_grids"] = [grid_n, 2 * grid_n]
        row2 = _float_row_refined(
            "minus-curvature", k_minus_signed, kappa, kappa_fine, tol, notes2
        )
    else:
        row2 = _float_row("minus-curvature", k_minus_signed, kappa, tol, notes=notes2)

    if report is not None:
        report.add(row1)
        report.add(row2)
        report.integers.update(
            {
                "chi_plus": cx.chi["plus"],
                "chi_minus": chi_m,
                f"{count_label}_plus": n_plus,
                f"{count_label}_minus": n_minus,
            }
        )
        report.provenance.setdefault("theorem_tangent", {}).update(
            {"grid_n": grid_n, "complex_n": cx.n, "refined": bool(refine)}
        )
        if not (row1.passed and row2.passed):
            report.forensics.update(forensic_bundle(curves))
    return row1, row2


def _metric_is_euclidean(field, n=9, tol=1e-12):
    for chart in field.atlas.charts:
        u0, u1, v0, v1 = chart.bounds
        U, V = np.meshgrid(
            np.linspace(u0, u1, n), np.linspace(v0, v1, n), indexing="ij"
        )
        for r in range(2):
            for c in range(2):
                vals = jet_eval(field.metric[chart.id][r][c], (U, V), 0).value
                target = 1.0 if r == c else 0.0
                if np.max(np.abs(vals - target)) > tol:
                    return False
    return True


def check_rotation_proposition(field, *, report=None, grid_n=256, n0=64,
                               tol=GLOBAL_TOL, refine=True, hom=None):
    """Irrotational-cusp count of a tangent vector field.

    2 chi({rot X < 0}) equals the signed count of irrotational cusps, plus
    the minus-region curvature balance.  For a Euclidean metric the cusp
    signs come from the image cusps of X itself as a plane map; otherwise
    the vanishing-order ladder classifies them.
    """
    h = hom or rotation_field(field)

    # The minus region is anchored by the sign of rot(X): spot-check that it
    # matches the sign of lambda, which the complex and the tracer use.
    chart = field.atlas.charts[0]
    u0, u1, v0, v1 = chart.bounds
    U, V = np.meshgrid(np.linspace(u0, u1, 33), np.linspace(v0, v1, 33), indexing="ij")
    rot = rotation_values(h, chart.id, U, V)
    lam = h.lambda_values(chart.id, U, V)
    keep = np.abs(lam) > h.singular_tolerance(chart.id)
    if not np.all(np.sign(rot[keep]) == np.sign(lam[keep])):
        raise UnclassifiedSingularity(
            "rot(X) and lambda disagree in sign away from the singular set"
        )

    front = field_map_jets(field) if _metric_is_euclidean(field) else None
    curves, _ = classify_singular_set(h, grid_n=grid_n, front_jets=front)
    rows = check_theorem1(
        h, curves=curves, report=report, grid_n=grid_n, n0=n0,
        tol=tol, refine=refine, count_label="C",
    )
    if report is not None:
        report.provenance.setdefault("rotation", {}).update(
            {"front_map": front is not None, "rot_sign_matches_lambda": True}
        )
    return rows


def check_bleeker_wilson(embedding, *, report=None, grid_n=256, n0=64, hom=None):
    """Signed inflection count of an embedded surface: 2 chi(M-) == I+ - I-.

    Inflection points are the swallowtails of the shape operator; their
    signs come from the image cusps of the unit normal (the map whose
    differential the shape operator is).
    """
    h = hom or shape_operator(embedding)
    front = normal_map_jets(embedding)
    curves, records = classify_singular_set(h, grid_n=grid_n, front_jets=front)
    n_plus, n_minus = _signed_counts(records)
    cx = refine_until_stable(h, curves=curves, n0=n0)
    chi_m = cx.chi["minus"]
    row = _int_row(
        "minus-count",
        2 * chi_m,
        n_plus - n_minus,
        notes={"statement": "2 chi(M-) == I+ - I-"},
    )
    if report is not None:
        report.add(row)
        report.integers.update(
            {
                "chi_plus": cx.chi["plus"],
                "chi_minus": chi_m,
                "I_plus": n_plus,
                "I_minus": n_minus,
            }
        )
        report.provenance.setdefault("inflections", {}).update(
            {"grid_n": grid_n, "complex_n": cx.n}
        )
        if not row.passed:
            report.forensics.update(forensic_bundle(curves))
    return row


def check_blaschke_theorem(structure, *, census=None, report=None, grid_n=256,
                           n0=64, with_global=True, refine=False):
    """Signed swallowtail count of the affine normal map: 2 chi(M-) == S+ - S-.

    Runs the swallowtail census of the affine shape operator and checks the
    integer identity exactly; with ``with_global`` the two global curvature
    rows for the same homomorphism are appended as supporting evidence.
    """
    from .blaschke import BlaschkeStructure, swallowtail_census

    if not isinstance(structure, BlaschkeStructure):
        structure = BlaschkeStructure(structure)
    if census is None:
        census = swallowtail_census(structure, grid_n=grid_n, n0=n0)

    row = _int_row(
        "minus-count",
        2 * census.chi_minus,
        census.s_plus - census.s_minus,
        notes={"statement": "2 chi(M-) == S+ - S-"},
    )
    if report is not None:
        report.add(row)
        report.integers.update(
            {
                "chi_plus": census.complex.chi["plus"] if census.complex else None,
                "chi_minus": census.chi_minus,
                "S_plus": census.s_plus,
                "S_minus": census.s_minus,
            }
        )
        report.provenance.setdefault("blaschke", {}).update(
            {"grid_n": grid_n, "n_curves": len(census.curves)}
        )
        if not row.passed:
            report.forensics.update(forensic_bundle(census.curves))
    rows = [row]
    if with_global:
        rows.extend(
            check_global(
                census.hom,
                curves=census.curves,
                report=report,
                grid_n=grid_n,
                n0=n0,
                refine=refine,
                complex_=census.complex,
            )
        )
    return tuple(rows)
