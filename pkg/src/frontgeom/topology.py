"""Region complexes: Euler characteristics of the sign regions of lambda.

The surface is meshed once, globally: a longitude/colatitude grid with two
pole fans for the sphere (chi = 2 structurally, no chart gluing needed) and
a doubly periodic quad grid for the torus (chi = 0).  Faces whose corner
signs disagree are split along the marching-squares chords of {lambda = 0},
so region boundaries follow the singular set rather than pixel boundaries;
every count is then integer-exact by construction:

    chi(M+) + chi(M-) = chi(M^2)

holds identically because each crossing vertex is shared by both closures
and each chord edge is counted in both, while everything else belongs to
exactly one side.  Integer outputs are trusted only after they survive a
grid doubling (refine_until_stable).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import GluingError, NoStabilization

SPHERE_OWNS_SOUTH = 2.0 * np.arctan(1.0 / 1.05)  # colatitude above which the
# south stereographic chart owns a point (matches Atlas.owns)


@dataclass
class RegionInfo:
    label: str  # "plus" | "minus"
    chi: int
    area: float
    n_faces: int
    boundary_cycles: int


@dataclass
class RegionComplex:
    topology_tag: str
    n: int
    chi: dict  # label -> int
    components: dict  # label -> int
    n_boundary_cycles: int
    regions: list = field(default_factory=list)
    totals: dict = field(default_factory=dict)


def euler_char(cx: RegionComplex, label) -> int:
    key = getattr(label, "name", str(label)).lower()
    return cx.chi[key]


# ---------------------------------------------------------------------------
# meshes

def _sphere_mesh(n):
    """Longitude/colatitude mesh: 2n azimuths, n colatitude rows, pole fans.

    Returns node params (theta, az), family arrays for faces and edges.
    Faces carry corners and boundary edges in aligned cyclic order.
    """
    A = 2 * n
    theta = np.pi * np.arange(n + 1) / n
    az = 2.0 * np.pi * np.arange(A) / A

    def nid(j, i):
        return 2 + (j - 1) * A + (np.asarray(i) % A)

    n_nodes = 2 + (n - 1) * A
    node_theta = np.empty(n_nodes)
    node_az = np.empty(n_nodes)
    node_theta[0], node_az[0] = 0.0, 0.0
    node_theta[1], node_az[1] = np.pi, 0.0
    J, I = np.meshgrid(np.arange(1, n), np.arange(A), indexing="ij")
    node_theta[2:] = theta[J].ravel()
    node_az[2:] = az[I].ravel()

    i_arr = np.arange(A)
    ip1 = (i_arr + 1) % A

    # --- edges: az rows j=1..n-1; meridional j=1..n-2; two pole fans
    edges_a = []
    for j in range(1, n):
        edges_a.append(np.stack([nid(j, i_arr), nid(j, ip1)], 1))
    E_az = np.concatenate(edges_a)
    edges_m = []
    for j in range(1, n - 1):
        edges_m.append(np.stack([nid(j, i_arr), nid(j + 1, i_arr)], 1))
    E_mer = np.concatenate(edges_m) if edges_m else np.empty((0, 2), int)
    E_pn = np.stack([np.zeros(A, int), nid(1, i_arr)], 1)
    E_ps = np.stack([np.ones(A, int), nid(n - 1, i_arr)], 1)

    # global edge ids: [az rows | meridional | pole north | pole south]
    off_az = 0
    off_m = off_az + (n - 1) * A
    off_pn = off_m + max(n - 2, 0) * A
    off_ps = off_pn + A
    n_edges = off_ps + A
    edge_nodes = np.concatenate([E_az, E_mer, E_pn, E_ps])

    def eid_a(j, i):
        return off_az + (j - 1) * A + (np.asarray(i) % A)

    def eid_m(j, i):
        return off_m + (j - 1) * A + (np.asarray(i) % A)

    # --- faces
    # north triangles (pole0, nid(1,i), nid(1,i+1)); edges (pn_i, a(1,i), pn_{i+1})
    tri_n_c = np.stack([np.zeros(A, int), nid(1, i_arr), nid(1, ip1)], 1)
    tri_n_e = np.stack([off_pn + i_arr, eid_a(1, i_arr), off_pn + ip1], 1)
    # quads row j=1..n-2: corners (j,i),(j,i+1),(j+1,i+1),(j+1,i)
    quads_c, quads_e, quad_rows = [], [], []
    for j in range(1, n - 1):
        quads_c.append(np.stack([nid(j, i_arr), nid(j, ip1), nid(j + 1, ip1), nid(j + 1, i_arr)], 1))
        quads_e.append(np.stack([eid_a(j, i_arr), eid_m(j, ip1), eid_a(j + 1, i_arr), eid_m(j, i_arr)], 1))
        quad_rows.append(np.full(A, j))
    Q_c = np.concatenate(quads_c) if quads_c else np.empty((0, 4), int)
    Q_e = np.concatenate(quads_e) if quads_e else np.empty((0, 4), int)
    quad_rows = np.concatenate(quad_rows) if quad_rows else np.empty(0, int)
    # south triangles (nid(n-1,i), pole1, ...) corners (c_i, c_{i+1}, pole)
    tri_s_c = np.stack([nid(n - 1, i_arr), nid(n - 1, ip1), np.ones(A, int)], 1)
    tri_s_e = np.stack([eid_a(n - 1, i_arr), off_ps + ip1, off_ps + i_arr], 1)

    # face centers (theta, az) for saddle resolution / labels
    d_az = 2.0 * np.pi / A
    tri_n_ctr = np.stack([np.full(A, theta[1] * 0.5), az + 0.5 * d_az], 1)
    q_ctr = (
        np.stack(
            [
                0.5 * (theta[quad_rows] + theta[quad_rows + 1]),
                np.tile(az, max(n - 2, 0)) + 0.5 * d_az,
            ],
            1,
        )
        if len(quad_rows)
        else np.empty((0, 2))
    )
    tri_s_ctr = np.stack([np.full(A, 0.5 * (theta[n - 1] + np.pi)), az + 0.5 * d_az], 1)

    # areas (round sphere): band area split evenly among the A cells
    band = np.cos(theta[:-1]) - np.cos(theta[1:])  # per colatitude row
    tri_n_area = np.full(A, 2.0 * np.pi * band[0] / A)
    q_area = (
        np.repeat(2.0 * np.pi * band[1 : n - 1] / A, A) if n > 2 else np.empty(0)
    )
    tri_s_area = np.full(A, 2.0 * np.pi * band[n - 1] / A)

    faces = [
        (tri_n_c, tri_n_e, tri_n_ctr, tri_n_area),
        (Q_c, Q_e, q_ctr, q_area),
        (tri_s_c, tri_s_e, tri_s_ctr, tri_s_area),
    ]
    params = np.stack([node_theta, node_az], 1)
    return params, edge_nodes, faces


def _torus_mesh(n):
    L = 2.0 * np.pi
    h = L / n
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")

    def nid(i, j):
        return (np.asarray(i) % n) * n + (np.asarray(j) % n)

    params = np.stack([(ii * h).ravel(), (jj * h).ravel()], 1)
    # u-edges (i,j)-(i+1,j) ids 0..n^2-1 ; v-edges (i,j)-(i,j+1) ids n^2..
    Eu = np.stack([nid(ii, jj).ravel(), nid(ii + 1, jj).ravel()], 1)
    Ev = np.stack([nid(ii, jj).ravel(), nid(ii, jj + 1).ravel()], 1)
    edge_nodes = np.concatenate([Eu, Ev])

    def eu(i, j):
        return (np.asarray(i) % n) * n + (np.asarray(j) % n)

    def ev(i, j):
        return n * n + (np.asarray(i) % n) * n + (np.asarray(j) % n)

    # quad (i,j): corners (i,j),(i+1,j),(i+1,j+1),(i,j+1)
    Q_c = np.stack(
        [nid(ii, jj).ravel(), nid(ii + 1, jj).ravel(), nid(ii + 1, jj + 1).ravel(), nid(ii, jj + 1).ravel()],
        1,
    )
    Q_e = np.stack(
        [eu(ii, jj).ravel(), ev(ii + 1, jj).ravel(), eu(ii, jj + 1).ravel(), ev(ii, jj).ravel()],
        1,
    )
    ctr = params + 0.5 * h
    area = np.full(n * n, h * h)
    return params, edge_nodes, [(Q_c, Q_e, ctr, area)]


def _sphere_params_to_chart(params):
    """Map (theta, az) to owning stereographic chart coordinates."""
    theta, az = params[:, 0], params[:, 1]
    south = theta >= SPHERE_OWNS_SOUTH
    u = np.empty_like(theta)
    v = np.empty_like(theta)
    # south chart: r = cot(theta/2), phase = az
    r = np.where(south, np.tan(0.5 * (np.pi - theta)), 0.0)
    u[south] = (r * np.cos(az))[south]
    v[south] = (r * np.sin(az))[south]
    # north chart: s = tan(theta/2), (p, q) = s (cos az, -sin az)
    s = np.where(~south, np.tan(0.5 * theta), 0.0)
    u[~south] = (s * np.cos(az))[~south]
    v[~south] = (-s * np.sin(az))[~south]
    chart = np.where(south, "south", "north")
    return chart, u, v


def _lambda_signs(h, atlas, params):
    if atlas.topology_tag == "sphere":
        chart, u, v = _sphere_params_to_chart(params)
        lam = np.empty(len(params))
        for cid in ("south", "north"):
            m = chart == cid
            if np.any(m):
                lam[m] = h.lambda_values(cid, u[m], v[m])
    else:
        cid = atlas.charts[0].id
        lam = h.lambda_values(cid, params[:, 0], params[:, 1])
    lam = np.where(lam == 0.0, 1e-300, lam)
    return lam > 0


def _split_cycle(cycle, chords):
    """Split a boundary cycle (list of tokens) along non-crossing chords."""
    if not chords:
        return [cycle]
    (a, b), rest = chords[0], chords[1:]
    ia, ib = cycle.index(a), cycle.index(b)
    if ia > ib:
        ia, ib = ib, ia
    left = cycle[ia : ib + 1]
    right = cycle[ib:] + cycle[: ia + 1]
    out = []
    for part in (left, right):
        sub = [c for c in rest if c[0] in part and c[1] in part]
        out.extend(_split_cycle(part, sub))
    return out


def build_complex(h, curves=None, n=128) -> RegionComplex:
    """Mesh the surface, split faces along {lambda = 0}, count everything."""
    atlas = h.atlas
    if atlas.topology_tag == "sphere":
        params, edge_nodes, families = _sphere_mesh(n)
    elif atlas.topology_tag == "torus":
        params, edge_nodes, families = _torus_mesh(n)
    else:
        raise GluingError(f"region complexes need a closed surface, not {atlas.topology_tag!r}")

    sign = _lambda_signs(h, atlas, params)  # True = Plus
    n_nodes = len(params)
    n_edges = len(edge_nodes)

    crossed_edge = sign[edge_nodes[:, 0]] != sign[edge_nodes[:, 1]]
    crossing_id = -np.ones(n_edges, dtype=int)
    crossing_id[crossed_edge] = np.arange(int(np.sum(crossed_edge)))
    n_cross = int(np.sum(crossed_edge))

    # ---- bulk counts, face labels, flat incidence (families mix arities)
    n_faces_total = sum(len(f[0]) for f in families)
    face_offset = np.cumsum([0] + [len(f[0]) for f in families])

    crossed_face_mask = np.zeros(n_faces_total, dtype=bool)
    face_label = np.zeros(n_faces_total, dtype=bool)
    flat_c_list, flat_cf_list, flat_e_list, flat_ef_list = [], [], [], []
    for fi, (C, E, _, _) in enumerate(families):
        if len(C) == 0:
            continue
        s = sign[C]
        mixed = np.any(s != s[:, :1], axis=1)
        crossed_face_mask[face_offset[fi] : face_offset[fi + 1]] = mixed
        face_label[face_offset[fi] : face_offset[fi + 1]] = s[:, 0]
        ids = np.arange(face_offset[fi], face_offset[fi + 1])
        flat_c_list.append(C.ravel())
        flat_cf_list.append(np.repeat(ids, C.shape[1]))
        flat_e_list.append(E.ravel())
        flat_ef_list.append(np.repeat(ids, E.shape[1]))
    flat_c = np.concatenate(flat_c_list)
    flat_cf = np.concatenate(flat_cf_list)
    flat_e = np.concatenate(flat_e_list)
    flat_ef = np.concatenate(flat_ef_list)

    # ---- split crossed faces
    # tokens: ("n", node_id) corners, ("x", crossing_id) crossings
    sub_label = []  # bool per subface
    sub_area = []
    piece_owner = {}  # piece key -> [subface ids]
    chord_list = []  # (xa, xb, sub_plus, sub_minus) resolved after
    chord_of_sub = []
    sub_corner_nodes = []  # for region assignment of orphan nodes
    next_sub = n_faces_total

    def center_sign(fi, k):
        ctr = families[fi][2][k]
        pt = ctr[None, :]
        return bool(_lambda_signs(h, atlas, pt)[0])

    crossed_idx = np.nonzero(crossed_face_mask)[0]
    sub_of_whole_edge = {}  # (edge_id, None) handled: edges of crossed faces
    for g in crossed_idx:
        fi = int(np.searchsorted(face_offset, g, side="right") - 1)
        k = g - face_offset[fi]
        C, E, _, AREA = families[fi]
        corners = C[k]
        edges = E[k]
        m = len(corners)
        cyc = []
        face_cross = []
        for t in range(m):
            cyc.append(("n", int(corners[t])))
            e = int(edges[t])
            if crossed_edge[e]:
                cyc.append(("x", int(crossing_id[e]), e))
                face_cross.append(("x", int(crossing_id[e]), e))
        # chords: pair crossings in cyclic order
        if len(face_cross) == 2:
            chords = [(face_cross[0], face_cross[1])]
        elif len(face_cross) == 4:
            cs = bool(center_sign(fi, k))
            # cyclic edges order: pair (0,1),(2,3) vs (3,0),(1,2) so that the
            # middle band matches the center sign
            first_after = cyc[(cyc.index(face_cross[0]) + 1) % len(cyc)]
            s_after = sign[first_after[1]]
            if cs == bool(s_after):
                chords = [(face_cross[1], face_cross[2]), (face_cross[3], face_cross[0])]
            else:
                chords = [(face_cross[0], face_cross[1]), (face_cross[2], face_cross[3])]
        else:
            raise GluingError(
                f"face with {len(face_cross)} boundary crossings (tangency at this grid)"
            )
        polys = _split_cycle(cyc, chords)
        area_share = AREA[k] / len(polys)
        chord_keys = {tuple(sorted((id(a), id(b)))): None for a, b in chords}
        chord_pairs = {}
        for poly in polys:
            sid = next_sub
            next_sub += 1
            corner_nodes = [t[1] for t in poly if t[0] == "n"]
            if not corner_nodes:
                raise GluingError("subface without corners (degenerate split)")
            lab = bool(sign[corner_nodes[0]])
            if any(bool(sign[c]) != lab for c in corner_nodes):
                raise GluingError("inconsistent corner signs inside a subface")
            sub_label.append(lab)
            sub_area.append(area_share)
            sub_corner_nodes.append(corner_nodes)
            # boundary pieces of this polygon
            L = len(poly)
            for t in range(L):
                t1, t2 = poly[t], poly[(t + 1) % L]
                if t1[0] == "n" and t2[0] == "n":
                    key = ("w", _edge_between(edge_nodes, edges, t1[1], t2[1]))
                elif t1[0] == "n" and t2[0] == "x":
                    key = ("h", t2[2], t1[1])
                elif t2[0] == "n":
                    key = ("h", t1[2], t2[1])
                else:
                    key = ("c", tuple(sorted((t1[1], t2[1]))))
                    chord_pairs.setdefault(key, []).append(sid)
                piece_owner.setdefault(key, []).append(sid)
        for key, sids in chord_pairs.items():
            if len(sids) != 2:
                raise GluingError("chord not shared by exactly two subfaces")
            chord_of_sub.append((key, sids[0], sids[1]))

    sub_label = np.array(sub_label, dtype=bool) if sub_label else np.empty(0, bool)
    sub_area = np.array(sub_area) if len(sub_area) else np.empty(0)

    # ---- adjacency for regions (same-label connections only)
    # edge -> (face_a, face_b) via scatter over the flat incidence lists
    edge_face = -np.ones((n_edges, 2), dtype=int)
    order = np.argsort(flat_e, kind="stable")
    se, sf = flat_e[order], flat_ef[order]
    first = np.searchsorted(se, np.arange(n_edges), side="left")
    last = np.searchsorted(se, np.arange(n_edges), side="right")
    cnt = last - first
    if np.any(cnt != 2):
        raise GluingError("an edge does not bound exactly two faces")
    edge_face[:, 0] = sf[first]
    edge_face[:, 1] = sf[last - 1]

    uncrossed_edges = ~crossed_edge
    fa, fb = edge_face[:, 0], edge_face[:, 1]
    both_bulk = uncrossed_edges & ~crossed_face_mask[fa] & ~crossed_face_mask[fb]
    rows = [fa[both_bulk]]
    cols = [fb[both_bulk]]
    # whole edges touching crossed faces: resolved via piece_owner
    mixed_whole = np.nonzero(uncrossed_edges & ~both_bulk)[0]
    sub_sides = {}
    for e in mixed_whole:
        owners = piece_owner.get(("w", int(e)), [])
        allsides = [int(f) for f in edge_face[e] if not crossed_face_mask[f]] + owners
        if len(allsides) != 2:
            raise GluingError("whole edge piece not shared by exactly two faces")
        sub_sides[("w", int(e))] = allsides
        rows.append(np.array([allsides[0]]))
        cols.append(np.array([allsides[1]]))
    # halves: both neighbor faces are crossed by construction
    for e in np.nonzero(crossed_edge)[0]:
        for node in edge_nodes[e]:
            key = ("h", int(e), int(node))
            owners = piece_owner.get(key, [])
            if len(owners) != 2:
                raise GluingError("half-edge piece not shared by exactly two subfaces")
            sub_sides[key] = owners
            rows.append(np.array([owners[0]]))
            cols.append(np.array([owners[1]]))

    n_elems = next_sub
    graph = coo_matrix(
        (
            np.ones(sum(len(r) for r in rows)),
            (np.concatenate(rows), np.concatenate(cols)),
        ),
        shape=(n_elems, n_elems),
    )
    n_comp, comp = connected_components(graph, directed=False)

    # element labels: bulk faces + subfaces (crossed bulk faces are inert)
    elem_label = np.concatenate([face_label, sub_label])
    active = np.ones(n_elems, dtype=bool)
    active[:n_faces_total] = ~crossed_face_mask

    # ---- global chi per label
    n_plus_nodes = int(np.sum(sign))
    n_minus_nodes = n_nodes - n_plus_nodes
    edge_sign = sign[edge_nodes[:, 0]]
    e_plus = int(np.sum(uncrossed_edges & edge_sign))
    e_minus = int(np.sum(uncrossed_edges & ~edge_sign))
    n_chords = len(chord_of_sub)
    f_plus = int(np.sum(elem_label[active]))
    f_minus = int(np.sum(~elem_label[active]))
    chi_plus = (n_plus_nodes + n_cross) - (e_plus + n_cross + n_chords) + f_plus
    chi_minus = (n_minus_nodes + n_cross) - (e_minus + n_cross + n_chords) + f_minus

    chi_m = atlas.euler_characteristic
    if chi_plus + chi_minus != chi_m:
        raise GluingError(
            f"chi(M+) + chi(M-) = {chi_plus + chi_minus} != chi(M) = {chi_m}"
        )

    # ---- components per label
    comp_active = comp[active]
    lab_active = elem_label[active]
    plus_regions = np.unique(comp_active[lab_active])
    minus_regions = np.unique(comp_active[~lab_active])

    # ---- boundary cycles: crossings linked by chords
    if n_chords:
        xa = np.array([k[1][0] for k, _, _ in chord_of_sub])
        xb = np.array([k[1][1] for k, _, _ in chord_of_sub])
        g2 = coo_matrix((np.ones(n_chords), (xa, xb)), shape=(n_cross, n_cross))
        n_cycles = connected_components(g2, directed=False)[0]
    else:
        n_cycles = 0

    # ---- per-region summaries (chi via restricted counts)
    regions = _region_summaries(
        sign,
        edge_nodes,
        uncrossed_edges,
        edge_face,
        crossed_face_mask,
        face_label,
        comp,
        elem_label,
        active,
        np.concatenate([np.concatenate([f[3] for f in families]), sub_area]),
        sub_sides,
        chord_of_sub,
        sub_corner_nodes,
        n_faces_total,
        flat_c,
        flat_cf,
    )

    cx = RegionComplex(
        topology_tag=atlas.topology_tag,
        n=n,
        chi={"plus": int(chi_plus), "minus": int(chi_minus)},
        components={"plus": len(plus_regions), "minus": len(minus_regions)},
        n_boundary_cycles=int(n_cycles),
        regions=regions,
        totals={
            "nodes": int(n_nodes),
            "edges": int(n_edges),
            "faces": int(n_faces_total),
            "crossings": int(n_cross),
            "subfaces": int(len(sub_label)),
        },
    )
    if sum(r.chi for r in cx.regions) != chi_m:
        raise GluingError("per-region chi does not sum to chi(M)")
    if curves is not None and n_cycles != len(curves):
        cx.totals["cycle_mismatch"] = len(curves)
    return cx


def _edge_between(edge_nodes, face_edge_ids, na, nb):
    for e in face_edge_ids:
        a, b = edge_nodes[int(e)]
        if {int(a), int(b)} == {na, nb}:
            return int(e)
    raise GluingError("no edge between adjacent corners")


def _region_summaries(
    sign,
    edge_nodes,
    uncrossed_edges,
    edge_face,
    crossed_face_mask,
    face_label,
    comp,
    elem_label,
    active,
    elem_area,
    sub_sides,
    chord_of_sub,
    sub_corner_nodes,
    n_faces_total,
    flat_c,
    flat_cf,
):
    """Per-region (V, E, F) by restricted counting; fan-connectivity around a
    node guarantees a unique region per (node, its own sign)."""
    n_nodes = len(sign)
    # region of each node: any active incident face of the node's sign
    node_region = -np.ones(n_nodes, dtype=int)
    ok = active[flat_cf] & (face_label[flat_cf] == sign[flat_c])
    node_region[flat_c[ok]] = comp[flat_cf[ok]]
    # orphans: all incident faces crossed -> use subface corner membership
    for sid0, corners in enumerate(sub_corner_nodes):
        sid = n_faces_total + sid0
        for c in corners:
            if node_region[c] < 0:
                node_region[c] = comp[sid]

    # region of each whole edge
    fa = edge_face[:, 0]
    bulk_edge = uncrossed_edges & ~crossed_face_mask[fa]
    edge_region = -np.ones(len(edge_nodes), dtype=int)
    edge_region[bulk_edge] = comp[fa[bulk_edge]]
    for key, owners in sub_sides.items():
        if key[0] == "w":
            edge_region[key[1]] = comp[owners[0]]
    # halves: one per label side per crossed edge
    half_regions = []  # region ids, one entry per half
    for key, owners in sub_sides.items():
        if key[0] == "h":
            half_regions.append(comp[owners[0]])
    half_regions = np.array(half_regions, dtype=int)

    # chords and crossings belong to both adjacent regions
    chord_regions = []  # (region_a, region_b) per chord
    for _, sa, sb in chord_of_sub:
        chord_regions.append((comp[sa], comp[sb]))

    region_ids = np.unique(comp[active])
    out = []
    for rid in region_ids:
        V = int(np.sum(node_region == rid))
        E = int(np.sum(edge_region == rid)) + int(np.sum(half_regions == rid))
        F = int(np.sum((comp == rid) & active))
        area = float(np.sum(elem_area[(comp == rid) & active]))
        n_chd = 0
        cross_ids = set()
        cycles = set()
        for ci, (ra, rb) in enumerate(chord_regions):
            if rid in (ra, rb):
                n_chd += 1
                key = chord_of_sub[ci][0]
                cross_ids.update(key[1])
        E += n_chd
        V += len(cross_ids)
        # label of the region
        lab = bool(elem_label[active][comp[active] == rid][0])
        out.append(
            RegionInfo(
                label="plus" if lab else "minus",
                chi=V - E + F,
                area=area,
                n_faces=F,
                boundary_cycles=0,  # filled below
            )
        )
    # boundary cycle counts per region
    if chord_of_sub:
        xa = np.array([k[1][0] for k, _, _ in chord_of_sub])
        xb = np.array([k[1][1] for k, _, _ in chord_of_sub])
        n_cross = int(max(xa.max(), xb.max())) + 1
        g2 = coo_matrix((np.ones(len(xa)), (xa, xb)), shape=(n_cross, n_cross))
        cyc = connected_components(g2, directed=False)[1]
        for ri, rid in enumerate(region_ids):
            touching = set()
            for ci, (ra, rb) in enumerate(chord_regions):
                if rid in (ra, rb):
                    touching.add(int(cyc[chord_of_sub[ci][0][1][0]]))
            out[ri].boundary_cycles = len(touching)
    return out


def refine_until_stable(h, curves=None, n0=64, max_doublings=4) -> RegionComplex:
    """Double the mesh until the integer outputs repeat; return the finer."""
    prev = None
    n = n0
    history = []
    for _ in range(max_doublings + 1):
        cx = build_complex(h, curves, n)
        key = (
            cx.chi["plus"],
            cx.chi["minus"],
            cx.components["plus"],
            cx.components["minus"],
            cx.n_boundary_cycles,
        )
        consistent = curves is None or cx.n_boundary_cycles == len(curves)
        history.append(key)
        if prev is not None and key == prev and consistent:
            return cx
        prev = key
        n *= 2
    raise NoStabilization(
        f"integer outputs did not stabilize after {max_doublings} doublings: {history}"
    )
