"""Reference-configuration mesh, shape functions, quadrature, DOF layout and assembly."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

# Reference node coordinates of the trilinear hexahedron on [-1, 1]^3.
HEX8_REF = np.array(
    [
        [-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
        [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1],
    ],
    dtype=float,
)
TET4_REF = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)

# Local faces, ordered so the right-hand normal points out of the element.
HEX8_FACES = np.array(
    [
        [0, 3, 2, 1], [4, 5, 6, 7], [0, 1, 5, 4],
        [1, 2, 6, 5], [2, 3, 7, 6], [3, 0, 4, 7],
    ]
)
TET4_FACES = np.array([[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]])

NODES_PER_KIND = {"hex8": 8, "tet4": 4}
FACES_PER_KIND = {"hex8": HEX8_FACES, "tet4": TET4_FACES}
REF_VOLUME = {"hex8": 8.0, "tet4": 1.0 / 6.0}


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray


def quadrature(kind: str) -> QuadratureRule:
    if kind == "hex8":
        g = 1.0 / np.sqrt(3.0)
        pts = np.array([[i, j, k] for k in (-g, g) for j in (-g, g) for i in (-g, g)])
        return QuadratureRule(pts, np.ones(8))
    if kind == "tet4":
        a = (5.0 - np.sqrt(5.0)) / 20.0
        b = (5.0 + 3.0 * np.sqrt(5.0)) / 20.0
        pts = np.array([[a, a, a], [b, a, a], [a, b, a], [a, a, b]])
        return QuadratureRule(pts, np.full(4, 1.0 / 24.0))
    raise MeshError(f"unknown element kind '{kind}'")


def facet_quadrature(nfn: int) -> QuadratureRule:
    """Rule on the facet parameter domain: [-1,1]^2 for quads, unit triangle for tris."""
    if nfn == 4:
        g = 1.0 / np.sqrt(3.0)
        pts = np.array([[s, t] for t in (-g, g) for s in (-g, g)])
        return QuadratureRule(pts, np.ones(4))
    if nfn == 3:
        pts = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])
        return QuadratureRule(pts, np.full(3, 1 / 6))
    raise MeshError(f"unsupported facet with {nfn} nodes")


def _facet_shape(nfn: int, st: np.ndarray):
    s, t = st[..., 0], st[..., 1]
    if nfn == 4:
        sv = np.array([-1, 1, 1, -1.0])
        tv = np.array([-1, -1, 1, 1.0])
        n = 0.25 * (1 + s[..., None] * sv) * (1 + t[..., None] * tv)
        ds = 0.25 * sv * (1 + t[..., None] * tv)
        dt = 0.25 * tv * (1 + s[..., None] * sv)
        return n, ds, dt
    n = np.stack([1 - s - t, s, t], axis=-1)
    ones = np.ones_like(s)[..., None]
    ds = np.array([-1.0, 1.0, 0.0]) * ones
    dt = np.array([-1.0, 0.0, 1.0]) * ones
    return n, ds, dt


def shape_eval(kind: str, xi) -> tuple[np.ndarray, np.ndarray]:
    """Shape values (..., n) and reference gradients (..., n, 3) at points xi (..., 3)."""
    xi = np.asarray(xi, dtype=float)
    if kind == "hex8":
        r = HEX8_REF
        a = 1 + xi[..., None, 0] * r[:, 0]
        b = 1 + xi[..., None, 1] * r[:, 1]
        c = 1 + xi[..., None, 2] * r[:, 2]
        n = 0.125 * a * b * c
        dn = np.stack(
            [0.125 * r[:, 0] * b * c, 0.125 * a * r[:, 1] * c, 0.125 * a * b * r[:, 2]],
            axis=-1,
        )
        return n, dn
    if kind == "tet4":
        x, y, z = xi[..., 0], xi[..., 1], xi[..., 2]
        n = np.stack([1 - x - y - z, x, y, z], axis=-1)
        dn = np.broadcast_to(
            np.array([[-1.0, -1, -1], [1, 0, 0], [0, 1, 0], [0, 0, 1]]),
            xi.shape[:-1] + (4, 3),
        ).copy()
        return n, dn
    raise MeshError(f"unknown element kind '{kind}'")


def physical_gradients(kind: str, xi, coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients dN/dX and reference Jacobian determinant.

    ``coords`` is (..., n, 3) for one or many elements; ``xi`` a single point or a
    batch broadcastable against the leading axes.
    """
    _, dn = shape_eval(kind, xi)
    jac = np.einsum("...ni,...nj->...ij", coords, dn)
    det = np.linalg.det(jac)
    if np.any(det <= 0.0):
        bad = np.argwhere(np.atleast_1d(det) <= 0.0)
        raise MeshError(f"inverted element (non-positive reference Jacobian) at {bad[:5].tolist()}")
    grad = np.einsum("...nj,...ji->...ni", dn, np.linalg.inv(jac))
    return grad, det


@dataclass
class ElementBlock:
    kind: str
    conn: np.ndarray
    region: np.ndarray


@dataclass
class FacetSet:
    """Boundary facets of one kind: nodes, parent element and local face index, tag."""

    nodes: np.ndarray
    block: np.ndarray
    element: np.ndarray
    face: np.ndarray
    tag: np.ndarray


@dataclass
class Mesh:
    nodes: np.ndarray
    blocks: list[ElementBlock]
    facets: dict[int, FacetSet] = field(default_factory=dict)
    tag_names: dict[str, int] = field(default_factory=dict)
    node_sets: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return sum(len(b.conn) for b in self.blocks)

    def tag_id(self, name: str | int) -> int:
        if isinstance(name, (int, np.integer)):
            return int(name)
        if name not in self.tag_names:
            raise MeshError(f"unknown region tag '{name}'")
        return self.tag_names[name]

    def region_nodes(self, name: str) -> np.ndarray:
        """Nodes of a named node set or of all facets carrying the tag."""
        if name in self.node_sets:
            return self.node_sets[name]
        tid = self.tag_id(name)
        parts = [fs.nodes[fs.tag == tid].ravel() for fs in self.facets.values()]
        nodes = np.unique(np.concatenate(parts)) if parts else np.zeros(0, int)
        if nodes.size == 0:
            raise MeshError(f"region '{name}' has no nodes")
        return nodes

    def validate(self) -> None:
        for b in self.blocks:
            if b.conn.size and (b.conn.min() < 0 or b.conn.max() >= self.n_nodes):
                raise MeshError("element node index out of bounds")
            q = quadrature(b.kind)
            for xi in q.points:
                physical_gradients(b.kind, xi, self.nodes[b.conn])

    def volume(self) -> float:
        vol = 0.0
        for b in self.blocks:
            q = quadrature(b.kind)
            for xi, w in zip(q.points, q.weights):
                _, det = physical_gradients(b.kind, xi, self.nodes[b.conn])
                vol += w * det.sum()
        return float(vol)


def boundary_faces(blocks: list[ElementBlock]) -> list[tuple[int, int, int, tuple[int, ...]]]:
    """Faces that belong to exactly one element: (block, element, local face, nodes)."""
    seen: dict[tuple[int, ...], list] = {}
    for bi, b in enumerate(blocks):
        faces = FACES_PER_KIND[b.kind]
        for ei, row in enumerate(b.conn):
            for fi, loc in enumerate(faces):
                nodes = tuple(int(v) for v in row[loc])
                seen.setdefault(tuple(sorted(nodes)), []).append((bi, ei, fi, nodes))
    out = []
    for key in sorted(seen):
        if len(seen[key]) == 1:
            out.append(seen[key][0])
    return out


def build_facets(blocks, faces: list, tags: list[int]) -> dict[int, FacetSet]:
    grouped: dict[int, list] = {}
    for (bi, ei, fi, nodes), tag in zip(faces, tags):
        grouped.setdefault(len(nodes), []).append((nodes, bi, ei, fi, tag))
    out = {}
    for nfn, rows in sorted(grouped.items()):
        out[nfn] = FacetSet(
            nodes=np.array([r[0] for r in rows], dtype=np.int64),
            block=np.array([r[1] for r in rows], dtype=np.int64),
            element=np.array([r[2] for r in rows], dtype=np.int64),
            face=np.array([r[3] for r in rows], dtype=np.int64),
            tag=np.array([r[4] for r in rows], dtype=np.int64),
        )
    return out


def tag_boundary(
    nodes: np.ndarray, blocks: list[ElementBlock], rules: list[tuple[str, Callable]]
) -> tuple[dict[int, FacetSet], dict[str, int]]:
    """Tag boundary faces with the first rule whose predicate holds at the face centroid."""
    faces = boundary_faces(blocks)
    names = {name: i + 1 for i, (name, _) in enumerate(rules)}
    names.setdefault("boundary", 0)
    tags = []
    for _, _, _, fn in faces:
        c = nodes[list(fn)].mean(axis=0)
        tag = 0
        for name, pred in rules:
            if pred(c):
                tag = names[name]
                break
        tags.append(tag)
    return build_facets(blocks, faces, tags), names


@dataclass
class FacetGeometry:
    """Facet quadrature data evaluated through the parent element."""

    kind: str
    block: int
    element: np.ndarray     # (F,) parent element indices within the block
    conn: np.ndarray        # (F, n) parent element connectivity
    N: np.ndarray           # (F, Q, n) parent shape values
    G: np.ndarray           # (F, Q, n, 3) parent dN/dX
    normal: np.ndarray      # (F, Q, 3) unit outward reference normal
    wdA: np.ndarray         # (F, Q) weight * reference area element


def facet_geometry(mesh: Mesh, tag) -> list[FacetGeometry]:
    tid = mesh.tag_id(tag)
    out = []
    for nfn, fs in mesh.facets.items():
        rule = facet_quadrature(nfn)
        ns, ds, dt = _facet_shape(nfn, rule.points)
        for bi, b in enumerate(mesh.blocks):
            sel = (fs.tag == tid) & (fs.block == bi)
            if not np.any(sel):
                continue
            el = fs.element[sel]
            fidx = fs.face[sel]
            loc = FACES_PER_KIND[b.kind][fidx]                   # (F, nfn)
            ref = (HEX8_REF if b.kind == "hex8" else TET4_REF)[loc]  # (F, nfn, 3)
            xi = np.einsum("qk,fkd->fqd", ns, ref)
            coords = mesh.nodes[b.conn[el]]
            fcoords = np.take_along_axis(coords, loc[..., None], axis=1)
            ts = np.einsum("qk,fkd->fqd", ds, fcoords)
            tt = np.einsum("qk,fkd->fqd", dt, fcoords)
            nvec = np.cross(ts, tt)
            area = np.linalg.norm(nvec, axis=-1)
            normal = nvec / area[..., None]
            outward = np.einsum(
                "fqd,fd->fq", normal, fcoords.mean(axis=1) - coords.mean(axis=1)
            )
            normal = np.where(outward[..., None] < 0, -normal, normal)
            n_par, _ = shape_eval(b.kind, xi)
            grad, _ = physical_gradients(b.kind, xi, coords[:, None])
            out.append(
                FacetGeometry(
                    b.kind, bi, el, b.conn[el], n_par, grad, normal, area * rule.weights
                )
            )
    return out


@dataclass
class BlockGeometry:
    """Volume quadrature data of one element block in the reference configuration."""

    kind: str
    conn: np.ndarray   # (E, n)
    N: np.ndarray      # (Q, n)
    G: np.ndarray      # (E, Q, n, 3)
    wdet: np.ndarray   # (E, Q)
    X: np.ndarray      # (E, Q, 3) quadrature point coordinates


def block_geometry(mesh: Mesh) -> list[BlockGeometry]:
    out = []
    for b in mesh.blocks:
        q = quadrature(b.kind)
        n, _ = shape_eval(b.kind, q.points)
        coords = mesh.nodes[b.conn]
        try:
            grad, det = physical_gradients(b.kind, q.points, coords[:, None])
        except MeshError as exc:
            raise MeshError(f"{exc} in block of kind {b.kind}") from None
        x = np.einsum("qn,end->eqd", n, coords)
        out.append(BlockGeometry(b.kind, b.conn, n, grad, det * q.weights, x))
    return out


FIELDS = (("Phi", 1), ("Theta", 1), ("U", 3))


@dataclass
class DofLayout:
    """Field-major layout v = (Phi, Theta, U) with U interleaved by node.

    Constraints map (field, node, component) to a callable of time.
    """

    node_count: int
    constraints: dict[tuple[str, int, int], Callable[[float], float]] = field(default_factory=dict)

    @property
    def n_dofs(self) -> int:
        return 5 * self.node_count

    def offset(self, name: str) -> int:
        return {"Phi": 0, "Theta": self.node_count, "U": 2 * self.node_count}[name]

    def dof(self, name: str, node, comp=0):
        node = np.asarray(node)
        if name == "U":
            return 2 * self.node_count + 3 * node + comp
        return self.offset(name) + node

    def field_slice(self, name: str) -> slice:
        n = self.node_count
        return {"Phi": slice(0, n), "Theta": slice(n, 2 * n), "U": slice(2 * n, 5 * n)}[name]

    def element_dofs(self, conn: np.ndarray, name: str) -> np.ndarray:
        if name == "U":
            return (2 * self.node_count + 3 * conn[..., None] + np.arange(3)).reshape(
                conn.shape[:-1] + (-1,)
            )
        return self.offset(name) + conn

    def constrain(self, name: str, node: int, comp: int, value) -> None:
        if not 0 <= int(node) < self.node_count:
            raise MeshError(f"constraint on nonexistent node {node}")
        if name == "U" and comp not in (0, 1, 2) or name != "U" and comp != 0:
            raise MeshError(f"constraint on nonexistent component {name}[{comp}]")
        fn = value if callable(value) else (lambda t, v=float(value): v)
        self.constraints[(name, int(node), int(comp))] = fn

    def release(self, name: str, node: int, comp: int) -> None:
        self.constraints.pop((name, int(node), int(comp)), None)

    def constrained(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Sorted constrained DOF indices and their prescribed values at t."""
        if not self.constraints:
            return np.zeros(0, np.int64), np.zeros(0)
        items = sorted(
            (int(self.dof(f, n, c)), fn(t)) for (f, n, c), fn in self.constraints.items()
        )
        return np.array([i for i, _ in items], np.int64), np.array([v for _, v in items], float)


def scatter_matrix(n: int, rows: list[np.ndarray], cols: list[np.ndarray], vals: list[np.ndarray]) -> sp.csr_matrix:
    """Sum local blocks into a CSR matrix with sorted column indices."""
    if not rows:
        return sp.csr_matrix((n, n))
    r = np.concatenate([np.broadcast_to(a[..., :, None], v.shape).ravel() for a, v in zip(rows, vals)])
    c = np.concatenate([np.broadcast_to(b[..., None, :], v.shape).ravel() for b, v in zip(cols, vals)])
    v = np.concatenate([x.ravel() for x in vals])
    m = sp.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()
    m.sum_duplicates()
    m.sort_indices()
    return m


def scatter_vector(n: int, idx: list[np.ndarray], vals: list[np.ndarray]) -> np.ndarray:
    out = np.zeros(n)
    for i, v in zip(idx, vals):
        np.add.at(out, i.ravel(), v.ravel())
    return out


def assemble(mesh: Mesh, layout: DofLayout, kernel, fields=("U",)):
    """Generic gather/scatter assembly.

    ``kernel(block_geometry)`` returns ``(Ke, fe)`` with shapes (E, d, d) and (E, d),
    either may be None, where d is the number of element DOFs for ``fields``.
    """
    n = layout.n_dofs
    rows, vals, vidx, vvals = [], [], [], []
    for bg in block_geometry(mesh):
        dofs = np.concatenate([layout.element_dofs(bg.conn, f) for f in fields], axis=1)
        ke, fe = kernel(bg)
        if ke is not None:
            if ke.shape != (len(bg.conn), dofs.shape[1], dofs.shape[1]):
                raise MeshError(f"kernel matrix shape {ke.shape} does not match element DOFs {dofs.shape}")
            rows.append(dofs)
            vals.append(ke)
        if fe is not None:
            if fe.shape != dofs.shape:
                raise MeshError(f"kernel vector shape {fe.shape} does not match element DOFs {dofs.shape}")
            vidx.append(dofs)
            vvals.append(fe)
    mat = scatter_matrix(n, rows, rows, vals) if rows else None
    vec = scatter_vector(n, vidx, vvals) if vidx else None
    return mat, vec


@dataclass
class ReducedSystem:
    K: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray

    def expand(self, x_free: np.ndarray) -> np.ndarray:
        x = np.zeros(len(self.free) + len(self.fixed))
        x[self.free] = x_free
        x[self.fixed] = self.fixed_values
        return x


def apply_dirichlet(K: sp.spmatrix, f: np.ndarray, layout: DofLayout, t: float) -> ReducedSystem:
    """Eliminate constrained DOFs from K x = f with lifting of the right-hand side."""
    K = sp.csr_matrix(K)
    fixed, values = layout.constrained(t)
    if fixed.size and (fixed.min() < 0 or fixed.max() >= K.shape[0]):
        raise MeshError("constraint on nonexistent DOF")
    mask = np.ones(K.shape[0], bool)
    mask[fixed] = False
    free = np.flatnonzero(mask)
    kff = K[free][:, free]
    rhs = f[free] - K[free][:, fixed] @ values
    return ReducedSystem(kff.tocsr(), rhs, free, fixed, values)


# ---------------------------------------------------------------- generators


def box_mesh(lengths=(1e-3, 1e-3, 1e-3), divisions=(1, 1, 1), origin=(0.0, 0.0, 0.0)) -> Mesh:
    """Structured hex8 box with faces tagged xmin..zmax."""
    lx, ly, lz = lengths
    nx, ny, nz = divisions
    xs = origin[0] + np.linspace(0, lx, nx + 1)
    ys = origin[1] + np.linspace(0, ly, ny + 1)
    zs = origin[2] + np.linspace(0, lz, nz + 1)
    zz, yy, xx = np.meshgrid(zs, ys, xs, indexing="ij")
    nodes = np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1)

    def nid(i, j, k):
        return (k * (ny + 1) + j) * (nx + 1) + i

    conn = []
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                conn.append(
                    [nid(i, j, k), nid(i + 1, j, k), nid(i + 1, j + 1, k), nid(i, j + 1, k),
                     nid(i, j, k + 1), nid(i + 1, j, k + 1), nid(i + 1, j + 1, k + 1), nid(i, j + 1, k + 1)]
                )
    blocks = [ElementBlock("hex8", np.array(conn, np.int64), np.zeros(len(conn), np.int64))]
    lo = np.array(origin, float)
    hi = lo + np.array(lengths, float)
    tol = 1e-9 * max(lengths)
    rules = []
    for d, ax in enumerate("xyz"):
        rules.append((f"{ax}min", lambda c, d=d: abs(c[d] - lo[d]) < tol))
        rules.append((f"{ax}max", lambda c, d=d: abs(c[d] - hi[d]) < tol))
    facets, names = tag_boundary(nodes, blocks, rules)
    mesh = Mesh(nodes, blocks, facets, names)
    mesh.node_sets["origin"] = np.array([nid(0, 0, 0)])
    mesh.node_sets["corner_x"] = np.array([nid(nx, 0, 0)])
    mesh.node_sets["corner_z"] = np.array([nid(0, 0, nz)])
    return mesh


def unit_cube(size: float = 1e-3) -> Mesh:
    return box_mesh((size, size, size), (1, 1, 1))


def _axis_frame(axis: str):
    """Permutation mapping (radial-a, radial-b, axial) local coords to global xyz."""
    return {"z": (0, 1, 2), "y": (2, 0, 1), "x": (1, 2, 0)}[axis]


def tube_mesh(
    outer_radius: float = 1.5e-3,
    thickness: float = 0.25e-3,
    length: float = 20e-3,
    n_circ: int = 16,
    n_axial: int = 20,
    n_thick: int = 1,
    axis: str = "y",
) -> Mesh:
    """Hex8 tube; facets tagged inner, outer, bottom (axial 0) and top (axial = length)."""
    ri = outer_radius - thickness
    rad = np.linspace(ri, outer_radius, n_thick + 1)
    ang = 2 * np.pi * np.arange(n_circ) / n_circ
    ax = np.linspace(0.0, length, n_axial + 1)
    perm = _axis_frame(axis)
    pts = []
    for a in ax:
        for r in rad:
            for th in ang:
                local = (r * np.cos(th), r * np.sin(th), a)
                p = [0.0, 0.0, 0.0]
                for k in range(3):
                    p[perm[k]] = local[k]
                pts.append(p)
    nodes = np.array(pts)

    def nid(i, j, k):  # circ, radial, axial
        return (k * (n_thick + 1) + j) * n_circ + (i % n_circ)

    conn = []
    for k in range(n_axial):
        for j in range(n_thick):
            for i in range(n_circ):
                conn.append(
                    [nid(i, j, k), nid(i, j + 1, k), nid(i + 1, j + 1, k), nid(i + 1, j, k),
                     nid(i, j, k + 1), nid(i, j + 1, k + 1), nid(i + 1, j + 1, k + 1), nid(i + 1, j, k + 1)]
                )
    conn = np.array(conn, np.int64)
    conn = _fix_orientation(nodes, conn)
    blocks = [ElementBlock("hex8", conn, np.zeros(len(conn), np.int64))]
    pa, pb, pz = perm
    tol = 1e-6 * thickness
    r_mid_lo = ri + 0.5 * thickness / n_thick
    r_mid_hi = outer_radius - 0.5 * thickness / n_thick

    def radius(c):
        return np.hypot(c[pa], c[pb])

    rules = [
        ("bottom", lambda c: abs(c[pz]) < tol * length / thickness),
        ("top", lambda c: abs(c[pz] - length) < tol * length / thickness),
        ("inner", lambda c: radius(c) < r_mid_lo),
        ("outer", lambda c: radius(c) > r_mid_hi),
    ]
    facets, names = tag_boundary(nodes, blocks, rules)
    mesh = Mesh(nodes, blocks, facets, names)
    # inner bottom-ring nodes a quarter turn apart, for statically determinate supports
    for deg, i in (("000", 0), ("090", n_circ // 4), ("180", n_circ // 2)):
        mesh.node_sets[f"anchor_{deg}"] = np.array([nid(i, 0, 0)])
    return mesh


def solid_cylinder_mesh(
    radius: float = 1e-3,
    length: float = 1e-3,
    n_radial: int = 8,
    n_circ: int = 16,
    n_axial: int = 3,
    axis: str = "z",
    core_fraction: float = 0.35,
) -> Mesh:
    """O-grid hex8 cylinder: a square core of (n_circ/4)^2 cells and n_radial ring layers."""
    if n_circ % 4:
        raise MeshError("n_circ must be a multiple of 4")
    m = n_circ // 4
    h = core_fraction * radius
    perm = _axis_frame(axis)
    # 2D nodes: core grid then rings
    pts2, index = [], {}

    def add(key, p):
        index[key] = len(pts2)
        pts2.append(p)

    s = np.linspace(-h, h, m + 1)
    for j in range(m + 1):
        for i in range(m + 1):
            add(("c", i, j), (s[i], s[j]))
    # perimeter of the core square, counterclockwise from (-h, -h)
    perim = [("c", i, 0) for i in range(m)] + [("c", m, j) for j in range(m)]
    perim += [("c", i, m) for i in range(m, 0, -1)] + [("c", 0, j) for j in range(m, 0, -1)]
    # equal arcs on the rim (start at the (-h, -h) corner) keep every chord as short as possible
    angles = -0.75 * np.pi + 2 * np.pi * np.arange(len(perim)) / len(perim)
    for layer in range(1, n_radial + 1):
        t = layer / n_radial
        for p, key in enumerate(perim):
            sq = np.array(pts2[index[key]])
            circ = radius * np.array([np.cos(angles[p]), np.sin(angles[p])])
            add(("r", p, layer), tuple((1 - t) * sq + t * circ))
    for p, key in enumerate(perim):
        index[("r", p, 0)] = index[key]
    quads = []
    for j in range(m):
        for i in range(m):
            quads.append([index[("c", i, j)], index[("c", i + 1, j)], index[("c", i + 1, j + 1)], index[("c", i, j + 1)]])
    n_per = len(perim)
    for layer in range(n_radial):
        for p in range(n_per):
            q = (p + 1) % n_per
            quads.append([index[("r", p, layer)], index[("r", p, layer + 1)], index[("r", q, layer + 1)], index[("r", q, layer)]])
    pts2 = np.array(pts2)
    quads = np.array(quads)
    n2 = len(pts2)
    ax = np.linspace(0.0, length, n_axial + 1)
    nodes = np.zeros((n2 * (n_axial + 1), 3))
    for k, a in enumerate(ax):
        nodes[k * n2:(k + 1) * n2, perm[0]] = pts2[:, 0]
        nodes[k * n2:(k + 1) * n2, perm[1]] = pts2[:, 1]
        nodes[k * n2:(k + 1) * n2, perm[2]] = a
    conn = []
    for k in range(n_axial):
        for qd in quads:
            conn.append(list(qd + k * n2) + list(qd + (k + 1) * n2))
    conn = _fix_orientation(nodes, np.array(conn, np.int64))
    blocks = [ElementBlock("hex8", conn, np.zeros(len(conn), np.int64))]
    tol = 1e-9 * max(radius, length)
    pz = perm[2]
    rules = [
        ("bottom", lambda c: abs(c[pz]) < tol),
        ("top", lambda c: abs(c[pz] - length) < tol),
        ("lateral", lambda c: True),
    ]
    facets, names = tag_boundary(nodes, blocks, rules)
    return Mesh(nodes, blocks, facets, names)


def _fix_orientation(nodes: np.ndarray, conn: np.ndarray) -> np.ndarray:
    """Swap bottom/top layers of hexes whose reference Jacobian is negative."""
    _, dn = shape_eval("hex8", np.zeros(3))
    jac = np.einsum("eni,nj->eij", nodes[conn], dn)
    neg = np.linalg.det(jac) < 0
    conn = conn.copy()
    conn[neg] = conn[neg][:, [4, 5, 6, 7, 0, 1, 2, 3]]
    return conn


# ---------------------------------------------------------------- gmsh reader

_GMSH_KIND = {4: "tet4", 5: "hex8"}
_GMSH_FACET = {2: 3, 3: 4}
# gmsh hexahedron ordering coincides with HEX8_REF; tetrahedron with TET4_REF.


def read_gmsh(path) -> Mesh:
    """Read an ASCII MSH 2.x file: tet4/hex8 volumes, tri/quad physical boundary facets."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh]
    sections: dict[str, list[str]] = {}
    i = 0
    while i < len(lines):
        if lines[i].startswith("$") and not lines[i].startswith("$End"):
            name = lines[i][1:]
            j = lines.index("$End" + name, i)
            sections[name] = lines[i + 1:j]
            i = j
        i += 1
    fmt = sections.get("MeshFormat", ["0"])[0].split()
    if not fmt[0].startswith("2"):
        raise MeshError(f"{path}: only MSH version 2 ASCII is supported, got {fmt[0]}")
    if len(fmt) > 1 and fmt[1] != "0":
        raise MeshError(f"{path}: binary MSH files are not supported")
    if "Nodes" not in sections or "Elements" not in sections:
        raise MeshError(f"{path}: missing $Nodes or $Elements section")
    names = {}
    for ln in sections.get("PhysicalNames", [])[1:]:
        dim, tag, name = ln.split(maxsplit=2)
        names[name.strip('"')] = int(tag)
    raw = sections["Nodes"]
    ids, coords = [], []
    for ln in raw[1:1 + int(raw[0])]:
        p = ln.split()
        ids.append(int(p[0]))
        coords.append([float(v) for v in p[1:4]])
    remap = {nid: k for k, nid in enumerate(ids)}
    nodes = np.array(coords)
    vols: dict[str, list] = {}
    regions: dict[str, list] = {}
    facet_rows = []
    raw = sections["Elements"]
    for ln in raw[1:1 + int(raw[0])]:
        p = [int(v) for v in ln.split()]
        etype, ntags = p[1], p[2]
        tags = p[3:3 + ntags]
        enodes = [remap[v] for v in p[3 + ntags:]]
        phys = tags[0] if tags else 0
        if etype in _GMSH_KIND:
            kind = _GMSH_KIND[etype]
            vols.setdefault(kind, []).append(enodes)
            regions.setdefault(kind, []).append(phys)
        elif etype in _GMSH_FACET:
            facet_rows.append((tuple(enodes), phys))
    if not vols:
        raise MeshError(f"{path}: no tetrahedra or hexahedra found")
    blocks = [
        ElementBlock(k, np.array(vols[k], np.int64), np.array(regions[k], np.int64))
        for k in sorted(vols)
    ]
    for b in blocks:
        if b.kind == "hex8":
            b.conn = _fix_orientation(nodes, b.conn)
        else:
            d = nodes[b.conn]
            vol = np.einsum("ei,ei->e", np.cross(d[:, 1] - d[:, 0], d[:, 2] - d[:, 0]), d[:, 3] - d[:, 0])
            b.conn[vol < 0] = b.conn[vol < 0][:, [0, 2, 1, 3]]
    faces = boundary_faces(blocks)
    lookup = {tuple(sorted(fn)): tag for fn, tag in facet_rows}
    tags = [lookup.get(tuple(sorted(f[3])), 0) for f in faces]
    mesh = Mesh(nodes, blocks, build_facets(blocks, faces, tags), names)
    mesh.validate()
    return mesh
