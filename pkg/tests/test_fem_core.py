import numpy as np
import pytest
import scipy.sparse as sp

from smpfem.fem_core import (
    DofLayout, MeshError, apply_dirichlet, assemble, block_geometry, box_mesh, physical_gradients,
    quadrature, read_gmsh, shape_eval, tube_mesh, unit_cube,
)


def test_hex8_center_values():
    n, _ = shape_eval("hex8", np.zeros(3))
    assert np.allclose(n, 1 / 8)


def test_tet4_vertex_interpolates():
    n, _ = shape_eval("tet4", np.zeros(3))
    assert np.array_equal(n, [1, 0, 0, 0])


def test_unknown_kind():
    with pytest.raises(MeshError):
        shape_eval("wedge6", np.zeros(3))


@pytest.mark.parametrize("kind", ["hex8", "tet4"])
def test_partition_of_unity(kind, rng):
    xi = rng.uniform(-1, 1, (100, 3)) if kind == "hex8" else rng.dirichlet(np.ones(4), 100)[:, :3]
    n, dn = shape_eval(kind, xi)
    assert np.allclose(n.sum(axis=1), 1.0, atol=1e-14)
    assert np.allclose(dn.sum(axis=1), 0.0, atol=1e-14)


def test_reference_jacobian():
    m = unit_cube(1.0)
    _, det = physical_gradients("hex8", np.array([0.3, -0.2, 0.1]), m.nodes[m.blocks[0].conn[0]])
    assert det == pytest.approx(1 / 8)
    stretched = m.nodes * [2, 1, 1]
    _, det = physical_gradients("hex8", np.zeros(3), stretched[m.blocks[0].conn[0]])
    assert det == pytest.approx(2 / 8)


def test_inverted_element_rejected():
    m = unit_cube(1.0)
    c = m.nodes[m.blocks[0].conn[0]] * [-1, 1, 1]
    with pytest.raises(MeshError, match="inverted"):
        physical_gradients("hex8", np.zeros(3), c)


def test_patch_test_on_distorted_mesh(rng):
    m = box_mesh((1.0, 1.0, 1.0), (2, 2, 2))
    interior = np.all((m.nodes > 0.1) & (m.nodes < 0.9), axis=1)
    m.nodes[interior] += rng.uniform(-0.15, 0.15, (interior.sum(), 3))
    f = m.nodes @ np.array([2.0, 3.0, -1.0]) + 0.5
    for bg in block_geometry(m):
        g = np.einsum("eqnd,en->eqd", bg.G, f[bg.conn])
        assert np.allclose(g, [2, 3, -1], atol=1e-12)


def test_assemble_identity_counts_multiplicity():
    m = box_mesh((2.0, 1.0, 1.0), (2, 1, 1))
    lay = DofLayout(m.n_nodes)
    K, _ = assemble(m, lay, lambda bg: (np.broadcast_to(np.eye(8), (len(bg.conn), 8, 8)).copy(), None), fields=("Theta",))
    diag = K.diagonal()[lay.field_slice("Theta")]
    shared = np.isclose(m.nodes[:, 0], 1.0)
    assert np.all(diag[shared] == 2) and np.all(diag[~shared] == 1)


def test_mass_kernel_total_volume():
    m = box_mesh((1e-3, 2e-3, 3e-3), (2, 3, 1))
    lay = DofLayout(m.n_nodes)
    rho = 270.0

    def kernel(bg):
        return rho * np.einsum("eq,qa,qb->eab", bg.wdet, bg.N, bg.N), None

    K, _ = assemble(m, lay, kernel, fields=("Theta",))
    assert K.sum() == pytest.approx(rho * 6e-9, rel=1e-10)
    assert m.volume() == pytest.approx(6e-9, rel=1e-12)


def test_laplace_constant_nullspace():
    m = unit_cube(1.0)
    lay = DofLayout(m.n_nodes)
    K, _ = assemble(m, lay, lambda bg: (np.einsum("eqak,eqbk,eq->eab", bg.G, bg.G, bg.wdet), None), fields=("Phi",))
    assert np.allclose(K @ np.r_[np.ones(m.n_nodes), np.zeros(4 * m.n_nodes)], 0, atol=1e-13)


def test_assembly_order_independent(rng):
    m = box_mesh((1.0, 1.0, 1.0), (2, 2, 1))
    lay = DofLayout(m.n_nodes)

    def kern(bg):
        return np.einsum("eqak,eqbk,eq->eab", bg.G, bg.G, bg.wdet), None

    K1, _ = assemble(m, lay, kern, fields=("Phi",))
    m.blocks[0].conn = m.blocks[0].conn[rng.permutation(len(m.blocks[0].conn))]
    K2, _ = assemble(m, lay, kern, fields=("Phi",))
    assert abs(K1 - K2).max() <= 1e-13


def test_kernel_shape_mismatch():
    m = unit_cube()
    with pytest.raises(MeshError):
        assemble(m, DofLayout(m.n_nodes), lambda bg: (np.zeros((1, 3, 3)), None))


def test_layout_counts_and_constraints():
    lay = DofLayout(4)
    assert lay.n_dofs == 20
    assert lay.dof("U", 2, 1) == 8 + 7
    lay.constrain("Theta", 1, 0, 5.0)
    lay.constrain("Theta", 1, 0, 6.0)
    idx, vals = lay.constrained(0.0)
    assert idx.tolist() == [5] and vals.tolist() == [6.0]
    with pytest.raises(MeshError):
        lay.constrain("U", 9, 0, 0.0)
    with pytest.raises(MeshError):
        lay.constrain("U", 0, 3, 0.0)


def test_dirichlet_bar():
    # 1D chain of three nodes stored on Phi: u(0) = 0, u(2) = d
    K = sp.csr_matrix(np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1.0]]))
    lay = DofLayout(3)
    lay.node_count = 3
    lay.constrain("Phi", 0, 0, 0.0)
    lay.constrain("Phi", 2, 0, 0.4)
    red = apply_dirichlet(sp.block_diag([K, sp.identity(12)]).tocsr(), np.zeros(15), lay, 0.0)
    x = red.expand(sp.linalg.spsolve(red.K.tocsc(), red.rhs))
    assert np.allclose(x[:3], [0, 0.2, 0.4])


def test_dirichlet_all_and_none():
    lay = DofLayout(1)
    K = sp.identity(5, format="csr")
    red = apply_dirichlet(K, np.arange(5.0), lay, 0.0)
    assert red.K.shape == (5, 5) and np.array_equal(red.rhs, np.arange(5.0))
    for f, c in [("Phi", 0), ("Theta", 0), ("U", 0), ("U", 1), ("U", 2)]:
        lay.constrain(f, 0, c, 1.5)
    red = apply_dirichlet(K, np.zeros(5), lay, 0.0)
    assert red.K.shape == (0, 0)
    assert np.all(red.expand(np.zeros(0)) == 1.5)


def test_facets_unique_and_tagged():
    m = tube_mesh(n_circ=8, n_axial=3)
    fs = m.facets[4]
    assert len({tuple(sorted(r)) for r in fs.nodes}) == len(fs.nodes)
    assert set(m.tag_names) >= {"inner", "outer", "top", "bottom"}
    assert np.all(fs.tag > 0)
    m.validate()


def test_tube_anchor_nodes():
    m = tube_mesh(n_circ=16, n_axial=2)
    for name in ("anchor_000", "anchor_090", "anchor_180"):
        (a,) = m.node_sets[name]
        assert m.nodes[a, 1] == 0.0
        assert np.hypot(m.nodes[a, 0], m.nodes[a, 2]) == pytest.approx(1.25e-3)


GMSH = """$MeshFormat
2.2 0 8
$EndMeshFormat
$PhysicalNames
2
2 1 "base"
3 2 "body"
$EndPhysicalNames
$Nodes
4
1 0 0 0
2 1 0 0
3 0 1 0
4 0 0 1
$EndNodes
$Elements
2
1 2 2 1 1 1 3 2
2 4 2 2 1 1 2 3 4
$EndElements
"""


def test_read_gmsh_tet(tmp_path):
    p = tmp_path / "t.msh"
    p.write_text(GMSH)
    m = read_gmsh(p)
    assert m.n_elements == 1 and m.volume() == pytest.approx(1 / 6)
    assert sorted(m.region_nodes("base").tolist()) == [0, 1, 2]


def test_read_gmsh_rejects_msh4(tmp_path):
    p = tmp_path / "t.msh"
    p.write_text(GMSH.replace("2.2 0 8", "4.1 0 8"))
    with pytest.raises(MeshError, match="version 2"):
        read_gmsh(p)


def test_quadrature_weights():
    assert quadrature("hex8").weights.sum() == pytest.approx(8.0)
    assert quadrature("tet4").weights.sum() == pytest.approx(1 / 6)
