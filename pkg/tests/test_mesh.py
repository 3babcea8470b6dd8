import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ticem.mesh import (ElectrodePatch, MeshError, TetMesh, attach_electrode, check_patches,
                        generate_layered_sphere, mirror_maps, p1_gradients, read_mesh,
                        tet_gradients, tet_volumes, triangle_areas, write_mesh)


def test_three_layer_contract():
    m = generate_layered_sphere([8, 9, 10], [4, 2, 1], 2.0)
    assert set(np.unique(m.compartment).tolist()) == {1, 2, 4}
    assert np.all(tet_volumes(m.nodes, m.tets) > 0)
    m.validate()


def test_compartments_follow_radii():
    m = generate_layered_sphere([8, 9, 10], [4, 2, 1], 1.5)
    r = np.linalg.norm(m.tet_centroids(), axis=1)
    assert np.all(r[m.compartment == 4] < 8 + 1e-9)
    assert np.all((r[m.compartment == 2] > 7.5) & (r[m.compartment == 2] < 9 + 1e-9))
    assert np.all(r[m.compartment == 1] > 8.5)


@pytest.mark.parametrize("h, tol", [(3.0, 0.05), (2.0, 0.03), (1.0, 0.01)])
def test_ball_volume_converges(h, tol):
    m = generate_layered_sphere([10.0], [5], h)
    vol = tet_volumes(m.nodes, m.tets).sum()
    exact = 4.0 / 3.0 * math.pi * 1000.0
    assert abs(vol - exact) / exact < tol


def test_boundary_area_and_orientation():
    m = generate_layered_sphere([10.0], [5], 1.5)
    tris = m.nodes[m.boundary_tris]
    normal = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    assert np.all(np.einsum("ij,ij->i", normal, tris.mean(axis=1)) > 0)
    area = triangle_areas(m.nodes, m.boundary_tris).sum()
    assert abs(area - 400 * math.pi) / (400 * math.pi) < 0.02
    assert np.allclose(np.linalg.norm(m.nodes[np.unique(m.boundary_tris)], axis=1), 10.0)


@pytest.mark.parametrize("radii, ids", [([10, 9], [1, 2]), ([], []), ([10], [1, 2]),
                                        ([-1, 2], [1, 2])])
def test_bad_radii(radii, ids):
    with pytest.raises(MeshError):
        generate_layered_sphere(radii, ids, 1.0)


def test_edge_too_large_for_shell():
    with pytest.raises(MeshError, match="thinnest shell"):
        generate_layered_sphere([8, 9, 10], [4, 2, 1], 2.5)
    with pytest.raises(MeshError):
        generate_layered_sphere([10], [1], 0.0)


def test_mirror_symmetry_all_axes():
    m = generate_layered_sphere([8, 9, 10], [4, 2, 1], 2.0)
    cen = m.tet_centroids()
    for axis in range(3):
        nmap, tmap = mirror_maps(m, axis)
        refl = m.nodes.copy()
        refl[:, axis] *= -1
        assert np.allclose(m.nodes[nmap], refl, atol=1e-9)
        c = cen.copy()
        c[:, axis] *= -1
        assert np.allclose(cen[tmap], c, atol=1e-9)
        assert np.array_equal(m.compartment[tmap], m.compartment)


def test_mirror_maps_reject_asymmetric():
    m = generate_layered_sphere([10], [1], 3.0)
    nodes = m.nodes.copy()
    nodes[1] += [0.1, 0.0, 0.0]
    bad = TetMesh(nodes, m.tets, m.compartment, m.boundary_tris, m.boundary_owner)
    with pytest.raises(MeshError):
        mirror_maps(bad, 0)


def test_patch_area_matches_disc():
    m = generate_layered_sphere([40.0], [1], 2.5)
    p = attach_electrode(m, np.array([1.0, 0, 0]), 10.0, "E")
    assert abs(p.area - 25 * math.pi) / (25 * math.pi) < 0.15
    assert np.allclose(p.center, [40.0, 0, 0], atol=1e-9)


def test_patch_errors():
    m = generate_layered_sphere([10.0], [1], 2.0)
    with pytest.raises(MeshError, match="too coarse"):
        attach_electrode(m, np.array([1.0, 0, 0]), 0.1, "tiny")
    with pytest.raises(MeshError, match="unit"):
        attach_electrode(m, np.array([2.0, 0, 0]), 4.0, "x")
    a = attach_electrode(m, np.array([1.0, 0, 0]), 4.0, "a")
    b = attach_electrode(m, np.array([1.0, 0.05, 0]) / np.linalg.norm([1.0, 0.05, 0]), 4.0, "b")
    with pytest.raises(MeshError, match="overlap"):
        check_patches(m, [a, b])
    with pytest.raises(MeshError, match="duplicate"):
        m.with_patches([a, ElectrodePatch("a", b.tri_indices, b.area, b.center)])
    with pytest.raises(MeshError, match="area"):
        m.with_patches([ElectrodePatch("a", a.tri_indices, a.area * 1.01, a.center)])


def test_patch_nodes_on_surface(mesh15):
    for p in mesh15.patches:
        nodes = mesh15.patch_nodes(p.label)
        assert np.allclose(np.linalg.norm(mesh15.nodes[nodes], axis=1), 10.0)


def test_p1_gradients_interpolate_linear_functions():
    m = generate_layered_sphere([10.0], [1], 3.0)
    rng = np.random.default_rng(0)
    a = rng.normal(size=3)
    u = m.nodes @ a + 0.7
    grads, _ = tet_gradients(m.nodes, m.tets)
    g = np.einsum("eik,ei->ek", grads, u[m.tets])
    assert np.allclose(g, a, atol=1e-12)
    assert np.allclose(grads.sum(axis=1), 0.0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=12, max_size=12), st.integers(0, 3))
def test_p1_gradient_finite_differences(coords, i):
    x = np.array(coords).reshape(4, 3)
    vol = np.linalg.det(x[1:] - x[0]) / 6.0
    if abs(vol) < 1e-2:
        return
    if vol < 0:
        x[[0, 1]] = x[[1, 0]]
    m = TetMesh(x, np.array([[0, 1, 2, 3]]), np.array([1]), np.zeros((0, 3), int),
                np.zeros(0, int))
    g = p1_gradients(m, 0)[i]
    # psi_i is the barycentric coordinate; evaluate it by solving for weights
    def psi(p):
        M = np.vstack([x.T, np.ones(4)])
        return np.linalg.solve(M, np.append(p, 1.0))[i]
    c = x.mean(axis=0)
    h = 1e-4
    fd = np.array([(psi(c + h * e) - psi(c - h * e)) / (2 * h) for e in np.eye(3)])
    assert np.allclose(fd, g, rtol=1e-6, atol=1e-6 * np.abs(g).max())


def test_degenerate_tet_rejected():
    x = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], float)
    with pytest.raises(MeshError):
        tet_gradients(x, np.array([[0, 1, 2, 3]]))


def test_mesh_file_round_trip(tmp_path, mesh20):
    p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
    write_mesh(mesh20, p1)
    m = read_mesh(p1)
    write_mesh(m, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert np.array_equal(m.nodes, mesh20.nodes)
    assert np.array_equal(m.tets, mesh20.tets)
    assert [p.label for p in m.patches] == [p.label for p in mesh20.patches]
    assert all(a.area == b.area for a, b in zip(m.patches, mesh20.patches))


def test_mesh_file_errors(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("not a mesh\n")
    with pytest.raises(MeshError):
        read_mesh(p)
