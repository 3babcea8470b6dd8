"""Tetrahedral meshes, layered-sphere generation and electrode patches.

Coordinates are in millimetres.  The sphere generator builds an octahedral
surface triangulation with integer vertex keys, stacks it radially and
splits every prism into three tetrahedra.  The integer keys make the
triangulation, and therefore the whole volume mesh, exactly symmetric
under reflection through each coordinate plane.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "MeshError",
    "TetMesh",
    "ElectrodePatch",
    "generate_layered_sphere",
    "attach_electrode",
    "p1_gradients",
    "tet_gradients",
    "tet_volumes",
    "triangle_areas",
    "check_patches",
    "mirror_maps",
    "write_mesh",
    "read_mesh",
]

DEGENERATE_VOLUME = 1e-12  # mm^3


class MeshError(ValueError):
    """Invalid mesh input or geometry."""


@dataclass(frozen=True, eq=False)
class ElectrodePatch:
    label: str
    tri_indices: np.ndarray
    area: float
    center: np.ndarray

    def __post_init__(self):
        if len(self.tri_indices) == 0:
            raise MeshError(f"electrode patch {self.label!r} has no triangles")


@dataclass(frozen=True, eq=False)
class TetMesh:
    nodes: np.ndarray  # (N, 3) float
    tets: np.ndarray  # (M, 4) int, positively oriented
    compartment: np.ndarray  # (M,) int
    boundary_tris: np.ndarray  # (K, 3) int, outward oriented
    boundary_owner: np.ndarray  # (K,) int tet index
    patches: tuple = field(default_factory=tuple)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    def patch(self, label: str) -> ElectrodePatch:
        for p in self.patches:
            if p.label == label:
                return p
        raise KeyError(f"no electrode patch labelled {label!r}")

    def with_patches(self, patches: Sequence[ElectrodePatch]) -> "TetMesh":
        patches = tuple(patches)
        check_patches(self, patches)
        return TetMesh(self.nodes, self.tets, self.compartment,
                       self.boundary_tris, self.boundary_owner, patches)

    def tet_centroids(self) -> np.ndarray:
        return self.nodes[self.tets].mean(axis=1)

    def tet_diameters(self) -> np.ndarray:
        """Longest edge of every tet."""
        x = self.nodes[self.tets]
        d = [np.linalg.norm(x[:, i] - x[:, j], axis=1)
             for i in range(4) for j in range(i + 1, 4)]
        return np.max(d, axis=0)

    def patch_nodes(self, label: str) -> np.ndarray:
        return np.unique(self.boundary_tris[self.patch(label).tri_indices])

    def validate(self) -> None:
        n = self.n_nodes
        if self.tets.min() < 0 or self.tets.max() >= n:
            raise MeshError("tet node index out of range")
        if len(self.boundary_tris) and (self.boundary_tris.min() < 0
                                        or self.boundary_tris.max() >= n):
            raise MeshError("boundary triangle node index out of range")
        vol = tet_volumes(self.nodes, self.tets)
        if np.any(vol <= 0):
            raise MeshError(f"{int(np.sum(vol <= 0))} tets have nonpositive volume")
        faces = _boundary_faces(self.tets)
        have = {tuple(sorted(t)) for t in self.boundary_tris.tolist()}
        if have != set(faces):
            raise MeshError("boundary triangles do not match the boundary faces of the tets")
        for t, owner in zip(self.boundary_tris, self.boundary_owner):
            if not set(t.tolist()) <= set(self.tets[owner].tolist()):
                raise MeshError("boundary triangle not a face of its owning tet")
        check_patches(self, self.patches)


# -- geometry ---------------------------------------------------------------

def tet_volumes(nodes, tets) -> np.ndarray:
    x = nodes[tets]
    jac = np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0], x[:, 3] - x[:, 0]], axis=-1)
    return np.linalg.det(jac) / 6.0


def triangle_areas(nodes, tris) -> np.ndarray:
    x = nodes[tris]
    return 0.5 * np.linalg.norm(np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]), axis=1)


def tet_gradients(nodes, tets):
    """Barycentric basis gradients for every tet.

    Returns ``(grads, volumes)`` with ``grads`` of shape ``(M, 4, 3)`` in 1/mm.
    """
    x = nodes[tets]
    # rows of jac are edge vectors; grads of psi_1..3 are the columns of inv(jac)
    jac = np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0], x[:, 3] - x[:, 0]], axis=1)
    det = np.linalg.det(jac)
    vol = det / 6.0
    if np.any(np.abs(vol) < DEGENERATE_VOLUME):
        bad = int(np.argmin(np.abs(vol)))
        raise MeshError(f"degenerate tet {bad} (volume {vol[bad]:.3e} mm^3)")
    inv = np.linalg.inv(jac)
    g = np.empty((len(tets), 4, 3))
    g[:, 1:, :] = np.swapaxes(inv, 1, 2)
    g[:, 0, :] = -g[:, 1:, :].sum(axis=1)
    return g, vol


def p1_gradients(mesh: TetMesh, tet_index: int) -> np.ndarray:
    """Constant gradients of the four P1 basis functions on one tet, shape (4, 3)."""
    g, _ = tet_gradients(mesh.nodes, mesh.tets[tet_index:tet_index + 1])
    return g[0]


def _boundary_faces(tets) -> dict:
    """Map sorted face tuple -> (tet index, local opposite vertex) for faces seen once."""
    count: dict = {}
    for t, tet in enumerate(tets.tolist()):
        for k in range(4):
            f = tuple(sorted(tet[:k] + tet[k + 1:]))
            if f in count:
                count[f] = None
            else:
                count[f] = (t, k)
    return {f: v for f, v in count.items() if v is not None}


# -- layered sphere -----------------------------------------------------------

def _octasphere(n: int):
    """Octahedral triangulation of the unit sphere at subdivision level ``n``.

    Returns ``(points, tris, keys)`` where ``keys[i]`` are the integer lattice
    coordinates of vertex i (|a|+|b|+|c| = n).  Triangles are outward oriented.
    """
    index: dict = {}
    keys = []

    def vid(a, b, c):
        k = (a, b, c)
        if k not in index:
            index[k] = len(keys)
            keys.append(k)
        return index[k]

    tris = []
    for sx in (1, -1):
        for sy in (1, -1):
            for sz in (1, -1):
                def v(i, j):
                    return vid(sx * i, sy * j, sz * (n - i - j))
                for i in range(n):
                    for j in range(n - i):
                        tris.append((v(i, j), v(i + 1, j), v(i, j + 1)))
                        if i + j <= n - 2:
                            tris.append((v(i + 1, j), v(i + 1, j + 1), v(i, j + 1)))
    keys = np.array(keys, dtype=np.int64)
    tris = np.array(tris, dtype=np.int64)
    p = keys.astype(float)
    # sine warp evens out triangle sizes before projecting (max/min area ~1.7)
    q = np.sin(0.5 * np.pi * p / n)
    pts = q / np.linalg.norm(q, axis=1, keepdims=True)
    x = pts[tris]
    normal = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
    flip = np.einsum("ij,ij->i", normal, x.mean(axis=1)) < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return pts, tris, keys


def _radial_levels(radii, h):
    levels = []
    core = radii[0]
    m = max(1, math.ceil(core / h - 1e-9))
    levels += [core * j / m for j in range(1, m + 1)]
    for r0, r1 in zip(radii[:-1], radii[1:]):
        m = max(1, math.ceil((r1 - r0) / h - 1e-9))
        levels += [r0 + (r1 - r0) * j / m for j in range(1, m + 1)]
    return levels


def generate_layered_sphere(radii: Sequence[float], compartment_ids: Sequence[int],
                            target_edge_len: float) -> TetMesh:
    """Conforming tet mesh of nested spherical shells.

    ``radii`` are the outer radii of the compartments listed innermost first.
    """
    radii = [float(r) for r in radii]
    if len(radii) < 1:
        raise MeshError("need at least one layer")
    if len(radii) != len(compartment_ids):
        raise MeshError("radii and compartment_ids differ in length")
    if radii[0] <= 0 or any(b <= a for a, b in zip(radii[:-1], radii[1:])):
        raise MeshError(f"radii must be positive and strictly increasing, got {radii}")
    h = float(target_edge_len)
    if not h > 0:
        raise MeshError("target_edge_len must be positive")
    thick = np.diff([0.0] + radii)
    if h > 2.0 * thick.min():
        raise MeshError(
            f"target edge {h} mm exceeds twice the thinnest shell ({thick.min()} mm)")

    n = max(1, math.ceil(0.5 * math.pi * radii[-1] / h))
    pts, tris, keys = _octasphere(n)
    ns = len(pts)
    levels = _radial_levels(radii, h)

    nodes = [np.zeros((1, 3))] + [r * pts for r in levels]
    nodes = np.concatenate(nodes)

    def g(level, s):  # global node of surface vertex s on radial level (1-based)
        return 1 + (level - 1) * ns + s

    # order the surface vertices by a reflection-invariant key so that
    # mirrored prisms are split identically
    absk = np.abs(keys)
    order = np.lexsort((absk[:, 2], absk[:, 1], absk[:, 0]))
    rank = np.empty(ns, dtype=np.int64)
    rank[order] = np.arange(ns)
    srt = np.argsort(rank[tris], axis=1, kind="stable")
    tri_sorted = np.take_along_axis(tris, srt, axis=1)
    a, b, c = tri_sorted.T

    blocks = [np.column_stack([g(1, a), g(1, b), g(1, c), np.zeros_like(a)])]
    layer_of = [np.zeros(len(tris), dtype=np.int64)]
    for lev in range(1, len(levels)):
        lo, hi = lev, lev + 1
        blocks.append(np.column_stack([g(lo, a), g(lo, b), g(lo, c), g(hi, c)]))
        blocks.append(np.column_stack([g(lo, a), g(lo, b), g(hi, b), g(hi, c)]))
        blocks.append(np.column_stack([g(lo, a), g(hi, a), g(hi, b), g(hi, c)]))
        layer_of += [np.full(len(tris), lev)] * 3
    tets = np.concatenate(blocks).astype(np.int64)
    layer_of = np.concatenate(layer_of)

    vol = tet_volumes(nodes, tets)
    neg = vol < 0
    tets[neg] = tets[neg][:, [0, 2, 1, 3]]

    # label by the shell containing the tet centroid
    mid = np.array([0.0] + levels)
    shell_r = 0.5 * (mid[layer_of] + mid[layer_of + 1])
    comp_idx = np.searchsorted(np.array(radii), shell_r)
    compartment = np.asarray(compartment_ids, dtype=np.int64)[comp_idx]

    top = len(levels)
    btris = np.column_stack([g(top, tris[:, 0]), g(top, tris[:, 1]), g(top, tris[:, 2])])
    nt = len(tris)
    owner = (1 + 3 * (len(levels) - 2)) * nt + 2 * nt + np.arange(nt) if len(levels) > 1 \
        else np.arange(nt)
    return TetMesh(nodes, tets, compartment, btris.astype(np.int64), owner.astype(np.int64))


# -- electrodes ---------------------------------------------------------------

def _ray_hit(nodes, tris, d):
    """Nearest intersection of the ray t*d (t > 0) with the triangles."""
    x = nodes[tris]
    e1 = x[:, 1] - x[:, 0]
    e2 = x[:, 2] - x[:, 0]
    pvec = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    ok = np.abs(det) > 1e-14
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = -x[:, 0]
    u = np.einsum("ij,ij->i", tvec, pvec) * inv
    qvec = np.cross(tvec, e1)
    v = (qvec @ d) * inv
    t = np.einsum("ij,ij->i", e2, qvec) * inv
    tol = 1e-12
    hit = ok & (u >= -tol) & (v >= -tol) & (u + v <= 1 + tol) & (t > 0)
    if not np.any(hit):
        return None
    return float(np.min(t[hit])) * d


def attach_electrode(mesh: TetMesh, center_direction, diameter: float, label: str) -> ElectrodePatch:
    """Select the boundary triangles forming a circular contact patch.

    Triangles whose centroids lie within geodesic distance ``diameter/2`` of
    the point where the ray along ``center_direction`` exits the mesh are
    taken.  Geodesic distance is measured on the sphere through that point.
    """
    d = np.asarray(center_direction, dtype=float)
    if d.shape != (3,) or abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise MeshError(f"electrode {label!r}: center_direction must be a unit 3-vector")
    if not diameter > 0:
        raise MeshError(f"electrode {label!r}: diameter must be positive")
    tris = mesh.boundary_tris
    areas = triangle_areas(mesh.nodes, tris)
    disc = 0.25 * math.pi * diameter ** 2
    if disc < areas.min():
        raise MeshError(
            f"electrode {label!r}: disc area {disc:.4g} mm^2 is smaller than any "
            f"boundary triangle ({areas.min():.4g} mm^2); mesh too coarse")
    center = _ray_hit(mesh.nodes, tris, d)
    if center is None:
        raise MeshError(f"electrode {label!r}: ray does not hit the boundary")
    rc = np.linalg.norm(center)
    cen = mesh.nodes[tris].mean(axis=1)
    cosang = (cen @ center) / (np.linalg.norm(cen, axis=1) * rc)
    geo = rc * np.arccos(np.clip(cosang, -1.0, 1.0))
    sel = np.flatnonzero(geo <= 0.5 * diameter)
    if len(sel) == 0:
        raise MeshError(f"electrode {label!r}: no boundary triangle inside the disc; mesh too coarse")
    return ElectrodePatch(label, sel, float(areas[sel].sum()), center)


def check_patches(mesh: TetMesh, patches) -> None:
    seen: dict = {}
    labels = set()
    for p in patches:
        if p.label in labels:
            raise MeshError(f"duplicate electrode label {p.label!r}")
        labels.add(p.label)
        if len(p.tri_indices) == 0:
            raise MeshError(f"electrode patch {p.label!r} has no triangles")
        if p.tri_indices.min() < 0 or p.tri_indices.max() >= len(mesh.boundary_tris):
            raise MeshError(f"electrode patch {p.label!r} references unknown triangles")
        for t in p.tri_indices.tolist():
            if t in seen:
                raise MeshError(f"patches {seen[t]!r} and {p.label!r} overlap at triangle {t}")
            seen[t] = p.label
        area = triangle_areas(mesh.nodes, mesh.boundary_tris[p.tri_indices]).sum()
        if abs(area - p.area) > 1e-12 * area:
            raise MeshError(f"electrode patch {p.label!r}: stored area disagrees with triangles")


def mirror_maps(mesh: TetMesh, axis: int = 0):
    """Node and tet permutations realising the reflection ``x[axis] -> -x[axis]``.

    Raises MeshError if the mesh is not symmetric under the reflection.
    """
    refl = mesh.nodes.copy()
    refl[:, axis] *= -1
    key = {tuple(np.round(p, 9)): i for i, p in enumerate(mesh.nodes.tolist())}
    try:
        node_map = np.array([key[tuple(np.round(p, 9))] for p in refl.tolist()])
    except KeyError as exc:
        raise MeshError("mesh nodes are not mirror symmetric") from exc
    tkey = {tuple(sorted(t)): i for i, t in enumerate(mesh.tets.tolist())}
    try:
        tet_map = np.array([tkey[tuple(sorted(t))] for t in node_map[mesh.tets].tolist()])
    except KeyError as exc:
        raise MeshError("mesh tets are not mirror symmetric") from exc
    return node_map, tet_map


# -- text format ------------------------------------------------------------

MESH_MAGIC = "ticem-mesh 1"


def _f(x: float) -> str:
    return repr(float(x))


def write_mesh(mesh: TetMesh, path) -> None:
    lines = [MESH_MAGIC,
             f"nodes {mesh.n_nodes}"]
    lines += [" ".join(_f(v) for v in p) for p in mesh.nodes.tolist()]
    lines.append(f"tets {mesh.n_tets}")
    lines += [f"{a} {b} {c} {d} {k}" for (a, b, c, d), k
              in zip(mesh.tets.tolist(), mesh.compartment.tolist())]
    lines.append(f"boundary {len(mesh.boundary_tris)}")
    lines += [f"{a} {b} {c} {o}" for (a, b, c), o
              in zip(mesh.boundary_tris.tolist(), mesh.boundary_owner.tolist())]
    lines.append(f"patches {len(mesh.patches)}")
    for p in mesh.patches:
        lines.append(f"patch {p.label} {len(p.tri_indices)} "
                     + " ".join(_f(v) for v in p.center.tolist()))
        lines.append(" ".join(str(t) for t in p.tri_indices.tolist()))
    lines.append("end")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path) -> TetMesh:
    with open(path, encoding="ascii") as fh:
        lines = fh.read().split("\n")
    it = iter(lines)

    def header(name):
        parts = next(it).split()
        if len(parts) != 2 or parts[0] != name:
            raise MeshError(f"{path}: expected '{name} <count>', got {' '.join(parts)!r}")
        return int(parts[1])

    if next(it).strip() != MESH_MAGIC:
        raise MeshError(f"{path}: not a ticem mesh file")
    n = header("nodes")
    nodes = np.array([[float(v) for v in next(it).split()] for _ in range(n)]).reshape(n, 3)
    m = header("tets")
    tt = np.array([[int(v) for v in next(it).split()] for _ in range(m)], dtype=np.int64).reshape(m, 5)
    k = header("boundary")
    bb = np.array([[int(v) for v in next(it).split()] for _ in range(k)], dtype=np.int64).reshape(k, 4)
    npatch = header("patches")
    patches = []
    tri_areas = triangle_areas(nodes, bb[:, :3])
    for _ in range(npatch):
        parts = next(it).split()
        if parts[0] != "patch":
            raise MeshError(f"{path}: malformed patch header")
        label, count = parts[1], int(parts[2])
        center = np.array([float(v) for v in parts[3:6]])
        idx = np.array([int(v) for v in next(it).split()], dtype=np.int64)
        if len(idx) != count:
            raise MeshError(f"{path}: patch {label!r} lists {len(idx)} of {count} triangles")
        patches.append(ElectrodePatch(label, idx, float(tri_areas[idx].sum()), center))
    if next(it).strip() != "end":
        raise MeshError(f"{path}: missing end marker")
    mesh = TetMesh(nodes, tt[:, :4], tt[:, 4], bb[:, :3], bb[:, 3])
    return mesh.with_patches(patches)
