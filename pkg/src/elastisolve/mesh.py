"""Tetrahedral meshes for the three benchmark geometries and their DoF maps.

All meshes are built from structured parametric grids and split into
tetrahedra deterministically, so refinement levels are nested and results are
reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import permutations

import numpy as np

# local (a, b) vertex pairs of the six tetrahedron edges; P2 node order is
# 4 vertices followed by these edges
TET_EDGES = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])


@dataclass(frozen=True, eq=False)
class Mesh:
    """Tetrahedral mesh with tagged boundary facets.

    Parameters
    ----------
    vertices : ndarray, shape (n_vertices, 3)
    tetrahedra : ndarray of int, shape (n_cells, 4)
        Positively oriented vertex indices.
    facets : ndarray of int, shape (n_facets, 3)
        Boundary triangles, ordered so the right-hand normal points outward.
    facet_tags : ndarray of int, shape (n_facets,)
    region_labels : dict
        Region name -> integer tag.
    kind : str
        Generator name (``"cook"``, ``"bar"``, ``"ellipsoid"`` or ``"custom"``).
    geometry : dict
        Generator parameters.
    point_data : dict
        Extra per-vertex fields (the ellipsoid stores its transmural coordinate).
    """

    vertices: np.ndarray
    tetrahedra: np.ndarray
    facets: np.ndarray
    facet_tags: np.ndarray
    region_labels: dict
    kind: str = "custom"
    geometry: dict = field(default_factory=dict)
    point_data: dict = field(default_factory=dict)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_cells(self):
        return self.tetrahedra.shape[0]

    @cached_property
    def cell_volumes(self):
        return signed_volumes(self.vertices, self.tetrahedra)

    @cached_property
    def edges(self):
        """Unique sorted vertex pairs and the (n_cells, 6) cell-to-edge map."""
        pairs = np.sort(self.tetrahedra[:, TET_EDGES], axis=2).reshape(-1, 2)
        edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        return edges, inverse.reshape(self.n_cells, 6)

    @cached_property
    def facet_cells(self):
        """For every boundary facet, the owning cell and the local vertex it opposes."""
        cell, local = _locate_facets(self.tetrahedra, self.facets)
        return cell, local

    def facets_of(self, *regions):
        """Indices of facets carrying any of the given region names."""
        tags = [self.region_labels[r] for r in regions]
        return np.flatnonzero(np.isin(self.facet_tags, tags))

    def facet_normals(self, facet_ids=None):
        """Unit outward normals and areas of the selected facets."""
        f = self.facets if facet_ids is None else self.facets[facet_ids]
        x = self.vertices[f]
        cr = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
        norm = np.linalg.norm(cr, axis=1)
        return cr / norm[:, None], 0.5 * norm


@dataclass(frozen=True, eq=False)
class DofMap:
    """Global numbering of a Lagrange (P1, P2) or piecewise-constant (P0) space.

    Vector fields are numbered node-major (``node * components + c``) so the
    block size equals the number of components.
    """

    family: str
    components: int
    cell_nodes: np.ndarray
    node_coords: np.ndarray
    num_nodes: int
    mesh: Mesh = field(repr=False)

    @property
    def num_dofs(self):
        return self.num_nodes * self.components

    @property
    def block_size(self):
        return self.components

    @cached_property
    def cell_to_global(self):
        c = self.components
        dofs = self.cell_nodes[:, :, None] * c + np.arange(c)
        return dofs.reshape(self.cell_nodes.shape[0], -1)

    def nodes_on_facets(self, facet_ids):
        """Sorted node indices lying on the given boundary facets."""
        if self.family == "P0":
            raise ValueError("P0 has no facet nodes")
        f = self.mesh.facets[facet_ids]
        nodes = [f.ravel()]
        if self.family == "P2":
            edges, _ = self.mesh.edges
            nv = self.mesh.n_vertices
            keys = edges[:, 0] * nv + edges[:, 1]
            for a, b in ((0, 1), (0, 2), (1, 2)):
                pair = np.sort(f[:, [a, b]], axis=1)
                eid = np.searchsorted(keys, pair[:, 0] * nv + pair[:, 1])
                nodes.append(nv + eid)
        return np.unique(np.concatenate(nodes))

    def dofs_on_facets(self, facet_ids, components=None):
        nodes = self.nodes_on_facets(facet_ids)
        comps = np.arange(self.components) if components is None else np.asarray(components)
        return (nodes[:, None] * self.components + comps).ravel()


@dataclass(frozen=True, eq=False)
class FiberFrame:
    """Orthonormal fiber/sheet/normal triples, arrays of shape (..., 3)."""

    f0: np.ndarray
    s0: np.ndarray
    n0: np.ndarray

    def as_matrix(self):
        """Rotation with columns (f0, s0, n0), shape (..., 3, 3)."""
        return np.stack([self.f0, self.s0, self.n0], axis=-1)


def signed_volumes(vertices, tetrahedra):
    x = vertices[tetrahedra]
    return np.einsum("ij,ij->i", np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]), x[:, 3] - x[:, 0]) / 6.0


def _kuhn_cube():
    """Six tetrahedra of the unit cube, corners numbered by bits (x, y, z)."""
    tets = []
    for order in permutations(range(3)):
        path = [0]
        for axis in order:
            path.append(path[-1] | (1 << axis))
        tets.append(path)
    return np.array(tets)


def _structured_tets(nx, ny, nz):
    """Kuhn split of an nx*ny*nz grid; vertex (i, j, k) has index i + (nx+1)(j + (ny+1)k)."""
    i, j, k = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    base = (i + (nx + 1) * (j + (ny + 1) * k)).transpose(2, 1, 0).ravel()
    offsets = np.array([(b & 1) + (nx + 1) * (((b >> 1) & 1) + (ny + 1) * ((b >> 2) & 1)) for b in range(8)])
    kuhn = _kuhn_cube()
    return (base[:, None, None] + offsets[kuhn][None]).reshape(-1, 4)


def _grid_params(nx, ny, nz):
    g = np.meshgrid(np.linspace(0, 1, nx + 1), np.linspace(0, 1, ny + 1), np.linspace(0, 1, nz + 1), indexing="ij")
    return np.stack([a.transpose(2, 1, 0).ravel() for a in g], axis=1)


def _orient(vertices, tets):
    tets = tets.copy()
    neg = signed_volumes(vertices, tets) < 0
    tets[neg] = tets[neg][:, [0, 2, 1, 3]]
    return tets


def boundary_facets(tetrahedra, vertices):
    """Outward-oriented boundary triangles of a tetrahedral mesh."""
    faces = []
    for opp in range(4):
        faces.append(np.delete(tetrahedra, opp, axis=1))
    faces = np.concatenate(faces)
    opposite = np.concatenate([tetrahedra[:, opp] for opp in range(4)])
    key = np.sort(faces, axis=1)
    _, idx, counts = np.unique(key, axis=0, return_index=True, return_counts=True)
    keep = np.sort(idx[counts == 1])
    faces, opposite = faces[keep], opposite[keep]
    x = vertices[faces]
    n = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
    inward = np.einsum("ij,ij->i", n, vertices[opposite] - x[:, 0]) > 0
    faces[inward] = faces[inward][:, [0, 2, 1]]
    return faces


def _locate_facets(tetrahedra, facets):
    nc = tetrahedra.shape[0]
    keys = []
    for opp in range(4):
        keys.append(np.sort(np.delete(tetrahedra, opp, axis=1), axis=1))
    keys = np.concatenate(keys)
    owner = np.tile(np.arange(nc), 4)
    local = np.repeat(np.arange(4), nc)
    nv = int(tetrahedra.max()) + 1
    flat = (keys[:, 0] * nv + keys[:, 1]) * nv + keys[:, 2]
    order = np.argsort(flat, kind="stable")
    fk = np.sort(facets, axis=1)
    query = (fk[:, 0] * nv + fk[:, 1]) * nv + fk[:, 2]
    pos = order[np.searchsorted(flat[order], query)]
    return owner[pos], local[pos]


def _make_mesh(vertices, tets, tagger, labels, kind, geometry, point_data=None):
    tets = _orient(vertices, tets)
    facets = boundary_facets(tets, vertices)
    tags = tagger(facets)
    return Mesh(vertices, tets, facets, tags, labels, kind, geometry, point_data or {})


def build_cook_mesh(refinement, base_grid=(4, 4, 1), thickness=10.0):
    """Cook membrane: the 48/44/60 trapezoid extruded to ``thickness``.

    The base grid is multiplied by ``refinement`` in every direction, so the
    cell count scales with ``refinement**3``. Facets on x=0 are tagged
    ``clamped``, on x=48 ``loaded``; all others ``free``.
    """
    if refinement < 1:
        raise ValueError("refinement must be >= 1")
    nx, ny, nz = (int(b) * int(refinement) for b in base_grid)
    p = _grid_params(nx, ny, nz)
    xi, eta = p[:, 0], p[:, 1]
    ybot = 44.0 * xi
    ytop = 44.0 + 16.0 * xi
    verts = np.stack([48.0 * xi, ybot + eta * (ytop - ybot), thickness * p[:, 2]], axis=1)
    tets = _structured_tets(nx, ny, nz)
    labels = {"clamped": 1, "loaded": 2, "free": 3}

    def tagger(facets):
        xs = verts[facets][:, :, 0]
        tags = np.full(len(facets), labels["free"])
        tags[np.all(xs == 0.0, axis=1)] = labels["clamped"]
        tags[np.all(xs == 48.0, axis=1)] = labels["loaded"]
        return tags

    geometry = {"refinement": refinement, "base_grid": tuple(base_grid), "thickness": thickness}
    return _make_mesh(verts, tets, tagger, labels, "cook", geometry)


def build_bar_mesh(nx, ny, nz, Lz=1.0):
    """Unit-square cross-section bar of length ``Lz``; tags ``base``, ``top``, ``side``."""
    if min(nx, ny, nz) < 1 or not Lz > 0:
        raise ValueError("cell counts must be >= 1 and Lz > 0")
    p = _grid_params(nx, ny, nz)
    verts = p * np.array([1.0, 1.0, Lz])
    tets = _structured_tets(nx, ny, nz)
    labels = {"base": 1, "top": 2, "side": 3}

    def tagger(facets):
        zs = verts[facets][:, :, 2]
        tags = np.full(len(facets), labels["side"])
        tags[np.all(zs == 0.0, axis=1)] = labels["base"]
        tags[np.all(zs == Lz, axis=1)] = labels["top"]
        return tags

    return _make_mesh(verts, tets, tagger, labels, "bar", {"n": (nx, ny, nz), "Lz": Lz})


def _hex_disk(n):
    """Triangulated unit disk with 6 n^2 triangles, no singular vertex.

    Built from the triangular lattice inside a hexagon of radius n, with every
    hexagonal ring pushed radially onto a circle.
    """
    pts, index = [], {}
    for i in range(-n, n + 1):
        for j in range(-n, n + 1):
            if max(abs(i), abs(j), abs(i + j)) <= n:
                index[(i, j)] = len(pts)
                pts.append((i, j))
    ij = np.array(pts, dtype=float)
    xy = np.stack([ij[:, 0] + 0.5 * ij[:, 1], np.sqrt(3) / 2 * ij[:, 1]], axis=1)
    ring = np.max(np.abs(np.stack([ij[:, 0], ij[:, 1], ij.sum(1)], axis=1)), axis=1)
    r = np.linalg.norm(xy, axis=1)
    scale = np.divide(ring / n, r, out=np.zeros_like(r), where=r > 0)
    xy = xy * scale[:, None]
    tris = []
    # anchors one step outside the hexagon still own triangles of the second kind
    for i, j in ((i, j) for i in range(-n - 1, n + 1) for j in range(-n - 1, n + 1)):
        for cand in (((i, j), (i + 1, j), (i, j + 1)), ((i + 1, j), (i + 1, j + 1), (i, j + 1))):
            if all(v in index for v in cand):
                tris.append([index[v] for v in cand])
    return xy, ring / n, np.array(tris)


def _prism_tets(tris, n_layers, n_pts):
    """Split stacked triangular prisms into 3 tets each, conformingly.

    Bottom vertices are sorted by index; the quad face between i < j is cut
    along (j, i'), a rule both neighbouring prisms agree on.
    """
    tris = np.sort(tris, axis=1)
    out = []
    for k in range(n_layers):
        a, b, c = (tris[:, m] + k * n_pts for m in range(3))
        a2, b2, c2 = a + n_pts, b + n_pts, c + n_pts
        out += [np.stack(t, axis=1) for t in ((a, b, c, a2), (b, c, a2, b2), (c, a2, b2, c2))]
    return np.concatenate(out)


def ellipsoid_volume(a, c, h):
    """Volume of the spheroid x^2/a^2 + y^2/a^2 + z^2/c^2 <= 1 below the plane z = h."""
    return np.pi * a * a * ((h + c) - (h ** 3 + c ** 3) / (3 * c * c))


def build_ellipsoid_mesh(endo_radii=(0.017, 0.017, 0.060), wall_thickness=0.008,
                         truncation_height=0.02, refinement=1, base_rings=8, base_layers=1):
    """Truncated prolate-spheroid shell (idealized left ventricle).

    The shell is parameterized by a disk coordinate (apex at the centre, base
    plane on the rim) and a transmural coordinate t in [0, 1]. Facets are
    tagged ``endo`` (t=0), ``epi`` (t=1) and ``base`` (z = truncation_height).
    """
    a, b, c = endo_radii
    if min(a, b, c) <= 0 or wall_thickness <= 0:
        raise ValueError("radii and wall thickness must be positive")
    if a != b:
        raise ValueError("only prolate spheroids (equal short semi-axes) are supported")
    if not -c < truncation_height < c:
        raise ValueError("truncation plane must cut the endocardium")
    n = base_rings * int(refinement)
    nt = base_layers * int(refinement)
    xy, rho, tris = _hex_disk(n)
    npts = len(xy)
    phi = np.arctan2(xy[:, 1], xy[:, 0])
    t = np.repeat(np.linspace(0.0, 1.0, nt + 1), npts)
    rho_all = np.tile(rho, nt + 1)
    phi_all = np.tile(phi, nt + 1)
    ra = a + t * wall_thickness
    rc = c + t * wall_thickness
    u_base = np.arccos(truncation_height / rc)
    u = np.pi - rho_all * (np.pi - u_base)
    verts = np.stack([ra * np.sin(u) * np.cos(phi_all), ra * np.sin(u) * np.sin(phi_all), rc * np.cos(u)], axis=1)
    rim = rho_all == 1.0
    verts[rim, 2] = truncation_height
    tets = _prism_tets(tris, nt, npts)
    labels = {"endo": 1, "epi": 2, "base": 3}

    def tagger(facets):
        tf = t[facets]
        tags = np.full(len(facets), labels["base"])
        tags[np.all(tf == 0.0, axis=1)] = labels["endo"]
        tags[np.all(tf == 1.0, axis=1)] = labels["epi"]
        return tags

    geometry = {"endo_radii": tuple(endo_radii), "wall_thickness": wall_thickness,
                "truncation_height": truncation_height, "refinement": refinement}
    return _make_mesh(verts, tets, tagger, labels, "ellipsoid", geometry,
                      {"transmural": t, "disk_radius": rho_all})


def build_dof_map(mesh, family, components):
    """Number the nodes of a P1, P2 or P0 space on ``mesh``."""
    if family not in ("P1", "P2", "P0"):
        raise ValueError(f"unknown family {family!r}")
    if components not in (1, 3):
        raise ValueError("components must be 1 or 3")
    if family == "P0":
        if components != 1:
            raise ValueError("vector-valued P0 is not supported")
        cells = np.arange(mesh.n_cells)[:, None]
        centroids = mesh.vertices[mesh.tetrahedra].mean(axis=1)
        return DofMap("P0", 1, cells, centroids, mesh.n_cells, mesh)
    if family == "P1":
        return DofMap("P1", components, mesh.tetrahedra, mesh.vertices, mesh.n_vertices, mesh)
    edges, cell_edges = mesh.edges
    nv = mesh.n_vertices
    nodes = np.hstack([mesh.tetrahedra, nv + cell_edges])
    mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    return DofMap("P2", components, nodes, np.vstack([mesh.vertices, mids]), nv + len(edges), mesh)


def _ellipsoid_frame(x, t, geometry, helix_endo, helix_epi):
    a, _, c = geometry["endo_radii"]
    w = geometry["wall_thickness"]
    ra = a + t * w
    rc = c + t * w
    rxy = np.hypot(x[..., 0], x[..., 1])
    if np.any(rxy == 0):
        raise ValueError("fiber frame is undefined on the long axis")
    cosphi, sinphi = x[..., 0] / rxy, x[..., 1] / rxy
    su, cu = rxy / ra, x[..., 2] / rc
    nrm = np.hypot(su, cu)
    su, cu = su / nrm, cu / nrm
    circ = np.stack([-sinphi, cosphi, np.zeros_like(cosphi)], axis=-1)
    longi = np.stack([ra * cu * cosphi, ra * cu * sinphi, -rc * su], axis=-1)
    longi /= np.linalg.norm(longi, axis=-1, keepdims=True)
    alpha = np.deg2rad(helix_endo + t * (helix_epi - helix_endo))
    ca, sa = np.cos(alpha)[..., None], np.sin(alpha)[..., None]
    f0 = ca * circ + sa * longi
    s0 = -sa * circ + ca * longi
    n0 = np.cross(f0, s0)
    return FiberFrame(f0, s0, n0)


def fiber_field(mesh, helix_endo=60.0, helix_epi=-60.0, barycentric=None):
    """Analytic helix fiber frames at points given in cell barycentric coordinates.

    The helix angle (degrees) varies linearly with the transmural coordinate.
    ``barycentric`` has shape (n_points, 4); the default is the cell centroid.
    Returns a FiberFrame with arrays of shape (n_cells, n_points, 3).
    """
    if mesh.kind != "ellipsoid":
        raise ValueError("fiber_field requires an ellipsoid mesh")
    lam = np.full((1, 4), 0.25) if barycentric is None else np.atleast_2d(barycentric)
    tv = mesh.point_data["transmural"][mesh.tetrahedra]
    t = tv @ lam.T
    x = np.einsum("qa,cai->cqi", lam, mesh.vertices[mesh.tetrahedra])
    return _ellipsoid_frame(x, t, mesh.geometry, helix_endo, helix_epi)


def write_vtk(path, mesh, point_data=None, cell_data=None, title="elastisolve mesh"):
    """Write a legacy ASCII VTK unstructured grid.

    Tetrahedra come first, followed by the boundary facets as triangles so the
    facet tags can be stored as cell data (``facet_tag`` is -1 on volume cells).
    Point data arrays of shape (n_vertices,) or (n_vertices, 3) are written as
    scalars or vectors; cell data arrays are per tetrahedron.
    """
    nv, nc, nf = mesh.n_vertices, mesh.n_cells, len(mesh.facets)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {nv} double"]
    lines += [" ".join(repr(float(v)) for v in row) for row in mesh.vertices]
    lines.append(f"CELLS {nc + nf} {5 * nc + 4 * nf}")
    lines += ["4 " + " ".join(map(str, row)) for row in mesh.tetrahedra]
    lines += ["3 " + " ".join(map(str, row)) for row in mesh.facets]
    lines.append(f"CELL_TYPES {nc + nf}")
    lines += ["10"] * nc + ["5"] * nf
    lines.append(f"CELL_DATA {nc + nf}")
    lines += ["SCALARS facet_tag int 1", "LOOKUP_TABLE default"]
    lines += ["-1"] * nc + [str(int(t)) for t in mesh.facet_tags]
    for name, values in (cell_data or {}).items():
        values = np.asarray(values, dtype=float)
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [repr(float(v)) for v in values] + ["0.0"] * nf
    if point_data:
        lines.append(f"POINT_DATA {nv}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            if values.ndim == 2:
                lines.append(f"VECTORS {name} double")
                lines += [" ".join(repr(float(v)) for v in row) for row in values[:nv]]
            else:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [repr(float(v)) for v in values[:nv]]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
