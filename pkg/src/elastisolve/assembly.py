"""Finite element assembly: energy, residual and Jacobian of hyperelastic problems.

Element integrals are evaluated for fixed-size chunks of cells with vectorized
numpy kernels. Chunks may be processed by a thread pool, but their results are
always reduced in chunk order, so assembled arrays do not depend on the number
of threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .exceptions import NonPhysicalStateError
from .linalg.sparse import BlockOperator, CsrPattern
from .materials import eval_active_stress
from .mesh import TET_EDGES, fiber_field
from .quadrature import tetrahedron_rule, triangle_rule

_I3 = np.eye(3)


# --------------------------------------------------------------------------
# shape functions


def shape_functions(order, bary):
    """Lagrange basis on a tetrahedron in terms of barycentric coordinates.

    Parameters
    ----------
    order : {1, 2}
    bary : ndarray, shape (..., 4)

    Returns
    -------
    N : ndarray, shape (..., n_nodes)
    dN : ndarray, shape (..., n_nodes, 4)
        Derivatives with respect to the four barycentric coordinates.
    """
    lam = np.asarray(bary, dtype=np.float64)
    lead = lam.shape[:-1]
    if order == 1:
        return lam.copy(), np.broadcast_to(_eye4(), lead + (4, 4)).copy()
    if order != 2:
        raise ValueError("order must be 1 or 2")
    N = np.empty(lead + (10,))
    dN = np.zeros(lead + (10, 4))
    for a in range(4):
        N[..., a] = lam[..., a] * (2.0 * lam[..., a] - 1.0)
        dN[..., a, a] = 4.0 * lam[..., a] - 1.0
    for e, (i, j) in enumerate(TET_EDGES):
        N[..., 4 + e] = 4.0 * lam[..., i] * lam[..., j]
        dN[..., 4 + e, i] = 4.0 * lam[..., j]
        dN[..., 4 + e, j] = 4.0 * lam[..., i]
    return N, dN


def _eye4():
    return np.eye(4)


def barycentric_gradients(vertices, tetrahedra):
    """Gradients of the barycentric coordinates, shape (n_cells, 4, 3), and volumes."""
    x = vertices[tetrahedra]
    Jg = np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0], x[:, 3] - x[:, 0]], axis=2)
    det = np.linalg.det(Jg)
    inv = np.linalg.inv(Jg)
    grads = np.empty((len(tetrahedra), 4, 3))
    grads[:, 1:] = inv
    grads[:, 0] = -inv.sum(axis=1)
    return grads, det / 6.0


# --------------------------------------------------------------------------
# boundary conditions and problem data


@dataclass(frozen=True)
class DirichletBC:
    """Prescribed displacement on a region.

    ``value`` maps reference node coordinates (n, 3) to displacements (n, 3);
    None means homogeneous data. Only ``components`` are constrained.
    """

    region: str
    value: Optional[Callable[[np.ndarray], np.ndarray]] = None
    components: tuple = (0, 1, 2)


@dataclass(frozen=True)
class NeumannBC:
    """Traction ``t`` per reference area; ``follower`` scales it by the deformed area."""

    region: str
    traction: tuple = (0.0, 0.0, 0.0)
    follower: bool = False


@dataclass(frozen=True)
class RobinBC:
    """Elastic and viscous support K d + C v split into normal and tangential parts."""

    region: str
    k_perp: float = 2e5
    k_par: float = 2e4
    c_perp: float = 2e4
    c_par: float = 2e3


@dataclass(frozen=True)
class BoundaryConditions:
    dirichlet: tuple = ()
    neumann: tuple = ()
    robin: tuple = ()

    def __post_init__(self):
        regions = [bc.region for group in (self.dirichlet, self.neumann, self.robin) for bc in group]
        dup = {r for r in regions if regions.count(r) > 1}
        if dup:
            raise ValueError(f"regions used by more than one condition: {sorted(dup)}")


def rotation_displacement(angle, center=(0.5, 0.5)):
    """Displacement of a rigid rotation by ``angle`` about the z-parallel axis through ``center``."""
    c, s = np.cos(angle), np.sin(angle)
    cx, cy = center

    def value(X):
        dx, dy = X[:, 0] - cx, X[:, 1] - cy
        u = np.zeros_like(X)
        u[:, 0] = c * dx - s * dy - dx
        u[:, 1] = s * dx + c * dy - dy
        return u

    return value


@dataclass
class DynamicState:
    """Newmark state at the last converged step."""

    d: np.ndarray
    v: np.ndarray
    a: np.ndarray
    dt: float = 0.008
    density: float = 1e3
    beta: float = 0.25
    gamma: float = 0.5
    time: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.density < 0:
            raise ValueError("density must be non-negative")
        if not 0 < self.beta <= 0.5:
            raise ValueError("beta must lie in (0, 0.5]")
        if not 0.5 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0.5, 1]")
        self.d = np.asarray(self.d, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        self.a = np.asarray(self.a, dtype=np.float64)
        if not self.d.shape == self.v.shape == self.a.shape:
            raise ValueError("d, v, a must have equal shapes")

    @classmethod
    def at_rest(cls, n, **kwargs):
        return cls(np.zeros(n), np.zeros(n), np.zeros(n), **kwargs)


def newmark_advance(state, d_new):
    """Velocity and acceleration implied by ``d_new`` under the Newmark scheme."""
    b, g, dt = state.beta, state.gamma, state.dt
    a_new = (d_new - state.d - dt * state.v - dt * dt * (0.5 - b) * state.a) / (b * dt * dt)
    v_new = state.v + dt * ((1.0 - g) * state.a + g * a_new)
    return v_new, a_new


@dataclass
class ProblemDefinition:
    """Everything needed to assemble one hyperelastic problem.

    Parameters
    ----------
    mesh : Mesh
    displacement_space : DofMap
        P1 or P2 vector space.
    material : object
        Wrapper with ``evaluate(F, p, frame, tangent)`` and ``mixed``/``needs_frame`` flags.
    bcs : BoundaryConditions
    body_force : array_like, shape (3,)
        Force per reference volume.
    pressure_space : DofMap, optional
        P0 scalar space, required iff the material is mixed.
    dynamic : DynamicState, optional
    activation : callable, optional
        Time -> active stress magnitude along the fibers.
    fiber_angles : tuple
        Endocardial and epicardial helix angles in degrees.
    quadrature_degree : int, optional
        Defaults to 2 for P1 and 4 for P2.
    """

    mesh: object
    displacement_space: object
    material: object
    bcs: BoundaryConditions = field(default_factory=BoundaryConditions)
    body_force: Sequence = (0.0, 0.0, 0.0)
    pressure_space: object = None
    dynamic: Optional[DynamicState] = None
    activation: Optional[Callable[[float], float]] = None
    fiber_angles: tuple = (60.0, -60.0)
    quadrature_degree: Optional[int] = None

    def __post_init__(self):
        if getattr(self.material, "mixed", False) != (self.pressure_space is not None):
            raise ValueError("a pressure space is required exactly for mixed materials")
        if self.pressure_space is not None and self.pressure_space.family != "P0":
            raise ValueError("pressure space must be P0")
        if self.displacement_space.components != 3:
            raise ValueError("displacement space must be vector valued")
        if self.dynamic is not None and self.dynamic.d.shape != (self.displacement_space.num_dofs,):
            raise ValueError("dynamic state size does not match the displacement space")


# --------------------------------------------------------------------------
# assembler


def _sym_pattern(dofs):
    n, m = dofs.shape
    rows = np.repeat(dofs, m, axis=1).ravel()
    cols = np.tile(dofs, (1, m)).ravel()
    return rows, cols


class ElasticityProblem:
    """Assembler bound to a ProblemDefinition.

    Unknowns are stacked as ``x = [d, p]`` for mixed problems and ``x = d``
    otherwise. The solver-facing interface is :meth:`residual` (Dirichlet rows
    replaced by ``x_c - g_c``), :meth:`tangent` (eliminated Jacobian) and
    :meth:`initial_guess`. ``load_factor`` scales tractions, body force,
    Dirichlet data and activation.

    Parameters
    ----------
    definition : ProblemDefinition
    threads : int
        Worker threads for element loops.
    chunk_size : int
        Cells per work item; fixed independently of ``threads``.
    """

    def __init__(self, definition, threads=1, chunk_size=512):
        if threads < 1 or chunk_size < 1:
            raise ValueError("threads and chunk_size must be positive")
        self.definition = definition
        self.threads = int(threads)
        self.chunk_size = int(chunk_size)
        self.load_factor = 1.0
        self.jacobian_assemblies = 0
        V = definition.displacement_space
        mesh = definition.mesh
        self.order = 1 if V.family == "P1" else 2
        self.n_u = V.num_dofs
        self.n_p = definition.pressure_space.num_dofs if definition.pressure_space is not None else 0
        self.mixed = self.n_p > 0
        deg = definition.quadrature_degree or (2 if self.order == 1 else 4)
        self.rule = tetrahedron_rule(deg)
        self._grads, vol = barycentric_gradients(mesh.vertices, mesh.tetrahedra)
        if np.any(vol <= 0):
            raise ValueError("mesh contains non-positive cells")
        self._N, dNl = shape_functions(self.order, self.rule.points)
        # (nc, nq, nn, 3)
        self._dNdX = np.einsum("qam,cmj->cqaj", dNl, self._grads)
        self._wq = 6.0 * vol[:, None] * self.rule.weights[None, :]
        self._cell_dofs = V.cell_to_global
        self._chunks = [slice(s, min(s + self.chunk_size, mesh.n_cells))
                        for s in range(0, mesh.n_cells, self.chunk_size)]
        self._frames = None
        if getattr(definition.material, "needs_frame", False) or definition.activation is not None:
            lo, hi = definition.fiber_angles
            self._frames = fiber_field(mesh, lo, hi, self.rule.points).as_matrix()
        self._pattern = CsrPattern(*_sym_pattern(self._cell_dofs), (self.n_u, self.n_u))
        if self.mixed:
            nc, m = self._cell_dofs.shape
            cells = np.repeat(np.arange(nc), m)
            self._b1_pattern = CsrPattern(self._cell_dofs.ravel(), cells, (self.n_u, self.n_p))
            self._b2_pattern = CsrPattern(cells, self._cell_dofs.ravel(), (self.n_p, self.n_u))
        self._setup_boundary()
        self._mass = None
        if definition.dynamic is not None and definition.dynamic.density > 0:
            self._mass = definition.dynamic.density * self._mass_matrix()

    # ---------------------------------------------------------------- setup

    def _setup_boundary(self):
        d = self.definition
        V, mesh = d.displacement_space, d.mesh
        dofs, vals = [], []
        for bc in d.bcs.dirichlet:
            fids = mesh.facets_of(bc.region)
            nodes = V.nodes_on_facets(fids)
            comps = np.asarray(bc.components)
            X = V.node_coords[nodes]
            u = np.zeros_like(X) if bc.value is None else np.asarray(bc.value(X), dtype=np.float64)
            dofs.append((nodes[:, None] * 3 + comps).ravel())
            vals.append(u[:, comps].ravel())
        if dofs:
            dofs = np.concatenate(dofs)
            vals = np.concatenate(vals)
            # later conditions win on shared nodes
            _, last = np.unique(dofs[::-1], return_index=True)
            keep = len(dofs) - 1 - last
            self.dirichlet_dofs = dofs[keep]
            self._dirichlet_values = vals[keep]
        else:
            self.dirichlet_dofs = np.zeros(0, dtype=np.int64)
            self._dirichlet_values = np.zeros(0)

        self._neumann = [self._facet_data(mesh.facets_of(bc.region), bc) for bc in d.bcs.neumann]
        self._robin_K = sp.csr_matrix((self.n_u, self.n_u))
        self._robin_C = sp.csr_matrix((self.n_u, self.n_u))
        for bc in d.bcs.robin:
            data = self._facet_data(mesh.facets_of(bc.region), bc)
            self._robin_K = self._robin_K + self._facet_matrix(data, bc.k_perp, bc.k_par)
            self._robin_C = self._robin_C + self._facet_matrix(data, bc.c_perp, bc.c_par)
        self._has_robin = bool(d.bcs.robin)

    def _facet_data(self, fids, bc):
        mesh = self.definition.mesh
        cells, opposite = mesh.facet_cells
        cells, opposite = cells[fids], opposite[fids]
        rule = triangle_rule(2 * self.order)
        tets = mesh.tetrahedra[cells]
        fverts = mesh.facets[fids]
        # barycentric coordinates in the owning cell of the facet quadrature points
        bary = np.zeros((len(fids), len(rule.weights), 4))
        for k in range(3):
            local = np.argmax(tets == fverts[:, k:k + 1], axis=1)
            bary[np.arange(len(fids)), :, local] = rule.points[None, :, k]
        N, dNl = shape_functions(self.order, bary)
        dNdX = np.einsum("fqam,fmj->fqaj", dNl, self._grads[cells])
        normals, areas = mesh.facet_normals(fids)
        w = 2.0 * areas[:, None] * rule.weights[None, :]
        return dict(bc=bc, cells=cells, dofs=self._cell_dofs[cells], N=N, dNdX=dNdX, normals=normals, w=w)

    def _facet_matrix(self, data, perp, par):
        n = data["normals"]
        T = perp * n[:, :, None] * n[:, None, :] + par * (_I3 - n[:, :, None] * n[:, None, :])
        NN = np.einsum("fq,fqa,fqb->fab", data["w"], data["N"], data["N"])
        Ke = np.einsum("fab,fik->faibk", NN, T)
        nf, m = data["dofs"].shape
        Ke = Ke.reshape(nf, m, m)
        dofs = data["dofs"]
        rows, cols = _sym_pattern(dofs)
        return sp.csr_matrix((Ke.ravel(), (rows, cols)), shape=(self.n_u, self.n_u))

    def _mass_matrix(self):
        rule = tetrahedron_rule(2 * self.order)
        N, _ = shape_functions(self.order, rule.points)
        vol = self._wq.sum(axis=1)
        Me = 6.0 * vol[:, None, None] * np.einsum("q,qa,qb->ab", rule.weights, N, N)[None]
        Ke = np.einsum("cab,ik->caibk", Me, _I3).reshape(len(vol), self._cell_dofs.shape[1], -1)
        return self._pattern.assemble(Ke.ravel())

    # -------------------------------------------------------------- helpers

    @property
    def n_dofs(self):
        return self.n_u + self.n_p

    @property
    def block_size(self):
        return 3

    def near_nullspace(self):
        """Rigid body modes of the displacement block (zero on constrained unknowns).

        Coordinates are centred and scaled by the mesh size so the six columns
        have comparable magnitude.
        """
        X = self.definition.displacement_space.node_coords
        X = X - X.mean(axis=0)
        X = X / max(np.max(np.abs(X)), np.finfo(float).tiny)
        n = len(X)
        B = np.zeros((n, 3, 6))
        for i in range(3):
            B[:, i, i] = 1.0
        x, y, z = X.T
        B[:, 0, 3], B[:, 1, 3] = -y, x
        B[:, 1, 4], B[:, 2, 4] = -z, y
        B[:, 0, 5], B[:, 2, 5] = z, -x
        B = B.reshape(3 * n, 6)
        B[self.dirichlet_dofs] = 0.0
        return B

    @property
    def dirichlet_values(self):
        return self.load_factor * self._dirichlet_values

    @property
    def time(self):
        dyn = self.definition.dynamic
        return 0.0 if dyn is None else dyn.time + dyn.dt

    def _split(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_dofs,):
            raise ValueError(f"state must have shape ({self.n_dofs},), got {x.shape}")
        return x[:self.n_u], (x[self.n_u:] if self.mixed else None)

    def _gamma(self):
        act = self.definition.activation
        return 0.0 if act is None else self.load_factor * float(act(self.time))

    def _map(self, fn):
        if self.threads == 1 or len(self._chunks) == 1:
            return [fn(c) for c in self._chunks]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(fn, self._chunks))

    def _point_state(self, cs, d, p, tangent):
        ue = d[self._cell_dofs[cs]].reshape(cs.stop - cs.start, -1, 3)
        dNdX = self._dNdX[cs]
        F = _I3 + np.swapaxes(ue, 1, 2)[:, None] @ dNdX
        pq = None if p is None else np.broadcast_to(p[cs, None], F.shape[:2])
        frame = None if self._frames is None else self._frames[cs]
        resp = self.definition.material.evaluate(F, pq, frame, tangent)
        return F, dNdX, resp

    # ------------------------------------------------------------- kernels

    def _energy_chunk(self, d, p):
        def work(cs):
            _, _, resp = self._point_state(cs, d, p, False)
            return np.sum(self._wq[cs] * resp.energy, axis=1)
        return work

    def _residual_chunk(self, d, p, gamma):
        def work(cs):
            F, dNdX, resp = self._point_state(cs, d, p, False)
            P = resp.P
            if gamma != 0.0:
                Pa, _ = eval_active_stress(F, self._frames[cs][..., 0], gamma, tangent=False)
                P = P + Pa
            w = self._wq[cs]
            re = _contract_stress(w, P, dNdX)
            rp = -np.sum(w * resp.constraint_residual, axis=1) if self.mixed else None
            return re, rp
        return work

    def _jacobian_chunk(self, d, p, gamma):
        def work(cs):
            F, dNdX, resp = self._point_state(cs, d, p, True)
            A = resp.tangent
            if gamma != 0.0:
                _, Aa = eval_active_stress(F, self._frames[cs][..., 0], gamma)
                A = A + Aa
            w = self._wq[cs]
            n = cs.stop - cs.start
            WdN = w[:, :, None, None] * dNdX
            Ke = np.einsum("cqaj,cqijkl,cqbl->caibk", WdN, A, dNdX, optimize=True)
            m = Ke.shape[1] * 3
            Ke = Ke.reshape(n, m, m)
            Be = None
            if self.mixed:
                Be = np.einsum("cqaj,cqij->cai", WdN, resp.Pp).reshape(n, m)
            return Ke, Be
        return work

    # --------------------------------------------------------- assembly API

    def energy(self, x):
        """Discrete potential (Lagrangian for mixed problems; active stress excluded)."""
        d, p = self._split(x)
        total = float(np.sum(np.concatenate(self._map(self._energy_chunk(d, p)))))
        s = self.load_factor
        fb = np.asarray(self.definition.body_force, dtype=np.float64)
        if np.any(fb != 0):
            total -= s * float(self._body_load(fb) @ d)
        for data in self._neumann:
            total -= s * float(self._traction_load(data) @ d)
        if self._has_robin:
            total += 0.5 * float(d @ (self._robin_K @ d))
        dyn = self.definition.dynamic
        if dyn is not None:
            v_new, a_new = newmark_advance(dyn, d)
            if self._mass is not None:
                total += 0.5 * dyn.beta * dyn.dt ** 2 * float(a_new @ (self._mass @ a_new))
            if self._has_robin:
                total += 0.5 * dyn.beta * dyn.dt / dyn.gamma * float(v_new @ (self._robin_C @ v_new))
        return total

    def _body_load(self, fb):
        N = self._N
        val = np.einsum("cq,qa,i->cai", self._wq, N, fb).reshape(len(self._wq), -1)
        return np.bincount(self._cell_dofs.ravel(), val.ravel(), minlength=self.n_u)

    def _traction_load(self, data):
        t = np.asarray(data["bc"].traction, dtype=np.float64)
        val = np.einsum("fq,fqa,i->fai", data["w"], data["N"], t).reshape(len(data["w"]), -1)
        return np.bincount(data["dofs"].ravel(), val.ravel(), minlength=self.n_u)

    def _follower(self, data, d, tangent):
        # traction scaled by the deformed-to-reference area ratio s = |cof F N|
        t = np.asarray(data["bc"].traction, dtype=np.float64)
        nf = len(data["w"])
        ue = d[data["dofs"]].reshape(nf, -1, 3)
        F = _I3 + np.einsum("fai,fqaj->fqij", ue, data["dNdX"])
        J = np.linalg.det(F)
        if np.any(J <= 0):
            raise NonPhysicalStateError("det F <= 0 on a loaded facet")
        G = np.swapaxes(np.linalg.inv(F), -1, -2)
        c = J[..., None] * np.einsum("fqmL,fL->fqm", G, data["normals"])
        s = np.linalg.norm(c, axis=-1)
        val = np.einsum("fq,fqa,i->fai", data["w"] * s, data["N"], t).reshape(nf, -1)
        if not tangent:
            return val, None
        ds = s[..., None, None] * G - np.einsum("fqm,fqmK,fqk->fqkK", c, G, c) / s[..., None, None]
        Ke = np.einsum("fq,fqa,i,fqkK,fqbK->faibk", data["w"], data["N"], t, ds, data["dNdX"])
        m = val.shape[1]
        return val, Ke.reshape(nf, m, m)

    def assemble_residual(self, x):
        """Raw residual (gradient of the potential plus non-variational terms)."""
        d, p = self._split(x)
        parts = self._map(self._residual_chunk(d, p, self._gamma()))
        re = np.concatenate([r for r, _ in parts])
        R = np.bincount(self._cell_dofs.ravel(), re.ravel(), minlength=self.n_u)
        s = self.load_factor
        fb = np.asarray(self.definition.body_force, dtype=np.float64)
        if np.any(fb != 0):
            R -= s * self._body_load(fb)
        for data in self._neumann:
            if data["bc"].follower:
                val, _ = self._follower(data, d, False)
                R -= s * np.bincount(data["dofs"].ravel(), val.ravel(), minlength=self.n_u)
            else:
                R -= s * self._traction_load(data)
        R += self._dynamic_forces(d)
        if self.mixed:
            return np.concatenate([R, np.concatenate([rp for _, rp in parts])])
        return R

    def _dynamic_forces(self, d):
        out = np.zeros(self.n_u)
        if self._has_robin:
            out += self._robin_K @ d
        dyn = self.definition.dynamic
        if dyn is not None:
            v_new, a_new = newmark_advance(dyn, d)
            if self._mass is not None:
                out += self._mass @ a_new
            if self._has_robin:
                out += self._robin_C @ v_new
        return out

    def assemble_jacobian(self, x):
        """Raw Jacobian: CSR matrix, or BlockOperator [[A, B1], [B2, 0]] when mixed."""
        self.jacobian_assemblies += 1
        d, p = self._split(x)
        parts = self._map(self._jacobian_chunk(d, p, self._gamma()))
        K = self._pattern.assemble(np.concatenate([k for k, _ in parts]).ravel())
        extra = None
        for data in self._neumann:
            if data["bc"].follower:
                _, Ke = self._follower(data, d, True)
                rows, cols = _sym_pattern(data["dofs"])
                M = sp.csr_matrix((-self.load_factor * Ke.ravel(), (rows, cols)), shape=K.shape)
                extra = M if extra is None else extra + M
        if self._has_robin:
            extra = self._robin_K if extra is None else extra + self._robin_K
        dyn = self.definition.dynamic
        if dyn is not None:
            if self._mass is not None:
                extra = _add(extra, self._mass / (dyn.beta * dyn.dt ** 2))
            if self._has_robin:
                extra = _add(extra, self._robin_C * (dyn.gamma / (dyn.beta * dyn.dt)))
        if extra is not None:
            K = (K + extra).tocsr()
            K.sum_duplicates()
            K.sort_indices()
        if not self.mixed:
            return K
        Be = np.concatenate([b for _, b in parts])
        B1 = self._b1_pattern.assemble(Be.ravel())
        B2 = self._b2_pattern.assemble(Be.ravel())
        return BlockOperator(K, B1, B2)

    # ----------------------------------------------------- solver interface

    def initial_guess(self):
        """Zero state with Dirichlet data imposed (previous displacement for dynamics)."""
        x = np.zeros(self.n_dofs)
        dyn = self.definition.dynamic
        if dyn is not None:
            x[:self.n_u] = dyn.d
        x[self.dirichlet_dofs] = self.dirichlet_values
        return x

    def residual(self, x):
        """Residual with Dirichlet rows replaced by ``x_c - g_c``."""
        R = self.assemble_residual(x)
        c = self.dirichlet_dofs
        R[c] = np.asarray(x)[c] - self.dirichlet_values
        return R

    def tangent(self, x, residual=None):
        """Eliminated Jacobian and right-hand side of the Newton system ``K dx = -R``."""
        R = self.residual(x) if residual is None else residual
        K = self.assemble_jacobian(x)
        c = self.dirichlet_dofs
        return apply_dirichlet(K, -R, c, -R[c])

    def advance(self, x):
        """Accept ``x`` as the new time level of a dynamic problem."""
        dyn = self.definition.dynamic
        if dyn is None:
            raise ValueError("problem is static")
        d = np.asarray(x, dtype=np.float64)[:self.n_u]
        v_new, a_new = newmark_advance(dyn, d)
        dyn.d, dyn.v, dyn.a = d.copy(), v_new, a_new
        dyn.time += dyn.dt


def _contract_stress(w, P, dNdX):
    # r[c, a, i] = sum_q w[c, q] P[c, q, i, j] dNdX[c, q, a, j]
    n, nq, nn, _ = dNdX.shape
    wP = (w[:, :, None, None] * P).transpose(0, 1, 3, 2).reshape(n, nq * 3, 3)
    dN = dNdX.transpose(0, 2, 1, 3).reshape(n, nn, nq * 3)
    return (dN @ wP).reshape(n, -1)


def _add(a, b):
    return b if a is None else a + b


def apply_dirichlet(matrix, vector, dofs, increments):
    """Symmetric elimination of constrained unknowns.

    Rows and columns of ``dofs`` are zeroed with a unit diagonal, the
    right-hand side is lifted by the prescribed ``increments`` and set to them
    at the constrained entries. For a BlockOperator the constraints refer to
    the primal block.

    Returns
    -------
    (matrix, vector) : the modified system (inputs are not changed).
    """
    dofs = np.asarray(dofs, dtype=np.int64)
    inc = np.broadcast_to(np.asarray(increments, dtype=np.float64), dofs.shape)
    b = np.array(vector, dtype=np.float64)
    if dofs.size == 0:
        return matrix, b
    if isinstance(matrix, BlockOperator):
        lift = np.zeros(matrix.shape[0])
        lift[dofs] = inc
        b -= matrix.matvec(lift)
        A = _eliminate(matrix.A, dofs)
        n = matrix.n_primal
        keep = np.ones(n)
        keep[dofs] = 0.0
        B1 = sp.diags(keep) @ matrix.B1
        B2 = matrix.B2 @ sp.diags(keep)
        b[dofs] = inc
        return BlockOperator(A, B1.tocsr(), B2.tocsr(), matrix.C), b
    A = sp.csr_matrix(matrix)
    lift = np.zeros(A.shape[0])
    lift[dofs] = inc
    b -= A @ lift
    b[dofs] = inc
    return _eliminate(A, dofs), b


def _eliminate(A, dofs):
    n = A.shape[0]
    keep = np.ones(n)
    keep[dofs] = 0.0
    D = sp.diags(keep)
    unit = np.zeros(n)
    unit[dofs] = 1.0
    out = (D @ A @ D + sp.diags(unit)).tocsr()
    out.eliminate_zeros()
    out.sort_indices()
    return out


# ------------------------------------------------------------ functional API


def _as_problem(problem):
    return problem if isinstance(problem, ElasticityProblem) else ElasticityProblem(problem)


def _stack(problem, d, p):
    return np.asarray(d, dtype=np.float64) if p is None else np.concatenate([d, p])


def assemble_energy(problem, d, p=None):
    prob = _as_problem(problem)
    return prob.energy(_stack(prob, d, p))


def assemble_residual(problem, d, p=None):
    prob = _as_problem(problem)
    return prob.assemble_residual(_stack(prob, d, p))


def assemble_jacobian(problem, d, p=None):
    prob = _as_problem(problem)
    return prob.assemble_jacobian(_stack(prob, d, p))


def solve_with_load_ramp(problem, solve, n_increments, x0=None):
    """Apply the load in ``n_increments`` equal steps, warm-starting each solve.

    ``solve(problem, x0)`` must return ``(x, report)``. Stops at the first
    non-converged increment. Returns the last state and the list of reports.
    """
    if n_increments < 1:
        raise ValueError("n_increments must be positive")
    x = problem.initial_guess() if x0 is None else np.asarray(x0, dtype=np.float64)
    reports = []
    try:
        for k in range(1, n_increments + 1):
            problem.load_factor = k / n_increments
            x = x.copy()
            x[problem.dirichlet_dofs] = problem.dirichlet_values
            x, report = solve(problem, x)
            reports.append(report)
            if report.status != "converged":
                break
    finally:
        problem.load_factor = 1.0
    return x, reports
