"""Hyperelastic constitutive laws: energy, first Piola stress and tangent.

Every evaluator is vectorized over leading axes, so ``F`` may have shape
``(3, 3)`` or ``(..., 3, 3)``. Tangents are returned as ``(..., 3, 3, 3, 3)``
arrays with ``A[i, J, k, L] = dP[i, J] / dF[k, L]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import DegenerateFiberError, NonPhysicalStateError

_I3 = np.eye(3)
# delta_ik delta_JL
_IDEN4 = np.einsum("ik,jl->ijkl", _I3, _I3)

GUCCIONE_Q_MAX = 50.0


@dataclass(frozen=True)
class DeformationState:
    """Deformation gradient and (for the mixed model) pressure."""

    F: np.ndarray
    p: Optional[np.ndarray] = None


@dataclass
class PointResponse:
    energy: np.ndarray
    P: np.ndarray
    tangent: np.ndarray
    constraint_residual: Optional[np.ndarray] = None
    Pp: Optional[np.ndarray] = None


@dataclass(frozen=True)
class NeoHookeanParams:
    C1: float
    k: float

    @classmethod
    def from_lame(cls, mu=8.194e7, nu=0.3):
        if not mu > 0 or not 0 < nu < 0.5:
            raise ValueError("need mu > 0 and 0 < nu < 0.5")
        lam = 2 * mu * nu / (1 - 2 * nu)
        return cls(C1=0.5 * mu, k=lam + 2.0 / 3.0 * mu)


@dataclass(frozen=True)
class TwistParams:
    alpha_p: float = 9000.0
    beta_p: float = 9000.0
    alpha_s: float = 9000.0
    beta_s: float = 9000.0


@dataclass(frozen=True)
class GuccioneParams:
    C: float = 2e3
    B: float = 5e4
    bff: float = 8.0
    bss: float = 2.0
    bnn: float = 2.0
    bfs: float = 4.0
    bfn: float = 4.0
    bsn: float = 2.0

    def weights(self):
        return np.array([[self.bff, self.bfs, self.bfn],
                         [self.bfs, self.bss, self.bsn],
                         [self.bfn, self.bsn, self.bnn]])


@dataclass(frozen=True)
class ActivationParams:
    C_PA: float = 1e4
    T: float = 0.8


def _kinematics(F):
    F = np.asarray(F, dtype=np.float64)
    # cofactor rows are cross products of the rows of F
    r0, r1, r2 = F[..., 0, :], F[..., 1, :], F[..., 2, :]
    cof = np.stack([np.cross(r1, r2), np.cross(r2, r0), np.cross(r0, r1)], axis=-2)
    J = np.sum(r0 * cof[..., 0, :], axis=-1)
    if np.any(~(J > 0)):
        raise NonPhysicalStateError(f"det F <= 0 (min {np.min(J):.3e})")
    G = cof / J[..., None, None]
    return F, J, G


def _outer(A, B):
    return A[..., :, :, None, None] * B[..., None, None, :, :]


def _cross_GG(G):
    # G_iL G_kJ arranged as [i, J, k, L]
    return np.einsum("...il,...kj->...ijkl", G, G)


def eval_neo_hookean(state, params, tangent=True):
    """Almost incompressible Neo-Hookean law with isochoric first invariant.

    Psi = C1 (J^{-2/3} F:F - 3) + k (J^2 - 1 - 2 log J)

    With ``tangent=False`` the fourth-order tangent is skipped (returned as None).
    """
    F, J, G = _kinematics(state.F)
    C1, k = params.C1, params.k
    I1 = np.sum(F * F, axis=(-2, -1))
    Jm = J ** (-2.0 / 3.0)
    energy = C1 * (Jm * I1 - 3.0) + k * (J * J - 1.0 - 2.0 * np.log(J))
    a = (C1 * Jm)[..., None, None]
    b = (2.0 * k * (J * J - 1.0))[..., None, None]
    dev = 2.0 * F - (2.0 / 3.0) * I1[..., None, None] * G
    P = a * dev + b * G
    if not tangent:
        return PointResponse(energy, P, None)
    a4, b4 = a[..., None, None], b[..., None, None]
    GG = _cross_GG(G)
    tangent = a4 * (-(2.0 / 3.0) * _outer(dev, G) + 2.0 * _IDEN4 - (4.0 / 3.0) * _outer(G, F)
                    + (2.0 / 3.0) * I1[..., None, None, None, None] * GG)
    tangent += (4.0 * k * J * J)[..., None, None, None, None] * _outer(G, G) - b4 * GG
    return PointResponse(energy, P, tangent)


def eval_twist(state, params, tangent=True):
    """Polyconvex incompressible law with pressure multiplier.

    Psi = ap (F:F - 3) + bp (cof F : cof F - 3) - (4 bs + 2 as) log J - p (J - 1)
    """
    F, J, G = _kinematics(state.F)
    p = np.zeros_like(J) if state.p is None else np.broadcast_to(np.asarray(state.p, dtype=np.float64), J.shape)
    ap, bp = params.alpha_p, params.beta_p
    cl = 4.0 * params.beta_s + 2.0 * params.alpha_s
    Ft = np.swapaxes(F, -1, -2)
    I1 = np.sum(F * F, axis=(-2, -1))
    Cm = Ft @ F
    Bm = F @ Ft
    # cof F : cof F is the second invariant of C
    I2 = 0.5 * (I1 * I1 - np.sum(Cm * Cm, axis=(-2, -1)))
    energy = ap * (I1 - 3.0) + bp * (I2 - 3.0) - cl * np.log(J) - p * (J - 1.0)
    FC = F @ Cm
    Pp = -J[..., None, None] * G
    P = 2.0 * ap * F + 2.0 * bp * (I1[..., None, None] * F - FC) - cl * G + p[..., None, None] * Pp
    if not tangent:
        return PointResponse(energy, P, None, constraint_residual=J - 1.0, Pp=Pp)
    I1_4 = I1[..., None, None, None, None]
    d2I2 = (2.0 * _outer(F, F) + I1_4 * _IDEN4
            - np.einsum("ik,...lj->...ijkl", _I3, Cm)
            - np.einsum("...il,...kj->...ijkl", F, F)
            - np.einsum("...ik,jl->...ijkl", Bm, _I3))
    GG = _cross_GG(G)
    pJ = (p * J)[..., None, None, None, None]
    tangent = 2.0 * ap * _IDEN4 + 2.0 * bp * d2I2 + cl * GG - pJ * (_outer(G, G) - GG)
    return PointResponse(energy, P, tangent, constraint_residual=J - 1.0, Pp=Pp)


def eval_guccione(state, params, frame, tangent=True):
    """Transversely isotropic Guccione law with a volumetric penalty.

    ``frame`` is a (..., 3, 3) rotation whose columns are (f0, s0, n0), or a
    FiberFrame.
    """
    F, J, G = _kinematics(state.F)
    R = frame.as_matrix() if hasattr(frame, "as_matrix") else np.asarray(frame, dtype=np.float64)
    R = np.broadcast_to(R, F.shape)
    W = params.weights()
    Rt = np.swapaxes(R, -1, -2)
    E = 0.5 * (np.swapaxes(F, -1, -2) @ F - _I3)
    Et = Rt @ E @ R
    Q = np.sum(W * Et * Et, axis=(-2, -1))
    if np.any(Q > GUCCIONE_Q_MAX):
        raise NonPhysicalStateError(f"Guccione exponent {np.max(Q):.1f} exceeds {GUCCIONE_Q_MAX}")
    eQ = np.exp(Q)
    C, B = params.C, params.B
    logJ = np.log(J)
    energy = 0.5 * C * (eQ - 1.0) + 0.5 * B * (J - 1.0) * logJ
    D = 2.0 * (R @ (W * Et) @ Rt)
    S = (0.5 * C * eQ)[..., None, None] * D
    g = 0.5 * B * (logJ + (J - 1.0) / J)
    P = F @ S + (g * J)[..., None, None] * G
    if not tangent:
        return PointResponse(energy, P, None)
    # dD/dE, symmetrized in the last pair
    H = 2.0 * np.einsum("ab,...ia,...jb,...ma,...nb->...ijmn", W, R, R, R, R, optimize=True)
    H = 0.5 * (H + np.swapaxes(H, -1, -2))
    CC = (0.5 * C * eQ)[..., None, None, None, None] * (_outer(D, D) + H)
    FCF = np.einsum("...ia,...ajln,...kn->...ijkl", F, CC, F, optimize=True)
    tangent = np.einsum("ik,...jl->...ijkl", _I3, S) + FCF
    dg = 0.5 * B * (1.0 / J + 1.0 / (J * J))
    tangent += ((dg * J + g) * J)[..., None, None, None, None] * _outer(G, G)
    tangent -= (g * J)[..., None, None, None, None] * _cross_GG(G)
    return PointResponse(energy, P, tangent)


def eval_active_stress(F, f0, gamma, tangent=True):
    """Fiber-directed active stress gamma (F f0) (x) f0 / |F f0| and its derivative."""
    F = np.asarray(F, dtype=np.float64)
    f0 = np.broadcast_to(np.asarray(f0, dtype=np.float64), F.shape[:-1])
    gamma = np.asarray(gamma, dtype=np.float64)
    a = (F @ f0[..., None])[..., 0]
    n = np.sqrt(np.sum(a * a, axis=-1))
    if np.any(n == 0):
        raise DegenerateFiberError("|F f0| = 0")
    g = gamma / n
    P = g[..., None, None] * a[..., :, None] * f0[..., None, :]
    if not tangent:
        return P, None
    ff = f0[..., :, None] * f0[..., None, :]
    aa = a[..., :, None] * a[..., None, :] / (n * n)[..., None, None]
    # dP_iJ/dF_kL = g f_J f_L (delta_ik - a_i a_k / n^2)
    tangent = g[..., None, None, None, None] * np.einsum("...ik,...jl->...ijkl", _I3 - aa, ff)
    return P, tangent


def activation(t, params=ActivationParams()):
    """Analytic activation gamma(t) = C_PA max(sin(2 pi t / T), 0)."""
    if params.T <= 0:
        raise ValueError("period must be positive")
    return params.C_PA * np.maximum(np.sin(2.0 * np.pi * np.asarray(t, dtype=np.float64) / params.T), 0.0)


def fd_verify(model, state, h=1e-6):
    """Compare analytic stress and tangent with central differences.

    ``model`` maps a DeformationState to a PointResponse (for a single 3x3
    state). Errors are componentwise maxima relative to the largest analytic
    component. Returns ``(stress_error, tangent_error)``.
    """
    F = np.asarray(state.F, dtype=np.float64)
    ref = model(state)
    dPsi = np.zeros((3, 3))
    dP = np.zeros((3, 3, 3, 3))
    for k in range(3):
        for L in range(3):
            E = np.zeros((3, 3))
            E[k, L] = h
            plus = model(DeformationState(F + E, state.p))
            minus = model(DeformationState(F - E, state.p))
            dPsi[k, L] = (plus.energy - minus.energy) / (2 * h)
            dP[:, :, k, L] = (plus.P - minus.P) / (2 * h)

    def rel(a, b):
        scale = np.max(np.abs(a))
        return float(np.max(np.abs(a - b)) / scale) if scale > 0 else float(np.max(np.abs(a - b)))

    return rel(ref.P, dPsi), rel(ref.tangent, dP)


class NeoHookean:
    """Material wrapper binding Neo-Hookean parameters."""

    mixed = False
    needs_frame = False

    def __init__(self, params=None):
        self.params = params if params is not None else NeoHookeanParams.from_lame()

    def evaluate(self, F, p=None, frame=None, tangent=True):
        return eval_neo_hookean(DeformationState(F), self.params, tangent)


class TwistMaterial:
    """Material wrapper for the incompressible polyconvex law (displacement-pressure)."""

    mixed = True
    needs_frame = False

    def __init__(self, params=None):
        self.params = params if params is not None else TwistParams()

    def evaluate(self, F, p=None, frame=None, tangent=True):
        return eval_twist(DeformationState(F, p), self.params, tangent)


class Guccione:
    """Material wrapper for the Guccione law; evaluation needs a fiber frame."""

    mixed = False
    needs_frame = True

    def __init__(self, params=None):
        self.params = params if params is not None else GuccioneParams()

    def evaluate(self, F, p=None, frame=None, tangent=True):
        return eval_guccione(DeformationState(F), self.params, frame, tangent)
