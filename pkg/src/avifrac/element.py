"""Bilinear quadrilateral kernels: quadrature caches, lumped mass, forces,
patch phase residual/tangent and the per-element stable time step."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .material import MaterialParams, PhaseFieldVariant


def shape_eval(xi: float, eta: float) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear shape values and reference gradients at (xi, eta) in [-1, 1]^2.

    Returns (N, dN) with N shape (4,) and dN shape (4, 2); node order is
    counterclockwise from the (-1, -1) corner.
    """
    if abs(xi) > 1.0 or abs(eta) > 1.0:
        raise ValueError("reference coordinates must lie in [-1, 1]^2")
    xs = np.array([-1.0, 1.0, 1.0, -1.0])
    es = np.array([-1.0, -1.0, 1.0, 1.0])
    n = 0.25 * (1.0 + xi * xs) * (1.0 + eta * es)
    dn = np.empty((4, 2))
    dn[:, 0] = 0.25 * xs * (1.0 + eta * es)
    dn[:, 1] = 0.25 * es * (1.0 + xi * xs)
    return n, dn


@dataclass(frozen=True)
class ElementKernelCache:
    """Per-Gauss-point quadrature data for every element of a mesh.

    shape_values : (4, 4) shape value N_a at each Gauss point (same for all
        elements of the reference family)
    grads : (n_elems, 4, 4, 2) physical shape gradients
    detjw : (n_elems, 4) Jacobian determinant times Gauss weight, with the
        unit thickness folded in
    """

    shape_values: np.ndarray
    grads: np.ndarray
    detjw: np.ndarray

    @property
    def areas(self) -> np.ndarray:
        return self.detjw.sum(axis=1)


def build_cache(nodes: np.ndarray, elements: np.ndarray) -> ElementKernelCache:
    """Precompute physical shape gradients and weighted Jacobians (2x2 Gauss)."""
    xe = nodes[elements]  # (E, 4, 2)
    # J[e, g, i, j] = d x_j / d xi_i
    jac = np.einsum("gai,eaj->egij", _kernels.DN_REF, xe)
    det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    if np.any(det <= 0.0):
        bad = np.unique(np.nonzero(det <= 0.0)[0])
        raise ValueError(f"non-positive Jacobian in elements {bad.tolist()}")
    inv = np.empty_like(jac)
    inv[..., 0, 0] = jac[..., 1, 1] / det
    inv[..., 1, 1] = jac[..., 0, 0] / det
    inv[..., 0, 1] = -jac[..., 0, 1] / det
    inv[..., 1, 0] = -jac[..., 1, 0] / det
    # dN/dx_k = dN/dxi_i * dxi_i/dx_k, with dxi/dx = inv(J) transposed into place
    grads = np.einsum("gai,egik->egak", _kernels.DN_REF, inv)
    detjw = det * _kernels.GAUSS_WEIGHTS[None, :]
    return ElementKernelCache(_kernels.N_GP.copy(), grads, detjw)


def _single_element_setup(x_e: np.ndarray):
    nodes = np.asarray(x_e, dtype=float).reshape(4, 2)
    elements = np.array([[0, 1, 2, 3]], dtype=np.int64)
    return nodes, elements, build_cache(nodes, elements)


def lumped_mass(x_e: np.ndarray, rho: float, thickness: float = 1.0) -> np.ndarray:
    """Row-sum lumped nodal masses of one element; preserves the total mass.

    Row-sum lumping of the consistent matrix reduces to rho * integral of N_a.
    """
    _, _, cache = _single_element_setup(x_e)
    m = rho * thickness * (cache.shape_values.T @ cache.detjw[0])
    if np.any(m <= 0.0):
        raise ValueError("degenerate element geometry produced non-positive mass")
    return m


def internal_force(x_e: np.ndarray, u_e: np.ndarray, d_e: np.ndarray,
                   params: MaterialParams) -> np.ndarray:
    """Gradient of the elemental strain energy wrt nodal displacements, (4, 2)."""
    nodes, elements, cache = _single_element_setup(x_e)
    fout = np.zeros((4, 2))
    _kernels.elem_internal_force(0, np.asarray(u_e, float).reshape(4, 2),
                                 np.asarray(d_e, float).reshape(4), elements,
                                 cache.grads, cache.detjw, params.lam, params.mu, fout)
    return fout


def element_strain_energy(x_e: np.ndarray, u_e: np.ndarray, d_e: np.ndarray,
                          params: MaterialParams) -> float:
    """Quadrature of g(d) psi_plus + psi_minus over one element (oracle side
    of the finite-difference force checks)."""
    _, _, cache = _single_element_setup(x_e)
    u_e = np.asarray(u_e, float).reshape(4, 2)
    d_e = np.asarray(d_e, float).reshape(4)
    total = 0.0
    for g in range(4):
        bx = cache.grads[0, g, :, 0]
        by = cache.grads[0, g, :, 1]
        exx = bx @ u_e[:, 0]
        eyy = by @ u_e[:, 1]
        exy = 0.5 * (by @ u_e[:, 0] + bx @ u_e[:, 1])
        psip, psim = _kernels.split_energy(exx, eyy, exy, params.lam, params.mu)
        dgp = cache.shape_values[g] @ d_e
        total += ((1.0 - dgp) ** 2 * psip + psim) * cache.detjw[0, g]
    return total


def element_crack_energy(x_e: np.ndarray, d_e: np.ndarray, params: MaterialParams,
                         variant: PhaseFieldVariant) -> float:
    """Quadrature of the crack surface density over one element."""
    _, _, cache = _single_element_setup(x_e)
    d_e = np.asarray(d_e, float).reshape(4)
    c1 = params.gc / (4.0 * variant.cw)
    total = 0.0
    for g in range(4):
        dgp = cache.shape_values[g] @ d_e
        gdx = cache.grads[0, g, :, 0] @ d_e
        gdy = cache.grads[0, g, :, 1] @ d_e
        total += c1 * (variant.w(dgp) / params.ell
                       + params.ell * (gdx ** 2 + gdy ** 2)) * cache.detjw[0, g]
    return total


def edge_traction_force(x_edge: np.ndarray, traction: np.ndarray,
                        thickness: float = 1.0) -> np.ndarray:
    """Consistent nodal forces of a constant traction on a straight 2-node edge.

    2-point Gauss on the edge; for a constant load this is t * L / 2 per node.
    """
    x_edge = np.asarray(x_edge, float).reshape(2, 2)
    traction = np.asarray(traction, float).reshape(2)
    length = float(np.linalg.norm(x_edge[1] - x_edge[0]))
    # linear edge shape functions integrate to L/2 each
    f = 0.5 * length * thickness * traction
    return np.array([f, f])


def body_force(x_e: np.ndarray, b: np.ndarray, thickness: float = 1.0) -> np.ndarray:
    """Consistent nodal forces of a constant body force over one element, (4, 2)."""
    _, _, cache = _single_element_setup(x_e)
    b = np.asarray(b, float).reshape(2)
    w = thickness * (cache.shape_values.T @ cache.detjw[0])  # integral of N_a
    return w[:, None] * b[None, :]


# ---------------------------------------------------------------------------
# Patch-integrated phase residual and tangent (module surface over the kernels)
# ---------------------------------------------------------------------------

def phase_residual(mesh, cache: ElementKernelCache, u: np.ndarray, d: np.ndarray,
                   e: int, params: MaterialParams, variant: PhaseFieldVariant,
                   d_e: np.ndarray | None = None) -> np.ndarray:
    """Residual of the patch-local phase problem for element e, rows at its 4 nodes.

    ``d_e`` overrides the trial values at the nodes of e (defaults to the
    current entries of ``d``); all other patch values stay frozen.
    """
    p_ptr, p_elems, p_rows = mesh.patch_csr()
    npatch = p_ptr[e + 1] - p_ptr[e]
    psip = np.empty(npatch * 4)
    _kernels.patch_psiplus(e, np.asarray(u, float), mesh.elements, cache.grads,
                           p_ptr, p_elems, params.lam, params.mu, psip)
    if d_e is None:
        d_e = d[mesh.elements[e]]
    r = np.zeros(4)
    _kernels.phase_residual_patch(e, np.asarray(d_e, float), np.asarray(d, float),
                                  mesh.elements, cache.grads, cache.detjw,
                                  p_ptr, p_elems, p_rows, psip,
                                  params.gc, params.ell, 4.0 * variant.cw,
                                  variant.is_at1, r)
    return r


def phase_tangent(mesh, cache: ElementKernelCache, u: np.ndarray, d: np.ndarray,
                  e: int, params: MaterialParams,
                  variant: PhaseFieldVariant) -> np.ndarray:
    """4x4 tangent of the patch-local phase problem for element e."""
    p_ptr, p_elems, p_rows = mesh.patch_csr()
    npatch = p_ptr[e + 1] - p_ptr[e]
    psip = np.empty(npatch * 4)
    _kernels.patch_psiplus(e, np.asarray(u, float), mesh.elements, cache.grads,
                           p_ptr, p_elems, params.lam, params.mu, psip)
    kmat = np.zeros((4, 4))
    _kernels.phase_tangent_patch(e, mesh.elements, cache.grads, cache.detjw,
                                 p_ptr, p_elems, p_rows, psip,
                                 params.gc, params.ell, 4.0 * variant.cw,
                                 variant.is_at1, kmat)
    return kmat


def patch_energy(mesh, cache: ElementKernelCache, u: np.ndarray, d: np.ndarray,
                 e: int, params: MaterialParams, variant: PhaseFieldVariant) -> float:
    """Sum of strain plus crack energy over the patch of e (finite-difference oracle)."""
    total = 0.0
    for ep in mesh.patch(e):
        ids = mesh.elements[ep]
        x_e = mesh.nodes[ids]
        total += element_strain_energy(x_e, u[ids], d[ids], params)
        total += element_crack_energy(x_e, d[ids], params, variant)
    return total


# ---------------------------------------------------------------------------
# Undamaged stiffness and the stable time step
# ---------------------------------------------------------------------------

def elastic_stiffness(x_e: np.ndarray, params: MaterialParams) -> np.ndarray:
    """Undamaged plane-strain stiffness of one element, 8x8, dofs (ux0, uy0, ...)."""
    _, _, cache = _single_element_setup(x_e)
    return _stiffness_batch(cache.grads, cache.detjw, params.lam, params.mu)[0]


def _stiffness_batch(grads: np.ndarray, detjw: np.ndarray,
                     lam: float, mu: float) -> np.ndarray:
    """Vectorized B^T D B quadrature for every element; returns (E, 8, 8)."""
    n_elems = grads.shape[0]
    dmat = np.array([[lam + 2.0 * mu, lam, 0.0],
                     [lam, lam + 2.0 * mu, 0.0],
                     [0.0, 0.0, mu]])
    bmat = np.zeros((n_elems, 4, 3, 8))
    bx = grads[..., 0]  # (E, 4, 4)
    by = grads[..., 1]
    for a in range(4):
        bmat[:, :, 0, 2 * a] = bx[:, :, a]
        bmat[:, :, 1, 2 * a + 1] = by[:, :, a]
        bmat[:, :, 2, 2 * a] = by[:, :, a]
        bmat[:, :, 2, 2 * a + 1] = bx[:, :, a]
    return np.einsum("egki,kl,eglj,eg->eij", bmat, dmat, bmat, detjw, optimize=True)


def critical_time_steps(nodes: np.ndarray, elements: np.ndarray,
                        params: MaterialParams, cfl: float,
                        cache: ElementKernelCache | None = None) -> np.ndarray:
    """Stable step of every element, cfl * 2 / omega_max.

    omega_max is the square root of the largest eigenvalue of the undamaged
    generalized problem k_e U = omega^2 m_e U with the lumped diagonal mass.
    Computed once; the step is held fixed through the run since degradation
    only softens the element.
    """
    if cache is None:
        cache = build_cache(nodes, elements)
    kmats = _stiffness_batch(cache.grads, cache.detjw, params.lam, params.mu)
    m_ea = params.rho * np.einsum("ga,eg->ea", cache.shape_values, cache.detjw)
    if np.any(m_ea <= 0.0):
        raise ValueError("degenerate element with non-positive lumped mass")
    minv_sqrt = 1.0 / np.sqrt(np.repeat(m_ea, 2, axis=1))  # (E, 8)
    sym = kmats * minv_sqrt[:, :, None] * minv_sqrt[:, None, :]
    sym = 0.5 * (sym + np.swapaxes(sym, 1, 2))
    omega_sq = np.linalg.eigvalsh(sym)[:, -1]
    return cfl * 2.0 / np.sqrt(omega_sq)


def critical_time_step(x_e: np.ndarray, params: MaterialParams, cfl: float) -> float:
    """Stable step of a single element (see critical_time_steps)."""
    nodes, elements, cache = _single_element_setup(x_e)
    return float(critical_time_steps(nodes, elements, params, cfl, cache)[0])
