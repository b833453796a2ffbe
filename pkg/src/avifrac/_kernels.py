"""Compiled numerical kernels shared by the element APIs and the event loop.

Everything here operates on plain float64/int64 arrays so the same code path
serves both the unit-testable module surfaces and the hot asynchronous update
loop. Quadrature caches (shape values, gradients, weighted Jacobians) are
built once by :mod:`avifrac.element` and passed in.

Conventions
-----------
* 2x2 Gauss quadrature per element, points ordered counterclockwise.
* ``conn`` is (n_elems, 4) int64 connectivity, counterclockwise.
* ``dNdx`` is (n_elems, 4 gp, 4 node, 2) physical shape gradients.
* ``detJw`` is (n_elems, 4 gp) Jacobian determinant times Gauss weight
  (unit thickness folded in).
* Patches are CSR: ``p_elems[p_ptr[e]:p_ptr[e+1]]`` lists the elements
  sharing at least one node with ``e`` (including ``e``); ``p_rows[k, i]``
  maps local node ``i`` of patch member ``k`` to its row in the 4-unknown
  local problem of ``e`` (or -1 when that node does not belong to ``e``).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# Reference-element quadrature tables (bilinear quad, 2x2 Gauss).
_G = 1.0 / math.sqrt(3.0)
GAUSS_POINTS = np.array([[-_G, -_G], [_G, -_G], [_G, _G], [-_G, _G]])
GAUSS_WEIGHTS = np.ones(4)
_XI_N = np.array([-1.0, 1.0, 1.0, -1.0])
_ETA_N = np.array([-1.0, -1.0, 1.0, 1.0])


def _build_reference_tables():
    n = np.empty((4, 4))
    dn = np.empty((4, 4, 2))
    for g, (xi, eta) in enumerate(GAUSS_POINTS):
        for a in range(4):
            n[g, a] = 0.25 * (1.0 + xi * _XI_N[a]) * (1.0 + eta * _ETA_N[a])
            dn[g, a, 0] = 0.25 * _XI_N[a] * (1.0 + eta * _ETA_N[a])
            dn[g, a, 1] = 0.25 * _ETA_N[a] * (1.0 + xi * _XI_N[a])
    return n, dn


N_GP, DN_REF = _build_reference_tables()
N_GP.setflags(write=False)
DN_REF.setflags(write=False)


# ---------------------------------------------------------------------------
# Tension/compression split
# ---------------------------------------------------------------------------

@njit(cache=True)
def split_energy(exx, eyy, exy, lam, mu):
    """Crack-driving and persistent energy densities of a 2D strain state."""
    tr = exx + eyy
    mean = 0.5 * tr
    diff = 0.5 * (exx - eyy)
    rad = math.sqrt(diff * diff + exy * exy)
    e1 = mean + rad
    e2 = mean - rad
    trp = tr if tr > 0.0 else 0.0
    trm = tr - trp
    e1p = e1 if e1 > 0.0 else 0.0
    e1m = e1 - e1p
    e2p = e2 if e2 > 0.0 else 0.0
    e2m = e2 - e2p
    psip = 0.5 * lam * trp * trp + mu * (e1p * e1p + e2p * e2p)
    psim = 0.5 * lam * trm * trm + mu * (e1m * e1m + e2m * e2m)
    return psip, psim


@njit(cache=True)
def split_stress(exx, eyy, exy, lam, mu):
    """Split energies and stresses; returns (psip, psim, sp_xx, sp_yy, sp_xy, sm_xx, sm_yy, sm_xy).

    The principal frame comes from the off-diagonal angle; when the
    off-diagonal entry is negligible relative to the strain magnitude the
    canonical axes are used, which is valid for (near-)repeated eigenvalues.
    """
    nrm = math.sqrt(exx * exx + eyy * eyy + 2.0 * exy * exy)
    if abs(exy) <= 1e-14 * nrm or nrm == 0.0:
        e1 = exx
        e2 = eyy
        c = 1.0
        s = 0.0
    else:
        mean = 0.5 * (exx + eyy)
        diff = 0.5 * (exx - eyy)
        rad = math.sqrt(diff * diff + exy * exy)
        e1 = mean + rad
        e2 = mean - rad
        th = 0.5 * math.atan2(2.0 * exy, exx - eyy)
        c = math.cos(th)
        s = math.sin(th)
    tr = exx + eyy
    trp = tr if tr > 0.0 else 0.0
    trm = tr - trp
    e1p = e1 if e1 > 0.0 else 0.0
    e1m = e1 - e1p
    e2p = e2 if e2 > 0.0 else 0.0
    e2m = e2 - e2p
    psip = 0.5 * lam * trp * trp + mu * (e1p * e1p + e2p * e2p)
    psim = 0.5 * lam * trm * trm + mu * (e1m * e1m + e2m * e2m)
    # n1 (x) n1 = [[c^2, cs], [cs, s^2]], n2 (x) n2 = [[s^2, -cs], [-cs, c^2]]
    cc = c * c
    ss = s * s
    cs = c * s
    sp_xx = lam * trp + 2.0 * mu * (e1p * cc + e2p * ss)
    sp_yy = lam * trp + 2.0 * mu * (e1p * ss + e2p * cc)
    sp_xy = 2.0 * mu * (e1p - e2p) * cs
    sm_xx = lam * trm + 2.0 * mu * (e1m * cc + e2m * ss)
    sm_yy = lam * trm + 2.0 * mu * (e1m * ss + e2m * cc)
    sm_xy = 2.0 * mu * (e1m - e2m) * cs
    return psip, psim, sp_xx, sp_yy, sp_xy, sm_xx, sm_yy, sm_xy


# ---------------------------------------------------------------------------
# Elemental kernels
# ---------------------------------------------------------------------------

@njit(cache=True)
def elem_internal_force(e, u, d, conn, dNdx, detJw, lam, mu, fout):
    """Gradient of the elemental strain energy wrt nodal displacements, into fout (4, 2)."""
    for i in range(4):
        fout[i, 0] = 0.0
        fout[i, 1] = 0.0
    for g in range(4):
        exx = 0.0
        eyy = 0.0
        exy = 0.0
        dgp = 0.0
        for i in range(4):
            a = conn[e, i]
            bx = dNdx[e, g, i, 0]
            by = dNdx[e, g, i, 1]
            exx += bx * u[a, 0]
            eyy += by * u[a, 1]
            exy += 0.5 * (by * u[a, 0] + bx * u[a, 1])
            dgp += N_GP[g, i] * d[a]
        psip, psim, spxx, spyy, spxy, smxx, smyy, smxy = split_stress(exx, eyy, exy, lam, mu)
        gd = (1.0 - dgp) * (1.0 - dgp)
        sxx = gd * spxx + smxx
        syy = gd * spyy + smyy
        sxy = gd * spxy + smxy
        w = detJw[e, g]
        for i in range(4):
            bx = dNdx[e, g, i, 0]
            by = dNdx[e, g, i, 1]
            fout[i, 0] += (sxx * bx + sxy * by) * w
            fout[i, 1] += (sxy * bx + syy * by) * w


@njit(cache=True)
def patch_psiplus(e, u, conn, dNdx, p_ptr, p_elems, lam, mu, out):
    """Tensile energy density at every Gauss point of the patch of e, into out.

    Layout: out[k*4 + g] for patch member k, Gauss point g. The displacement
    state is frozen during the local phase solve, so this runs once per solve.
    """
    k0 = p_ptr[e]
    for k in range(k0, p_ptr[e + 1]):
        ep = p_elems[k]
        for g in range(4):
            exx = 0.0
            eyy = 0.0
            exy = 0.0
            for i in range(4):
                a = conn[ep, i]
                bx = dNdx[ep, g, i, 0]
                by = dNdx[ep, g, i, 1]
                exx += bx * u[a, 0]
                eyy += by * u[a, 1]
                exy += 0.5 * (by * u[a, 0] + bx * u[a, 1])
            psip, _ = split_energy(exx, eyy, exy, lam, mu)
            out[(k - k0) * 4 + g] = psip


@njit(cache=True)
def phase_residual_patch(e, d_e, d, conn, dNdx, detJw, p_ptr, p_elems, p_rows,
                         psip_buf, gc, ell, cw4, at1, r):
    """Local phase-field residual rows for the 4 nodes of e, integrated over its patch.

    ``d_e`` carries the trial values at the nodes of e; all other nodal phase
    values are read from ``d`` at their latest update. ``psip_buf`` must hold
    the output of :func:`patch_psiplus` for the same displacement state.
    """
    for i in range(4):
        r[i] = 0.0
    c1 = gc / cw4
    k0 = p_ptr[e]
    for k in range(k0, p_ptr[e + 1]):
        ep = p_elems[k]
        d0 = d_e[p_rows[k, 0]] if p_rows[k, 0] >= 0 else d[conn[ep, 0]]
        d1 = d_e[p_rows[k, 1]] if p_rows[k, 1] >= 0 else d[conn[ep, 1]]
        d2 = d_e[p_rows[k, 2]] if p_rows[k, 2] >= 0 else d[conn[ep, 2]]
        d3 = d_e[p_rows[k, 3]] if p_rows[k, 3] >= 0 else d[conn[ep, 3]]
        for g in range(4):
            dgp = N_GP[g, 0] * d0 + N_GP[g, 1] * d1 + N_GP[g, 2] * d2 + N_GP[g, 3] * d3
            gdx = (dNdx[ep, g, 0, 0] * d0 + dNdx[ep, g, 1, 0] * d1
                   + dNdx[ep, g, 2, 0] * d2 + dNdx[ep, g, 3, 0] * d3)
            gdy = (dNdx[ep, g, 0, 1] * d0 + dNdx[ep, g, 1, 1] * d1
                   + dNdx[ep, g, 2, 1] * d2 + dNdx[ep, g, 3, 1] * d3)
            psip = psip_buf[(k - k0) * 4 + g]
            drive = -2.0 * (1.0 - dgp) * psip
            wp = 1.0 if at1 else 2.0 * dgp
            w = detJw[ep, g]
            for i in range(4):
                row = p_rows[k, i]
                if row >= 0:
                    na = N_GP[g, i]
                    grad = gdx * dNdx[ep, g, i, 0] + gdy * dNdx[ep, g, i, 1]
                    r[row] += (drive * na + c1 * (wp * na / ell + 2.0 * ell * grad)) * w


@njit(cache=True)
def phase_tangent_patch(e, conn, dNdx, detJw, p_ptr, p_elems, p_rows,
                        psip_buf, gc, ell, cw4, at1, kmat):
    """4x4 tangent of the local phase problem; constant in d for g = (1-d)^2."""
    for i in range(4):
        for j in range(4):
            kmat[i, j] = 0.0
    c1 = gc / cw4
    wpp = 0.0 if at1 else 2.0
    k0 = p_ptr[e]
    for k in range(k0, p_ptr[e + 1]):
        ep = p_elems[k]
        for g in range(4):
            psip = psip_buf[(k - k0) * 4 + g]
            w = detJw[ep, g]
            for i in range(4):
                ri = p_rows[k, i]
                if ri < 0:
                    continue
                nai = N_GP[g, i]
                bxi = dNdx[ep, g, i, 0]
                byi = dNdx[ep, g, i, 1]
                for j in range(4):
                    rj = p_rows[k, j]
                    if rj < 0:
                        continue
                    naj = N_GP[g, j]
                    grad = bxi * dNdx[ep, g, j, 0] + byi * dNdx[ep, g, j, 1]
                    kmat[ri, rj] += (2.0 * psip * nai * naj
                                     + c1 * (wpp * nai * naj / ell + 2.0 * ell * grad)) * w


# ---------------------------------------------------------------------------
# Reduced-space active set solve of the 4-unknown bound-constrained problem
# ---------------------------------------------------------------------------

@njit(cache=True)
def _solve_dense(a, b, n):
    """Gaussian elimination with partial pivoting, in place, solution in b[:n]."""
    for k in range(n):
        piv = k
        amax = abs(a[k, k])
        for i in range(k + 1, n):
            v = abs(a[i, k])
            if v > amax:
                amax = v
                piv = i
        if piv != k:
            for j in range(k, n):
                tmp = a[k, j]
                a[k, j] = a[piv, j]
                a[piv, j] = tmp
            tmp = b[k]
            b[k] = b[piv]
            b[piv] = tmp
        akk = a[k, k]
        for i in range(k + 1, n):
            f = a[i, k] / akk
            if f != 0.0:
                for j in range(k + 1, n):
                    a[i, j] -= f * a[k, j]
                b[i] -= f * b[k]
    for k in range(n - 1, -1, -1):
        ssum = b[k]
        for j in range(k + 1, n):
            ssum -= a[k, j] * b[j]
        b[k] = ssum / a[k, k]


@njit(cache=True)
def solve_element_phase(e, d, conn, dNdx, detJw, p_ptr, p_elems, p_rows, psip_buf,
                        gc, ell, cw4, at1, dlow, tol, max_outer, max_newton, dout):
    """Reduced-space active set solve of min V+Gamma over dlow <= d_e <= 1.

    Nodes pinned at a bound form the active set; Newton runs on the
    complement, then bound violations and sign conditions reshape the sets
    until the mixed complementarity conditions hold within tol. Returns 0 on
    success, 1 when the sweep limit is exhausted (dout then carries the last
    iterate).
    """
    r = np.empty(4)
    kmat = np.empty((4, 4))
    # pinned: 0 inactive, 1 at the lower bound, 2 at the upper bound
    pinned = np.zeros(4, dtype=np.int8)
    for i in range(4):
        dout[i] = dlow[i]

    phase_residual_patch(e, dout, d, conn, dNdx, detJw, p_ptr, p_elems, p_rows,
                         psip_buf, gc, ell, cw4, at1, r)
    rn = 0.0
    for i in range(4):
        rn += r[i] * r[i]
    if math.sqrt(rn) < tol:
        return 0
    for i in range(4):
        if dout[i] >= 1.0 and r[i] < 0.0:
            pinned[i] = 2
        elif r[i] > 0.0:
            pinned[i] = 1

    phase_tangent_patch(e, conn, dNdx, detJw, p_ptr, p_elems, p_rows,
                        psip_buf, gc, ell, cw4, at1, kmat)

    ared = np.empty((4, 4))
    bred = np.empty(4)
    iidx = np.empty(4, dtype=np.int64)

    for _outer in range(max_outer):
        for i in range(4):
            if pinned[i] == 1:
                dout[i] = dlow[i]
            elif pinned[i] == 2:
                dout[i] = 1.0
        ni = 0
        for i in range(4):
            if pinned[i] == 0:
                iidx[ni] = i
                ni += 1
        if ni > 0:
            for _newton in range(max_newton):
                phase_residual_patch(e, dout, d, conn, dNdx, detJw, p_ptr, p_elems,
                                     p_rows, psip_buf, gc, ell, cw4, at1, r)
                rn = 0.0
                for ii in range(ni):
                    rn += r[iidx[ii]] * r[iidx[ii]]
                if math.sqrt(rn) <= tol:
                    break
                for ii in range(ni):
                    bred[ii] = r[iidx[ii]]
                    for jj in range(ni):
                        ared[ii, jj] = kmat[iidx[ii], iidx[jj]]
                _solve_dense(ared, bred, ni)
                for ii in range(ni):
                    dout[iidx[ii]] -= bred[ii]
        # clamp Newton iterates that crossed a bound; the lower comparison is
        # against the irreversibility floor, not the previous iterate
        changed = False
        for ii in range(ni):
            i = iidx[ii]
            if dout[i] > 1.0:
                dout[i] = 1.0
                pinned[i] = 2
                changed = True
            elif dout[i] < dlow[i]:
                dout[i] = dlow[i]
                pinned[i] = 1
                changed = True
        phase_residual_patch(e, dout, d, conn, dNdx, detJw, p_ptr, p_elems, p_rows,
                             psip_buf, gc, ell, cw4, at1, r)
        # release actives whose residual sign no longer supports the pin
        for i in range(4):
            if pinned[i] == 1 and r[i] < -tol:
                pinned[i] = 0
                changed = True
            elif pinned[i] == 2 and r[i] > tol:
                pinned[i] = 0
                changed = True
        if not changed:
            ok = True
            for i in range(4):
                if pinned[i] == 0 and abs(r[i]) > tol:
                    ok = False
            if ok:
                return 0
    return 1


# ---------------------------------------------------------------------------
# Event heap keyed by (time, sequence number, element id)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _heap_before(t1, s1, e1, t2, s2, e2):
    if t1 != t2:
        return t1 < t2
    if s1 != s2:
        return s1 < s2
    return e1 < e2


@njit(cache=True)
def heap_push(ht, hs, he, istate, t, s, e):
    n = istate[0]
    ht[n] = t
    hs[n] = s
    he[n] = e
    i = n
    while i > 0:
        par = (i - 1) // 2
        if _heap_before(ht[i], hs[i], he[i], ht[par], hs[par], he[par]):
            ht[i], ht[par] = ht[par], ht[i]
            hs[i], hs[par] = hs[par], hs[i]
            he[i], he[par] = he[par], he[i]
            i = par
        else:
            break
    istate[0] = n + 1


@njit(cache=True)
def heap_pop(ht, hs, he, istate):
    n = istate[0] - 1
    t = ht[0]
    s = hs[0]
    e = he[0]
    istate[0] = n
    if n > 0:
        ht[0] = ht[n]
        hs[0] = hs[n]
        he[0] = he[n]
        i = 0
        while True:
            l = 2 * i + 1
            m = i
            if l < n and _heap_before(ht[l], hs[l], he[l], ht[m], hs[m], he[m]):
                m = l
            rgt = l + 1
            if rgt < n and _heap_before(ht[rgt], hs[rgt], he[rgt], ht[m], hs[m], he[m]):
                m = rgt
            if m == i:
                break
            ht[i], ht[m] = ht[m], ht[i]
            hs[i], hs[m] = hs[m], hs[i]
            he[i], he[m] = he[m], he[i]
            i = m
    return t, s, e


# ---------------------------------------------------------------------------
# Main asynchronous update loop
# ---------------------------------------------------------------------------

@njit(cache=True)
def run_updates(conn, dNdx, detJw, p_ptr, p_elems, p_rows,
                mass, dt_e, tol_e, f_ext_e, f_trac_node, kin_free, kin_vel,
                lam, mu, gc, ell, cw4, at1, ramp_time, t_final, fracture_on,
                u, p, d, tau_a, tau_e, counts,
                heap_t, heap_s, heap_e, istate, facc,
                psip_buf, fail_d, max_outer, max_newton, n_max):
    """Process up to n_max elemental events; returns (n_done, status, element).

    Per popped event (t, e): advance the nodal displacements of e by their own
    elapsed intervals, solve the patch-local bound-constrained phase problem,
    then (while t < t_final) apply the elemental impulse to the momenta and
    reschedule e at t + dt_e.

    facc layout: [0] traction work, [1] reaction work at kinematic BCs,
    [2] last popped event time, [3] unused. istate: [0] heap size, [1] next
    sequence number. status: 0 window done, 1 queue empty, 2 phase solve
    failure at `element`, 3 causality violation at `element`.
    """
    n_done = 0
    fint = np.empty((4, 2))
    dlow = np.empty(4)
    dnew = np.empty(4)
    while n_done < n_max:
        if istate[0] == 0:
            return n_done, 1, -1
        t, _seq, e = heap_pop(heap_t, heap_s, heap_e, istate)
        if t < facc[2]:
            return n_done, 3, e
        facc[2] = t
        ramp = 1.0
        if ramp_time > 0.0:
            ramp = t / ramp_time
            if ramp > 1.0:
                ramp = 1.0
        for i in range(4):
            a = conn[e, i]
            dta = t - tau_a[a]
            if dta > 0.0:
                inv_m = 1.0 / mass[a]
                for c in range(2):
                    du = dta * p[a, c] * inv_m
                    u[a, c] += du
                    facc[0] += f_trac_node[a, c] * du * ramp
                tau_a[a] = t
        if fracture_on != 0:
            for i in range(4):
                dlow[i] = d[conn[e, i]]
            patch_psiplus(e, u, conn, dNdx, p_ptr, p_elems, lam, mu, psip_buf)
            st = solve_element_phase(e, d, conn, dNdx, detJw, p_ptr, p_elems, p_rows,
                                     psip_buf, gc, ell, cw4, at1, dlow, tol_e[e],
                                     max_outer, max_newton, dnew)
            if st != 0:
                for i in range(4):
                    fail_d[i] = dnew[i]
                counts[e] += 1
                return n_done + 1, 2, e
            for i in range(4):
                d[conn[e, i]] = dnew[i]
        if t < t_final:
            dte = t - tau_e[e]
            elem_internal_force(e, u, d, conn, dNdx, detJw, lam, mu, fint)
            for i in range(4):
                a = conn[e, i]
                for c in range(2):
                    fc = fint[i, c] - f_ext_e[e, i, c] * ramp
                    if kin_free[a, c] != 0:
                        p[a, c] -= dte * fc
                    else:
                        facc[1] += dte * fc * kin_vel[a, c]
            tau_e[e] = t
            seq = istate[1]
            istate[1] = seq + 1
            heap_push(heap_t, heap_s, heap_e, istate, t + dt_e[e], seq, e)
        counts[e] += 1
        n_done += 1
    return n_done, 0, -1


# ---------------------------------------------------------------------------
# Whole-mesh energy integrals for sampling
# ---------------------------------------------------------------------------

@njit(cache=True)
def total_energies(u, d, conn, dNdx, detJw, lam, mu, gc, ell, cw4, at1):
    """Quadrature of the degraded strain energy and the crack surface energy."""
    n_elems = conn.shape[0]
    strain_e = 0.0
    crack_e = 0.0
    c1 = gc / cw4
    for e in range(n_elems):
        for g in range(4):
            exx = 0.0
            eyy = 0.0
            exy = 0.0
            dgp = 0.0
            gdx = 0.0
            gdy = 0.0
            for i in range(4):
                a = conn[e, i]
                bx = dNdx[e, g, i, 0]
                by = dNdx[e, g, i, 1]
                exx += bx * u[a, 0]
                eyy += by * u[a, 1]
                exy += 0.5 * (by * u[a, 0] + bx * u[a, 1])
                dgp += N_GP[g, i] * d[a]
                gdx += bx * d[a]
                gdy += by * d[a]
            psip, psim = split_energy(exx, eyy, exy, lam, mu)
            gd = (1.0 - dgp) * (1.0 - dgp)
            wd = dgp if at1 else dgp * dgp
            w = detJw[e, g]
            strain_e += (gd * psip + psim) * w
            crack_e += c1 * (wd / ell + ell * (gdx * gdx + gdy * gdy)) * w
    return strain_e, crack_e
