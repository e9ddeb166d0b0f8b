"""Numba kernels for the hot per-step loops.

All kernels are single-threaded and release the GIL; parallelism lives one
level up in the Monte Carlo sample loop.  Face wave speeds and HLL
denominators depend only on the coefficient field, which is frozen over
each SDE interval, so they are precomputed per interval and passed in.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_LAND = 1e-12


@njit(cache=True, nogil=True, fastmath=True)
def _minmod(dl, dr):
    # branchless: copysign(0.5, 0.0) = +0.5 is harmless since min(|.|) = 0
    return (np.copysign(0.5, dl) + np.copysign(0.5, dr)) * min(abs(dl), abs(dr))


# ---------------------------------------------------------------------------
# scalar advection, whole-sample driver (1-D periodic)
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True, fastmath=True)
def _scalar_rhs(u, a, invdx, order, out):
    n = u.shape[0]
    # face i+1/2 flux for i = 0..n-1, periodic wrap
    fprev = 0.0
    ffirst = 0.0
    for i in range(n):
        ip = i + 1 if i + 1 < n else 0
        if order == 1:
            ul = u[i]
            ur = u[ip]
        else:
            im = i - 1 if i > 0 else n - 1
            ipp = ip + 1 if ip + 1 < n else 0
            sl = _minmod(u[i] - u[im], u[ip] - u[i])
            sr = _minmod(u[ip] - u[i], u[ipp] - u[ip])
            ul = u[i] + 0.5 * sl
            ur = u[ip] - 0.5 * sr
        f = a * ul if a >= 0.0 else a * ur
        if i == 0:
            ffirst = f
        else:
            out[i] = -(f - fprev) * invdx
        fprev = f
    # close the periodic ring: face -1/2 equals face n-1+1/2
    out[0] = -(ffirst - fprev) * invdx
    return out


@njit(cache=True, nogil=True, fastmath=True)
def scalar_sample_terminal(u_init, a_path, h, dx, cfl, order):
    """Advance 1-D periodic advection over all SDE intervals of one sample.

    a_path[l] is the frozen coefficient on [l*h, (l+1)*h].  Returns the
    terminal cell averages and (n_steps, min_dt, max_cfl).
    """
    u = u_init.copy()
    n = u.shape[0]
    rhs = np.empty(n)
    u1 = np.empty(n)
    invdx = 1.0 / dx
    n_steps = 0
    min_dt = 1e300
    max_cfl = 0.0
    for l in range(a_path.shape[0]):
        a = a_path[l]
        lam = abs(a)
        remaining = h
        while remaining > _LAND * h:
            dt = remaining if lam == 0.0 else min(cfl * dx / lam, remaining)
            if remaining - dt < _LAND * h:
                dt = remaining
            if order == 1:
                _scalar_rhs(u, a, invdx, 1, rhs)
                for i in range(n):
                    u[i] += dt * rhs[i]
            else:
                _scalar_rhs(u, a, invdx, 2, rhs)
                for i in range(n):
                    u1[i] = u[i] + dt * rhs[i]
                _scalar_rhs(u1, a, invdx, 2, rhs)
                for i in range(n):
                    u[i] = 0.5 * (u[i] + u1[i] + dt * rhs[i])
            n_steps += 1
            min_dt = min(min_dt, dt)
            max_cfl = max(max_cfl, dt * lam * invdx)
            remaining -= dt
    return u, n_steps, min_dt, max_cfl


# ---------------------------------------------------------------------------
# 2-D linear acoustics, HLL fluxes
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True, fastmath=True)
def _limited_slopes(up, sl):
    """Branchless minmod slopes of every padded cell along the last axis.

    sl matches up's shape; first/last columns are left untouched (never
    read by the flux loops)."""
    m, R, P = up.shape
    for c in range(m):
        for j in range(R):
            for i in range(1, P - 1):
                dl = up[c, j, i] - up[c, j, i - 1]
                dr = up[c, j, i + 1] - up[c, j, i]
                sgn = np.copysign(0.5, dl) + np.copysign(0.5, dr)
                sl[c, j, i] = sgn * min(abs(dl), abs(dr))
    return sl


@njit(cache=True, nogil=True, fastmath=True)
def _limited_slopes_y(up, sl):
    m, R, P = up.shape
    for c in range(m):
        for j in range(1, R - 1):
            for i in range(P):
                dl = up[c, j, i] - up[c, j - 1, i]
                dr = up[c, j + 1, i] - up[c, j, i]
                sgn = np.copysign(0.5, dl) + np.copysign(0.5, dr)
                sl[c, j, i] = sgn * min(abs(dl), abs(dr))
    return sl


@njit(cache=True, nogil=True, fastmath=True)
def acoustics_rhs_kernel(up, g, order, ubx, sLmx, sRpx, ssx, invdx_f,
                         vby, sLmy, sRpy, ssy, invdy_f, rho0, K0,
                         invdx, invdy, sx, sy, Fx, Gy, out):
    """Full semi-discrete acoustics operator on a padded state.

    up is (3, J+2g, I+2g); face f in x sits between padded cells g-1+f and
    g+f.  Wave-speed factors (min(s_L,0), max(s_R,0), their product and the
    inverse spread) are per-interval precomputed; the three-branch HLL flux
    is evaluated in the equivalent branch-free clipped form.  sx/sy/Fx/Gy
    are caller-provided scratch arrays.
    """
    J = out.shape[1]
    I = out.shape[2]
    invrho = 1.0 / rho0
    if order == 2:
        _limited_slopes(up, sx)
        _limited_slopes_y(up, sy)
    for j in range(J):
        jj = j + g
        for f in range(I + 1):
            pL = g - 1 + f
            pR = g + f
            if order == 1:
                pl = up[0, jj, pL]; ul = up[1, jj, pL]; vl = up[2, jj, pL]
                pr = up[0, jj, pR]; ur = up[1, jj, pR]; vr = up[2, jj, pR]
            else:
                pl = up[0, jj, pL] + 0.5 * sx[0, jj, pL]
                ul = up[1, jj, pL] + 0.5 * sx[1, jj, pL]
                vl = up[2, jj, pL] + 0.5 * sx[2, jj, pL]
                pr = up[0, jj, pR] - 0.5 * sx[0, jj, pR]
                ur = up[1, jj, pR] - 0.5 * sx[1, jj, pR]
                vr = up[2, jj, pR] - 0.5 * sx[2, jj, pR]
            ub = ubx[j, f]
            # flux F(U) = A^x U at the face background: (ub p + K0 u, p/rho0 + ub u, ub v)
            fl0 = ub * pl + K0 * ul
            fr0 = ub * pr + K0 * ur
            fl1 = pl * invrho + ub * ul
            fr1 = pr * invrho + ub * ur
            fl2 = ub * vl
            fr2 = ub * vr
            sm = sLmx[j, f]; sp = sRpx[j, f]; ss = ssx[j, f]; invd = invdx_f[j, f]
            Fx[0, j, f] = (sp * fl0 - sm * fr0 + ss * (pr - pl)) * invd
            Fx[1, j, f] = (sp * fl1 - sm * fr1 + ss * (ur - ul)) * invd
            Fx[2, j, f] = (sp * fl2 - sm * fr2 + ss * (vr - vl)) * invd
    for f in range(J + 1):
        pL = g - 1 + f
        pR = g + f
        for i in range(I):
            ii = i + g
            if order == 1:
                pl = up[0, pL, ii]; ul = up[1, pL, ii]; vl = up[2, pL, ii]
                pr = up[0, pR, ii]; ur = up[1, pR, ii]; vr = up[2, pR, ii]
            else:
                pl = up[0, pL, ii] + 0.5 * sy[0, pL, ii]
                ul = up[1, pL, ii] + 0.5 * sy[1, pL, ii]
                vl = up[2, pL, ii] + 0.5 * sy[2, pL, ii]
                pr = up[0, pR, ii] - 0.5 * sy[0, pR, ii]
                ur = up[1, pR, ii] - 0.5 * sy[1, pR, ii]
                vr = up[2, pR, ii] - 0.5 * sy[2, pR, ii]
            vb = vby[f, i]
            # flux G(U) = A^y U: (vb p + K0 v, vb u, p/rho0 + vb v)
            fl0 = vb * pl + K0 * vl
            fr0 = vb * pr + K0 * vr
            fl1 = vb * ul
            fr1 = vb * ur
            fl2 = pl * invrho + vb * vl
            fr2 = pr * invrho + vb * vr
            sm = sLmy[f, i]; sp = sRpy[f, i]; ss = ssy[f, i]; invd = invdy_f[f, i]
            Gy[0, f, i] = (sp * fl0 - sm * fr0 + ss * (pr - pl)) * invd
            Gy[1, f, i] = (sp * fl1 - sm * fr1 + ss * (ur - ul)) * invd
            Gy[2, f, i] = (sp * fl2 - sm * fr2 + ss * (vr - vl)) * invd
    for c in range(3):
        for j in range(J):
            for i in range(I):
                out[c, j, i] = -(Fx[c, j, i + 1] - Fx[c, j, i]) * invdx \
                               - (Gy[c, j + 1, i] - Gy[c, j, i]) * invdy
    return out


# ---------------------------------------------------------------------------
# state updates (exact IEEE order, no fastmath: these pin the arithmetic of
# the forward-Euler / Heun combinations used everywhere)
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def axpy_update(out, u, rhs, dt):
    """out = u + dt * rhs, elementwise on flat views."""
    for i in range(out.shape[0]):
        out[i] = u[i] + dt * rhs[i]
    return out


@njit(cache=True, nogil=True)
def heun_update(out, u, u1, rhs1, dt):
    """out = 0.5 * (u + u1 + dt * rhs1), elementwise on flat views."""
    for i in range(out.shape[0]):
        out[i] = 0.5 * (u[i] + u1[i] + dt * rhs1[i])
    return out


@njit(cache=True, nogil=True)
def extract_real_checked(gc, out):
    """Copy the real part of a complex field and return the max absolute
    real value and imaginary residue in one pass."""
    flat_c = gc.reshape(-1)
    flat_o = out.reshape(-1)
    max_re = 0.0
    max_im = 0.0
    for i in range(flat_c.shape[0]):
        re = flat_c[i].real
        im = flat_c[i].imag
        flat_o[i] = re
        if abs(re) > max_re:
            max_re = abs(re)
        if abs(im) > max_im:
            max_im = abs(im)
    return max_re, max_im


@njit(cache=True, nogil=True)
def split_complex_pair(gc, out_re, out_im):
    """Split one complex field into its real and imaginary parts."""
    flat_c = gc.reshape(-1)
    a = out_re.reshape(-1)
    b = out_im.reshape(-1)
    for i in range(flat_c.shape[0]):
        a[i] = flat_c[i].real
        b[i] = flat_c[i].imag


# ---------------------------------------------------------------------------
# 2-D magnetic induction, symmetric form (periodic, first order)
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True, fastmath=True)
def induction_rhs_kernel(up, ufx, vfx, selx, vfy, ufy, sely, ucell, vcell,
                         invdx, invdy, out):
    """Semi-discrete operator of dU/dt + div(V (x) U - U (x) V) = -V div(U).

    up is padded (2, J+2, I+2) with ghost width 1 (periodic).  Face arrays
    carry the frozen interval velocities: ufx/vfx on x-faces (J, I+1) with
    upwind selector selx in {0, 1} (1 takes the left state), vfy/ufy/sely on
    y-faces (J+1, I).  The non-conservative source -V div_h(U) is assembled
    at cell centers from one-sided differences biased against the local
    velocity (the x-transport of the first component enters only through
    this term, so a centered divergence would leave it undamped and the
    scheme linearly unstable; velocity-sign upwinding restores the exact
    first-order upwind advection for frozen uniform V).
    """
    J = out.shape[1]
    I = out.shape[2]
    # x-face flux of the second component: f2 = uf*U2 - vf*U1 (upwind by uf)
    F2 = np.empty((J, I + 1))
    for j in range(J):
        jj = j + 1
        for f in range(I + 1):
            w = selx[j, f]
            u1f = w * up[0, jj, f] + (1.0 - w) * up[0, jj, f + 1]
            u2f = w * up[1, jj, f] + (1.0 - w) * up[1, jj, f + 1]
            F2[j, f] = ufx[j, f] * u2f - vfx[j, f] * u1f
    # y-face flux of the first component: g1 = vf*U1 - uf*U2 (upwind by vf)
    G1 = np.empty((J + 1, I))
    for f in range(J + 1):
        for i in range(I):
            ii = i + 1
            w = sely[f, i]
            u1f = w * up[0, f, ii] + (1.0 - w) * up[0, f + 1, ii]
            u2f = w * up[1, f, ii] + (1.0 - w) * up[1, f + 1, ii]
            G1[f, i] = vfy[f, i] * u1f - ufy[f, i] * u2f
    for j in range(J):
        jj = j + 1
        for i in range(I):
            ii = i + 1
            if ucell[j, i] >= 0.0:
                ddx = (up[0, jj, ii] - up[0, jj, ii - 1]) * invdx
            else:
                ddx = (up[0, jj, ii + 1] - up[0, jj, ii]) * invdx
            if vcell[j, i] >= 0.0:
                ddy = (up[1, jj, ii] - up[1, jj - 1, ii]) * invdy
            else:
                ddy = (up[1, jj + 1, ii] - up[1, jj, ii]) * invdy
            div = ddx + ddy
            out[0, j, i] = -(G1[j + 1, i] - G1[j, i]) * invdy - ucell[j, i] * div
            out[1, j, i] = -(F2[j, i + 1] - F2[j, i]) * invdx - vcell[j, i] * div
    return out


def warmup():
    """Compile every kernel on tiny inputs (call before forking workers)."""
    u = np.linspace(0.0, 1.0, 8)
    scalar_sample_terminal(u, np.array([0.3, -0.2]), 0.1, 0.125, 0.45, 1)
    scalar_sample_terminal(u, np.array([0.3, -0.2]), 0.1, 0.125, 0.45, 2)
    for g, order in ((1, 1), (2, 2)):
        n = 4 + 2 * g
        up = np.zeros((3, n, n))
        fx = np.zeros((4, 5))
        fy = np.zeros((5, 4))
        acoustics_rhs_kernel(up, g, order, fx, fx - 1, fx + 1, fx - 1, fx + 0.5,
                             fy, fy - 1, fy + 1, fy - 1, fy + 0.5, 1.0, 1.0,
                             4.0, 4.0, np.zeros((3, n, n)), np.zeros((3, n, n)),
                             np.zeros((3, 4, 5)), np.zeros((3, 5, 4)),
                             np.zeros((3, 4, 4)))
    up = np.zeros((2, 6, 6))
    fx = np.zeros((4, 5))
    fy = np.zeros((5, 4))
    induction_rhs_kernel(up, fx, fx, fx + 1.0, fy, fy, fy + 1.0,
                         np.zeros((4, 4)), np.zeros((4, 4)), 4.0, 4.0,
                         np.zeros((2, 4, 4)))
    flat = np.zeros(8)
    axpy_update(flat, flat, flat, 0.1)
    heun_update(flat, flat, flat, flat, 0.1)
    gc = np.zeros((2, 2), dtype=np.complex128)
    extract_real_checked(gc, np.zeros((2, 2)))
    split_complex_pair(gc, np.zeros((2, 2)), np.zeros((2, 2)))
