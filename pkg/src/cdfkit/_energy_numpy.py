"""Vectorized numpy backend for energy/gradient evaluation.

``evaluate`` mirrors the compiled kernel exactly: same terms, same branch
tie-breaking, same accumulation order up to numpy's summation. The gradient
is of

    L_d + l1*L_dn + l2*L_ds + l3*L_dc + l4*L_fr + lc*L_conj

with min(., .) differentiated through the branch selected in this pass.
"""

from __future__ import annotations

import numpy as np

TIE = 1e-12


def _dots(a, b):
    return np.einsum("ij,ij->i", a, b)


def evaluate(u, v, ctx, lam, want_grad):
    m = ctx.m
    terms = np.zeros(6)
    gu = np.zeros((m, 3)) if want_grad else None
    gv = np.zeros((m, 3)) if want_grad else None
    l1, l2, l3, l4, lc = lam

    # alignment with ground truth
    if ctx.has_gt:
        a, b = ctx.gt_u_perp, ctx.gt_v_perp
        pua, pvb = _dots(u, a), _dots(v, b)
        pub, pva = _dots(u, b), _dots(v, a)
        E = pua**2 + pvb**2
        Ep = pub**2 + pva**2
        swap = (E - Ep) > TIE
        terms[0] = np.sum(np.where(swap, Ep, E)) / m
        if want_grad:
            gu += (2.0 / m) * np.where(swap[:, None], pub[:, None] * b, pua[:, None] * a)
            gv += (2.0 / m) * np.where(swap[:, None], pva[:, None] * a, pvb[:, None] * b)

    # consistency with face normals
    n = ctx.normals
    cun, cvn = _dots(u, n), _dots(v, n)
    terms[1] = np.sum(cun**2 + cvn**2) / m
    if want_grad and l1 > 0:
        gu += l1 * (2.0 / m) * cun[:, None] * n
        gv += l1 * (2.0 / m) * cvn[:, None] * n

    # smoothness across interior edges
    P = ctx.pairs.shape[0]
    if P > 0:
        jj, kk = ctx.pairs[:, 0], ctx.pairs[:, 1]
        T = ctx.transport
        Tu = np.einsum("pij,pj->pi", T, u[jj])
        Tv = np.einsum("pij,pj->pi", T, v[jj])
        nk = n[kk]
        ukp = np.cross(nk, u[kk])
        vkp = np.cross(nk, v[kk])
        a1 = _dots(Tu, ukp)
        a2 = _dots(Tv, vkp)
        b1 = _dots(Tu, vkp)
        b2 = _dots(Tv, ukp)
        E = a1**2 + a2**2
        Ep = b1**2 + b2**2
        swap = (E - Ep) > TIE
        terms[2] = np.sum(np.where(swap, Ep, E)) / P
        if want_grad and l2 > 0:
            c = l2 * 2.0 / P
            # branch E: pairs (Tu, ukp) and (Tv, vkp); branch E': (Tu, vkp), (Tv, ukp)
            w_uj = np.where(swap[:, None], b1[:, None] * vkp, a1[:, None] * ukp)
            w_vj = np.where(swap[:, None], b2[:, None] * ukp, a2[:, None] * vkp)
            g_uj = c * np.einsum("pij,pi->pj", T, w_uj)
            g_vj = c * np.einsum("pij,pi->pj", T, w_vj)
            # derivative of x . (n x y) wrt y is (x x n)
            Tuxn = np.cross(Tu, nk)
            Tvxn = np.cross(Tv, nk)
            g_uk = c * np.where(swap[:, None], b2[:, None] * Tvxn, a1[:, None] * Tuxn)
            g_vk = c * np.where(swap[:, None], b1[:, None] * Tuxn, a2[:, None] * Tvxn)
            np.add.at(gu, jj, g_uj)
            np.add.at(gv, jj, g_vj)
            np.add.at(gu, kk, g_uk)
            np.add.at(gv, kk, g_vk)

    # consistency with stroke segments
    K = ctx.seg_face.shape[0]
    if K > 0:
        f = ctx.seg_face
        sp = ctx.seg_perp
        slen = ctx.seg_len
        w = ctx.seg_weight
        cu = _dots(u[f], sp)
        cv = _dots(v[f], sp)
        pick_v = (cu**2 - cv**2) > TIE
        best = np.where(pick_v, cv, cu)
        terms[3] = np.sum(w * best**2 / slen)
        if want_grad and l3 > 0:
            coef = (l3 * 2.0 * w * best / slen)[:, None] * sp
            np.add.at(gu, f[~pick_v], coef[~pick_v])
            np.add.at(gv, f[pick_v], coef[pick_v])

    # unit-length regularization
    nu = np.linalg.norm(u, axis=1)
    nv = np.linalg.norm(v, axis=1)
    terms[4] = np.sum((nu - 1.0) ** 2 + (nv - 1.0) ** 2) / m
    if want_grad and l4 > 0:
        hu = np.divide(u, nu[:, None], out=np.zeros_like(u), where=nu[:, None] > 0)
        hv = np.divide(v, nv[:, None], out=np.zeros_like(v), where=nv[:, None] > 0)
        gu += l4 * (2.0 / m) * (nu - 1.0)[:, None] * hu
        gv += l4 * (2.0 / m) * (nv - 1.0)[:, None] * hv

    # conjugacy penalty on normalized directions
    if ctx.has_frame:
        safe_nu = np.where(nu > 0, nu, 1.0)
        safe_nv = np.where(nv > 0, nv, 1.0)
        hu = u / safe_nu[:, None]
        hv = v / safe_nv[:, None]
        d1, d2, k1, k2 = ctx.d1, ctx.d2, ctx.k1, ctx.k2
        c1 = _dots(hu, d1)
        c2 = _dots(hu, d2)
        e1 = _dots(hv, d1)
        e2 = _dots(hv, d2)
        r = k1 * c1 * e1 + k2 * c2 * e2
        terms[5] = np.sum(r**2) / m
        if want_grad and lc > 0:
            pu = (k1 * e1)[:, None] * d1 + (k2 * e2)[:, None] * d2
            pv = (k1 * c1)[:, None] * d1 + (k2 * c2)[:, None] * d2
            pu = (pu - _dots(pu, hu)[:, None] * hu) / safe_nu[:, None]
            pv = (pv - _dots(pv, hv)[:, None] * hv) / safe_nv[:, None]
            gu += lc * (2.0 / m) * r[:, None] * pu
            gv += lc * (2.0 / m) * r[:, None] * pv

    return terms, gu, gv
