# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled backend for energy/gradient evaluation.

Same contract as ``cdfkit._energy_numpy.evaluate``: terms in the order
(L_d, L_dn, L_ds, L_dc, L_fr, L_conj), branch ties broken identically, and
the gradient taken through the branch selected in this pass.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef double TIE = 1e-12


cdef inline double dot3(const double* a, const double* b) nogil:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


cdef inline void cross3(const double* a, const double* b, double* out) nogil:
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


def evaluate(object u_in, object v_in, object ctx, object lam_in, bint want_grad):
    cdef cnp.ndarray[double, ndim=2] u = np.ascontiguousarray(u_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] v = np.ascontiguousarray(v_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] lam = np.ascontiguousarray(lam_in, dtype=np.float64)
    cdef Py_ssize_t m = ctx.m
    cdef cnp.ndarray[double, ndim=1] terms = np.zeros(6)
    cdef cnp.ndarray[double, ndim=2] gu = None
    cdef cnp.ndarray[double, ndim=2] gv = None
    cdef double[:, ::1] gu_v = None
    cdef double[:, ::1] gv_v = None
    if want_grad:
        gu = np.zeros((m, 3))
        gv = np.zeros((m, 3))
        gu_v = gu
        gv_v = gv

    cdef double l1 = lam[0], l2 = lam[1], l3 = lam[2], l4 = lam[3], lc = lam[4]
    cdef double[:, ::1] uu = u
    cdef double[:, ::1] vv = v
    cdef cnp.ndarray[double, ndim=2] normals = ctx.normals
    cdef double[:, ::1] nn = np.ascontiguousarray(normals)

    cdef Py_ssize_t i, j, k, c
    cdef double acc, accp, E, Ep, coef
    cdef double pua, pvb, pub, pva, cun, cvn

    # alignment with ground truth
    cdef double[:, ::1] gtu, gtv
    if ctx.has_gt:
        gtu = np.ascontiguousarray(ctx.gt_u_perp)
        gtv = np.ascontiguousarray(ctx.gt_v_perp)
        acc = 0.0
        for i in range(m):
            pua = dot3(&uu[i, 0], &gtu[i, 0])
            pvb = dot3(&vv[i, 0], &gtv[i, 0])
            pub = dot3(&uu[i, 0], &gtv[i, 0])
            pva = dot3(&vv[i, 0], &gtu[i, 0])
            E = pua * pua + pvb * pvb
            Ep = pub * pub + pva * pva
            if E - Ep > TIE:
                acc += Ep
                if want_grad:
                    for c in range(3):
                        gu_v[i, c] += (2.0 / m) * pub * gtv[i, c]
                        gv_v[i, c] += (2.0 / m) * pva * gtu[i, c]
            else:
                acc += E
                if want_grad:
                    for c in range(3):
                        gu_v[i, c] += (2.0 / m) * pua * gtu[i, c]
                        gv_v[i, c] += (2.0 / m) * pvb * gtv[i, c]
        terms[0] = acc / m

    # consistency with face normals
    acc = 0.0
    for i in range(m):
        cun = dot3(&uu[i, 0], &nn[i, 0])
        cvn = dot3(&vv[i, 0], &nn[i, 0])
        acc += cun * cun + cvn * cvn
        if want_grad and l1 > 0:
            for c in range(3):
                gu_v[i, c] += l1 * (2.0 / m) * cun * nn[i, c]
                gv_v[i, c] += l1 * (2.0 / m) * cvn * nn[i, c]
    terms[1] = acc / m

    # smoothness across interior edges
    cdef Py_ssize_t P = ctx.pairs.shape[0]
    cdef long long[:, ::1] pairs
    cdef double[:, :, ::1] T
    cdef double Tu[3]
    cdef double Tv[3]
    cdef double ukp[3]
    cdef double vkp[3]
    cdef double Tuxn[3]
    cdef double Tvxn[3]
    cdef double a1, a2, b1, b2
    if P > 0:
        pairs = np.ascontiguousarray(ctx.pairs, dtype=np.int64)
        T = np.ascontiguousarray(ctx.transport)
        acc = 0.0
        for i in range(P):
            j = pairs[i, 0]
            k = pairs[i, 1]
            for c in range(3):
                Tu[c] = T[i, c, 0] * uu[j, 0] + T[i, c, 1] * uu[j, 1] + T[i, c, 2] * uu[j, 2]
                Tv[c] = T[i, c, 0] * vv[j, 0] + T[i, c, 1] * vv[j, 1] + T[i, c, 2] * vv[j, 2]
            cross3(&nn[k, 0], &uu[k, 0], ukp)
            cross3(&nn[k, 0], &vv[k, 0], vkp)
            a1 = dot3(Tu, ukp)
            a2 = dot3(Tv, vkp)
            b1 = dot3(Tu, vkp)
            b2 = dot3(Tv, ukp)
            E = a1 * a1 + a2 * a2
            Ep = b1 * b1 + b2 * b2
            if E - Ep > TIE:
                acc += Ep
                if want_grad and l2 > 0:
                    coef = l2 * 2.0 / P
                    cross3(Tu, &nn[k, 0], Tuxn)
                    cross3(Tv, &nn[k, 0], Tvxn)
                    for c in range(3):
                        # T^t (b1 * vkp) into u_j, T^t (b2 * ukp) into v_j
                        gu_v[j, c] += coef * (
                            T[i, 0, c] * b1 * vkp[0]
                            + T[i, 1, c] * b1 * vkp[1]
                            + T[i, 2, c] * b1 * vkp[2]
                        )
                        gv_v[j, c] += coef * (
                            T[i, 0, c] * b2 * ukp[0]
                            + T[i, 1, c] * b2 * ukp[1]
                            + T[i, 2, c] * b2 * ukp[2]
                        )
                        gu_v[k, c] += coef * b2 * Tvxn[c]
                        gv_v[k, c] += coef * b1 * Tuxn[c]
            else:
                acc += E
                if want_grad and l2 > 0:
                    coef = l2 * 2.0 / P
                    cross3(Tu, &nn[k, 0], Tuxn)
                    cross3(Tv, &nn[k, 0], Tvxn)
                    for c in range(3):
                        gu_v[j, c] += coef * (
                            T[i, 0, c] * a1 * ukp[0]
                            + T[i, 1, c] * a1 * ukp[1]
                            + T[i, 2, c] * a1 * ukp[2]
                        )
                        gv_v[j, c] += coef * (
                            T[i, 0, c] * a2 * vkp[0]
                            + T[i, 1, c] * a2 * vkp[1]
                            + T[i, 2, c] * a2 * vkp[2]
                        )
                        gu_v[k, c] += coef * a1 * Tuxn[c]
                        gv_v[k, c] += coef * a2 * Tvxn[c]
        terms[2] = acc / P

    # consistency with stroke segments
    cdef Py_ssize_t K = ctx.seg_face.shape[0]
    cdef long long[::1] seg_face
    cdef double[:, ::1] seg_perp
    cdef double[::1] seg_len, seg_weight
    cdef double cu, cv, best
    if K > 0:
        seg_face = np.ascontiguousarray(ctx.seg_face, dtype=np.int64)
        seg_perp = np.ascontiguousarray(ctx.seg_perp)
        seg_len = np.ascontiguousarray(ctx.seg_len)
        seg_weight = np.ascontiguousarray(ctx.seg_weight)
        acc = 0.0
        for i in range(K):
            j = seg_face[i]
            cu = dot3(&uu[j, 0], &seg_perp[i, 0])
            cv = dot3(&vv[j, 0], &seg_perp[i, 0])
            if cu * cu - cv * cv > TIE:
                best = cv
                acc += seg_weight[i] * best * best / seg_len[i]
                if want_grad and l3 > 0:
                    coef = l3 * 2.0 * seg_weight[i] * best / seg_len[i]
                    for c in range(3):
                        gv_v[j, c] += coef * seg_perp[i, c]
            else:
                best = cu
                acc += seg_weight[i] * best * best / seg_len[i]
                if want_grad and l3 > 0:
                    coef = l3 * 2.0 * seg_weight[i] * best / seg_len[i]
                    for c in range(3):
                        gu_v[j, c] += coef * seg_perp[i, c]
        terms[3] = acc

    # unit-length regularization
    cdef double norm_u, norm_v
    acc = 0.0
    for i in range(m):
        norm_u = (uu[i, 0] ** 2 + uu[i, 1] ** 2 + uu[i, 2] ** 2) ** 0.5
        norm_v = (vv[i, 0] ** 2 + vv[i, 1] ** 2 + vv[i, 2] ** 2) ** 0.5
        acc += (norm_u - 1.0) ** 2 + (norm_v - 1.0) ** 2
        if want_grad and l4 > 0:
            if norm_u > 0:
                for c in range(3):
                    gu_v[i, c] += l4 * (2.0 / m) * (norm_u - 1.0) * uu[i, c] / norm_u
            if norm_v > 0:
                for c in range(3):
                    gv_v[i, c] += l4 * (2.0 / m) * (norm_v - 1.0) * vv[i, c] / norm_v
    terms[4] = acc / m

    # conjugacy penalty on normalized directions
    cdef double[:, ::1] d1, d2
    cdef double[::1] k1, k2
    cdef double c1, c2, e1, e2, r, safe_nu, safe_nv
    cdef double hu[3]
    cdef double hv[3]
    cdef double pu[3]
    cdef double pv[3]
    cdef double pu_dot, pv_dot
    if ctx.has_frame:
        d1 = np.ascontiguousarray(ctx.d1)
        d2 = np.ascontiguousarray(ctx.d2)
        k1 = np.ascontiguousarray(ctx.k1)
        k2 = np.ascontiguousarray(ctx.k2)
        acc = 0.0
        for i in range(m):
            safe_nu = (uu[i, 0] ** 2 + uu[i, 1] ** 2 + uu[i, 2] ** 2) ** 0.5
            safe_nv = (vv[i, 0] ** 2 + vv[i, 1] ** 2 + vv[i, 2] ** 2) ** 0.5
            if safe_nu <= 0:
                safe_nu = 1.0
            if safe_nv <= 0:
                safe_nv = 1.0
            for c in range(3):
                hu[c] = uu[i, c] / safe_nu
                hv[c] = vv[i, c] / safe_nv
            c1 = dot3(hu, &d1[i, 0])
            c2 = dot3(hu, &d2[i, 0])
            e1 = dot3(hv, &d1[i, 0])
            e2 = dot3(hv, &d2[i, 0])
            r = k1[i] * c1 * e1 + k2[i] * c2 * e2
            acc += r * r
            if want_grad and lc > 0:
                for c in range(3):
                    pu[c] = k1[i] * e1 * d1[i, c] + k2[i] * e2 * d2[i, c]
                    pv[c] = k1[i] * c1 * d1[i, c] + k2[i] * c2 * d2[i, c]
                pu_dot = dot3(pu, hu)
                pv_dot = dot3(pv, hv)
                for c in range(3):
                    gu_v[i, c] += lc * (2.0 / m) * r * (pu[c] - pu_dot * hu[c]) / safe_nu
                    gv_v[i, c] += lc * (2.0 / m) * r * (pv[c] - pv_dot * hv[c]) / safe_nv
        terms[5] = acc / m

    return terms, gu, gv
