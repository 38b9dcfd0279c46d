"""Singular and near-singular quadrature for panel-based Nystrom discretizations.

All boundary kernels used in the package reduce to four scalar components
evaluated at the displacement ``d = x - y``:

* component 0: a single-layer type kernel (``1/(4 pi r)`` or its massive form),
* components 1..3: vector kernels ``d_k f(r) / (4 pi r^3)``.

Far panels use the native Gauss nodes.  Panels close to a target are
integrated on an adaptive quadtree with the density interpolated by the
panel's tensor Lagrange basis.  A node's own panel is integrated in polar
(Duffy) coordinates centred at the node; the principal value of the
strongly singular vector kernel is obtained by subtracting the leading
``1/s`` term along each ray and adding back its exact contribution.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

FOUR_PI = 4.0 * np.pi
_REF_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


@lru_cache(maxsize=None)
def gauss(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=None)
def _bary(p: int):
    x, _ = gauss(p)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / np.prod(diff, axis=1)


def lagrange_1d(p: int, x) -> np.ndarray:
    """Values of the ``p`` Lagrange polynomials on Gauss nodes at points ``x``."""
    nodes, _ = gauss(p)
    bw = _bary(p)
    x = np.asarray(x, float)
    diff = x[..., None] - nodes
    exact = diff == 0.0
    diff = np.where(exact, 1.0, diff)
    terms = bw / diff
    out = terms / terms.sum(axis=-1, keepdims=True)
    hit = exact.any(axis=-1)
    if np.any(hit):
        out[hit] = exact[hit].astype(float)
    return out


def lagrange_2d(p: int, s, t) -> np.ndarray:
    Ls = lagrange_1d(p, s)
    Lt = lagrange_1d(p, t)
    return (Ls[..., :, None] * Lt[..., None, :]).reshape(Ls.shape[:-1] + (p * p,))


# ---------------------------------------------------------------- kernels


def static_kernel(d):
    """``[1/(4 pi r), d_k/(4 pi r^3)]`` stacked on the last axis (real)."""
    r = np.sqrt(np.sum(d * d, axis=-1))
    inv = 1.0 / (FOUR_PI * r)
    return np.concatenate([inv[..., None], d * (inv / (r * r))[..., None]], axis=-1)


def dynamic_kernel(d, w: complex):
    """Bounded remainders ``psi - 1/(4 pi r)`` and ``d_k [e^{iwr}(1-iwr) - 1]/(4 pi r^3)``."""
    r = np.sqrt(np.sum(d * d, axis=-1))
    iwr = 1j * w * r
    em1 = np.expm1(iwr)
    s0 = em1 / (FOUR_PI * r)
    f = (em1 - iwr * np.exp(iwr)) / (FOUR_PI * r**3)
    return np.concatenate([s0[..., None], d * f[..., None]], axis=-1)


def dynamic_diagonal(w: complex):
    """Limits of the dynamic kernel at ``d -> 0`` (the vector part is odd, mean 0)."""
    return np.array([1j * w / FOUR_PI, 0.0, 0.0, 0.0], dtype=complex)


def full_kernel(d, w: complex):
    """``[psi^z, d_k e^{iwr}(1 - iwr)/(4 pi r^3)]``: the scalar parts of ``phi^z``."""
    r = np.sqrt(np.sum(d * d, axis=-1))
    e = np.exp(1j * w * r) / (FOUR_PI * r)
    f = e * (1.0 - 1j * w * r) / (r * r)
    return np.concatenate([e[..., None], d * f[..., None]], axis=-1)


# ---------------------------------------------------------------- panel helpers


def panel_boxes(q, P: int, box):
    """Centre (3D) and enclosing radius of a reference sub-box of panel ``P``."""
    s0, s1, t0, t1 = box
    ss = np.array([s0, 0.5 * (s0 + s1), s1])
    tt = np.array([t0, 0.5 * (t0 + t1), t1])
    S, T = np.meshgrid(ss, tt, indexing="ij")
    x = q.panel_geometry(P, S.ravel(), T.ravel())[0]
    c = x[4]
    return c, 1.05 * np.max(np.linalg.norm(x - c, axis=1))


def panel_extent(q):
    """Centres and radii of all panels."""
    cache = getattr(q, "_panel_extent", None)
    if cache is not None:
        return cache
    cs, rs = [], []
    for P in range(q.n_panels):
        g = np.linspace(-1, 1, 5)
        S, T = np.meshgrid(g, g, indexing="ij")
        x = q.panel_geometry(P, S.ravel(), T.ravel())[0]
        c = x[12]
        cs.append(c)
        rs.append(np.max(np.linalg.norm(x - c, axis=1)))
    out = (np.array(cs), np.array(rs))
    q._panel_extent = out
    return out


def near_panel_weights(q, P, targets, kernel, *, eta=2.5, qord=None, maxdepth=24, ncomp=4,
                       dtype=float):
    """Quadrature weights of panel ``P`` for arbitrary nearby targets.

    Returns an array of shape ``(len(targets), ncomp, p*p)``: row ``i``
    contracted with the panel's nodal density values gives the integral of
    ``kernel(targets[i] - y) * density(y)`` over the panel.
    """
    p = q.order
    qord = qord or p + 2
    g, gw = gauss(qord)
    Sg, Tg = np.meshgrid(g, g, indexing="ij")
    Sg, Tg = Sg.ravel(), Tg.ravel()
    Wg = np.outer(gw, gw).ravel()
    targets = np.atleast_2d(targets)
    out = np.zeros((len(targets), ncomp, p * p), dtype=dtype)
    ctrl = np.array([-1.0, 0.0, 1.0])
    Cs, Ct = np.meshgrid(ctrl, ctrl, indexing="ij")
    Cs, Ct = Cs.ravel(), Ct.ravel()
    nq = len(Sg)
    stack = [((-1.0, 1.0, -1.0, 1.0), np.arange(len(targets)), 0)]
    while stack:
        box, idx, depth = stack.pop()
        s0, s1, t0, t1 = box
        hs, ht = 0.5 * (s1 - s0), 0.5 * (t1 - t0)
        s = s0 + (np.concatenate([Sg, Cs]) + 1) * hs
        t = t0 + (np.concatenate([Tg, Ct]) + 1) * ht
        y, _, jac, _, _ = q.panel_geometry(P, s, t)
        ctr = y[nq + 4]
        rad = 1.05 * np.max(np.linalg.norm(y[nq:] - ctr, axis=1))
        dist = np.linalg.norm(targets[idx] - ctr, axis=1)
        acc = (dist > eta * rad) | (depth >= maxdepth)
        if np.any(acc):
            wq = jac[:nq] * Wg * hs * ht
            L = lagrange_2d(p, s[:nq], t[:nq]) * wq[:, None]
            ia = idx[acc]
            K = kernel(targets[ia][:, None, :] - y[None, :nq, :])
            out[ia] += (np.swapaxes(K, 1, 2).reshape(-1, nq) @ L).reshape(len(ia), ncomp, p * p)
        rest = idx[~acc]
        if rest.size:
            # split only the long side of high-aspect boxes
            yc = y[nq:].reshape(3, 3, 3)
            ls = np.linalg.norm(yc[2, 1] - yc[0, 1])
            lt = np.linalg.norm(yc[1, 2] - yc[1, 0])
            sm, tm = 0.5 * (s0 + s1), 0.5 * (t0 + t1)
            if ls > 2 * lt:
                kids = ((s0, sm, t0, t1), (sm, s1, t0, t1))
            elif lt > 2 * ls:
                kids = ((s0, s1, t0, tm), (s0, s1, tm, t1))
            else:
                kids = ((s0, sm, t0, tm), (sm, s1, t0, tm), (s0, sm, tm, t1), (sm, s1, tm, t1))
            for b in kids:
                stack.append((b, rest, depth + 1))
    return out


def _tau_breaks(foot: float, rel_dist: float):
    """Breakpoints on [0, 1] graded geometrically away from ``foot``."""
    br = {0.0, 1.0}
    if 0.0 < foot < 1.0:
        br.add(foot)
    step = max(rel_dist, 1e-6)
    while step < 1.0:
        for b in (foot - step, foot + step):
            if 0.0 < b < 1.0:
                br.add(b)
        step *= 2.0
    return np.array(sorted(br))


def duffy_rule(t0, *, ns=12, ntau=8, graded=True):
    """Polar-type rule on the reference square centred at ``t0``.

    Returns per-triangle tuples ``(s, tau, ws, wtau, d, D)`` where the
    reference point is ``t0 + s * d(tau)`` and the area element is
    ``D * s * ds * dtau``.
    """
    gs, gws = gauss(ns)
    gs = 0.5 * (gs + 1)
    gws = 0.5 * gws
    gt, gwt = gauss(ntau)
    rules = []
    for a in range(4):
        Va, Vb = _REF_CORNERS[a], _REF_CORNERS[(a + 1) % 4]
        e = Vb - Va
        L = np.linalg.norm(e)
        D = abs((Va[0] - t0[0]) * e[1] - (Va[1] - t0[1]) * e[0])
        if D < 1e-14:
            continue
        foot = float(np.dot(t0 - Va, e) / (L * L))
        dist = D / L
        br = _tau_breaks(foot, dist / L) if graded else np.array([0.0, 1.0])
        taus, wt = [], []
        for lo, hi in zip(br[:-1], br[1:]):
            taus.append(lo + 0.5 * (gt + 1) * (hi - lo))
            wt.append(0.5 * gwt * (hi - lo))
        tau = np.concatenate(taus)
        wtau = np.concatenate(wt)
        d = Va[None, :] + tau[:, None] * e[None, :] - t0[None, :]
        rules.append((gs, tau, gws, wtau, d, D))
    return rules


def self_panel_rows(q, P, kernel, *, singular, ns=12, ntau=8, graded=True, dtype=float):
    """Own-panel weights for each node of panel ``P``: shape ``(p*p, 4, p*p)``.

    With ``singular`` the vector components are principal values: their
    leading ``c(tau)/s`` behaviour is subtracted and integrated exactly.
    """
    p = q.order
    g, _ = gauss(p)
    out = np.zeros((p * p, 4, p * p), dtype=dtype)
    nodes = q.panel_nodes(P)
    xs = q.points[nodes]
    for li in range(p * p):
        t0 = np.array([g[li // p], g[li % p]])
        x0 = xs[li]
        if singular:
            _, _, J0, A_s, A_t = q.panel_geometry(P, t0[:1], t0[1:])
            J0, A_s, A_t = J0[0], A_s[0], A_t[0]
        for s, tau, ws, wtau, d, D in duffy_rule(t0, ns=ns, ntau=ntau, graded=graded):
            pts = t0[None, None, :] + s[None, :, None] * d[:, None, :]  # (ntau, ns, 2)
            y, _, jac, _, _ = q.panel_geometry(P, pts[..., 0], pts[..., 1])
            wq = jac * D * s[None, :] * wtau[:, None] * ws[None, :]
            K = kernel(x0 - y)  # (ntau, ns, 4)
            L = lagrange_2d(p, pts[..., 0], pts[..., 1])
            out[li] += np.einsum("abk,ab,abj->kj", K, wq, L)
            if singular:
                Ad = d[:, :1] * A_s[None, :] + d[:, 1:] * A_t[None, :]  # (ntau, 3)
                nAd = np.linalg.norm(Ad, axis=1)
                c = -J0 * D * Ad / (FOUR_PI * nAd[:, None] ** 3)  # (ntau, 3)
                # remove c/s integrated by the same rule, add its exact PV value
                sub = np.sum(ws / s) * np.sum(c * wtau[:, None], axis=0)
                exact = np.sum(c * (np.log(nAd) * wtau)[:, None], axis=0)
                out[li, 1:, li] += exact - sub
    return out


# ---------------------------------------------------------------- assembly


def _far_matrices(q, kernel, dtype):
    """Native-node quadrature ``K(x_i - x_j) w_j`` with a zero diagonal."""
    n = q.n
    out = np.zeros((4, n, n), dtype=dtype)
    chunk = max(1, 4_000_000 // n)
    for a in range(0, n, chunk):
        b = min(n, a + chunk)
        d = q.points[a:b, None, :] - q.points[None, :, :]
        idx = np.arange(a, b)
        d[idx - a, idx] = 1.0  # placeholder; zeroed below
        K = kernel(d) * q.weights[None, :, None]
        K[idx - a, idx] = 0.0
        out[:, a:b, :] = np.moveaxis(K, -1, 0)
    return out


def near_targets(q, P, eta=2.5):
    c, r = panel_extent(q)
    own = q.panel_nodes(P)
    dist = np.linalg.norm(q.points - c[P], axis=1)
    mask = dist <= eta * r[P]
    mask[own] = False
    return np.nonzero(mask)[0]


def assemble_static(q):
    """Single-layer ``S0`` (N, N) and Riesz ``R`` (3, N, N) matrices, real."""
    if not q.is_parametric:
        return _assemble_static_mesh(q)
    M = _far_matrices(q, static_kernel, float)
    for P in range(q.n_panels):
        cols = q.panel_nodes(P)
        tg = near_targets(q, P)
        if tg.size:
            M[:, tg, cols] = np.moveaxis(near_panel_weights(q, P, q.points[tg], static_kernel), 1, 0)
        rows = self_panel_rows(q, P, static_kernel, singular=True)
        M[:, cols, cols] = np.moveaxis(rows, 1, 0)
    return M[0], M[1:]


def assemble_dynamic(q, w: complex):
    """Bounded z-dependent remainders ``Q1`` (N, N) and ``Rdyn`` (3, N, N)."""

    def kern(d):
        return dynamic_kernel(d, w)

    M = _far_matrices(q, kern, complex)
    diag = dynamic_diagonal(w)
    if not q.is_parametric:
        idx = np.arange(q.n)
        M[0, idx, idx] = diag[0] * q.weights
        return M[0], M[1:]
    for P in range(q.n_panels):
        cols = q.panel_nodes(P)
        rows = self_panel_rows(q, P, kern, singular=False, ns=8, ntau=8, graded=False,
                               dtype=complex)
        M[:, cols, cols] = np.moveaxis(rows, 1, 0)
    return M[0], M[1:]


def _self_triangle_inv_r(tri, c):
    """Exact integral of ``1/|y - c|`` over a flat triangle containing ``c``."""
    total = 0.0
    for a in range(3):
        A, B = tri[a] - c, tri[(a + 1) % 3] - c
        e = B - A
        L = np.linalg.norm(e)
        h = np.linalg.norm(np.cross(A, e)) / L
        if h < 1e-15:
            continue
        sa = np.dot(A, e) / L
        sb = np.dot(B, e) / L
        total += h * (np.arcsinh(sb / h) - np.arcsinh(sa / h))
    return total


def _assemble_static_mesh(q):
    M = _far_matrices(q, static_kernel, float)
    for i, tri in enumerate(q.triangles):
        M[0, i, i] = _self_triangle_inv_r(tri, q.points[i]) / FOUR_PI
    return M[0], M[1:]


# ---------------------------------------------------------------- off-surface


def potential_components(q, pts, kernel, dens, *, dtype=complex, eta=2.5):
    """``sum_j kernel(pts - y_j) dens_j`` with near-field correction.

    ``dens`` has shape ``(N, ...)``; the result has shape
    ``(len(pts), 4) + dens.shape[1:]``.
    """
    pts = np.atleast_2d(np.asarray(pts, float))
    dens = np.asarray(dens)
    tail = dens.shape[1:]
    dflat = dens.reshape(q.n, -1)
    out = np.zeros((len(pts), 4, dflat.shape[1]), dtype=dtype)
    wd = dflat * q.weights[:, None]
    chunk = max(1, 2_000_000 // q.n)
    if not q.is_parametric:
        for a in range(0, len(pts), chunk):
            K = kernel(pts[a:a + chunk, None, :] - q.points[None, :, :])
            out[a:a + chunk] = np.einsum("nmk,mc->nkc", K, wd)
        return out.reshape((len(pts), 4) + tail)
    c, r = panel_extent(q)
    p2 = q.order**2
    for a in range(0, len(pts), chunk):
        sub = pts[a:a + chunk]
        K = kernel(sub[:, None, :] - q.points[None, :, :])  # (n, N, 4)
        dist = np.linalg.norm(sub[:, None, :] - c[None, :, :], axis=2)
        near = dist <= eta * r[None, :]
        for P in np.nonzero(near.any(axis=0))[0]:
            K[near[:, P], P * p2:(P + 1) * p2, :] = 0.0
        out[a:a + chunk] = np.einsum("nmk,mc->nkc", K, wd)
        for P in np.nonzero(near.any(axis=0))[0]:
            ti = np.nonzero(near[:, P])[0]
            Wn = near_panel_weights(q, P, sub[ti], kernel, dtype=dtype)
            out[a + ti] += np.einsum("nkj,jc->nkc", Wn, dflat[P * p2:(P + 1) * p2])
    return out.reshape((len(pts), 4) + tail)
