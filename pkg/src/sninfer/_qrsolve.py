"""Compiled kernels for the tick-loss linear program.

Two solvers live here:

* ``frisch_newton``: a Mehrotra predictor-corrector interior point method on
  the bounded dual of the quantile regression LP,
  ``max y'a  s.t.  X'a = (1 - tau) X'1,  0 <= a <= 1``,
  written as ``min c'x, A x = b, 0 <= x <= 1`` with ``A = X'`` and ``c = -y``.
  The regression coefficients are minus the LP dual vector.
* ``vertex_descent``: exact descent between basic solutions (fits through
  ``k`` observations).  From a basis it checks the optimality conditions in
  closed form and, if violated, moves along the most violated edge with an
  exact piecewise-linear line search.  Started from the previous window's
  basis it typically needs zero or one pivot per added observation.

Status codes returned by ``vertex_descent``: 0 unique optimum, 1 optimal but
the minimizer set may be a face (dual value on a bound or a tied residual),
2 failure (singular basis or iteration cap).
"""

import numpy as np
from numba import njit

_BIG = 1e300


@njit(cache=True, nogil=True)
def _lu_solve(M, b, transpose):
    """Solve ``M z = b`` (or ``M' z = b``) by partial pivoting; ok flag first."""
    k = M.shape[0]
    A = np.empty((k, k))
    for i in range(k):
        for j in range(k):
            A[i, j] = M[j, i] if transpose else M[i, j]
    z = b.copy()
    scale = 0.0
    for i in range(k):
        for j in range(k):
            if abs(A[i, j]) > scale:
                scale = abs(A[i, j])
    if scale == 0.0:
        return False, z
    for col in range(k):
        piv = col
        for row in range(col + 1, k):
            if abs(A[row, col]) > abs(A[piv, col]):
                piv = row
        if abs(A[piv, col]) <= 1e-13 * scale:
            return False, z
        if piv != col:
            for j in range(k):
                tmp = A[col, j]
                A[col, j] = A[piv, j]
                A[piv, j] = tmp
            tmp = z[col]
            z[col] = z[piv]
            z[piv] = tmp
        for row in range(col + 1, k):
            f = A[row, col] / A[col, col]
            if f != 0.0:
                for j in range(col, k):
                    A[row, j] -= f * A[col, j]
                z[row] -= f * z[col]
    for row in range(k - 1, -1, -1):
        acc = z[row]
        for j in range(row + 1, k):
            acc -= A[row, j] * z[j]
        z[row] = acc / A[row, row]
    return True, z


@njit(cache=True, nogil=True)
def _bound(v, dv):
    out = _BIG
    for i in range(v.shape[0]):
        if dv[i] < 0.0:
            t = -v[i] / dv[i]
            if t < out:
                out = t
    return out


@njit(cache=True, nogil=True)
def frisch_newton(X, y, tau, tol, maxit):
    """Interior point fit of the ``tau`` quantile regression of ``y`` on ``X``.

    Returns ``(beta, gap, iterations, converged)``; ``gap`` is the
    complementarity ``x'z + s'w``, which bounds the objective's distance
    from the minimum.
    """
    n, k = X.shape
    step = 0.99995
    x = np.full(n, 1.0 - tau)
    s = np.full(n, tau)

    XtX = np.zeros((k, k))
    Xty = np.zeros(k)
    for i in range(n):
        for a in range(k):
            Xty[a] += X[i, a] * y[i]
            for b in range(k):
                XtX[a, b] += X[i, a] * X[i, b]
    ok, yd = _lu_solve(XtX, Xty, False)
    if not ok:
        return np.zeros(k), _BIG, 0, False
    for a in range(k):
        yd[a] = -yd[a]

    # dual slacks: z - w = c - A'yd, both strictly positive
    r = np.empty(n)
    absmean = 0.0
    for i in range(n):
        acc = -y[i]
        for a in range(k):
            acc -= X[i, a] * yd[a]
        r[i] = acc
        absmean += abs(acc)
    absmean /= n
    shift = 0.1 * absmean + 1e-8
    z = np.empty(n)
    w = np.empty(n)
    for i in range(n):
        z[i] = max(r[i], 0.0) + shift
        w[i] = max(-r[i], 0.0) + shift

    q = np.empty(n)
    dx = np.empty(n)
    ds = np.empty(n)
    dz = np.empty(n)
    dw = np.empty(n)
    dxdz = np.empty(n)
    dsdw = np.empty(n)
    v = np.empty(n)
    M = np.zeros((k, k))
    rhs = np.zeros(k)

    gap = 0.0
    for i in range(n):
        gap += x[i] * z[i] + s[i] * w[i]
    it = 0
    while gap > tol and it < maxit:
        it += 1
        M[:, :] = 0.0
        rhs[:] = 0.0
        for i in range(n):
            q[i] = 1.0 / (z[i] / x[i] + w[i] / s[i])
            r[i] = z[i] - w[i]
            for a in range(k):
                qa = q[i] * X[i, a]
                rhs[a] += qa * r[i]
                for b in range(a + 1):
                    M[a, b] += qa * X[i, b]
        for a in range(k):
            for b in range(a + 1, k):
                M[a, b] = M[b, a]
        ok, dy = _lu_solve(M, rhs, False)
        if not ok:
            break
        for i in range(n):
            acc = 0.0
            for a in range(k):
                acc += X[i, a] * dy[a]
            dx[i] = q[i] * (acc - r[i])
            ds[i] = -dx[i]
            dz[i] = -z[i] * (dx[i] / x[i] + 1.0)
            dw[i] = -w[i] * (ds[i] / s[i] + 1.0)
        fp = min(step * min(_bound(x, dx), _bound(s, ds)), 1.0)
        fd = min(step * min(_bound(z, dz), _bound(w, dw)), 1.0)

        if min(fp, fd) < 1.0:
            # Mehrotra centering and second-order correction
            g = 0.0
            for i in range(n):
                g += (z[i] + fd * dz[i]) * (x[i] + fp * dx[i]) + (w[i] + fd * dw[i]) * (s[i] + fp * ds[i])
            mu = gap * (g / gap) ** 3 / (2.0 * n)
            rhs[:] = 0.0
            for i in range(n):
                dxdz[i] = dx[i] * dz[i]
                dsdw[i] = ds[i] * dw[i]
                v[i] = mu * (1.0 / x[i] - 1.0 / s[i]) - r[i] - dxdz[i] / x[i] + dsdw[i] / s[i]
                for a in range(k):
                    rhs[a] -= q[i] * X[i, a] * v[i]
            ok, dy = _lu_solve(M, rhs, False)
            if not ok:
                break
            for i in range(n):
                acc = 0.0
                for a in range(k):
                    acc += X[i, a] * dy[a]
                dx[i] = q[i] * (acc + v[i])
                ds[i] = -dx[i]
                dz[i] = mu / x[i] - z[i] - dxdz[i] / x[i] - z[i] / x[i] * dx[i]
                dw[i] = mu / s[i] - w[i] - dsdw[i] / s[i] + w[i] / s[i] * dx[i]
            fp = min(step * min(_bound(x, dx), _bound(s, ds)), 1.0)
            fd = min(step * min(_bound(z, dz), _bound(w, dw)), 1.0)

        for i in range(n):
            x[i] += fp * dx[i]
            s[i] += fp * ds[i]
            z[i] += fd * dz[i]
            w[i] += fd * dw[i]
        for a in range(k):
            yd[a] += fd * dy[a]
        gap = 0.0
        for i in range(n):
            gap += x[i] * z[i] + s[i] * w[i]

    beta = np.empty(k)
    for a in range(k):
        beta[a] = -yd[a]
    return beta, gap, it, gap <= tol


@njit(cache=True, nogil=True)
def vertex_descent(X, y, m, tau, basis, is_basic, tie_tol, maxit):
    """Exact descent to an optimal basic solution on rows ``0..m-1``.

    ``basis`` (length k, row indices < m) and the boolean mask ``is_basic``
    are updated in place.  Returns ``(beta, status, pivots)``.
    """
    k = X.shape[1]
    ctol = 1e-9
    Xh = np.empty((k, k))
    yh = np.empty(k)
    r = np.empty(m)
    g = np.empty(k)
    beta = np.zeros(k)
    for pivots in range(maxit + 1):
        for j in range(k):
            yh[j] = y[basis[j]]
            for a in range(k):
                Xh[j, a] = X[basis[j], a]
        ok, beta = _lu_solve(Xh, yh, False)
        if not ok:
            return beta, 2, pivots

        g[:] = 0.0
        tie = False
        for i in range(m):
            if is_basic[i]:
                r[i] = 0.0
                continue
            acc = y[i]
            for a in range(k):
                acc -= X[i, a] * beta[a]
            r[i] = acc
            if abs(acc) <= tie_tol:
                tie = True
            psi = tau if acc > 0.0 else tau - 1.0
            for a in range(k):
                g[a] -= psi * X[i, a]
        ok, c = _lu_solve(Xh, g, True)
        if not ok:
            return beta, 2, pivots

        worst = 0.0
        jstar = -1
        direction = 0.0
        interior = True
        for j in range(k):
            if c[j] > tau + ctol:
                if c[j] - tau > worst:
                    worst = c[j] - tau
                    jstar = j
                    direction = -1.0
            elif c[j] < tau - 1.0 - ctol:
                if tau - 1.0 - c[j] > worst:
                    worst = tau - 1.0 - c[j]
                    jstar = j
                    direction = 1.0
            if c[j] >= tau - ctol or c[j] <= tau - 1.0 + ctol:
                interior = False
        if jstar < 0:
            if interior and not tie:
                return beta, 0, pivots
            return beta, 1, pivots
        if pivots == maxit:
            break

        # edge direction: move basic row jstar off the fit, keep the others
        e = np.zeros(k)
        e[jstar] = direction
        ok, delta = _lu_solve(Xh, e, False)
        if not ok:
            return beta, 2, pivots
        tb = np.empty(m)
        wb = np.empty(m)
        idx = np.empty(m, dtype=np.int64)
        nb = 0
        for i in range(m):
            if is_basic[i]:
                continue
            wi = 0.0
            for a in range(k):
                wi += X[i, a] * delta[a]
            if (r[i] > 0.0 and wi > 0.0) or (r[i] <= 0.0 and wi < 0.0):
                tb[nb] = r[i] / wi
                wb[nb] = abs(wi)
                idx[nb] = i
                nb += 1
        if nb == 0:
            return beta, 2, pivots
        order = np.argsort(tb[:nb])
        slope = -worst
        enter = -1
        for p in range(nb):
            slope += wb[order[p]]
            if slope >= 0.0:
                enter = idx[order[p]]
                break
        if enter < 0:
            return beta, 2, pivots
        is_basic[basis[jstar]] = False
        basis[jstar] = enter
        is_basic[enter] = True
    return beta, 2, maxit


@njit(cache=True, nogil=True)
def qr_path_kernel(X, y, tau, m_first, m_last, basis, is_basic, yscale, maxit, out, status):
    """Warm-started vertex fits for windows ``m_first..m_last``.

    Row ``m - m_first`` of ``out``/``status`` receives window ``m``.  Stops at
    the first failed window and returns its size (``-1`` when all succeed).
    """
    for m in range(m_first, m_last + 1):
        tie_tol = 1e-11 * (1.0 + yscale[m - 1])
        beta, st, _ = vertex_descent(X, y, m, tau, basis, is_basic, tie_tol, maxit)
        if st == 2:
            return m
        for a in range(X.shape[1]):
            out[m - m_first, a] = beta[a]
        status[m - m_first] = st
    return -1


@njit(cache=True, nogil=True)
def es_path_kernel(X, y, alphas, m_first, lower, res_scale, out, counts):
    """Least squares on the tail subsample of each window.

    ``alphas[j]`` is the quantile fit for window ``m_first + j``.  Upper-tail
    rows have residual above the zero band, lower-tail rows residual at or
    below it.  Returns the first window with a singular or too small tail
    subsample, or ``-1``.
    """
    n, k = X.shape
    G = np.empty((k, k))
    h = np.empty(k)
    for j in range(alphas.shape[0]):
        m = m_first + j
        band = 1e-7 * (1.0 + res_scale[m - 1])
        G[:, :] = 0.0
        h[:] = 0.0
        cnt = 0
        for i in range(m):
            acc = y[i]
            for a in range(k):
                acc -= X[i, a] * alphas[j, a]
            take = acc <= band if lower else acc > band
            if take:
                cnt += 1
                for a in range(k):
                    h[a] += X[i, a] * y[i]
                    for b in range(k):
                        G[a, b] += X[i, a] * X[i, b]
        counts[j] = cnt
        if cnt < k:
            return m
        ok, sol = _lu_solve(G, h, False)
        if not ok:
            return m
        for a in range(k):
            out[j, a] = sol[a]
    return -1
