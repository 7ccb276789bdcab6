"""Independent reference computations used by the tests.

Nothing here imports the package's numerical routines: each oracle works
from first principles or from scipy.
"""

import numpy as np
from scipy import optimize
from scipy.sparse.linalg import LinearOperator, cg


def circular_convolve_direct(x, taps):
    """Periodic convolution by explicit summation, kernel centred on the middle tap."""
    h, w = x.shape
    kh, kw = taps.shape
    ch, cw = kh // 2, kw // 2
    out = np.zeros_like(x, dtype=np.float64)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for a in range(kh):
                for b in range(kw):
                    acc += taps[a, b] * x[(i - (a - ch)) % h, (j - (b - cw)) % w]
            out[i, j] = acc
    return out


def dense_matrix(apply, in_shape):
    """Columns of a linear map obtained by applying it to the standard basis."""
    n = int(np.prod(in_shape))
    cols = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        cols.append(np.asarray(apply(e.reshape(in_shape))).ravel())
    return np.stack(cols, axis=1)


def prox_cg(H, y, sigma, u, weight):
    """Solve (I + w/s^2 H^T H) v = u + w/s^2 H^T y with scipy's CG on a dense H."""
    c = weight / sigma**2
    n = H.shape[1]
    op = LinearOperator((n, n), matvec=lambda v: v + c * (H.T @ (H @ v)))
    v, info = cg(op, u.ravel() + c * (H.T @ y.ravel()), rtol=1e-14, atol=0.0, maxiter=10 * n)
    assert info == 0
    return v.reshape(u.shape)


def soft_threshold(x, tau):
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def lasso_objective(A, y, tau, x):
    r = A @ x.ravel() - y.ravel()
    return 0.5 * float(r @ r) + tau * float(np.abs(x).sum())


def lasso_coordinate_descent(A, y, tau, sweeps=20000, tol=1e-15):
    """Cyclic coordinate descent for min 0.5||Ax - y||^2 + tau ||x||_1."""
    n = A.shape[1]
    x = np.zeros(n)
    r = y.ravel().copy()
    col2 = (A * A).sum(axis=0)
    for _ in range(sweeps):
        change = 0.0
        for j in range(n):
            if col2[j] == 0:
                continue
            old = x[j]
            rho = A[:, j] @ r + col2[j] * old
            x[j] = soft_threshold(rho, tau) / col2[j]
            if x[j] != old:
                r -= A[:, j] * (x[j] - old)
                change = max(change, abs(x[j] - old))
        if change < tol:
            break
    return x


def box_least_squares(H, y, sigma, lo, hi):
    """argmin 0.5/s^2 ||Hx - y||^2 subject to lo <= x <= hi (scipy active-set solver)."""
    res = optimize.lsq_linear(H / sigma, y.ravel() / sigma, bounds=(lo, hi), method="bvls", tol=1e-15)
    return res.x


def box_penalty_minimizer(H, y, sigma, lam, lo, hi, x0):
    """argmin 0.5/s^2 ||Hx - y||^2 + lam/2 dist(x, [lo, hi]^n)^2 by L-BFGS."""
    yy = y.ravel()

    def fun(x):
        r = H @ x - yy
        d = x - np.clip(x, lo, hi)
        return 0.5 * (r @ r) / sigma**2 + 0.5 * lam * (d @ d), H.T @ r / sigma**2 + lam * d

    res = optimize.minimize(fun, x0.ravel(), jac=True, method="L-BFGS-B",
                            options={"maxiter": 100000, "gtol": 1e-13, "ftol": 1e-16, "maxcor": 50})
    return res.x


def nlm_direct(x, h, rp, rs):
    """Pixel-by-pixel non-local means with reflect padding and centre weight = max neighbour weight."""
    hgt, wid = x.shape
    pad = np.pad(x, rp + rs, mode="reflect")
    off = rp + rs
    out = np.empty_like(x)
    k2 = (2 * rp + 1) ** 2
    for i in range(hgt):
        for j in range(wid):
            pi = pad[i + off - rp : i + off + rp + 1, j + off - rp : j + off + rp + 1]
            num = den = wmax = 0.0
            for dy in range(-rs, rs + 1):
                for dx in range(-rs, rs + 1):
                    if dy == 0 and dx == 0:
                        continue
                    qi, qj = i + off + dy, j + off + dx
                    q = pad[qi - rp : qi + rp + 1, qj - rp : qj + rp + 1]
                    w = np.exp(-np.sum((pi - q) ** 2) / (k2 * h * h))
                    num += w * pad[qi, qj]
                    den += w
                    wmax = max(wmax, w)
            num += wmax * x[i, j]
            den += wmax
            out[i, j] = num / den if den > 0 else x[i, j]
    return out


def median_sorted(x, size):
    """Median filter by sorting each mirror-padded window."""
    r = size // 2
    hgt, wid = x.shape
    # scipy's "mirror" is numpy's "reflect" (edge sample not repeated)
    pad = np.pad(x, r, mode="reflect")
    out = np.empty_like(x)
    for i in range(hgt):
        for j in range(wid):
            win = np.sort(pad[i : i + size, j : j + size].ravel())
            out[i, j] = win[win.size // 2]
    return out


def random_symmetric_contraction(n, n_ones, seed, top=0.9):
    """Symmetric W with eigenvalues in [0, top) plus ``n_ones`` eigenvalues exactly 1.

    Returns ``(W, basis)`` with ``basis`` spanning the eigenvalue-1 eigenspace.
    """
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    ev = np.concatenate([np.ones(n_ones), rng.uniform(0.0, top, n - n_ones)])
    w = (q * ev) @ q.T
    return 0.5 * (w + w.T), q[:, :n_ones]
