"""Vectorised bivariate normal and bivariate Student-t distribution functions.

The normal routine follows Genz's BVNU algorithm (Drezner & Wesolowsky
quadrature with the Genz correction for high correlation); the Student-t
routine is the Dunnett & Sobel closed form for integer degrees of freedom as
used in Genz's BVTL.  Both are deterministic and smooth in their arguments,
which the finite-difference derivatives of the likelihood rely on.
"""

import numpy as np
from scipy.special import ndtr, stdtr

_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)
_TWO_PI = 2.0 * np.pi
_SQRT_TWO_PI = np.sqrt(_TWO_PI)


def _bvnu(h, k, r):
    """P(X > h, Y > k) for a standard bivariate normal with correlation r."""
    h, k, r = np.broadcast_arrays(
        np.asarray(h, dtype=float), np.asarray(k, dtype=float), np.asarray(r, dtype=float)
    )
    shape = h.shape
    h = h.ravel().copy()
    k = k.ravel().copy()
    r = r.ravel()
    out = np.empty_like(h)

    low = np.abs(r) < 0.925
    if low.any():
        hl, kl, rl = h[low], k[low], r[low]
        hk = hl * kl
        hs = 0.5 * (hl * hl + kl * kl)
        asr = np.arcsin(rl)
        sn = np.sin(np.outer(asr, 0.5 * (1.0 + _GL_X)))
        terms = np.exp((sn * hk[:, None] - hs[:, None]) / (1.0 - sn * sn))
        out[low] = terms @ _GL_W * asr / (4.0 * np.pi) + ndtr(-hl) * ndtr(-kl)

    high = ~low
    if high.any():
        hh, kh, rh = h[high], k[high].copy(), r[high]
        neg = rh < 0
        kh[neg] = -kh[neg]
        hk = hh * kh
        bvn = np.zeros_like(hh)
        inner = np.abs(rh) < 1.0
        if inner.any():
            hi, ki, hki, ri = hh[inner], kh[inner], hk[inner], rh[inner]
            as_ = (1.0 - ri) * (1.0 + ri)
            a = np.sqrt(as_)
            bs = (hi - ki) ** 2
            c = (4.0 - hki) / 8.0
            d = (12.0 - hki) / 16.0
            val = a * np.exp(-0.5 * (bs / as_ + hki)) * (
                1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0
            )
            tail = hki > -160.0
            b = np.sqrt(bs)
            corr = (
                np.exp(-0.5 * hki)
                * _SQRT_TWO_PI
                * ndtr(-b / a)
                * b
                * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0)
            )
            val = val - np.where(tail, corr, 0.0)
            a2 = 0.5 * a
            xs = (np.outer(a2, _GL_X + 1.0)) ** 2
            rs = np.sqrt(1.0 - xs)
            asr = -0.5 * (bs[:, None] / xs + hki[:, None])
            with np.errstate(over="ignore", invalid="ignore"):
                f = np.exp(asr) * (
                    np.exp(-hki[:, None] * xs / (2.0 * (1.0 + rs) ** 2)) / rs
                    - (1.0 + c[:, None] * xs * (1.0 + d[:, None] * xs))
                )
            f = np.where(asr > -100.0, f, 0.0)
            val = val + a2 * (f @ _GL_W)
            bvn[inner] = -val / _TWO_PI
        pos = ~neg
        bvn[pos] += ndtr(-np.maximum(hh[pos], kh[pos]))
        bvn[neg] = -bvn[neg] + np.maximum(0.0, ndtr(-hh[neg]) - ndtr(-kh[neg]))
        out[high] = bvn
    return out.reshape(shape)


def bvn_cdf(x, y, rho):
    """Standard bivariate normal cdf P(X <= x, Y <= y) with correlation ``rho``.

    Absolute error is below about 1e-14 for finite arguments.
    """
    out = _bvnu(-np.asarray(x, dtype=float), -np.asarray(y, dtype=float), rho)
    return np.clip(out, 0.0, 1.0)


def bvt_cdf(x, y, rho, nu=3):
    """Standard bivariate Student-t cdf with integer ``nu`` degrees of freedom.

    Closed form of Dunnett & Sobel (1954); exact up to rounding.
    """
    nu = int(nu)
    if nu < 1:
        raise ValueError("nu must be a positive integer")
    dh, dk, r = np.broadcast_arrays(
        np.asarray(x, dtype=float), np.asarray(y, dtype=float), np.asarray(rho, dtype=float)
    )
    snu = np.sqrt(nu)
    ors = 1.0 - r * r
    hrk = dh - r * dk
    krh = dk - r * dh
    with np.errstate(invalid="ignore", divide="ignore"):
        xnhk = np.where(np.abs(hrk) + ors > 0, hrk**2 / (hrk**2 + ors * (nu + dk**2)), 0.0)
        xnkh = np.where(np.abs(krh) + ors > 0, krh**2 / (krh**2 + ors * (nu + dh**2)), 0.0)
    hs = np.where(hrk < 0, -1.0, 1.0)
    ks = np.where(krh < 0, -1.0, 1.0)

    if nu % 2 == 0:
        bvt = np.arctan2(np.sqrt(ors), -r) / _TWO_PI
        gmph = dh / np.sqrt(16.0 * (nu + dh**2))
        gmpk = dk / np.sqrt(16.0 * (nu + dk**2))
        btnckh = 2.0 * np.arctan2(np.sqrt(xnkh), np.sqrt(1.0 - xnkh)) / np.pi
        btpdkh = 2.0 * np.sqrt(xnkh * (1.0 - xnkh)) / np.pi
        btnchk = 2.0 * np.arctan2(np.sqrt(xnhk), np.sqrt(1.0 - xnhk)) / np.pi
        btpdhk = 2.0 * np.sqrt(xnhk * (1.0 - xnhk)) / np.pi
        for j in range(1, nu // 2 + 1):
            bvt = bvt + gmph * (1.0 + ks * btnckh)
            bvt = bvt + gmpk * (1.0 + hs * btnchk)
            btnckh = btnckh + btpdkh
            btpdkh = 2 * j * btpdkh * (1.0 - xnkh) / (2 * j + 1)
            btnchk = btnchk + btpdhk
            btpdhk = 2 * j * btpdhk * (1.0 - xnhk) / (2 * j + 1)
            gmph = gmph * (2 * j - 1) / (2 * j * (1.0 + dh**2 / nu))
            gmpk = gmpk * (2 * j - 1) / (2 * j * (1.0 + dk**2 / nu))
    else:
        qhrk = np.sqrt(np.maximum(dh**2 + dk**2 - 2.0 * r * dh * dk + nu * ors, 0.0))
        hkrn = dh * dk + r * nu
        hkn = dh * dk - nu
        hpk = dh + dk
        bvt = np.arctan2(-snu * (hkn * qhrk + hpk * hkrn), hkn * hkrn - nu * hpk * qhrk) / _TWO_PI
        bvt = np.where(bvt < -1e-15, bvt + 1.0, bvt)
        gmph = dh / (_TWO_PI * snu * (1.0 + dh**2 / nu))
        gmpk = dk / (_TWO_PI * snu * (1.0 + dk**2 / nu))
        btnckh = np.sqrt(xnkh)
        btpdkh = btnckh
        btnchk = np.sqrt(xnhk)
        btpdhk = btnchk
        for j in range(1, (nu - 1) // 2 + 1):
            bvt = bvt + gmph * (1.0 + ks * btnckh)
            bvt = bvt + gmpk * (1.0 + hs * btnchk)
            btpdkh = (2 * j - 1) * btpdkh * (1.0 - xnkh) / (2 * j)
            btnckh = btnckh + btpdkh
            btpdhk = (2 * j - 1) * btpdhk * (1.0 - xnhk) / (2 * j)
            btnchk = btnchk + btpdhk
            gmph = gmph * 2 * j / ((2 * j + 1) * (1.0 + dh**2 / nu))
            gmpk = gmpk * 2 * j / ((2 * j + 1) * (1.0 + dk**2 / nu))

    eps = 1e-15
    upper = 1.0 - r <= eps
    lower = r + 1.0 <= eps
    if upper.any() or lower.any():
        bvt = np.where(upper, stdtr(nu, np.minimum(dh, dk)), bvt)
        anti = np.where(dh > -dk, stdtr(nu, dh) - stdtr(nu, -dk), 0.0)
        bvt = np.where(lower, anti, bvt)
    return np.clip(bvt, 0.0, 1.0)


def _x_minus_sin(x):
    """x - sin(x) without cancellation for small x."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1.0
    xs = np.where(small, x, 0.0)
    x2 = xs * xs
    term = xs * x2 / 6.0
    series = term.copy()
    for k in range(2, 12):
        term = -term * x2 / ((2 * k) * (2 * k + 1))
        series = series + term
    return np.where(small, series, x - np.sin(x))


_T3_NEWTON = 6


def t3_ppf(p):
    """Quantile of Student's t with 3 degrees of freedom to near machine precision.

    With ``phi = arctan(sqrt(3) / |t|)`` the lower tail is
    ``(2 phi - sin(2 phi)) / (2 pi)``; this is solved by Newton's method
    from the small-angle approximation ``(2 phi)^3 = 12 pi q``.  The lower
    tail is convex in ``phi``, so after the first step the iterates
    decrease monotonically.
    """
    p = np.asarray(p, dtype=float)
    upper = p > 0.5
    q = np.where(upper, 1.0 - p, p)
    q = np.clip(q, 1e-300, 0.5)
    phi = np.minimum(0.5 * np.cbrt(12.0 * np.pi * q), 0.5 * np.pi)
    for _ in range(_T3_NEWTON):
        g = _x_minus_sin(2.0 * phi) / (2.0 * np.pi) - q
        dg = 2.0 * np.sin(phi) ** 2 / np.pi
        phi = np.clip(phi - g / dg, 1e-300, 0.5 * np.pi)
    t = np.sqrt(3.0) / np.tan(phi)
    t = np.where(q >= 0.5, 0.0, t)
    out = np.where(upper, t, -t)
    return np.where(p <= 0, -np.inf, np.where(p >= 1, np.inf, out))
