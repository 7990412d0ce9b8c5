"""Reference implementations used only by the tests.

Nothing here reuses package internals: the form factors, the scatterer law
and the equations of motion are written out again from their definitions.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.integrate import solve_ivp


def bump(r):
    r = np.asarray(r, dtype=float)
    inside = r < 0.5
    c = np.where(inside, 1.0 - 4.0 * r * r, 1.0)
    return np.where(inside, np.exp(1.0 - 1.0 / c), 0.0)


def bump_grad(q):
    """Gradient of the bump as a function of the position vector."""
    r2 = float(q @ q)
    if r2 >= 0.25:
        return np.zeros_like(q)
    c = 1.0 - 4.0 * r2
    return math.exp(1.0 - 1.0 / c) * (-8.0 / (c * c)) * q


def cos2(r):
    r = np.asarray(r, dtype=float)
    return np.where(r < 0.5, np.cos(np.pi * r) ** 2, 0.0)


def cos2_grad(q):
    r = math.sqrt(float(q @ q))
    if r >= 0.5 or r == 0.0:
        return np.zeros_like(q)
    return -math.pi * math.sin(2 * math.pi * r) / r * q


PROFILES = {"smooth-bump": (bump, bump_grad), "cosine-squared": (cos2, cos2_grad)}


# --------------------------------------------------------------------------
# brute-force Monte Carlo for the ensemble coefficients
# --------------------------------------------------------------------------


def mc_coefficients(n: int, seed: int, energy: float = 1.0, M: float = 100.0, dim: int = 2,
                    sigma=bump, n_batches: int = 100, chunk: int = 1_000_000):
    """Monte Carlo estimates of every ExpansionCoeffs field, with jackknife errors.

    Harmonic scatterer ``U = Q^2/2`` on the shell ``H = energy``; ``b``
    uniform on the (d-1)-ball of radius 1/2.  All chord integrals are
    sampled directly from their definitions::

        L0(|b|)^2   = E[sigma(l1) sigma(l2)]                     l1, l2 ~ U(0, 1)
        nested(|b|) = int_0^1 dl int_0^l dl' K0(l') sigma(l')
                    = E[1{l' < l} 1{v < u < l'} sigma(l') sigma(v)]   l, l', u, v ~ U(0, 1)

    where ``sigma(l)`` means ``sigma(b + (l - 1/2) e)``.
    """
    gen = np.random.default_rng(seed)
    per = n // n_batches
    sums = np.zeros((n_batches, 4))  # P^2/M, U'', L0^2 integrand, nested integrand
    for k in range(n_batches):
        acc = np.zeros(4)
        done = 0
        while done < per:
            m = min(chunk, per - done)
            theta = gen.uniform(0.0, 2 * np.pi, m)
            P = np.sqrt(2.0 * M * energy) * np.cos(theta)
            rb = 0.5 * gen.random(m) ** (1.0 / (dim - 1))
            l1, l2, lp, lo, u, v = gen.random((6, m))
            s = lambda lam: sigma(np.hypot(rb, lam - 0.5))  # noqa: E731
            acc[0] += np.sum(P * P / M)
            acc[1] += m  # U'' = 1 for the harmonic potential
            acc[2] += np.sum(s(l1) * s(l2))
            acc[3] += np.sum((lp < lo) * (v < u) * (u < lp) * s(lp) * s(v))
            done += m
        sums[k] = acc / per

    def fields(mean):
        k2, u2, l0sq, nested = mean
        C = u2 * nested / l0sq
        sigma1 = k2 * l0sq
        return {"E_star": energy, "k_scatt_sq": k2, "L0_sq_mean": l0sq, "Sigma1_sq": sigma1,
                "delta_beta2_mean": -0.5 * l0sq, "C": C,
                "delta_beta4_mean": sigma1 * (dim - 3) / 2 + l0sq * C}

    est = fields(sums.mean(axis=0))
    loo = [fields((sums.sum(axis=0) - sums[i]) / (n_batches - 1)) for i in range(n_batches)]
    se = {}
    for key in est:
        vals = np.array([f[key] for f in loo])
        se[key] = float(math.sqrt((n_batches - 1) / n_batches * np.sum((vals - vals.mean()) ** 2)))
    return est, se


# --------------------------------------------------------------------------
# full-dimensional collision integrator
# --------------------------------------------------------------------------


def _equations(p_in, b, alpha_star, M, kind):
    sig, grad = PROFILES[kind]
    d = p_in.size
    alpha = alpha_star * math.sqrt(M)

    def rhs(t, y):
        q, p, Q, P = y[:d], y[d:2 * d], y[2 * d], y[2 * d + 1]
        s = float(sig(math.sqrt(q @ q)))
        return np.concatenate([p, -alpha * Q * grad(q), [P / M, -Q - alpha * s]])

    def H(y):
        q, p, Q, P = y[:d], y[d:2 * d], y[2 * d], y[2 * d + 1]
        return 0.5 * p @ p + 0.5 * P * P / M + 0.5 * Q * Q + alpha * Q * float(sig(math.sqrt(q @ q)))

    return rhs, H


def reference_collision(p_in, b, Q0, P0, alpha_star, M, kind="smooth-bump", rtol=1e-12, atol=1e-14):
    """One collision with a harmonic scatterer, integrated in the original coordinates.

    Integrates ``q' = p``, ``p' = -alpha Q grad sigma(q)``, ``Q' = P/M``,
    ``P' = -Q - alpha sigma(q)`` from ``q = b - e/2`` until well after the
    particle has left the support (forces vanish there, so the transfer is
    final).  Returns ``(p_out, delta_E, H_in, H_out)``.
    """
    p_in = np.asarray(p_in, dtype=float)
    b = np.asarray(b, dtype=float)
    d = p_in.size
    pn = float(np.linalg.norm(p_in))
    q0 = b - 0.5 * p_in / pn
    rhs, H = _equations(p_in, b, alpha_star, M, kind)
    y0 = np.concatenate([q0, p_in, [Q0, P0]])
    T = 1.5 / pn
    sol = solve_ivp(rhs, (0.0, T), y0, method="DOP853", rtol=rtol, atol=atol, max_step=0.01 / pn)
    y1 = sol.y[:, -1]
    p_out = y1[d:2 * d]
    return p_out, 0.5 * (p_out @ p_out - p_in @ p_in), H(y0), H(y1)


def rk4_delta_E(p_norm, b_norm, Q0, P0, alpha_star, M, kind="smooth-bump", tol=1e-12, n0=256):
    """Energy transfer from plain fixed-step RK4 over ``[0, 1.5/|p|]``, halving the step
    until two successive results agree to ``tol`` (absolute).  Planar, ``p`` along x."""
    p_in = np.array([p_norm, 0.0])
    rhs, _ = _equations(p_in, None, alpha_star, M, kind)
    y0 = np.array([-0.5, b_norm, p_norm, 0.0, Q0, P0])
    T = 1.5 / p_norm

    def run(n):
        h = T / n
        y = y0.copy()
        for _ in range(n):
            k1 = rhs(0, y)
            k2 = rhs(0, y + 0.5 * h * k1)
            k3 = rhs(0, y + 0.5 * h * k2)
            k4 = rhs(0, y + h * k3)
            y = y + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6
        return 0.5 * (y[2] ** 2 + y[3] ** 2 - p_norm**2)

    n, prev = n0, run(n0)
    while True:
        n *= 2
        cur = run(n)
        if abs(cur - prev) <= tol:
            return cur
        if n > 1 << 16:
            raise RuntimeError("RK4 step halving did not settle")
        prev = cur


# --------------------------------------------------------------------------
# small analytic helpers
# --------------------------------------------------------------------------


def ou_moments(x0, theta, mu, sigma_sq, t):
    """Mean and variance of ``dX = -theta (X - mu) dt + sqrt(sigma_sq) dW`` at ``t``."""
    mean = mu + (x0 - mu) * math.exp(-theta * t)
    var = sigma_sq / (2 * theta) * (1 - math.exp(-2 * theta * t))
    return mean, var
