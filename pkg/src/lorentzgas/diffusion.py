"""Weak-coupling limit: reflected diffusion for the particle energy.

The limit generator on ``[xi_+, inf)`` with a reflecting (Neumann) boundary is::

    L f(x) = 1/2 a(x) f''(x) + b(x) f'(x)
    a(x) = Sigma1^2 / (2x)
    b(x) = <dbeta2>/(2x) + <dbeta4>/(4x^2)

Its zero-flux stationary density is ``x^s exp(-x / k^2)`` with
``s = 1 + <dbeta4>/Sigma1^2 = (d-1)/2 + C/k^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special

from .expansion import ExpansionCoeffs
from .rng import RngStream

__all__ = [
    "LimitCoeffs",
    "DriftDiffusion",
    "DiffusionPath",
    "StationaryLaw",
    "NotNormalizable",
    "StepTooLarge",
    "limit_coefficients",
    "generator_apply",
    "euler_maruyama_reflected",
    "stationary_energy_density",
    "stationary_speed_density",
    "maxwell_boltzmann_density",
    "maxwell_boltzmann_cdf",
    "speed_law_ks",
    "probability_current",
]


class NotNormalizable(ValueError):
    pass


class StepTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class LimitCoeffs:
    Sigma1_sq: float
    delta_beta2_mean: float
    delta_beta4_mean: float
    xi_plus: float
    dim: int = 2
    k_scatt_sq: float = 1.0
    C: float = 0.0

    def __post_init__(self):
        if not self.xi_plus > 0:
            raise ValueError("xi_plus must be positive")

    @classmethod
    def from_expansion(cls, coeffs: ExpansionCoeffs, xi_plus: float) -> LimitCoeffs:
        return cls(Sigma1_sq=coeffs.Sigma1_sq, delta_beta2_mean=coeffs.delta_beta2_mean,
                   delta_beta4_mean=coeffs.delta_beta4_mean, xi_plus=float(xi_plus),
                   dim=coeffs.dim, k_scatt_sq=coeffs.k_scatt_sq, C=coeffs.C)

    def coefficients(self, x):
        x = np.asarray(x, dtype=float)
        a = self.Sigma1_sq / (2.0 * x)
        b = self.delta_beta2_mean / (2.0 * x) + self.delta_beta4_mean / (4.0 * x * x)
        return a, b


@dataclass(frozen=True)
class DriftDiffusion:
    """Arbitrary ``(a, b)`` pair with a reflecting floor, e.g. for sampler checks."""

    a: Callable
    b: Callable
    xi_plus: float

    def coefficients(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.a(x), x.shape), np.broadcast_to(self.b(x), x.shape)


def limit_coefficients(x, lc: LimitCoeffs):
    """Diffusion ``a(x)`` and drift ``b(x)`` of the limit generator."""
    if np.any(np.asarray(x) < lc.xi_plus):
        raise ValueError("x must be >= xi_plus")
    a, b = lc.coefficients(x)
    if np.ndim(a) == 0:
        return float(a), float(b)
    return a, b


def generator_apply(x, lc: LimitCoeffs, f: Callable, df: Callable, d2f: Callable):
    """``L f(x) = a(x) f''(x)/2 + b(x) f'(x)``; ``f`` itself does not enter."""
    a, b = limit_coefficients(x, lc)
    return 0.5 * a * d2f(x) + b * df(x)


@dataclass
class DiffusionPath:
    tau: np.ndarray
    X: np.ndarray  # shape (len(tau), n_paths)
    dt: float
    seed: int | None = None
    stream: int | None = None


def euler_maruyama_reflected(x0: float, lc, dt: float, T: float, rng: RngStream,
                             n_paths: int = 1, record_stride: int = 1) -> DiffusionPath:
    """Euler-Maruyama with mirror reflection at ``lc.xi_plus``.

    ``X_{k+1} = X_k + b dt + sqrt(a dt) N(0,1)``, then ``2 xi_+ - X`` below the
    floor.  Raises :class:`StepTooLarge` when one drift increment ``dt |b|``
    exceeds ``max(x0 - xi_+, xi_+)`` at a visited state.
    """
    xi = lc.xi_plus
    if not dt > 0 or T < dt:
        raise ValueError("need dt > 0 and T >= dt")
    if x0 < xi:
        raise ValueError("x0 must be >= xi_plus")
    n_steps = int(round(T / dt))
    guard = max(x0 - xi, xi)
    gen = rng.gen
    X = np.full(n_paths, float(x0))
    n_rec = n_steps // record_stride + 1
    out = np.empty((n_rec, n_paths))
    out[0] = X
    rec = 1
    sdt = math.sqrt(dt)
    for k in range(1, n_steps + 1):
        a, b = lc.coefficients(X)
        drift = b * dt
        if np.max(np.abs(drift)) > guard:
            raise StepTooLarge(f"drift increment {np.max(np.abs(drift)):.3g} exceeds {guard:.3g} at step {k}")
        X = X + drift + np.sqrt(np.maximum(a, 0.0)) * sdt * gen.standard_normal(n_paths)
        X = np.where(X < xi, 2.0 * xi - X, X)
        if k % record_stride == 0:
            out[rec] = X
            rec += 1
    tau = dt * record_stride * np.arange(rec)
    return DiffusionPath(tau=tau, X=out[:rec], dt=dt, seed=rng.seed, stream=rng.stream)


# --------------------------------------------------------------------------
# stationary laws
# --------------------------------------------------------------------------


class StationaryLaw:
    """Normalised zero-flux law ``rho(x) ~ x^s exp(-lam x)`` on ``[xi_+, inf)``."""

    def __init__(self, lc: LimitCoeffs):
        if not lc.Sigma1_sq > 0:
            raise NotNormalizable("Sigma1_sq must be positive")
        self.shape = 1.0 + lc.delta_beta4_mean / lc.Sigma1_sq
        self.rate = -2.0 * lc.delta_beta2_mean / lc.Sigma1_sq
        if not self.rate > 0 or not np.isfinite(self.shape):
            raise NotNormalizable(f"decay rate {self.rate:.3g} must be positive")
        self.xi = lc.xi_plus
        self._log_norm_energy = self._log_partial_gamma(self.shape + 1.0)
        self._log_norm_time = self._log_partial_gamma(self.shape + 0.5) - 0.5 * math.log(2.0)

    def _log_partial_gamma(self, a: float) -> float:
        """``log int_xi^inf x^(a-1) exp(-rate x) dx``."""
        lam, xi = self.rate, self.xi
        if a > 0:
            tail = special.gammaincc(a, lam * xi)
            if tail > 0:
                return -a * math.log(lam) + special.gammaln(a) + math.log(tail)
        # shift by the value at xi to avoid under/overflow
        log_ref = (a - 1) * math.log(xi) - lam * xi
        val, _ = integrate.quad(lambda x: math.exp((a - 1) * math.log(x) - lam * x - log_ref),
                                xi, np.inf, epsabs=0.0, epsrel=1e-12, limit=200)
        if not np.isfinite(val) or val <= 0:
            raise NotNormalizable("stationary density is not integrable")
        return log_ref + math.log(val)

    def _log_kernel(self, x):
        return self.shape * np.log(x) - self.rate * x

    def energy_pdf(self, x):
        x = np.asarray(x, dtype=float)
        xs = np.maximum(x, self.xi)
        return np.where(x >= self.xi, np.exp(self._log_kernel(xs) - self._log_norm_energy), 0.0)

    def _tail_cdf(self, x, a):
        x = np.maximum(np.asarray(x, dtype=float), self.xi)
        if a > 0:
            q0 = special.gammaincc(a, self.rate * self.xi)
            if q0 > 0:
                return 1.0 - special.gammaincc(a, self.rate * x) / q0
        # generic path: cumulative quadrature of the normalised density
        log_norm = self._log_partial_gamma(a)
        f = lambda y: math.exp((a - 1) * math.log(y) - self.rate * y - log_norm)  # noqa: E731
        flat = np.atleast_1d(x).ravel()
        out = np.array([integrate.quad(f, self.xi, v, epsabs=1e-13)[0] for v in flat])
        return out.reshape(np.shape(x))

    def energy_cdf(self, x):
        return self._tail_cdf(x, self.shape + 1.0)

    def speed_pdf(self, p, time_weighted: bool = False):
        p = np.asarray(p, dtype=float)
        x = 0.5 * p * p
        if not time_weighted:
            return p * self.energy_pdf(x)
        xs = np.maximum(x, self.xi)
        val = np.exp(self._log_kernel(xs) - self._log_norm_time)
        return np.where(x >= self.xi, val, 0.0)

    def speed_cdf(self, p, time_weighted: bool = False):
        x = 0.5 * np.asarray(p, dtype=float) ** 2
        return self._tail_cdf(x, self.shape + (0.5 if time_weighted else 1.0))


def stationary_energy_density(x, lc: LimitCoeffs):
    """Zero-flux stationary density of the reflected diffusion on ``[xi_+, inf)``."""
    out = StationaryLaw(lc).energy_pdf(x)
    return out if np.ndim(out) else float(out)


def stationary_speed_density(p_norm, lc: LimitCoeffs, time_weighted: bool = False):
    """Stationary speed density, per collision or weighted by the flight time ``l*/|p|``."""
    if np.any(np.asarray(p_norm) < math.sqrt(2 * lc.xi_plus) * (1 - 1e-12)):
        raise ValueError("p_norm must be >= sqrt(2 xi_plus)")
    out = StationaryLaw(lc).speed_pdf(p_norm, time_weighted)
    return out if np.ndim(out) else float(out)


def probability_current(x, rho, lc: LimitCoeffs):
    """``J = -(D1 rho)' + D2 rho`` on a grid, with second-order finite differences."""
    x = np.asarray(x, dtype=float)
    a, b = lc.coefficients(x)
    d1rho = 0.5 * a * rho
    return -np.gradient(d1rho, x, edge_order=2) + b * rho


def maxwell_boltzmann_density(p_norm, T: float, d: int):
    """Maxwell-Boltzmann speed density in ``d`` dimensions (``k_B = 1``)."""
    if not T > 0:
        raise ValueError("T must be positive")
    p = np.asarray(p_norm, dtype=float)
    log_norm = (d / 2 - 1) * math.log(2.0) + (d / 2) * math.log(T) + special.gammaln(d / 2)
    out = np.where(p >= 0, np.exp((d - 1) * np.log(np.maximum(p, 1e-300)) - p * p / (2 * T) - log_norm), 0.0)
    return out if out.ndim else float(out)


def maxwell_boltzmann_cdf(p_norm, T: float, d: int):
    p = np.asarray(p_norm, dtype=float)
    return special.gammainc(d / 2, np.maximum(p, 0.0) ** 2 / (2 * T))


def speed_law_ks(law: StationaryLaw, T: float, d: int, n_grid: int = 200_001) -> float:
    """Sup-distance between the time-weighted stationary speed law and Maxwell-Boltzmann at ``T``.

    Evaluated on a uniform grid from 0 to 30 thermal speeds beyond the floor;
    the stationary CDF is 0 below ``sqrt(2 xi_+)``.
    """
    p = np.linspace(0.0, math.sqrt(2 * law.xi) + 30.0 * math.sqrt(T), n_grid)
    return float(np.max(np.abs(law.speed_cdf(p, time_weighted=True) - maxwell_boltzmann_cdf(p, T, d))))
