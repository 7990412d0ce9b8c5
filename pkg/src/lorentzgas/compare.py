"""Chain-versus-limit experiments: weak convergence and stationarity."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import reduce

import numpy as np

from .chain import ChainConfig, run_truncated_ensemble
from .diffusion import LimitCoeffs, StationaryLaw, euler_maruyama_reflected
from .expansion import EnsembleSpec, ensemble_coeffs
from .rng import RngStream
from .scatter import ModelParams
from .stats import EmpiricalCdf, WeightedSample, ks_distance, moments

__all__ = [
    "MomentComparison",
    "WeakConvergenceReport",
    "StationaryReport",
    "weak_convergence",
    "stationary_check",
    "STATIONARY_KS_MAX",
]

STATIONARY_KS_MAX = 0.02
AGREEMENT_Z = 3.0


def _node_plan(taus, unit):
    """Integer grid nodes bracketing each ``tau`` on a grid of spacing ``unit``."""
    lo = [int(math.floor(t / unit + 1e-9)) for t in taus]
    hi = [n + (0 if abs(t / unit - n) < 1e-9 else 1) for t, n in zip(taus, lo)]
    nodes = sorted((set(lo) | set(hi)) - {0})
    stride = reduce(math.gcd, nodes) if nodes else 1
    return lo, hi, stride


def _values_at(taus, unit, recorded, stride):
    """Linear interpolation of recorded states (rows = chains or paths) at ``taus``."""
    lo, hi, _ = _node_plan(taus, unit)
    out = []
    for t, a, b in zip(taus, lo, hi):
        ya = recorded[:, a // stride]
        if a == b:
            out.append(ya.copy())
            continue
        yb = recorded[:, b // stride]
        w = t / unit - a
        out.append((1 - w) * ya + w * yb)
    return out


@dataclass
class MomentComparison:
    alpha_star: float
    taus: tuple
    chain: np.ndarray  # (n_taus, 2): first and second moments
    chain_se: np.ndarray
    sde: np.ndarray
    sde_se: np.ndarray

    @property
    def z(self) -> np.ndarray:
        return (self.chain - self.sde) / np.sqrt(self.chain_se**2 + self.sde_se**2)

    @property
    def discrepancy(self) -> float:
        """Largest standardised chain-SDE gap over all times and moments."""
        return float(np.max(np.abs(self.z)))

    @property
    def agrees(self) -> bool:
        return self.discrepancy <= AGREEMENT_Z

    def to_dict(self) -> dict:
        return {"alpha_star": self.alpha_star, "taus": list(self.taus), "chain": self.chain.tolist(),
                "chain_se": self.chain_se.tolist(), "sde": self.sde.tolist(), "sde_se": self.sde_se.tolist(),
                "z": self.z.tolist(), "discrepancy": self.discrepancy, "agrees": self.agrees}


@dataclass
class WeakConvergenceReport:
    comparisons: list
    x0: float
    dt: float
    n_chains: int
    n_paths: int

    @property
    def decreasing(self) -> bool:
        ordered = sorted(self.comparisons, key=lambda c: -c.alpha_star)
        d = [c.discrepancy for c in ordered]
        return all(a > b for a, b in zip(d, d[1:]))

    @property
    def passed(self) -> bool:
        return all(c.agrees for c in self.comparisons) and self.decreasing

    def to_dict(self) -> dict:
        return {"x0": self.x0, "dt": self.dt, "n_chains": self.n_chains, "n_paths": self.n_paths,
                "comparisons": [c.to_dict() for c in self.comparisons],
                "discrepancy_decreasing": self.decreasing, "passed": self.passed}


def _first_two(samples):
    est, se = [], []
    for v in samples:
        m = moments(WeightedSample(v), orders=(1, 2), block=1)
        est.append(m.estimates)
        se.append(m.std_errors)
    return np.array(est), np.array(se)


def weak_convergence(params: ModelParams, spec: EnsembleSpec, alpha_stars=(0.1, 0.05, 0.025),
                     taus=(0.25, 0.5, 1.0), x0: float = 2.0, n_chains: int = 10_000,
                     n_paths: int = 10_000, dt: float = 1e-4, seed: int = 0) -> WeakConvergenceReport:
    """Moments of the interpolated truncated chain against the reflected SDE.

    The SDE uses stream 0 of ``seed``; the chain for the ``i``-th coupling
    uses stream ``i + 1``.  All chains start at ``x0`` and run on the clock
    ``tau = alpha*^2 n``.
    """
    taus = tuple(float(t) for t in taus)
    coeffs = ensemble_coeffs(spec, params)
    lc = LimitCoeffs.from_expansion(coeffs, params.xi_plus)
    _, _, sde_stride = _node_plan(taus, dt)
    path = euler_maruyama_reflected(x0, lc, dt, max(taus), RngStream(seed, 0), n_paths=n_paths,
                                    record_stride=sde_stride)
    sde_est, sde_se = _first_two(_values_at(taus, dt, path.X.T, sde_stride))
    comps = []
    for i, a in enumerate(alpha_stars):
        unit = a * a
        lo, hi, stride = _node_plan(taus, unit)
        cfg = ChainConfig(replace(params, alpha_star=a), spec, "truncated", n_steps=max(hi), E0=x0,
                          stride=stride, coeffs=coeffs)
        _, E, _ = run_truncated_ensemble(cfg, RngStream(seed, i + 1), n_chains, 0)
        est, se = _first_two(_values_at(taus, unit, E, stride))
        comps.append(MomentComparison(float(a), taus, est, se, sde_est, sde_se))
    return WeakConvergenceReport(comps, float(x0), float(dt), int(n_chains), int(n_paths))


@dataclass
class StationaryReport:
    ks: float
    n_chains: int
    burn_in: int
    steps_per_chain: int
    mean_energy: float
    predicted_mean_energy: float

    @property
    def passed(self) -> bool:
        return self.ks <= STATIONARY_KS_MAX

    def to_dict(self) -> dict:
        return {"ks": self.ks, "ks_max": STATIONARY_KS_MAX, "n_chains": self.n_chains, "burn_in": self.burn_in,
                "steps_per_chain": self.steps_per_chain, "mean_energy": self.mean_energy,
                "predicted_mean_energy": self.predicted_mean_energy, "passed": self.passed}


def stationary_check(params: ModelParams, spec: EnsembleSpec, n_chains: int = 4000, burn_in: int = 500_000,
                     steps_per_chain: int = 250, E0: float = 2.0, seed: int = 0) -> StationaryReport:
    """KS distance between pooled truncated chains and the time-weighted stationary speed law.

    ``n_chains`` independent chains start at ``E0``, discard ``burn_in``
    steps and contribute ``steps_per_chain`` states each.  Every state is
    weighted by its flight time ``l*/|p|``.
    """
    coeffs = ensemble_coeffs(spec, params)
    cfg = ChainConfig(params, spec, "truncated", n_steps=steps_per_chain - 1, E0=E0, coeffs=coeffs)
    _, E, _ = run_truncated_ensemble(cfg, RngStream(seed, 0), n_chains, burn_in)
    speeds = np.sqrt(2.0 * E.ravel())
    sample = WeightedSample.time_weighted(speeds, params.ell_star)
    law = StationaryLaw(LimitCoeffs.from_expansion(coeffs, params.xi_plus))
    ks = ks_distance(EmpiricalCdf.from_sample(sample), lambda p: law.speed_cdf(p, time_weighted=True))
    x = np.linspace(params.xi_plus, params.xi_plus + 60 * coeffs.k_scatt_sq, 200_001)
    mean_pred = float(np.trapezoid(x * law.energy_pdf(x), x))
    return StationaryReport(ks, n_chains, burn_in, steps_per_chain, float(E.mean()), mean_pred)
