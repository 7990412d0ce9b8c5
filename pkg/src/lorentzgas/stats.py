"""Estimators linking simulations to the analytic predictions."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

__all__ = [
    "BadEdges",
    "DegenerateSample",
    "TooShort",
    "WeightedSample",
    "EmpiricalCdf",
    "Histogram",
    "MomentEstimate",
    "MsdFit",
    "weighted_histogram",
    "ks_distance",
    "moments",
    "msd_fit",
    "discard_burn_in",
]

BURN_IN_FRACTION = 0.1


class BadEdges(ValueError):
    pass


class DegenerateSample(ValueError):
    pass


class TooShort(ValueError):
    pass


@dataclass(frozen=True)
class WeightedSample:
    values: np.ndarray
    weights: np.ndarray

    def __init__(self, values, weights=None):
        v = np.asarray(values, dtype=float).ravel()
        w = np.ones_like(v) if weights is None else np.asarray(weights, dtype=float).ravel()
        if w.shape != v.shape:
            raise ValueError("values and weights differ in length")
        if np.any(w < 0) or not np.any(w > 0):
            raise DegenerateSample("weights must be >= 0 with at least one positive")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)

    @classmethod
    def time_weighted(cls, speeds, ell_star: float = 1.0) -> WeightedSample:
        """Speeds weighted by the free-flight time ``l*/|p|`` that follows them."""
        s = np.asarray(speeds, dtype=float)
        return cls(s, ell_star / s)

    def concat(self, other: WeightedSample) -> WeightedSample:
        return WeightedSample(np.concatenate([self.values, other.values]),
                              np.concatenate([self.weights, other.weights]))

    @property
    def total_weight(self) -> float:
        return float(math.fsum(self.weights))

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class EmpiricalCdf:
    support: np.ndarray
    cumulative: np.ndarray

    @classmethod
    def from_sample(cls, sample: WeightedSample) -> EmpiricalCdf:
        x, inv = np.unique(sample.values, return_inverse=True)
        mass = np.bincount(inv, weights=sample.weights, minlength=x.size)
        cum = np.cumsum(mass)
        cum /= cum[-1]
        cum[-1] = 1.0
        return cls(x, cum)

    def __call__(self, x):
        idx = np.searchsorted(self.support, x, side="right")
        return np.where(idx > 0, self.cumulative[np.maximum(idx - 1, 0)], 0.0)


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    masses: np.ndarray
    underflow: float
    overflow: float

    def to_dict(self) -> dict:
        return {"edges": self.edges.tolist(), "masses": self.masses.tolist(),
                "underflow": self.underflow, "overflow": self.overflow}


def weighted_histogram(sample: WeightedSample, edges) -> Histogram:
    """Bin masses on ``[e_i, e_{i+1})``; values outside go to under/overflow."""
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or not np.all(np.diff(edges) > 0) or not np.all(np.isfinite(edges)):
        raise BadEdges("edges must be a finite, strictly increasing sequence of length >= 2")
    idx = np.searchsorted(edges, sample.values, side="right")
    # the last edge closes the top bin
    idx[sample.values == edges[-1]] = edges.size - 1
    mass = np.bincount(idx, weights=sample.weights, minlength=edges.size + 1)
    return Histogram(edges, mass[1:-1].copy(), float(mass[0]), float(mass[-1]))


def ks_distance(emp: EmpiricalCdf, model_cdf: Callable) -> float:
    """Sup-norm gap, checked on both sides of every jump of ``emp``."""
    G = np.asarray(model_cdf(emp.support), dtype=float)
    before = np.concatenate([[0.0], emp.cumulative[:-1]])
    return float(max(np.max(np.abs(emp.cumulative - G)), np.max(np.abs(before - G))))


@dataclass(frozen=True)
class MomentEstimate:
    orders: tuple
    estimates: np.ndarray
    std_errors: np.ndarray
    central: bool = False

    def to_dict(self) -> dict:
        return {"orders": list(self.orders), "central": self.central,
                "estimates": self.estimates.tolist(), "std_errors": self.std_errors.tolist()}


def _moments_from_sums(S, orders, central):
    # S[..., j] = sum of w x^j, j = 0..kmax
    m = S[..., 1:] / S[..., :1]
    if not central:
        return np.stack([m[..., k - 1] for k in orders], axis=-1)
    mean = m[..., 0]
    out = []
    for k in orders:
        acc = (-mean) ** k
        for j in range(1, k + 1):
            acc = acc + special.comb(k, j) * m[..., j - 1] * (-mean) ** (k - j)
        out.append(acc)
    return np.stack(out, axis=-1)


def moments(sample: WeightedSample, orders=(1, 2), block: int = 100, central: bool = False) -> MomentEstimate:
    """Weighted moments with block-deleted jackknife standard errors.

    Consecutive values are grouped into blocks of ``block``; pass ``block=1``
    for independent draws.  ``central=True`` gives moments about the mean.
    """
    orders = tuple(int(k) for k in orders)
    if not orders or min(orders) < 1:
        raise ValueError("orders must be >= 1")
    n_blocks = len(sample) // block
    if n_blocks < 2:
        raise DegenerateSample(f"need at least 2 blocks of {block} values, got {len(sample)} values")
    kmax = max(orders)
    x = sample.values[: n_blocks * block]
    w = sample.weights[: n_blocks * block]
    powers = x[:, None] ** np.arange(kmax + 1)[None, :]
    per_block = (w[:, None] * powers).reshape(n_blocks, block, kmax + 1).sum(axis=1)
    total = per_block.sum(axis=0)
    if total[0] <= 0:
        raise DegenerateSample("zero total weight")
    loo = total[None, :] - per_block
    if np.any(loo[:, 0] <= 0):
        raise DegenerateSample("a leave-one-block-out sample has zero weight")
    est = _moments_from_sums(total, orders, central)
    jk = _moments_from_sums(loo, orders, central)
    dev = jk - jk.mean(axis=0)
    se = np.sqrt((n_blocks - 1) / n_blocks * np.sum(dev * dev, axis=0))
    return MomentEstimate(orders, np.asarray(est, dtype=float), se, central)


@dataclass(frozen=True)
class MsdFit:
    lags: np.ndarray
    msd: np.ndarray
    exponent: float
    diffusion_constant: float
    fit_window: tuple

    def to_dict(self) -> dict:
        return {"lags": self.lags.tolist(), "msd": self.msd.tolist(), "exponent": self.exponent,
                "diffusion_constant": self.diffusion_constant, "fit_window": list(self.fit_window)}


MIN_MSD_POINTS = 1000


def msd_fit(traj, lags=None, n_origins: int = 20000) -> MsdFit:
    """Time-averaged mean squared displacement and its top-decade power law.

    ``traj`` needs ``times`` and ``positions``; the path is linear between
    records.  The default lag grid spans ``[T/10^4, T/100]`` in 40 log-spaced
    points.  The exponent is the log-log slope over the top decade of lags, and
    ``D`` solves ``MSD = 2 d D t`` there.
    """
    t = np.asarray(traj.times, dtype=float)
    q = np.asarray(traj.positions, dtype=float)
    if q.ndim != 2 or t.size < MIN_MSD_POINTS:
        raise TooShort(f"need at least {MIN_MSD_POINTS} recorded positions, got {t.size}")
    T = t[-1] - t[0]
    if lags is None:
        lags = np.geomspace(T / 1e4, T / 100, 40)
    lags = np.asarray(lags, dtype=float)
    if np.any(lags <= 0) or np.any(lags >= T):
        raise ValueError("lags must lie in (0, T)")
    dim = q.shape[1]
    msd = np.empty(lags.size)
    for i, L in enumerate(lags):
        s = np.linspace(t[0], t[-1] - L, n_origins)
        acc = np.zeros(n_origins)
        for k in range(dim):
            dq = np.interp(s + L, t, q[:, k]) - np.interp(s, t, q[:, k])
            acc += dq * dq
        msd[i] = acc.mean()
    top = lags >= lags[-1] / 10.0 * (1 - 1e-12)
    if top.sum() < 2:
        raise TooShort("fewer than two lags in the top decade")
    slope = float(np.polyfit(np.log(lags[top]), np.log(msd[top]), 1)[0])
    D = float(np.mean(msd[top] / (2 * dim * lags[top])))
    return MsdFit(lags, msd, slope, D, (float(lags[top][0]), float(lags[-1])))


def discard_burn_in(values, fraction: float = BURN_IN_FRACTION):
    """Drop the leading ``fraction`` of a sequence."""
    values = np.asarray(values)
    return values[int(math.floor(fraction * len(values))):]
