"""High-energy expansion of the energy transfer and its ensemble averages.

Chord integrals along the unperturbed path ``b + (lam - 1/2) e``::

    L_k(mu, |b|) = int_0^mu  sigma(b + (lam - 1/2) e) lam^k dlam
    K_k(mu, |b|) = int_0^mu  L_k(lam, |b|) dlam = int_0^mu (mu - lam) sigma(...) lam^k dlam

Per collision the energy transfer expands as::

    dE = a* beta1/|p| + a*^2 (dbeta2/|p|^2 + dbeta4/|p|^4) + ...

with ``beta1 = P/sqrt(M) L0``, ``dbeta2 = -L0^2/2`` and only the ensemble mean
of ``dbeta4`` known in closed form.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special, stats
from scipy.interpolate import CubicSpline

from .scatter import FormFactor, Kappa, ModelParams, ScattererPotential

__all__ = [
    "EnsembleSpec",
    "ExpansionCoeffs",
    "QuadratureNotConverged",
    "geometric_integral",
    "beta1",
    "delta_beta2",
    "scatterer_moments",
    "ensemble_coeffs",
    "truncated_step",
    "L0_table",
]

QUAD_ABS_TOL = 1e-10
ENSEMBLE_ABS_TOL = 1e-8


class QuadratureNotConverged(RuntimeError):
    pass


def _quad(f, a, b, epsabs, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, a, b, epsabs=epsabs, epsrel=0.0, limit=200, **kw)
        except integrate.IntegrationWarning as exc:
            raise QuadratureNotConverged(str(exc)) from exc
    if err > epsabs:
        raise QuadratureNotConverged(f"quadrature error estimate {err:.2e} exceeds {epsabs:.1e}")
    return val


def _chord_window(b_norm: float) -> tuple[float, float] | None:
    """Range of ``lam`` where the straight chord is inside the support."""
    if b_norm >= 0.5:
        return None
    h = math.sqrt(0.25 - b_norm * b_norm)
    return 0.5 - h, 0.5 + h


def _along_chord(ff: FormFactor, b_norm: float):
    bb = b_norm * b_norm
    radial = ff.radial
    return lambda lam: radial(math.sqrt(bb + (lam - 0.5) ** 2))


def geometric_integral(kind: str, k: int, mu: float, b_norm: float, ff: FormFactor,
                       epsabs: float = QUAD_ABS_TOL) -> float:
    """``L_k(mu, |b|)`` (``kind="L"``) or ``K_k(mu, |b|)`` (``kind="K"``), ``k`` in {0, 1}."""
    if kind not in ("L", "K") or k not in (0, 1):
        raise ValueError("kind must be 'L' or 'K' and k must be 0 or 1")
    if not 0.0 <= mu <= 1.0 or b_norm < 0:
        raise ValueError("need 0 <= mu <= 1 and b_norm >= 0")
    window = _chord_window(b_norm)
    if window is None or mu <= window[0]:
        return 0.0
    lo, hi = window[0], min(mu, window[1])
    s = _along_chord(ff, b_norm)
    if kind == "L":
        return _quad(lambda lam: s(lam) * lam**k, lo, hi, epsabs)
    return _quad(lambda lam: (mu - lam) * s(lam) * lam**k, lo, hi, epsabs)


def _L0(b_norm: float, ff: FormFactor, epsabs: float = QUAD_ABS_TOL) -> float:
    return geometric_integral("L", 0, 1.0, b_norm, ff, epsabs)


@lru_cache(maxsize=16)
def L0_table(ff: FormFactor, n: int = 1025) -> CubicSpline:
    """Cubic-spline table of ``L0(1, r)`` on ``[0, 1/2]`` for bulk evaluation."""
    r = np.linspace(0.0, 0.5, n)
    vals = np.array([_L0(x, ff, 1e-13) for x in r])
    return CubicSpline(r, vals, bc_type=((1, 0.0), "not-a-knot"))


def L0_many(b_norm, ff: FormFactor) -> np.ndarray:
    """``L0(1, |b|)`` for an array of radii via :func:`L0_table` (zero outside the support)."""
    b_norm = np.asarray(b_norm, dtype=float)
    out = L0_table(ff)(np.clip(b_norm, 0.0, 0.5))
    return np.where(b_norm >= 0.5, 0.0, out)


def beta1(kappa: Kappa, M: float, ff: FormFactor) -> float:
    """First-order coefficient ``P/sqrt(M) * L0(1, |b|)``."""
    return kappa.P / math.sqrt(M) * _L0(kappa.b_norm, ff)


def delta_beta2(kappa: Kappa, ff: FormFactor) -> float:
    """Second-order coefficient ``-L0(1, |b|)^2 / 2``; always <= 0."""
    return -0.5 * _L0(kappa.b_norm, ff) ** 2


# --------------------------------------------------------------------------
# ensembles
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EnsembleSpec:
    """Law of the collision randomness.

    ``law="microcanonical"`` puts the scatterer on the energy shell
    ``H_scatt = energy`` with time-uniform phase; ``law="truncated-gibbs"``
    draws ``H_scatt`` from ``exp(-beta H)`` restricted to ``H <= cutoff``.
    Impact vectors are uniform on the radius-1/2 ball orthogonal to the
    incoming direction.
    """

    law: str = "microcanonical"
    energy: float = 1.0
    beta: float = 1.0
    cutoff: float = 10.0
    dim: int = 2

    def __post_init__(self):
        if self.law not in ("microcanonical", "truncated-gibbs"):
            raise ValueError(f"unknown scatterer law {self.law!r}")
        if self.law == "microcanonical" and self.energy < 0:
            raise ValueError("microcanonical energy must be >= 0")
        if self.law == "truncated-gibbs" and not (self.beta > 0 and self.cutoff > 0):
            raise ValueError("truncated-gibbs needs beta > 0 and cutoff > 0")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")


def _shell_moments(energy, pot: ScattererPotential):
    """Per-shell averages ``(P^2/M, U''(Q))`` for time-uniform phase at ``H = energy``."""
    r, c = pot.exponent, pot.coefficient
    # v = U(Q)/H ~ Beta(1/r, 1/2)
    kin = 2.0 * energy * r / (2.0 + r)
    a = (r - 2) / r
    ratio = math.exp(special.betaln(1 / r + a, 0.5) - special.betaln(1 / r, 0.5))
    u2 = c * r * (r - 1) * (energy / c) ** a * ratio if energy > 0 or a == 0 else 0.0
    return kin, u2


def scatterer_moments(spec: EnsembleSpec, pot: ScattererPotential) -> dict[str, float]:
    """``E_star``, ``k_scatt_sq = <P^2>/M`` and ``U2_mean = <U''>`` of the scatterer law."""
    if spec.law == "microcanonical":
        kin, u2 = _shell_moments(spec.energy, pot)
        return {"E_star": float(spec.energy), "k_scatt_sq": kin, "U2_mean": u2}
    shape = 1.0 / pot.exponent + 0.5
    law = stats.gamma(shape, scale=1.0 / spec.beta)
    norm = law.cdf(spec.cutoff)
    pdf = lambda h: law.pdf(h) / norm  # noqa: E731
    tol = ENSEMBLE_ABS_TOL * 1e-2
    E_star = _quad(lambda h: h * pdf(h), 0.0, spec.cutoff, tol)
    kin = _quad(lambda h: _shell_moments(h, pot)[0] * pdf(h), 0.0, spec.cutoff, tol)
    u2 = _quad(lambda h: _shell_moments(h, pot)[1] * pdf(h), 0.0, spec.cutoff, tol)
    return {"E_star": E_star, "k_scatt_sq": kin, "U2_mean": u2}


@dataclass(frozen=True)
class ExpansionCoeffs:
    E_star: float
    k_scatt_sq: float
    L0_sq_mean: float
    Sigma1_sq: float
    delta_beta2_mean: float
    C: float
    delta_beta4_mean: float
    dim: int = 2

    @classmethod
    def from_components(cls, E_star, k_scatt_sq, L0_sq_mean, C, dim) -> ExpansionCoeffs:
        """Assemble the derived fields from the primitive averages."""
        sigma1 = k_scatt_sq * L0_sq_mean
        # Sigma1^2 * C / k^2 == L0_sq_mean * C, which stays finite when k^2 -> 0
        dbeta4 = sigma1 * (dim - 3) / 2.0 + L0_sq_mean * C
        return cls(E_star=float(E_star), k_scatt_sq=float(k_scatt_sq), L0_sq_mean=float(L0_sq_mean),
                   Sigma1_sq=float(sigma1), delta_beta2_mean=-0.5 * float(L0_sq_mean), C=float(C),
                   delta_beta4_mean=float(dbeta4), dim=int(dim))

    def to_dict(self) -> dict[str, float]:
        d = asdict(self)
        d.pop("dim")
        return d


def _radial_weight(dim: int):
    # uniform law on the (d-1)-ball of radius 1/2, as a density in the radius
    return lambda r: (dim - 1) * r ** (dim - 2) / 0.5 ** (dim - 1)


def _impact_average(f, dim: int, epsabs: float) -> float:
    w = _radial_weight(dim)
    return _quad(lambda r: w(r) * f(r), 0.0, 0.5, epsabs)


def _nested_numerator(b_norm: float, ff: FormFactor, epsabs: float) -> float:
    """``int_0^1 dlam int_0^lam dlam' K0(lam', |b|) sigma(b + (lam' - 1/2) e)``."""
    window = _chord_window(b_norm)
    if window is None:
        return 0.0
    s = _along_chord(ff, b_norm)
    lo, hi = window
    inner = lambda lam: geometric_integral("K", 0, lam, b_norm, ff, epsabs * 1e-2)  # noqa: E731
    # the outer double integral collapses to a (1 - lam') weight
    return _quad(lambda lam: (1.0 - lam) * inner(lam) * s(lam), lo, hi, epsabs * 1e-1)


@lru_cache(maxsize=32)
def _geometric_averages(ff: FormFactor, dim: int, epsabs: float) -> tuple[float, float]:
    l0sq = _impact_average(lambda r: _L0(r, ff, epsabs * 1e-2) ** 2, dim, epsabs)
    num = _impact_average(lambda r: _nested_numerator(r, ff, epsabs * 1e-1), dim, epsabs)
    return l0sq, num


def ensemble_coeffs(spec: EnsembleSpec, params: ModelParams,
                    epsabs: float = ENSEMBLE_ABS_TOL) -> ExpansionCoeffs:
    """Ensemble-averaged expansion coefficients by nested adaptive quadrature."""
    if spec.dim != params.dim:
        raise ValueError(f"ensemble dim {spec.dim} does not match model dim {params.dim}")
    mom = scatterer_moments(spec, params.potential)
    l0sq, num = _geometric_averages(params.form_factor, params.dim, epsabs)
    C = mom["U2_mean"] * num / l0sq
    return ExpansionCoeffs.from_components(mom["E_star"], mom["k_scatt_sq"], l0sq, C, params.dim)


def truncated_step(x, P, b_norm, coeffs: ExpansionCoeffs, alpha_star: float, M: float,
                   ff: FormFactor, L0=None):
    """Truncated energy map ``F(x)`` with the remainder terms dropped.

    Uses ``|p| = sqrt(2x)``::

        F = x + a* beta1/sqrt(2x) + a*^2 (dbeta2/(2x) + <dbeta4>/(4x^2))

    ``L0`` may be passed precomputed (array of ``L0(1, |b|)``) to skip the table.
    """
    x = np.asarray(x, dtype=float)
    if L0 is None:
        L0 = L0_many(b_norm, ff)
    b1 = np.asarray(P, dtype=float) / math.sqrt(M) * L0
    db2 = -0.5 * np.asarray(L0) ** 2
    out = x + alpha_star * b1 / np.sqrt(2.0 * x) + alpha_star**2 * (
        db2 / (2.0 * x) + coeffs.delta_beta4_mean / (4.0 * x * x))
    return out if out.ndim else float(out)
