"""Single-collision dynamics of the particle with one scatterer.

The particle crosses the interaction ball ``B(0, 1/2)`` of a scatterer whose
internal coordinate ``Q`` is driven by the confining potential ``U`` and by the
particle through the form factor ``sigma``::

    q'' = -alpha * Q * grad sigma(q)
    M Q'' + U'(Q) = -alpha * sigma(q)

with ``alpha = alpha_star * sqrt(M)``.  Because ``sigma`` is radial, every
collision is solved in the 2-plane spanned by the incoming direction ``e`` and
the impact vector ``b``; the result is rotated back into ``d`` dimensions.

The hot loop is a fixed-step classical RK4 compiled with numba.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numba
import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

__all__ = [
    "FormFactor",
    "ScattererPotential",
    "ModelParams",
    "SolverConfig",
    "Kappa",
    "CollisionResult",
    "CollisionError",
    "MaxStepsExceeded",
    "NonOrthogonalImpact",
    "form_factor_eval",
    "simulate_collision",
    "collision_trajectory",
    "total_energy",
    "free_scatterer_flow",
]

SUPPORT_RADIUS = 0.5

# kernel codes
_FF_BUMP, _FF_COS2, _FF_TABLE = 0, 1, 2
_FF_CODES = {"smooth-bump": _FF_BUMP, "cosine-squared": _FF_COS2, "custom-table": _FF_TABLE}

_OK, _MAX_STEPS = 0, 1


class CollisionError(RuntimeError):
    pass


class MaxStepsExceeded(CollisionError):
    """The particle did not leave the interaction ball within ``max_steps``."""


class NonOrthogonalImpact(ValueError):
    pass


# --------------------------------------------------------------------------
# form factor and potential
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FormFactor:
    """Radial coupling profile supported in the ball of radius 1/2.

    ``kind`` is one of ``"smooth-bump"`` (``exp(1 - 1/(1 - 4 r^2))``),
    ``"cosine-squared"`` (``cos(pi r)^2``) or ``"custom-table"`` (clamped
    cubic spline through ``table_values`` sampled on ``table_radii``).
    """

    kind: str = "smooth-bump"
    table_radii: tuple[float, ...] = ()
    table_values: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in _FF_CODES:
            raise ValueError(f"unknown form factor kind {self.kind!r}")
        if self.kind == "custom-table":
            r = np.asarray(self.table_radii, dtype=float)
            v = np.asarray(self.table_values, dtype=float)
            if r.ndim != 1 or r.shape != v.shape or r.size < 4:
                raise ValueError("custom table needs matching radii/values with at least 4 points")
            if r[0] != 0.0 or r[-1] != SUPPORT_RADIUS or np.any(np.diff(r) <= 0):
                raise ValueError("table radii must increase from 0 to 0.5")
            if np.any(v < 0) or np.any(v > 1) or v[-1] != 0.0:
                raise ValueError("table values must lie in [0, 1] and vanish at r = 0.5")

    @classmethod
    def smooth_bump(cls) -> FormFactor:
        return cls("smooth-bump")

    @classmethod
    def cosine_squared(cls) -> FormFactor:
        return cls("cosine-squared")

    @classmethod
    def from_table(cls, radii, values) -> FormFactor:
        return cls("custom-table", tuple(map(float, radii)), tuple(map(float, values)))

    @cached_property
    def kernel_data(self) -> tuple[int, np.ndarray, np.ndarray]:
        """``(code, knots, coefficients)`` as consumed by the compiled kernels."""
        code = _FF_CODES[self.kind]
        if code != _FF_TABLE:
            return code, np.zeros(2), np.zeros((4, 1))
        knots = np.asarray(self.table_radii, dtype=float)
        spline = CubicSpline(knots, np.asarray(self.table_values), bc_type=((1, 0.0), (1, 0.0)))
        return code, knots, np.ascontiguousarray(spline.c)

    def radial(self, r):
        """``sigma`` as a function of the radius, vectorised."""
        code, knots, coefs = self.kernel_data
        if np.isscalar(r):
            return _sigma_and_g(float(r), code, knots, coefs)[0]
        r = np.asarray(r, dtype=float)
        s, _ = _sigma_and_g_many(np.ascontiguousarray(r.reshape(-1)), code, knots, coefs)
        return s.reshape(r.shape)

    def evaluate(self, q):
        """Return ``(sigma(q), grad sigma(q))`` for points stacked on the last axis."""
        code, knots, coefs = self.kernel_data
        q = np.asarray(q, dtype=float)
        r = np.linalg.norm(q, axis=-1)
        s, g = _sigma_and_g_many(np.ascontiguousarray(np.atleast_1d(r).reshape(-1)), code, knots, coefs)
        s, g = s.reshape(r.shape), g.reshape(r.shape)
        grad = g[..., None] * q
        if s.ndim == 0:
            return float(s), grad
        return s, grad


@dataclass(frozen=True)
class ScattererPotential:
    """Confining potential ``U(Q) = coefficient * Q**exponent`` (even exponent)."""

    kind: str = "harmonic"
    exponent: int = 2
    coefficient: float = 0.5

    def __post_init__(self):
        if self.kind not in ("harmonic", "even-power"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.exponent < 2 or self.exponent % 2:
            raise ValueError("exponent must be an even integer >= 2")
        if self.coefficient <= 0:
            raise ValueError("coefficient must be positive")
        if self.kind == "harmonic" and self.exponent != 2:
            raise ValueError("harmonic potential has exponent 2")

    @classmethod
    def harmonic(cls, stiffness: float = 1.0) -> ScattererPotential:
        return cls("harmonic", 2, 0.5 * stiffness)

    @classmethod
    def even_power(cls, exponent: int, coefficient: float | None = None) -> ScattererPotential:
        if coefficient is None:
            coefficient = 1.0 / exponent
        return cls("even-power", int(exponent), float(coefficient))

    def U(self, Q):
        return self.coefficient * np.power(Q, self.exponent)

    def dU(self, Q):
        return self.coefficient * self.exponent * np.power(Q, self.exponent - 1)

    def d2U(self, Q):
        r = self.exponent
        return self.coefficient * r * (r - 1) * np.power(Q, r - 2)


# --------------------------------------------------------------------------
# parameter containers
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelParams:
    alpha_star: float = 0.05
    mass_ratio: float = 100.0
    ell_star: float = 1.0
    dim: int = 2
    xi_plus: float = 1.0
    form_factor: FormFactor = field(default_factory=FormFactor)
    potential: ScattererPotential = field(default_factory=ScattererPotential)

    def __post_init__(self):
        if not self.alpha_star >= 0:
            raise ValueError("alpha_star must be non-negative")
        if not self.mass_ratio >= 1:
            raise ValueError("mass_ratio must be >= 1")
        if not self.ell_star >= 1:
            raise ValueError("ell_star must be >= 1")
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValueError("dim must be an integer >= 2")
        if not self.xi_plus > 0:
            raise ValueError("xi_plus must be positive")

    @property
    def alpha(self) -> float:
        """Bare coupling ``alpha = alpha_star * sqrt(M)``."""
        return self.alpha_star * math.sqrt(self.mass_ratio)


@dataclass(frozen=True)
class SolverConfig:
    steps_per_transit: int = 512
    t_tol: float = 1e-13
    max_steps: int = 200_000

    def __post_init__(self):
        if self.steps_per_transit < 4:
            raise ValueError("steps_per_transit must be >= 4")
        if not self.t_tol > 0:
            raise ValueError("t_tol must be positive")
        if self.max_steps < self.steps_per_transit:
            raise ValueError("max_steps must be at least steps_per_transit")


@dataclass(frozen=True)
class Kappa:
    """Random data of one collision: scatterer state and impact vector.

    ``direction`` is the incoming unit vector ``b`` was sampled against, if
    known.
    """

    Q: float
    P: float
    b: np.ndarray
    direction: np.ndarray | None = None

    @property
    def b_norm(self) -> float:
        return float(np.linalg.norm(self.b))


@dataclass(frozen=True)
class CollisionResult:
    p_out: np.ndarray
    R: np.ndarray
    delta_E: float
    t_plus: float
    steps_used: int
    Q_out: float = 0.0
    P_out: float = 0.0


# --------------------------------------------------------------------------
# compiled kernels
# --------------------------------------------------------------------------


@numba.njit(cache=True)
def _sigma_and_g(r, code, knots, coefs):
    """sigma(r) and g(r) = sigma'(r)/r, so that grad sigma(q) = g * q."""
    if r >= 0.5:
        return 0.0, 0.0
    if code == 0:
        c = 1.0 - 4.0 * r * r
        s = math.exp(1.0 - 1.0 / c)
        return s, -8.0 * s / (c * c)
    if code == 1:
        cr = math.cos(math.pi * r)
        if r < 1e-8:
            return cr * cr, -2.0 * math.pi * math.pi
        return cr * cr, -math.pi * math.sin(2.0 * math.pi * r) / r
    n = knots.shape[0]
    h = knots[1] - knots[0]
    i = int(r / h)
    if i > n - 2:
        i = n - 2
    while i > 0 and knots[i] > r:
        i -= 1
    while i < n - 2 and knots[i + 1] <= r:
        i += 1
    dx = r - knots[i]
    s = ((coefs[0, i] * dx + coefs[1, i]) * dx + coefs[2, i]) * dx + coefs[3, i]
    ds = (3.0 * coefs[0, i] * dx + 2.0 * coefs[1, i]) * dx + coefs[2, i]
    if r < 1e-8:
        return s, 2.0 * coefs[1, 0]
    return s, ds / r


@numba.njit(cache=True)
def _sigma_and_g_many(r, code, knots, coefs):
    s = np.empty(r.shape[0])
    g = np.empty(r.shape[0])
    for i in range(r.shape[0]):
        s[i], g[i] = _sigma_and_g(r[i], code, knots, coefs)
    return s, g


@numba.njit(cache=True)
def _rhs(y, out, pn, alpha, M, code, knots, coefs, pot_c, pot_r):
    # y = (q_e, q_b, R_e, R_b, Q, P, W); particle momentum is (pn + R_e, R_b)
    r = math.sqrt(y[0] * y[0] + y[1] * y[1])
    s, g = _sigma_and_g(r, code, knots, coefs)
    Q = y[4]
    out[0] = pn + y[2]
    out[1] = y[3]
    out[2] = -alpha * Q * g * y[0]
    out[3] = -alpha * Q * g * y[1]
    out[4] = y[5] / M
    out[5] = -pot_c * pot_r * Q ** (pot_r - 1) - alpha * s
    out[6] = alpha * (y[5] / M) * s


@numba.njit(cache=True)
def _rk4(y, h, out, k1, k2, k3, k4, tmp, pn, alpha, M, code, knots, coefs, pot_c, pot_r):
    n = y.shape[0]
    _rhs(y, k1, pn, alpha, M, code, knots, coefs, pot_c, pot_r)
    for i in range(n):
        tmp[i] = y[i] + 0.5 * h * k1[i]
    _rhs(tmp, k2, pn, alpha, M, code, knots, coefs, pot_c, pot_r)
    for i in range(n):
        tmp[i] = y[i] + 0.5 * h * k2[i]
    _rhs(tmp, k3, pn, alpha, M, code, knots, coefs, pot_c, pot_r)
    for i in range(n):
        tmp[i] = y[i] + h * k3[i]
    _rhs(tmp, k4, pn, alpha, M, code, knots, coefs, pot_c, pot_r)
    for i in range(n):
        out[i] = y[i] + h * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0


@numba.njit(cache=True)
def _outside_moving_out(y, pn):
    return (y[0] * y[0] + y[1] * y[1] > 0.25) and (y[0] * (pn + y[2]) + y[1] * y[3] > 0.0)


@numba.njit(cache=True)
def _collide(pn, rb, Q0, P0, alpha, M, code, knots, coefs, pot_c, pot_r,
             n_transit, t_tol, max_steps, traj):
    """Canonical-frame collision.

    Returns ``(status, t_plus, steps, state)``; ``traj`` rows receive
    ``(t, *state)`` until full (pass a ``(0, 8)`` array to skip recording).
    """
    y = np.zeros(7)
    y[0] = -0.5
    y[1] = rb
    y[4] = Q0
    y[5] = P0
    if rb >= 0.5:
        return _OK, 0.5 / pn, 0, y
    work = np.empty((7, 7))
    k1, k2, k3, k4, tmp, ynew = work[0], work[1], work[2], work[3], work[4], work[5]
    n_rec = traj.shape[0]
    rec = 0
    if n_rec > 0:
        traj[0, 0] = 0.0
        traj[0, 1:] = y
        rec = 1

    # free flight up to the entry point; sigma vanishes so only Q, P move
    half_chord = math.sqrt(0.25 - rb * rb)
    t_entry = (0.5 - half_chord) / pn
    t = 0.0
    if t_entry > 0.0:
        n_free = 8
        h = t_entry / n_free
        for _ in range(n_free):
            _rk4(y, h, ynew, k1, k2, k3, k4, tmp, pn, alpha, M, code, knots, coefs, pot_c, pot_r)
            y[:] = ynew
            t += h
        # straight-line entry point, exact
        y[0] = -half_chord
        y[1] = rb
        if rec < n_rec:
            traj[rec, 0] = t
            traj[rec, 1:] = y
            rec += 1

    dt = 2.0 * half_chord / (pn * n_transit)
    steps = 0
    while steps < max_steps:
        _rk4(y, dt, ynew, k1, k2, k3, k4, tmp, pn, alpha, M, code, knots, coefs, pot_c, pot_r)
        steps += 1
        if _outside_moving_out(ynew, pn):
            # bisection on the last step for the boundary crossing
            lo = 0.0
            hi = dt
            yhi = ynew.copy()
            ytry = np.empty(7)
            while hi - lo > t_tol:
                mid = 0.5 * (lo + hi)
                _rk4(y, mid, ytry, k1, k2, k3, k4, tmp, pn, alpha, M, code, knots, coefs, pot_c, pot_r)
                if ytry[0] * ytry[0] + ytry[1] * ytry[1] > 0.25:
                    hi = mid
                    yhi[:] = ytry
                else:
                    lo = mid
            t += hi
            if rec < n_rec:
                traj[rec, 0] = t
                traj[rec, 1:] = yhi
                rec += 1
            return _OK, t, steps, yhi
        y[:] = ynew
        t += dt
        if rec < n_rec:
            traj[rec, 0] = t
            traj[rec, 1:] = y
            rec += 1
    return _MAX_STEPS, t, steps, y


@numba.njit(cache=True)
def _collide_batch(pn, rb, Q0, P0, alpha, M, code, knots, coefs, pot_c, pot_r,
                   n_transit, t_tol, max_steps):
    n = pn.shape[0]
    out = np.empty((n, 5))
    status = np.zeros(n, dtype=np.int64)
    steps = np.zeros(n, dtype=np.int64)
    notraj = np.zeros((0, 8))
    for i in range(n):
        st, tp, ns, y = _collide(pn[i], rb[i], Q0[i], P0[i], alpha, M, code, knots, coefs,
                                 pot_c, pot_r, n_transit, t_tol, max_steps, notraj)
        status[i] = st
        steps[i] = ns
        out[i, 0] = y[2]
        out[i, 1] = y[3]
        out[i, 2] = y[6]
        out[i, 3] = tp
        out[i, 4] = y[4]
    return out, status, steps


def _kernel_args(params: ModelParams, solver: SolverConfig):
    code, knots, coefs = params.form_factor.kernel_data
    pot = params.potential
    return (params.alpha, float(params.mass_ratio), code, knots, coefs,
            float(pot.coefficient), int(pot.exponent),
            int(solver.steps_per_transit), float(solver.t_tol), int(solver.max_steps))


def _frame(p_in: np.ndarray, b: np.ndarray):
    """Orthonormal pair (e, u): e along p, u along b (or any normal if b = 0)."""
    pn = float(np.linalg.norm(p_in))
    e = p_in / pn
    rb = float(np.linalg.norm(b))
    if rb > 0:
        u = b / rb
    else:
        u = np.zeros_like(e)
        k = int(np.argmin(np.abs(e)))
        u[k] = 1.0
        u -= (u @ e) * e
        u /= np.linalg.norm(u)
    return pn, rb, e, u


def _check_inputs(p_in, kappa: Kappa, params: ModelParams):
    p_in = np.asarray(p_in, dtype=float)
    b = np.asarray(kappa.b, dtype=float)
    if p_in.shape != (params.dim,) or b.shape != (params.dim,):
        raise ValueError(f"p_in and b must be vectors of length {params.dim}")
    pn = float(np.linalg.norm(p_in))
    if pn == 0:
        raise ValueError("p_in must be nonzero")
    if abs(b @ p_in) > 1e-12 * max(1.0, pn):
        raise NonOrthogonalImpact(f"b . p = {b @ p_in:.3e} is not zero")
    return p_in, b


# --------------------------------------------------------------------------
# public operations
# --------------------------------------------------------------------------


def form_factor_eval(q, ff: FormFactor):
    """``(sigma(q), grad sigma(q))``; both vanish outside ``B(0, 1/2)``."""
    return ff.evaluate(q)


def simulate_collision(p_in, kappa: Kappa, params: ModelParams,
                       solver: SolverConfig = SolverConfig()) -> CollisionResult:
    """Integrate one scattering event and return the momentum/energy transfer.

    The particle starts at ``q(0) = b - p/(2|p|)`` with ``Q(0) = Q`` and
    ``Q'(0) = P/M``; integration stops when it leaves ``B(0, 1/2)`` moving
    outward.  ``delta_E`` is the time integral of ``alpha * Q' * sigma(q)``,
    which equals ``(|p_out|^2 - |p_in|^2)/2`` up to integration error.
    """
    p_in, b = _check_inputs(p_in, kappa, params)
    pn, rb, e, u = _frame(p_in, b)
    if params.xi_plus > 0.5 * pn * pn:
        raise ValueError("incoming kinetic energy is below xi_plus")
    traj = np.zeros((0, 8))
    status, t_plus, steps, y = _collide(pn, rb, float(kappa.Q), float(kappa.P),
                                        *_kernel_args(params, solver), traj)
    if status == _MAX_STEPS:
        raise MaxStepsExceeded(f"particle still inside after {steps} steps (|p|={pn:.4g}, |b|={rb:.4g})")
    R = y[2] * e + y[3] * u
    return CollisionResult(p_out=p_in + R, R=R, delta_E=float(y[6]), t_plus=float(t_plus),
                           steps_used=int(steps), Q_out=float(y[4]), P_out=float(y[5]))


def collision_trajectory(p_norm: float, b_norm: float, Q: float, P: float, params: ModelParams,
                         solver: SolverConfig = SolverConfig()) -> np.ndarray:
    """Recorded canonical-frame trajectory of one collision.

    Columns: ``t, q_e, q_b, R_e, R_b, Q, P, W`` where the particle momentum is
    ``(p_norm + R_e, R_b)`` and ``W`` is the accumulated energy transfer.
    """
    traj = np.zeros((solver.max_steps + 16, 8))
    status, _, steps, _ = _collide(float(p_norm), float(b_norm), float(Q), float(P),
                                   *_kernel_args(params, solver), traj)
    if status == _MAX_STEPS:
        raise MaxStepsExceeded(f"particle still inside after {steps} steps")
    n = int(np.count_nonzero(traj[:, 0])) + 1
    return traj[:n].copy()


def collide_batch(p_norm, b_norm, Q, P, params: ModelParams, solver: SolverConfig = SolverConfig()):
    """Vectorised canonical-frame collisions.

    Returns a dict of arrays ``R_e, R_b, delta_E, t_plus, Q_out, steps``.
    Raises :class:`MaxStepsExceeded` naming the first failing index.
    """
    pn, rb, Qa, Pa = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (p_norm, b_norm, Q, P)))
    out, status, steps = _collide_batch(np.ascontiguousarray(pn.ravel()), np.ascontiguousarray(rb.ravel()),
                                        np.ascontiguousarray(Qa.ravel()), np.ascontiguousarray(Pa.ravel()),
                                        *_kernel_args(params, solver))
    bad = np.flatnonzero(status)
    if bad.size:
        raise MaxStepsExceeded(f"collision {bad[0]} did not exit after {steps[bad[0]]} steps")
    shape = pn.shape
    return {
        "R_e": out[:, 0].reshape(shape),
        "R_b": out[:, 1].reshape(shape),
        "delta_E": out[:, 2].reshape(shape),
        "t_plus": out[:, 3].reshape(shape),
        "Q_out": out[:, 4].reshape(shape),
        "steps": steps.reshape(shape),
    }


def total_energy(q, p, Q, P, params: ModelParams) -> float:
    """Conserved Hamiltonian of particle plus one scatterer."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    s, _ = params.form_factor.evaluate(q)
    M = params.mass_ratio
    return 0.5 * float(p @ p) + P * P / (2 * M) + float(params.potential.U(Q)) + params.alpha * Q * s


def free_scatterer_flow(Q: float, P: float, t: float, params: ModelParams) -> tuple[float, float]:
    """Evolve the uncoupled scatterer for a time ``t``."""
    M = params.mass_ratio
    pot = params.potential
    if t == 0:
        return float(Q), float(P)
    if pot.exponent == 2:
        omega = math.sqrt(2.0 * pot.coefficient / M)
        c, s = math.cos(omega * t), math.sin(omega * t)
        Qt = Q * c + P / (M * omega) * s
        Pt = -M * omega * Q * s + P * c
        return Qt, Pt

    def rhs(_, y):
        return [y[1] / M, -float(pot.dU(y[0]))]

    sol = solve_ivp(rhs, (0.0, t), [Q, P], method="DOP853", rtol=1e-12, atol=1e-14)
    return float(sol.y[0, -1]), float(sol.y[1, -1])
