"""Collision Markov chains for the particle energy and full phase-space state.

Two chains are provided:

* the reflected energy chain ``E_{n+1} = F(E_n, kappa_n)`` (mirrored to
  ``2 xi_+ - F`` when ``F < xi_+``), where ``F`` is either the exact collision
  transfer ``E + dE`` or the truncated high-energy map;
* the vector chain ``p_{n+1} = p_n + R``, ``t_{n+1} = t_n + l*/|p_{n+1}|``,
  ``q_{n+1} = q_n + l* p_{n+1}/|p_{n+1}|`` driven by exact collisions.

Random draws are made inside the compiled kernels from the generator of a
:class:`RngStream`, so a chain is reproducible bit-for-bit from ``(seed, stream)``.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numba
import numpy as np
from scipy import stats

from .expansion import EnsembleSpec, ExpansionCoeffs, L0_table, ensemble_coeffs, truncated_step
from .rng import RngStream
from .scatter import (
    _MAX_STEPS,
    Kappa,
    MaxStepsExceeded,
    ModelParams,
    SolverConfig,
    _collide,
    _kernel_args,
)

__all__ = [
    "ChainConfig",
    "ChainTrajectory",
    "EnergyFloorBreached",
    "InterpolatedPath",
    "OutOfRange",
    "sample_kappa",
    "sample_scatterer_states",
    "sample_impact_radii",
    "step_energy_chain",
    "run_energy_chain",
    "run_energy_chains",
    "run_truncated_ensemble",
    "run_vector_chain",
    "rescale_time",
]

class EnergyFloorBreached(RuntimeError):
    """The vector chain fell below ``xi_plus``; ``trajectory`` holds the states so far."""

    def __init__(self, msg, step, trajectory=None):
        super().__init__(msg)
        self.step = step
        self.trajectory = trajectory


class OutOfRange(ValueError):
    pass


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------


def sample_scatterer_states(gen: np.random.Generator, spec: EnsembleSpec, params: ModelParams, n: int):
    """Draw ``n`` scatterer states ``(Q, P)`` from the ensemble law."""
    pot = params.potential
    M = params.mass_ratio
    r, c = pot.exponent, pot.coefficient
    if spec.law == "microcanonical":
        H = np.full(n, float(spec.energy))
    else:
        law = stats.gamma(1.0 / r + 0.5, scale=1.0 / spec.beta)
        H = law.ppf(gen.random(n) * law.cdf(spec.cutoff))
    if r == 2:
        theta = gen.uniform(0.0, 2.0 * math.pi, n)
        Q = np.sqrt(H / c) * np.sin(theta)
        P = np.sqrt(2.0 * M * H) * np.cos(theta)
        return Q, P
    # time-uniform phase on the shell: U(Q)/H ~ Beta(1/r, 1/2)
    v = gen.beta(1.0 / r, 0.5, n)
    signs = gen.integers(0, 2, (2, n)) * 2 - 1
    Q = signs[0] * (H * v / c) ** (1.0 / r)
    P = signs[1] * np.sqrt(2.0 * M * H * (1.0 - v))
    return Q, P


def sample_impact_radii(gen: np.random.Generator, dim: int, n: int) -> np.ndarray:
    """Radii of impact vectors uniform on the (d-1)-ball of radius 1/2."""
    return 0.5 * gen.random(n) ** (1.0 / (dim - 1))


def _orthogonal_unit(g: np.ndarray, e: np.ndarray) -> np.ndarray:
    u = g - (g @ e) * e
    return u / np.linalg.norm(u)


def sample_kappa(rng: RngStream, spec: EnsembleSpec, p_dir, params: ModelParams) -> Kappa:
    """One collision's randomness with ``b`` orthogonal to ``p_dir``."""
    e = np.asarray(p_dir, dtype=float)
    if abs(np.linalg.norm(e) - 1.0) > 1e-12 or e.shape != (params.dim,):
        raise ValueError("p_dir must be a unit vector of the model dimension")
    gen = rng.gen
    rb = sample_impact_radii(gen, params.dim, 1)[0]
    u = _orthogonal_unit(gen.standard_normal(params.dim), e)
    b = rb * u
    b -= (b @ e) * e
    Q, P = sample_scatterer_states(gen, spec, params, 1)
    return Kappa(Q=float(Q[0]), P=float(P[0]), b=b, direction=e.copy())


# --------------------------------------------------------------------------
# configuration and trajectory containers
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainConfig:
    params: ModelParams = field(default_factory=ModelParams)
    spec: EnsembleSpec = field(default_factory=EnsembleSpec)
    mode: str = "truncated"
    n_steps: int = 1000
    E0: float = 100.0
    stride: int = 1
    solver: SolverConfig = field(default_factory=SolverConfig)
    coeffs: ExpansionCoeffs | None = None

    def __post_init__(self):
        if self.mode not in ("truncated", "exact-ode"):
            raise ValueError(f"unknown chain mode {self.mode!r}")
        if self.n_steps < 0:
            raise ValueError("n_steps must be >= 0")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if not self.E0 >= self.params.xi_plus:
            raise ValueError("E0 must be >= xi_plus")
        if self.spec.dim != self.params.dim:
            raise ValueError("ensemble and model dimensions differ")

    def resolved_coeffs(self) -> ExpansionCoeffs:
        if self.coeffs is not None:
            return self.coeffs
        return ensemble_coeffs(self.spec, self.params)


@dataclass
class ChainTrajectory:
    """Recorded chain states.

    ``steps`` are collision indices of the recorded rows.  The energy chain
    fills ``energies``; the vector chain fills ``positions`` and ``momenta``
    (``energies`` then holds ``|p|^2/2``).
    """

    steps: np.ndarray
    times: np.ndarray
    energies: np.ndarray
    positions: np.ndarray | None = None
    momenta: np.ndarray | None = None
    n_collisions: int = 0
    n_reflections: int = 0
    seed: int | None = None
    stream: int | None = None

    @property
    def speeds(self) -> np.ndarray:
        return np.sqrt(2.0 * self.energies)


def _record_slots(n_steps: int, stride: int) -> int:
    return n_steps // stride + 1


# --------------------------------------------------------------------------
# compiled chain kernels
# --------------------------------------------------------------------------

_MICRO, _GIBBS = 0, 1


def _law_args(spec: EnsembleSpec, params: ModelParams):
    """Flat scatterer-law parameters for the compiled samplers."""
    pot = params.potential
    r = int(pot.exponent)
    if spec.law == "microcanonical":
        return _MICRO, float(spec.energy), 1.0, 0.0, r, float(pot.coefficient), float(params.mass_ratio)
    shape = 1.0 / r + 0.5
    if stats.gamma(shape, scale=1.0 / spec.beta).cdf(spec.cutoff) < 1e-3:
        raise ValueError("truncated-gibbs cutoff keeps less than 0.1% of the Gibbs mass")
    return _GIBBS, float(spec.cutoff), float(spec.beta), shape, r, float(pot.coefficient), float(params.mass_ratio)


def _l0_args(params: ModelParams):
    sp = L0_table(params.form_factor)
    x = sp.x
    return float(x[0]), float(x[1] - x[0]), int(x.shape[0] - 1), np.ascontiguousarray(sp.c)


@numba.njit(cache=True)
def _l0_eval(r, x0, h, nseg, c):
    if r >= 0.5:
        return 0.0
    k = int((r - x0) / h)
    if k >= nseg:
        k = nseg - 1
    dx = r - (x0 + k * h)
    return ((c[0, k] * dx + c[1, k]) * dx + c[2, k]) * dx + c[3, k]


@numba.njit(cache=True)
def _draw_radius(gen, dim):
    u = gen.random()
    if dim == 2:
        return 0.5 * u
    return 0.5 * u ** (1.0 / (dim - 1))


@numba.njit(cache=True)
def _draw_scatterer(gen, law, H0, beta, shape, r, c, M, need_Q=True):
    """One ``(Q, P)`` from the scatterer law (see :func:`sample_scatterer_states`).

    With ``need_Q=False`` the returned ``Q`` is 0; the draws consumed are the same.
    """
    if law == _MICRO:
        H = H0
    else:
        H = gen.gamma(shape, 1.0 / beta)
        while H > H0:
            H = gen.gamma(shape, 1.0 / beta)
    if r == 2:
        # uniform phase via a uniform point of the unit disc (cheaper than cos/sin)
        s = 2.0
        while s > 1.0 or s == 0.0:
            x = 2.0 * gen.random() - 1.0
            y = 2.0 * gen.random() - 1.0
            s = x * x + y * y
        inv = 1.0 / math.sqrt(s)
        Q = math.sqrt(H / c) * y * inv if need_Q else 0.0
        return Q, math.sqrt(2.0 * M * H) * x * inv
    v = gen.beta(1.0 / r, 0.5)
    Q = (H * v / c) ** (1.0 / r)
    if gen.random() < 0.5:
        Q = -Q
    P = math.sqrt(2.0 * M * H * (1.0 - v))
    if gen.random() < 0.5:
        P = -P
    return Q, P


@numba.njit(cache=True)
def _truncated_advance(gen, E, t, k, a_star, xi, dbeta4, ell, dim, law, H0, beta, shape, r, c, M,
                       x0, h, nseg, L0c, timed):
    """``k`` truncated steps from ``(E, t)``; returns ``(E, t, reflections)``."""
    n_ref = 0
    kp_scale = 1.0 / math.sqrt(M)
    a2 = a_star * a_star
    for _ in range(k):
        rb = _draw_radius(gen, dim)
        _, P = _draw_scatterer(gen, law, H0, beta, shape, r, c, M, False)
        L0 = _l0_eval(rb, x0, h, nseg, L0c)
        inv = 1.0 / E
        F = E + a_star * (P * kp_scale) * L0 * math.sqrt(0.5 * inv) + a2 * inv * (
            -0.25 * L0 * L0 + 0.25 * dbeta4 * inv)
        if F < xi:
            F = 2.0 * xi - F
            n_ref += 1
        E = F
        if timed:
            t += ell / math.sqrt(2.0 * E)
    return E, t, n_ref


@numba.njit(cache=True)
def _truncated_run(gen, E0, n_chains, burn_in, stride, a_star, xi, dbeta4, ell, dim,
                   law, H0, beta, shape, r, c, M, x0, h, nseg, L0c, out_E, out_t):
    """Truncated chains one after another; row ``i`` of the outputs is chain ``i``.

    States are recorded at steps ``burn_in + j*stride``; times run from the
    end of the burn-in.
    """
    n_ref = 0
    for i in range(n_chains):
        E, t, nr = _truncated_advance(gen, E0, 0.0, burn_in, a_star, xi, dbeta4, ell, dim, law, H0, beta,
                                      shape, r, c, M, x0, h, nseg, L0c, False)
        n_ref += nr
        out_E[i, 0] = E
        out_t[i, 0] = t
        for j in range(1, out_E.shape[1]):
            E, t, nr = _truncated_advance(gen, E, t, stride, a_star, xi, dbeta4, ell, dim, law, H0, beta,
                                          shape, r, c, M, x0, h, nseg, L0c, True)
            n_ref += nr
            out_E[i, j] = E
            out_t[i, j] = t
    return n_ref


@numba.njit(cache=True)
def _exact_run(gen, E, n_steps, stride, xi, ell, dim, law, H0, beta, shape, r, c,
               out_E, out_t, out_n, alpha, M, code, knots, coefs, pot_c, pot_r, n_transit, t_tol, max_steps):
    """Exact-collision energy chain; returns ``(n_reflections, failed_step)``."""
    n_ref = 0
    t = 0.0
    rec = 1
    notraj = np.zeros((0, 8))
    for n in range(1, n_steps + 1):
        rb = _draw_radius(gen, dim)
        Q, P = _draw_scatterer(gen, law, H0, beta, shape, r, c, M)
        st, _, _, y = _collide(math.sqrt(2.0 * E), rb, Q, P, alpha, M, code, knots, coefs,
                               pot_c, pot_r, n_transit, t_tol, max_steps, notraj)
        if st != 0:
            return n_ref, n
        F = E + y[6]
        if F < xi:
            F = 2.0 * xi - F
            n_ref += 1
        E = F
        t += ell / math.sqrt(2.0 * E)
        if n % stride == 0:
            out_E[rec] = E
            out_t[rec] = t
            out_n[rec] = n
            rec += 1
    return n_ref, -1


@numba.njit(cache=True)
def _vector_run(gen, p, q, n_steps, stride, xi, ell, law, H0, beta, shape, r, c,
                out_q, out_p, out_t, out_n, alpha, M, code, knots, coefs, pot_c, pot_r,
                n_transit, t_tol, max_steps):
    """Exact-collision vector chain; returns ``(records, failed_step, reason)``."""
    d = p.shape[0]
    notraj = np.zeros((0, 8))
    e = np.empty(d)
    u = np.empty(d)
    t = 0.0
    rec = 1
    for n in range(1, n_steps + 1):
        pn = math.sqrt(np.sum(p * p))
        for k in range(d):
            e[k] = p[k] / pn
        # impact direction: Gaussian vector projected off e
        un = 0.0
        while un < 1e-12:
            ge = 0.0
            for k in range(d):
                u[k] = gen.standard_normal()
                ge += u[k] * e[k]
            un = 0.0
            for k in range(d):
                u[k] -= ge * e[k]
                un += u[k] * u[k]
            un = math.sqrt(un)
        for k in range(d):
            u[k] /= un
        rb = _draw_radius(gen, d)
        Q, P = _draw_scatterer(gen, law, H0, beta, shape, r, c, M)
        st, _, _, y = _collide(pn, rb, Q, P, alpha, M, code, knots, coefs,
                               pot_c, pot_r, n_transit, t_tol, max_steps, notraj)
        if st != 0:
            return rec, n, 1
        for k in range(d):
            p[k] += y[2] * e[k] + y[3] * u[k]
        pn = math.sqrt(np.sum(p * p))
        if 0.5 * pn * pn < xi:
            return rec, n, 2
        dt = ell / pn
        t += dt
        for k in range(d):
            q[k] += dt * p[k]
        if n % stride == 0:
            out_q[rec] = q
            out_p[rec] = p
            out_t[rec] = t
            out_n[rec] = n
            rec += 1
    return rec, -1, 0


# --------------------------------------------------------------------------
# public operations
# --------------------------------------------------------------------------


def step_energy_chain(E_n: float, kappa: Kappa, cfg: ChainConfig) -> tuple[float, bool]:
    """One reflected step ``E_n -> E_{n+1}``; returns ``(E_{n+1}, reflected)``."""
    params = cfg.params
    if E_n < params.xi_plus:
        raise ValueError("E_n must be >= xi_plus")
    if cfg.mode == "truncated":
        F = truncated_step(E_n, kappa.P, kappa.b_norm, cfg.resolved_coeffs(), params.alpha_star,
                           params.mass_ratio, params.form_factor)
    else:
        notraj = np.zeros((0, 8))
        st, _, steps, y = _collide(math.sqrt(2 * E_n), kappa.b_norm, float(kappa.Q), float(kappa.P),
                                   *_kernel_args(params, cfg.solver), notraj)
        if st == _MAX_STEPS:
            raise MaxStepsExceeded(f"collision did not exit after {steps} steps")
        F = E_n + float(y[6])
    return reflect(F, params.xi_plus)


def reflect(F: float, xi_plus: float) -> tuple[float, bool]:
    """Mirror ``F`` about ``xi_plus`` when it falls below the floor."""
    if F >= xi_plus:
        return F, False
    return 2.0 * xi_plus - F, True


def _truncated_ensemble(cfg: ChainConfig, rng: RngStream, n_chains: int, burn_in: int):
    params = cfg.params
    n_rec = _record_slots(cfg.n_steps, cfg.stride)
    out_E = np.empty((n_chains, n_rec))
    out_t = np.empty((n_chains, n_rec))
    n_ref = _truncated_run(rng.gen, float(cfg.E0), n_chains, burn_in, cfg.stride,
                           params.alpha_star, params.xi_plus, cfg.resolved_coeffs().delta_beta4_mean,
                           params.ell_star, params.dim, *_law_args(cfg.spec, params), *_l0_args(params),
                           out_E, out_t)
    steps = burn_in + cfg.stride * np.arange(n_rec, dtype=np.int64)
    return steps, out_E, out_t, n_ref


def run_energy_chain(cfg: ChainConfig, rng: RngStream) -> ChainTrajectory:
    """Iterate the reflected energy chain ``cfg.n_steps`` times.

    Raises :class:`MaxStepsExceeded` (exact-ode mode) naming the collision index.
    """
    params = cfg.params
    if cfg.mode == "truncated":
        steps, out_E, out_t, n_ref = _truncated_ensemble(cfg, rng, 1, 0)
        return ChainTrajectory(steps=steps, times=out_t[0], energies=out_E[0], n_collisions=cfg.n_steps,
                               n_reflections=n_ref, seed=rng.seed, stream=rng.stream)
    n_rec = _record_slots(cfg.n_steps, cfg.stride)
    out_E = np.empty(n_rec)
    out_t = np.empty(n_rec)
    out_n = np.empty(n_rec, dtype=np.int64)
    out_E[0], out_t[0], out_n[0] = cfg.E0, 0.0, 0
    n_ref, bad = _exact_run(rng.gen, float(cfg.E0), cfg.n_steps, cfg.stride, params.xi_plus, params.ell_star,
                            params.dim, *_law_args(cfg.spec, params)[:6], out_E, out_t, out_n,
                            *_kernel_args(params, cfg.solver))
    if bad >= 0:
        raise MaxStepsExceeded(f"collision at step {bad} did not exit")
    return ChainTrajectory(steps=out_n, times=out_t, energies=out_E, n_collisions=cfg.n_steps,
                           n_reflections=n_ref, seed=rng.seed, stream=rng.stream)


def run_truncated_ensemble(cfg: ChainConfig, rng: RngStream, n_chains: int, burn_in: int):
    """Pool of independent truncated chains, all started at ``cfg.E0``.

    Each chain runs ``burn_in`` unrecorded steps followed by ``cfg.n_steps``
    recorded ones.  Returns ``(steps, energies, times)`` with ``energies`` of
    shape ``(n_chains, len(steps))``.
    """
    if cfg.mode != "truncated":
        raise ValueError("ensembles are only provided for the truncated chain")
    if n_chains < 1 or burn_in < 0:
        raise ValueError("need n_chains >= 1 and burn_in >= 0")
    steps, out_E, out_t, _ = _truncated_ensemble(cfg, rng, n_chains, burn_in)
    return steps, out_E, out_t


def _run_one(args):
    cfg, seed, stream = args
    return run_energy_chain(cfg, RngStream(seed, stream))


def run_energy_chains(cfg: ChainConfig, seed: int, n_chains: int, workers: int = 1,
                      first_stream: int = 0) -> list[ChainTrajectory]:
    """Independent chains on streams ``first_stream, first_stream + 1, ...``.

    The output order follows the stream id, whatever the worker count.
    """
    if cfg.mode == "truncated" and cfg.coeffs is None:
        cfg = replace(cfg, coeffs=cfg.resolved_coeffs())
    jobs = [(cfg, seed, first_stream + i) for i in range(n_chains)]
    if workers <= 1 or n_chains <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs, chunksize=max(1, n_chains // (4 * workers))))


def run_vector_chain(cfg: ChainConfig, rng: RngStream, q0=None, p_dir0=None) -> ChainTrajectory:
    """Exact-collision chain for ``(t_n, q_n, p_n)`` starting at ``|p_0|^2/2 = E0``.

    Raises :class:`EnergyFloorBreached` if ``|p|^2/2`` drops below ``xi_plus``.
    """
    if cfg.mode != "exact-ode":
        raise ValueError("the vector chain requires mode='exact-ode'")
    params = cfg.params
    d = params.dim
    q = np.zeros(d) if q0 is None else np.array(q0, dtype=float)
    if p_dir0 is None:
        e0 = np.zeros(d)
        e0[0] = 1.0
    else:
        e0 = np.asarray(p_dir0, dtype=float)
        e0 = e0 / np.linalg.norm(e0)
    p = math.sqrt(2.0 * cfg.E0) * e0
    n_rec = _record_slots(cfg.n_steps, cfg.stride)
    out_q = np.empty((n_rec, d))
    out_p = np.empty((n_rec, d))
    out_t = np.empty(n_rec)
    out_n = np.empty(n_rec, dtype=np.int64)
    out_q[0], out_p[0], out_t[0], out_n[0] = q, p, 0.0, 0
    rec, bad, reason = _vector_run(rng.gen, p, q, cfg.n_steps, cfg.stride, params.xi_plus, params.ell_star,
                                   *_law_args(cfg.spec, params)[:6], out_q, out_p, out_t, out_n,
                                   *_kernel_args(params, cfg.solver))
    if bad >= 0:
        traj = _vector_traj(out_n, out_t, out_q, out_p, rec, bad - 1, rng)
        if reason == 1:
            raise MaxStepsExceeded(f"collision at step {bad} did not exit")
        raise EnergyFloorBreached(f"|p|^2/2 fell below xi_plus at step {bad}", bad, traj)
    return _vector_traj(out_n, out_t, out_q, out_p, rec, cfg.n_steps, rng)



def _vector_traj(out_n, out_t, out_q, out_p, rec, n_coll, rng):
    p = out_p[:rec].copy()
    return ChainTrajectory(steps=out_n[:rec].copy(), times=out_t[:rec].copy(),
                           energies=0.5 * np.einsum("ij,ij->i", p, p), positions=out_q[:rec].copy(),
                           momenta=p, n_collisions=n_coll, seed=rng.seed, stream=rng.stream)


class InterpolatedPath:
    """Piecewise-linear energy path on the rescaled clock ``tau_n = a*^2 n``."""

    def __init__(self, steps, energies, alpha_star: float):
        self.tau = alpha_star**2 * np.asarray(steps, dtype=float)
        self.energies = np.asarray(energies, dtype=float)

    @property
    def tau_max(self) -> float:
        return float(self.tau[-1])

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        if np.any(tau < 0) or np.any(tau > self.tau[-1]):
            raise OutOfRange(f"tau outside [0, {self.tau[-1]:.6g}]")
        out = np.interp(tau, self.tau, self.energies)
        return out if out.ndim else float(out)


def rescale_time(traj: ChainTrajectory, alpha_star: float) -> InterpolatedPath:
    """Continuous interpolation ``E(a*, M, tau)`` of an energy trajectory."""
    return InterpolatedPath(traj.steps, traj.energies, alpha_star)
