"""Spatial spreading of the particle under exact collisions.

Follows one particle for 10^5 collisions, then prints the mean squared
displacement at a few lags and the fitted exponent (1 means diffusive).
"""
from lorentzgas.chain import ChainConfig, run_vector_chain
from lorentzgas.expansion import EnsembleSpec
from lorentzgas.rng import RngStream
from lorentzgas.scatter import ModelParams
from lorentzgas.stats import msd_fit

params = ModelParams(alpha_star=0.1, xi_plus=1e-6)
cfg = ChainConfig(params, EnsembleSpec(energy=1.0), "exact-ode", n_steps=100_000, E0=1.0)
traj = run_vector_chain(cfg, RngStream(1))
fit = msd_fit(traj)

print(f"collisions: {traj.n_collisions}, elapsed time: {traj.times[-1]:.0f}")
print(f"mean energy along the path: {traj.energies.mean():.3f}")
for lag, msd in list(zip(fit.lags, fit.msd))[::8]:
    print(f"lag {lag:9.1f}   msd {msd:11.1f}")
print(f"exponent {fit.exponent:.3f}, diffusion constant {fit.diffusion_constant:.3f}")
