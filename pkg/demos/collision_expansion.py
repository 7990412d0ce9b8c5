"""Energy transfer in a single collision against its high-energy expansion.

Prints, for growing particle speed, the exact transfer from the collision
ODE, the first-order prediction alpha* beta1 / |p| and the remainder, which
shrinks like 1/|p|^2.
"""
import numpy as np

from lorentzgas.expansion import beta1, delta_beta2
from lorentzgas.scatter import Kappa, ModelParams, collide_batch

params = ModelParams(alpha_star=0.01)
kappa = Kappa(Q=0.3, P=5.0, b=np.array([0.0, 0.2]))
speeds = np.array([5.0, 10.0, 20.0, 40.0, 80.0, 160.0])

res = collide_batch(speeds, 0.2, kappa.Q, kappa.P, params)
first = params.alpha_star * beta1(kappa, params.mass_ratio, params.form_factor) / speeds
second = params.alpha_star**2 * delta_beta2(kappa, params.form_factor) / speeds**2

print(f"{'|p|':>6} {'dE (ODE)':>14} {'first order':>14} {'remainder':>11} {'rem - 2nd':>11}")
for p, dE, f1, f2 in zip(speeds, res["delta_E"], first, second):
    print(f"{p:6.0f} {dE:14.6e} {f1:14.6e} {dE - f1:11.2e} {dE - f1 - f2:11.2e}")
