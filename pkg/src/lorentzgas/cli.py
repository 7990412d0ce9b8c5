"""Command-line front end: ``lorentzgas {collide,chain,sde,stationary,compare}``.

Every command reads an INI config (see :mod:`lorentzgas.config`), writes CSV
tables and a JSON summary into the output directory, and is deterministic for
a fixed config and seed.  Exit codes: 0 success, 2 configuration error,
3 solver failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .chain import (
    ChainConfig,
    EnergyFloorBreached,
    run_energy_chains,
    run_vector_chain,
    sample_impact_radii,
    sample_scatterer_states,
)
from .compare import stationary_check, weak_convergence
from .config import ConfigError, RunConfig, load_config
from .diffusion import (
    LimitCoeffs,
    StationaryLaw,
    StepTooLarge,
    euler_maruyama_reflected,
    maxwell_boltzmann_density,
    speed_law_ks,
)
from .expansion import L0_many, QuadratureNotConverged, ensemble_coeffs
from .rng import RngStream
from .scatter import CollisionError, collide_batch
from .stats import WeightedSample, moments, msd_fit

EXIT_CONFIG = 2
EXIT_SOLVER = 3
SOLVER_ERRORS = (CollisionError, EnergyFloorBreached, StepTooLarge, QuadratureNotConverged)


def _write_csv(path: Path, header: list[str], columns) -> None:
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    np.savetxt(path, data, delimiter=",", header=",".join(header), comments="", fmt="%.17g")


def _write_json(path: Path, cfg: RunConfig, command: str, body: dict, wall: float | None) -> None:
    doc = {"command": command, "version": __version__, "seed": cfg.seed, "config": cfg.to_dict(), **body}
    if wall is not None:
        doc["wall_time_s"] = wall
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n")


# --------------------------------------------------------------------------
# commands; each returns the JSON body
# --------------------------------------------------------------------------


def cmd_collide(cfg: RunConfig, out: Path) -> dict:
    s = cfg.section("collide")
    params = cfg.model
    n = s["n_collisions"]
    pn = s["p_norm"]
    if not pn > 0 or 0.5 * pn * pn < params.xi_plus:
        raise ConfigError("collide.p_norm: need |p|^2/2 >= xi_plus")
    gen = RngStream(cfg.seed, 0).gen
    rb = sample_impact_radii(gen, params.dim, n)
    Q, P = sample_scatterer_states(gen, cfg.ensemble, params, n)
    res = collide_batch(pn, rb, Q, P, params, cfg.solver)
    header = ["index", "p_norm", "b_norm", "Q", "P", "R_par", "R_perp", "delta_E", "t_plus"]
    cols = [np.arange(n), np.full(n, pn), rb, Q, P, res["R_e"], res["R_b"], res["delta_E"], res["t_plus"]]
    body = {"n_collisions": n, "p_norm": pn,
            "delta_E_mean": float(np.mean(res["delta_E"])),
            "delta_E_max_abs": float(np.max(np.abs(res["delta_E"])))}
    if s["expansion"]:
        pred = P / math.sqrt(params.mass_ratio) * L0_many(rb, params.form_factor) / pn
        a = params.alpha_star
        resid = res["delta_E"] / a - pred if a > 0 else np.zeros(n)
        header += ["beta1_over_p", "residual"]
        cols += [pred, resid]
        body["residual_max_abs"] = float(np.max(np.abs(resid)))
    _write_csv(out / "collisions.csv", header, cols)
    return body


def cmd_chain(cfg: RunConfig, out: Path) -> dict:
    s = cfg.section("chain")
    ccfg = ChainConfig(cfg.model, cfg.ensemble, s["mode"], n_steps=s["n_steps"], E0=s["E0"],
                       stride=s["stride"], solver=cfg.solver)
    if s["vector"]:
        if s["mode"] != "exact-ode":
            raise ConfigError("chain.vector: the vector chain needs chain.mode = exact-ode")
        traj = run_vector_chain(ccfg, RngStream(cfg.seed, 0))
        d = cfg.model.dim
        header = ["step", "time"] + [f"q{k}" for k in range(d)] + [f"p{k}" for k in range(d)]
        cols = [traj.steps, traj.times] + list(traj.positions.T) + list(traj.momenta.T)
        _write_csv(out / "vector_chain.csv", header, cols)
        body = {"n_collisions": traj.n_collisions, "final_energy": float(traj.energies[-1])}
        if traj.times.size >= 1000:
            body["msd"] = msd_fit(traj).to_dict()
        return body
    trajs = run_energy_chains(ccfg, cfg.seed, s["n_chains"], workers=cfg.workers)
    cols = [np.concatenate([np.full(t.steps.size, i) for i, t in enumerate(trajs)]),
            np.concatenate([t.steps for t in trajs]),
            np.concatenate([t.times for t in trajs]),
            np.concatenate([t.energies for t in trajs])]
    _write_csv(out / "energy_chain.csv", ["chain", "step", "time", "energy"], cols)
    body = {"n_chains": len(trajs), "n_collisions": ccfg.n_steps,
            "reflections": [t.n_reflections for t in trajs],
            "final_energies": [float(t.energies[-1]) for t in trajs]}
    E = trajs[0].energies
    block = max(1, min(100, E.size // 10))
    if E.size // block >= 2:
        body["moments_chain0"] = moments(WeightedSample(E), orders=(1, 2), block=block).to_dict()
    return body


def cmd_sde(cfg: RunConfig, out: Path) -> dict:
    s = cfg.section("sde")
    coeffs = ensemble_coeffs(cfg.ensemble, cfg.model)
    lc = LimitCoeffs.from_expansion(coeffs, cfg.model.xi_plus)
    path = euler_maruyama_reflected(s["x0"], lc, s["dt"], s["T"], RngStream(cfg.seed, 0),
                                    n_paths=s["n_paths"], record_stride=s["record_stride"])
    n_t, n_p = path.X.shape
    cols = [np.repeat(np.arange(n_p), n_t), np.tile(path.tau, n_p), path.X.T.ravel()]
    _write_csv(out / "sde_paths.csv", ["path", "tau", "X"], cols)
    last = path.X[-1]
    body = {"coefficients": coeffs.to_dict(), "n_paths": n_p, "T": float(path.tau[-1]), "dt": s["dt"],
            "final_mean": float(last.mean()), "min_state": float(path.X.min())}
    if n_p >= 2:
        body["final_moments"] = moments(WeightedSample(last), orders=(1, 2), block=1).to_dict()
    return body


def cmd_stationary(cfg: RunConfig, out: Path) -> dict:
    s = cfg.section("stationary")
    coeffs = ensemble_coeffs(cfg.ensemble, cfg.model)
    xi = cfg.model.xi_plus
    if not s["x_max"] > xi:
        raise ConfigError("stationary.x_max: must exceed xi_plus")
    lc = LimitCoeffs.from_expansion(coeffs, xi)
    law = StationaryLaw(lc)
    x = np.linspace(xi, s["x_max"], s["n_grid"])
    p = np.sqrt(2 * x)
    k2 = coeffs.k_scatt_sq
    d = cfg.model.dim
    _write_csv(out / "energy_density.csv", ["x", "density"], [x, law.energy_pdf(x)])
    _write_csv(out / "speed_density_per_collision.csv", ["p", "density"], [p, law.speed_pdf(p)])
    _write_csv(out / "speed_density_time_weighted.csv", ["p", "density"], [p, law.speed_pdf(p, True)])
    _write_csv(out / "maxwell_boltzmann.csv", ["p", "density"], [p, maxwell_boltzmann_density(p, k2, d)])
    body = {"coefficients": coeffs.to_dict(), "shape_exponent": law.shape, "decay_rate": law.rate,
            "C_over_k2": coeffs.C / k2}
    if s["temperature_check"]:
        body["ks_time_weighted_vs_maxwell_boltzmann"] = speed_law_ks(law, k2, d)
    return body


def cmd_compare(cfg: RunConfig, out: Path) -> dict:
    s = cfg.section("compare")
    wc = weak_convergence(cfg.model, cfg.ensemble, s["alpha_stars"], s["taus"], s["x0"], s["n_chains"],
                          s["n_paths"], s["dt"], cfg.seed)
    rows = []
    for c in wc.comparisons:
        for i, t in enumerate(c.taus):
            for k in range(2):
                rows.append((c.alpha_star, t, k + 1, c.chain[i, k], c.chain_se[i, k], c.sde[i, k],
                             c.sde_se[i, k], c.z[i, k]))
    _write_csv(out / "moments.csv", ["alpha_star", "tau", "order", "chain", "chain_se", "sde", "sde_se", "z"],
               list(zip(*rows)))
    st = stationary_check(replace(cfg.model, alpha_star=s["stationary_alpha_star"]), cfg.ensemble,
                          n_chains=s["stationary_chains"], burn_in=s["stationary_burn_in"],
                          steps_per_chain=s["stationary_steps"], E0=s["stationary_E0"], seed=cfg.seed)
    return {"weak_convergence": wc.to_dict(), "stationary": st.to_dict(),
            "passed": bool(wc.passed and st.passed)}


COMMANDS = {
    "collide": cmd_collide,
    "chain": cmd_chain,
    "sde": cmd_sde,
    "stationary": cmd_stationary,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lorentzgas", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", type=Path, help="INI run configuration (defaults apply when omitted)")
    ap.add_argument("--seed", type=int, help="override run.seed")
    ap.add_argument("--out", type=Path, help="override run.out (output directory)")
    ap.add_argument("--workers", type=int, help="override run.workers (independent chains only)")
    ap.add_argument("--record-timing", action="store_true",
                    help="add wall-clock time to the JSON summary (breaks byte-identical reruns)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config).with_run(
            seed=args.seed, out=str(args.out) if args.out else None, workers=args.workers,
            record_timing=True if args.record_timing else None)
        if cfg.seed < 0 or cfg.workers < 1:
            raise ConfigError("run.seed must be >= 0 and run.workers >= 1")
        out = cfg.out
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        body = COMMANDS[args.command](cfg, out)
        wall = time.perf_counter() - t0 if cfg.raw["run"]["record_timing"] else None
        _write_json(out / f"{args.command}.json", cfg, args.command, body, wall)
    except SOLVER_ERRORS as exc:
        print(f"lorentzgas: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, ValueError, OSError) as exc:
        print(f"lorentzgas: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
