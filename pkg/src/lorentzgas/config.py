"""INI run configuration with a fixed schema.

Every section and key is declared in :data:`SCHEMA`; anything else is a
:class:`ConfigError`.  Values are converted and validated before a command
starts, and :meth:`RunConfig.to_dict` gives the fully resolved configuration
that is echoed into every JSON output.
"""
from __future__ import annotations

import configparser
import csv
from dataclasses import dataclass, field
from pathlib import Path

from .expansion import EnsembleSpec
from .scatter import FormFactor, ModelParams, ScattererPotential, SolverConfig

__all__ = ["ConfigError", "RunConfig", "SCHEMA", "load_config", "parse_config"]


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.replace(",", " ").split())


# section -> key -> (converter, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "model": {
        "alpha_star": (float, 0.05),
        "mass_ratio": (float, 100.0),
        "ell_star": (float, 1.0),
        "dim": (int, 2),
        "xi_plus": (float, 1.0),
        "form_factor": (str, "smooth-bump"),
        "form_factor_table": (str, ""),
        "potential": (str, "harmonic"),
        "potential_exponent": (int, 2),
        "potential_coefficient": (float, 0.5),
    },
    "ensemble": {
        "law": (str, "microcanonical"),
        "energy": (float, 1.0),
        "beta": (float, 1.0),
        "cutoff": (float, 10.0),
    },
    "solver": {
        "steps_per_transit": (int, 512),
        "t_tol": (float, 1e-13),
        "max_steps": (int, 200_000),
    },
    "run": {
        "seed": (int, 0),
        "out": (str, "out"),
        "workers": (int, 1),
        "record_timing": (_bool, False),
    },
    "collide": {
        "n_collisions": (int, 1000),
        "p_norm": (float, 20.0),
        "expansion": (_bool, False),
    },
    "chain": {
        "mode": (str, "truncated"),
        "vector": (_bool, False),
        "n_steps": (int, 10_000),
        "E0": (float, 100.0),
        "stride": (int, 1),
        "n_chains": (int, 1),
    },
    "sde": {
        "x0": (float, 2.0),
        "dt": (float, 1e-4),
        "T": (float, 1.0),
        "n_paths": (int, 1000),
        "record_stride": (int, 100),
    },
    "stationary": {
        "x_max": (float, 20.0),
        "n_grid": (int, 1000),
        "temperature_check": (_bool, True),
    },
    "compare": {
        "alpha_stars": (_floats, (0.1, 0.05, 0.025)),
        "taus": (_floats, (0.25, 0.5, 1.0)),
        "x0": (float, 2.0),
        "n_chains": (int, 10_000),
        "n_paths": (int, 10_000),
        "dt": (float, 1e-4),
        "stationary_alpha_star": (float, 0.05),
        "stationary_chains": (int, 4000),
        "stationary_burn_in": (int, 500_000),
        "stationary_steps": (int, 250),
        "stationary_E0": (float, 2.0),
    },
}


@dataclass(frozen=True)
class RunConfig:
    model: ModelParams = field(default_factory=ModelParams)
    ensemble: EnsembleSpec = field(default_factory=EnsembleSpec)
    solver: SolverConfig = field(default_factory=SolverConfig)
    raw: dict = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.raw["run"]["seed"]

    @property
    def out(self) -> Path:
        return Path(self.raw["run"]["out"])

    @property
    def workers(self) -> int:
        return self.raw["run"]["workers"]

    def section(self, name: str) -> dict:
        return dict(self.raw[name])

    def with_run(self, **overrides) -> RunConfig:
        raw = {k: dict(v) for k, v in self.raw.items()}
        for k, v in overrides.items():
            if v is not None:
                raw["run"][k] = v
        return RunConfig(self.model, self.ensemble, self.solver, raw)

    def to_dict(self) -> dict:
        out = {}
        for sec, vals in self.raw.items():
            out[sec] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in vals.items()}
        return out


def _read_table(path: str) -> FormFactor:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    try:
        data = [(float(a), float(b)) for a, b in rows]
    except ValueError:
        data = [(float(a), float(b)) for a, b in rows[1:]]
    radii, values = zip(*data)
    return FormFactor.from_table(radii, values)


def _build(raw: dict) -> RunConfig:
    m = raw["model"]
    field_name = "model.form_factor"
    try:
        if m["form_factor"] == "custom-table":
            field_name = "model.form_factor_table"
            if not m["form_factor_table"]:
                raise ValueError("custom-table needs form_factor_table")
            ff = _read_table(m["form_factor_table"])
        else:
            ff = FormFactor(m["form_factor"])
        field_name = "model.potential"
        pot = ScattererPotential(m["potential"], m["potential_exponent"], m["potential_coefficient"])
        field_name = "model"
        model = ModelParams(alpha_star=m["alpha_star"], mass_ratio=m["mass_ratio"], ell_star=m["ell_star"],
                            dim=m["dim"], xi_plus=m["xi_plus"], form_factor=ff, potential=pot)
        field_name = "ensemble"
        e = raw["ensemble"]
        ens = EnsembleSpec(law=e["law"], energy=e["energy"], beta=e["beta"], cutoff=e["cutoff"], dim=m["dim"])
        field_name = "solver"
        solver = SolverConfig(**raw["solver"])
        field_name = "chain.mode"
        if raw["chain"]["mode"] not in ("truncated", "exact-ode"):
            raise ValueError(f"unknown chain mode {raw['chain']['mode']!r}")
        for sec, key in (("chain", "n_chains"), ("run", "workers"), ("sde", "n_paths"),
                         ("sde", "record_stride"), ("stationary", "n_grid"), ("collide", "n_collisions")):
            field_name = f"{sec}.{key}"
            if raw[sec][key] < 1:
                raise ValueError("must be >= 1")
        field_name = "run.seed"
        if raw["run"]["seed"] < 0:
            raise ValueError("must be >= 0")
    except (ValueError, OSError) as exc:
        raise ConfigError(f"{field_name}: {exc}") from exc
    return RunConfig(model, ens, solver, raw)


def parse_config(text: str = "") -> RunConfig:
    """Parse INI text; missing keys take their schema defaults."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    raw = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
    for sec, keys in SCHEMA.items():
        vals = {k: d for k, (_, d) in keys.items()}
        if cp.has_section(sec):
            for k, v in cp.items(sec):
                if k not in keys:
                    raise ConfigError(f"{sec}.{k}: unknown key")
                try:
                    vals[k] = keys[k][0](v)
                except ValueError as exc:
                    raise ConfigError(f"{sec}.{k}: {exc}") from exc
        raw[sec] = vals
    return _build(raw)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return parse_config("")
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
