"""
Scenario configuration: bundled defaults, then a flat YAML file of knobs,
then command-line overrides. The merged knobs are validated against the
scenario's schema before any numerical work.
"""

import dataclasses
import json
import logging
import os
import pathlib
from typing import Optional

import jsonschema
import yaml

from . errors import ConfigError
from . geometry import QuadratureConfig
from . hamiltonian import IntegratorConfig
from . index import Index

logger = logging.getLogger("config")
logger.setLevel(logging.INFO)

OUTPUT_ENV = "CONTACT_LAB_OUT"

@dataclasses.dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    knobs: dict
    out: pathlib.Path
    source: Optional[str] = None

    def __getitem__(self, key):
        return self.knobs[key]

    def get(self, key, default=None):
        return self.knobs.get(key, default)

    @property
    def seed(self):
        return self.knobs.get("seed", 0)

    @property
    def golden(self):
        return bool(self.knobs.get("golden", False))

    @property
    def n_jobs(self):
        return self.knobs.get("n_jobs", 1)

    def integrator(self, tight=False):
        """Fixed-step rk4 in golden mode, else adaptive."""
        if self.golden:
            return IntegratorConfig.golden()
        if tight:
            return IntegratorConfig.tight()
        return IntegratorConfig()

    def quadrature(self, points_per_axis):
        return QuadratureConfig(
            points_per_axis=points_per_axis, n_jobs=self.n_jobs,
        )

    def echo(self):
        return {"scenario": self.scenario, "source": self.source, **self.knobs}

def read_knobs(path):

    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"Could not read config {path}: {e}")

    if data is None:
        return {}

    if not isinstance(data, dict):
        raise ConfigError(f"Config {path} is not a flat mapping of knobs")

    return data

def validate(scenario, knobs):

    schema = Index.scenario_schema(scenario)

    try:
        jsonschema.validate(instance=knobs, schema=schema)
    except jsonschema.ValidationError as e:
        where = ".".join(str(p) for p in e.absolute_path) or "config"
        raise ConfigError(f"{where}: {e.message}", schema=schema)

    for lo, hi in (("u0", "u1"), ("z_lo", "z_hi")):
        if lo in knobs and hi in knobs and not knobs[lo] < knobs[hi]:
            raise ConfigError(
                f"{lo} = {knobs[lo]} must be below {hi} = {knobs[hi]}",
                schema=schema,
            )

def output_dir(scenario, out=None):
    if out:
        return pathlib.Path(out)
    if os.environ.get(OUTPUT_ENV):
        return pathlib.Path(os.environ[OUTPUT_ENV])
    return pathlib.Path("contact-lab-out") / scenario

def load_config(scenario, path=None, out=None, seed=None, golden=False):

    defaults = Index.get_scenario(scenario).defaults

    knobs = dict(defaults)

    if path is not None:
        knobs.update(read_knobs(path))

    if seed is not None and "seed" in defaults:
        knobs["seed"] = seed

    if golden and "golden" in defaults:
        knobs["golden"] = True

    if knobs.get("golden") and "n_jobs" in defaults:
        knobs["n_jobs"] = 1

    validate(scenario, knobs)

    logger.debug(f"Effective config: {json.dumps(knobs)}")

    return ScenarioConfig(
        scenario=scenario, knobs=knobs, out=output_dir(scenario, out),
        source=str(path) if path is not None else None,
    )
