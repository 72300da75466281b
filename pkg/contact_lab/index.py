
import copy
import dataclasses
import importlib.resources
import json

from . errors import ConfigError

@dataclasses.dataclass
class Scenario:
    name: str
    description: str
    defaults: dict
    outputs: list

def _load(name):

    files = importlib.resources.files(__package__)
    path = files.joinpath("resources").joinpath(name)

    with path.open() as f:
        return json.load(f)

class Index:

    @staticmethod
    def get_scenarios():

        ix = _load("index.json")

        return [
            Scenario(
                name = v["name"],
                description = v["description"],
                defaults = v["defaults"],
                outputs = v.get("outputs", []),
            )
            for v in ix["scenarios"]
        ]

    @staticmethod
    def get_names():
        return [v.name for v in Index.get_scenarios()]

    @staticmethod
    def get_scenario(name):

        for v in Index.get_scenarios():
            if v.name == name:
                return v

        raise ConfigError(
            f"Scenario {name} not known, expected one of: "
            f"{', '.join(Index.get_names())}"
        )

    @staticmethod
    def get_schema():
        return _load("config.schema.json")

    @staticmethod
    def scenario_schema(name):
        """The knob schema restricted to the knobs the scenario declares."""

        scenario = Index.get_scenario(name)
        schema = Index.get_schema()

        properties = {
            k: copy.deepcopy(schema["properties"][k])
            for k in scenario.defaults
        }

        return {
            "$schema": schema["$schema"],
            "title": f"{name} knobs",
            "type": "object",
            "properties": properties,
            "additionalProperties": False,
        }
