
__version__ = "0.1.0"

from . errors import ContactLabError, ConfigError
from . index import Index
from . config import ScenarioConfig, load_config
from . packager import Packager
from . report import Check, RunReport
from . scenarios import SCENARIOS, run_scenario
from . run import run_lab
from . list import list_scenarios
