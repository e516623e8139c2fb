"""basinscout: attractor discovery and basin-of-attraction mapping.

Trajectories launched from every cell of a state-space grid drive a small
finite state machine whose inputs are the codes stored in the cells the
trajectory visits. Recurring visits to freshly marked cells reveal a new
attractor; visits to already labeled cells let later runs finish early. The
result is a label per cell (the attractor it converges to, or -1 for
escape) plus the located attractor points themselves.
"""

from .analysis import (
    BenchmarkReport,
    FractionReport,
    basin_fractions,
    benchmark_compare,
    label_agreement,
    naive_basins_fixed_points,
)
from .engine import (
    AttractorStore,
    BasinsResult,
    basins_of_attraction,
    decode_basins,
    default_refine_eps,
    process_initial_condition,
    refine_with_attractors,
)
from .errors import (
    AutoDtFailed,
    BasinscoutError,
    ConfigurationError,
    ConsistencyError,
    DivergedNumerically,
)
from .fsm import RecurrenceParams, StateMachine
from .grid import Axis, CellStore, Decoded, Grid, code_of_attractor, code_of_basin, id_of_code
from .stepping import (
    PoincarePlane,
    StepperConfig,
    Stroboscopic,
    SystemDefinition,
    auto_dt,
    project,
    step,
)
from .systems import (
    CATALOG,
    Scenario,
    default_scenario,
    magnet_equilibria,
    make_system,
    system_names,
)

__version__ = "0.1.0"

__all__ = [
    "AttractorStore",
    "AutoDtFailed",
    "Axis",
    "BasinscoutError",
    "BasinsResult",
    "BenchmarkReport",
    "CATALOG",
    "CellStore",
    "ConfigurationError",
    "ConsistencyError",
    "Decoded",
    "DivergedNumerically",
    "FractionReport",
    "Grid",
    "PoincarePlane",
    "RecurrenceParams",
    "Scenario",
    "StateMachine",
    "StepperConfig",
    "Stroboscopic",
    "SystemDefinition",
    "auto_dt",
    "basin_fractions",
    "basins_of_attraction",
    "benchmark_compare",
    "code_of_attractor",
    "code_of_basin",
    "decode_basins",
    "default_refine_eps",
    "default_scenario",
    "id_of_code",
    "label_agreement",
    "magnet_equilibria",
    "make_system",
    "naive_basins_fixed_points",
    "process_initial_condition",
    "project",
    "refine_with_attractors",
    "step",
    "system_names",
]
