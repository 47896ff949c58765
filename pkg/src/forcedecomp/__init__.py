"""Net force decomposition of interaction forces in multi-agent co-manipulation.

Modules:
- geometry: parallel/perpendicular split, angle categories, gravity reduction
- netforce: net wrench estimation, differentiation, filtering
- tension: tension / compression / cooperation measure
- stats: category tables, angle densities, histograms
- sim: deterministic planar multi-agent simulator
- dataio: trial JSONL format, CSV/JSON export
- cli: ``forcedecomp simulate`` and ``forcedecomp report``
"""

__version__ = "0.1.0"

from .geometry import (  # noqa: E402
    CartesianVector,
    Category,
    CategoryBands,
    DecompositionSample,
    PlanarMask,
    Unit,
    WrenchSample,
    angle_between,
    classify_category,
    decompose_arrays,
    decompose_force,
    decompose_torque,
    planar_reduce,
)
from .netforce import (  # noqa: E402
    FilterConfig,
    NetForceEstimate,
    NetSource,
    differentiate,
    estimate_net,
    lowpass,
    net_series,
    signed_accel,
)
from .tension import OperandMode, TensionState, classify_tension_series, tension_value  # noqa: E402
from .stats import (  # noqa: E402
    CategoryStatsTable,
    HistogramSpec,
    category_stats,
    circular_density,
    magnitude_histogram,
)
from .dataio import TrialRecord, parse_trial, read_trial, write_trial, export_csv, export_json  # noqa: E402
from .sim import SimScenario, AgentSpec, run_scenario  # noqa: E402

__all__ = [
    "CartesianVector", "Category", "CategoryBands", "DecompositionSample", "PlanarMask",
    "Unit", "WrenchSample", "angle_between", "classify_category", "decompose_arrays",
    "decompose_force", "decompose_torque", "planar_reduce",
    "FilterConfig", "NetForceEstimate", "NetSource", "differentiate", "estimate_net",
    "lowpass", "net_series", "signed_accel",
    "OperandMode", "TensionState", "classify_tension_series", "tension_value",
    "CategoryStatsTable", "HistogramSpec", "category_stats", "circular_density",
    "magnitude_histogram",
    "TrialRecord", "parse_trial", "read_trial", "write_trial", "export_csv", "export_json",
    "SimScenario", "AgentSpec", "run_scenario",
]
