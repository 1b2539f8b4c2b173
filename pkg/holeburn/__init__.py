from holeburn.models import (
    BurnReport,
    BurnResult,
    ClassPopulations,
    LevelStructure,
    PumpResult,
    PumpStep,
    Resonance,
    ResonanceTable,
    StageReport,
    make_class_grid,
)
from holeburn.pumping import (
    apply_pump_step,
    enumerate_resonances,
    pump,
    resonance_mask,
    select_class_fields,
    sister_classes,
    unresolved_classes,
)
from holeburn.sequence import (
    POPULATION_COLUMNS,
    profile_from_populations,
    read_populations_csv,
    run_burn_sequence,
    write_populations_csv,
)

__all__ = [
    "BurnReport",
    "BurnResult",
    "ClassPopulations",
    "LevelStructure",
    "POPULATION_COLUMNS",
    "PumpResult",
    "PumpStep",
    "Resonance",
    "ResonanceTable",
    "StageReport",
    "apply_pump_step",
    "enumerate_resonances",
    "make_class_grid",
    "profile_from_populations",
    "pump",
    "read_populations_csv",
    "resonance_mask",
    "run_burn_sequence",
    "select_class_fields",
    "sister_classes",
    "unresolved_classes",
    "write_populations_csv",
]
