from .area import (
    AreaResult,
    DisjointManifold,
    OverlapWarning,
    check_overlap,
    hausdorff_integrate,
    hausdorff_integrate_report,
)
from .inductive import (
    CellAlgebra,
    Check,
    DirectedSet,
    InductiveSystem,
    MeasureTable,
    UndefinedIntegralError,
    check_compatibility,
    check_directed,
    generalized_limit,
    integrate_table,
    restriction_theorem_check,
)
