"""Integer-dimension Hausdorff measures built from chart volume elements,
with numerical checks of the area and coarea formulas."""

from .expr import Expression, evaluate, evaluate_dual, parse
from .geometry import Chart, ParamBox, gram_volume_element, jacobian, unit_ball_volume

__all__ = [
    "Chart",
    "Expression",
    "ParamBox",
    "evaluate",
    "evaluate_dual",
    "gram_volume_element",
    "jacobian",
    "parse",
    "unit_ball_volume",
]
