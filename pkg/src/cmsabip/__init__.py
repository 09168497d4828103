"""Generic construct-merge-solve-adapt solver for binary integer programs."""

from cmsabip.model import BipInstance, Row, Sense, Solution, evaluate, make_instance

__all__ = [
    "BipInstance",
    "Row",
    "Sense",
    "Solution",
    "evaluate",
    "make_instance",
]

__version__ = "0.1.0"
