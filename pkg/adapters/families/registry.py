"""
Lookup of PDE families by their identifier.
"""
from adapters.families.base import PdeFamily
from adapters.families.burgers import BurgersFamily
from adapters.families.constant_coeff import ConstantCoeffFamily
from adapters.families.fitzhugh_nagumo import FitzHughNagumoFamily
from interfaces.errors import FamilyError
from typing import Any, Dict

FAMILIES = {
    "constant": ConstantCoeffFamily,
    "burgers": BurgersFamily,
    "fn2d": FitzHughNagumoFamily,
}


def get_family(family_id: str, config: Dict[str, Any] = None) -> PdeFamily:
    """
    Instantiates a family.

    Args:
        family_id: one of FAMILIES
        config: family options as returned by `PdeFamily.config()`
    """
    try:
        cls = FAMILIES[family_id]
    except KeyError:
        raise FamilyError(f"Unknown family {family_id!r}; expected one of {sorted(FAMILIES)}")
    return cls(**(config or {}))
