"""
Quasi-linear viscous Burgers' equation:

    u_t = a u_xx + b(u) u_x,   u(0) = u(L) = 0

The data uses b(u) = -u; models estimate b as a pointwise function of the
state so the estimate can be rolled forward through unseen states.
"""
from adapters.families.base import Derivatives, DirichletFamily1D
from adapters.families.signal import CoefficientEstimate, CoefficientSpec, Value
import numpy as np
from typing import Dict, Tuple


class BurgersFamily(DirichletFamily1D):
    family_id = "burgers"
    coefficients = (CoefficientSpec("a"), CoefficientSpec("b", kind="function", inputs=("u",)))
    function_symbols = {"b": "-u"}
    ranges = {"a": (1.0, 2.0)}

    def sample_coefficients(self, rng: np.random.Generator) -> Dict[str, float]:
        lo, hi = self.ranges["a"]
        return {"a": float(rng.uniform(lo, hi))}

    def rhs_eval(
        self, est: CoefficientEstimate, state: Dict[str, np.ndarray], derivs: Derivatives
    ) -> Tuple[Value, ...]:
        a = est.scalar("a")
        b_of_u = est.head("b")(state["u"])
        return (a * derivs["u_xx"] + b_of_u * derivs["u_x"],)
