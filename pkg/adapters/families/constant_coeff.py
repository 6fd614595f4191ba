"""
Second-order PDE with constant coefficients:

    u_t = a u_xx + b u_x + c,   u(0) = u(L) = 0

with (a, b, c) drawn per signal.
"""
from adapters.families.base import Derivatives, DirichletFamily1D
from adapters.families.signal import CoefficientEstimate, CoefficientSpec, Value
import numpy as np
from typing import Dict, Tuple


class ConstantCoeffFamily(DirichletFamily1D):
    family_id = "constant"
    coefficients = (CoefficientSpec("a"), CoefficientSpec("b"), CoefficientSpec("c"))
    # Sampling ranges per coefficient
    ranges = {"a": (0.0, 2.0), "b": (-1.0, 1.0), "c": (-1.0, 1.0)}

    def sample_coefficients(self, rng: np.random.Generator) -> Dict[str, float]:
        return {name: float(rng.uniform(lo, hi)) for name, (lo, hi) in self.ranges.items()}

    def rhs_eval(
        self, est: CoefficientEstimate, state: Dict[str, np.ndarray], derivs: Derivatives
    ) -> Tuple[Value, ...]:
        a, b, c = est.scalar("a"), est.scalar("b"), est.scalar("c")
        return (a * derivs["u_xx"] + b * derivs["u_x"] + c,)
