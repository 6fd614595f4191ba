"""
Per-signal sampling: seed derivation, coefficient sampling specs, and the
retry wrapper that regenerates numerically unstable signals.
"""
from adapters.families.base import PdeFamily
from adapters.families.signal import GridSpec
import backoff
from dataclasses import dataclass, field
from datagen.gp import GpSpec, sample_initial_condition
from interfaces.errors import GenerationError, UnstableRolloutError
import itertools
import logging
import numpy as np
from solvers.explicit import check_stability, solve_explicit
from typing import Any, Dict, Tuple

MASK64 = (1 << 64) - 1
MAX_RETRIES = 50  # attempts per dataset slot


def splitmix64(x: int) -> int:
    """One SplitMix64 output for state x."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(global_seed: int, index: int, retry: int) -> int:
    """Seed of one generation attempt, independent of scheduling order."""
    h = splitmix64(int(global_seed) & MASK64)
    h = splitmix64(h ^ (int(index) & MASK64))
    return splitmix64(h ^ (int(retry) & MASK64))


def quantize(x):
    """Rounds to float32-representable float64 values (the storage precision)."""
    return np.asarray(x, dtype=np.float32).astype(np.float64)


@dataclass
class FamilySamplingSpec:
    """Coefficient distributions of one family, recorded in the dataset manifest."""

    family_id: str
    ranges: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    functions: Dict[str, str] = field(default_factory=dict)
    fixed: Dict[str, float] = field(default_factory=dict)

    @classmethod
    def for_family(cls, family: PdeFamily) -> "FamilySamplingSpec":
        fixed = dict()
        if family.family_id == "fn2d":
            fixed = {"a": family.diffusion_u, "b": family.diffusion_v}
        return cls(
            family_id=family.family_id,
            ranges={k: tuple(v) for k, v in family.ranges.items()},
            functions=dict(family.function_symbols),
            fixed=fixed,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "family_id": self.family_id,
            "ranges": {k: list(v) for k, v in self.ranges.items()},
            "functions": dict(self.functions),
            "fixed": dict(self.fixed),
        }


@dataclass
class GeneratedSignal:
    index: int
    fields: np.ndarray  # float32 [state, n_t + 1, *space]
    scalars: Dict[str, float]
    retries: int


def _log_retry(details: Dict[str, Any]) -> None:
    logging.info(
        f"Unstable signal (attempt {details['tries']}): {details['exception']}. Resampling."
    )


def generate_slot(
    family: PdeFamily, grid: GridSpec, gp: GpSpec, global_seed: int, index: int
) -> GeneratedSignal:
    """
    Generates dataset slot `index`: coefficients, GP initial condition and
    explicit rollout, resampling with a fresh derived seed while unstable.

    Coefficients and the initial condition are rounded to float32 before the
    rollout so a stored signal can be replayed bit-exactly from the stored
    initial slice and sidecar.

    Raises:
        GenerationError: MAX_RETRIES attempts were all unstable
    """
    attempts = itertools.count()
    n_fields = family.state_arity

    @backoff.on_exception(
        backoff.constant,
        UnstableRolloutError,
        max_tries=MAX_RETRIES,
        interval=0,
        jitter=None,
        on_backoff=_log_retry,
    )
    def _attempt() -> GeneratedSignal:
        retry = next(attempts)
        rng = np.random.default_rng(derive_seed(global_seed, index, retry))
        scalars = {k: float(quantize(v)) for k, v in family.sample_coefficients(rng).items()}
        ic_seed = int(rng.integers(0, 2**63 - 1))
        init = quantize(sample_initial_condition(gp, grid, ic_seed, n_fields=n_fields))
        signal = solve_explicit(family, family.true_estimate(scalars), init, grid, grid.n_t)
        report = check_stability(signal, family.blowup_threshold)
        if not report.ok:
            raise UnstableRolloutError(f"Unstable entry at {report.index}", step=report.step)
        return GeneratedSignal(index, signal.fields.astype(np.float32), scalars, retry)

    try:
        return _attempt()
    except UnstableRolloutError as e:
        raise GenerationError(
            f"Slot {index} of {family.family_id} stayed unstable after {MAX_RETRIES} attempts "
            f"(seed {global_seed}, last failure at step {e.step})"
        )
