"""
CONFIDE-0, the zero-knowledge variant: instead of coefficients of a known
operator, a network m_theta(u, z) predicts the time derivative of a whole
state slice and the rollout integrates it with forward Euler.
"""
from adapters.families.base import PdeFamily
from adapters.families.signal import GridSpec, Patch, Signal
from adapters.families.util import forward_time
from autodiff.layers import ConditionedMlp, MlpSpec, NamedParameters
from autodiff.tensor import Tensor, lift
from interfaces.errors import ConfigError, ShapeError, UnstableRolloutError
import logging
from models.confide import LossParts, VARIANTS, batch_fields, rollout_steps
from models.networks import IcAwareDecoder, NetworkConfig, PatchEncoder
import numpy as np
from typing import Any, Dict, List, Optional


class Confide0Model:
    kind = "confide0"

    def __init__(
        self,
        family: PdeFamily,
        grid: GridSpec,
        n_ctx: int,
        network: Optional[NetworkConfig] = None,
        variant: str = "confide",
        seed: int = 0,
    ) -> None:
        if variant not in VARIANTS:
            raise ConfigError(f"Unknown variant {variant!r}; expected one of {VARIANTS}")
        family.check_grid(grid)
        self.family = family
        self.grid = grid
        self.n_ctx = n_ctx
        self.network = network or NetworkConfig()
        self.variant = variant
        self.seed = seed
        rng = np.random.default_rng(seed)
        shape = grid.spatial_shape
        self.slice_shape = (family.state_arity,) + shape
        self.slice_size = int(np.prod(self.slice_shape))
        self.encoder = PatchEncoder(family.state_arity, n_ctx, shape, self.network, rng)
        self.decoder = None
        if variant != "no-ae":
            ic_aware = variant == "confide"
            self.decoder = IcAwareDecoder(family.state_arity, n_ctx, shape, self.network, rng, ic_aware=ic_aware)
        d_z = self.network.d_z
        widths = MlpSpec.uniform(d_z + self.slice_size, self.network.ae_width, self.network.ae_hidden, self.slice_size)
        self.derivative = ConditionedMlp(widths, d_z, rng)

    def named_parameters(self) -> NamedParameters:
        out = self.encoder.named_parameters("encoder.")
        if self.decoder is not None:
            out += self.decoder.named_parameters("decoder.")
        return out + self.derivative.named_parameters("derivative.")

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def spec(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "family_id": self.family.family_id,
            "family_config": self.family.config(),
            "grid": self.grid.to_dict(),
            "n_ctx": self.n_ctx,
            "network": self.network.to_dict(),
            "variant": self.variant,
            "seed": self.seed,
        }

    def encode_fields(self, fields: np.ndarray) -> Tensor:
        return self.encoder(lift(fields))

    def time_derivative(self, z: Tensor, slices: np.ndarray) -> Tensor:
        """
        m_theta on state slices.

        Args:
            z: latent [B, d_z]
            slices: [B, T, state, *space]

        Returns:
            [B, T, state, *space]
        """
        batch, n_slices = slices.shape[:2]
        flat = lift(slices.reshape(batch, n_slices, self.slice_size))
        return self.derivative(z, flat).reshape(slices.shape)

    def losses(self, fields: np.ndarray, alpha: float, initial: Optional[np.ndarray] = None) -> LossParts:
        """alpha * L_AE + (1 - alpha) * mean((u_t - m_theta(u, z))^2) over the patch slices."""
        z = self.encode_fields(fields)
        time_axis = -(self.family.spatial_dims + 1)
        u_t = forward_time(fields, self.grid.dt, time_axis)
        # [B, state, T, *space] -> [B, T, state, *space]
        earlier = np.moveaxis(fields[:, :, :-1], 2, 1)
        predicted = self.time_derivative(z, earlier)
        diff = predicted - np.moveaxis(u_t, 2, 1)
        coef = (diff * diff).mean()
        if self.decoder is None:
            return LossParts(total=coef * (1.0 - alpha), ae=None, coef=coef)
        patch = Patch(self.grid, fields, initial=initial)
        recon = self.decoder(z, patch.initial_condition if self.decoder.ic_aware else None)
        rdiff = recon - fields
        ae = (rdiff * rdiff).mean()
        return LossParts(total=ae * alpha + coef * (1.0 - alpha), ae=ae, coef=coef)


def infer_confide0(model: Confide0Model, patch: Patch, n_steps: Optional[int] = None) -> Signal:
    """
    Rolls u[j+1] = u[j] + dt * m_theta(u[j], z) forward from the context's
    last slice, applying the family's boundary rule after every step.

    Raises:
        UnstableRolloutError: non-finite values or blowup; carries the partial prediction
    """
    fields = batch_fields(model, patch)
    z = model.encode_fields(fields).detach()
    n_steps = rollout_steps(model, patch) if n_steps is None else n_steps
    if n_steps < 1:
        raise ShapeError(f"A rollout needs at least one step, got n_steps={n_steps}")
    family = model.family
    current = np.asarray(patch.last_slice, dtype=np.float64)
    slices = np.empty((n_steps + 1,) + model.slice_shape)
    slices[0] = current
    for j in range(1, n_steps + 1):
        rate = model.time_derivative(z, current[None, None]).data[0, 0]
        rhs = [family.restrict(rate[i]) for i in range(family.state_arity)]
        with np.errstate(over="ignore", invalid="ignore"):
            current = family.apply_update(current, rhs, model.grid.dt)
        slices[j] = current
        if not np.all(np.isfinite(current)) or np.max(np.abs(current)) > family.blowup_threshold:
            logging.debug(f"CONFIDE-0 rollout became unstable at step {j}")
            partial = Signal(model.grid.with_n_t(j), np.moveaxis(slices[: j + 1], 0, 1).copy())
            raise UnstableRolloutError(f"CONFIDE-0 rollout unstable at step {j}", step=j, partial=partial)
    return Signal(model.grid.with_n_t(n_steps), np.moveaxis(slices, 0, 1).copy())
