"""
CONFIDE: context encoder + initial-conditions aware decoder + coefficient
estimator, trained against the finite-difference functional residual.

Inference (`infer`) estimates the coefficients of an unseen signal from its
context prefix and rolls the family's explicit scheme forward from the last
observed slice.
"""
from adapters.families.base import PdeFamily
from adapters.families.signal import CoefficientEstimate, GridSpec, Patch, Signal
from autodiff.layers import NamedParameters
from autodiff.tensor import Tensor, lift
from dataclasses import dataclass
from interfaces.errors import ConfigError, FamilyError, ShapeError
from models.networks import CoefficientEstimator, IcAwareDecoder, NetworkConfig, PatchEncoder
import numpy as np
from solvers.explicit import solve_explicit
from typing import Any, Dict, List, Optional

VARIANTS = ("confide", "ae-ic", "no-ae")
HEAD_MODES = ("state", "grid")


@dataclass
class LossParts:
    """Combined loss alpha * ae + (1 - alpha) * coef and its two terms."""

    total: Tensor
    ae: Optional[Tensor]
    coef: Tensor

    def values(self) -> Dict[str, float]:
        return {
            "loss": self.total.item(),
            "loss_ae": self.ae.item() if self.ae is not None else 0.0,
            "loss_coef": self.coef.item(),
        }


@dataclass
class InferenceResult:
    """Algorithm output: the coefficient estimate and the predicted future."""

    estimate: CoefficientEstimate
    prediction: Signal


def batch_fields(model, patch: Patch) -> np.ndarray:
    """Patch fields as a float64 batch [B, state, n_ctx, *space], validated against the model."""
    if patch.grid.dims != model.family.spatial_dims:
        raise FamilyError(f"{model.family.family_id!r} model got a {patch.grid.dims}-D patch")
    fields = np.asarray(patch.fields, dtype=np.float64)
    single = (model.family.state_arity, model.n_ctx) + model.grid.spatial_shape
    if fields.shape == single:
        fields = fields[None]
    if fields.shape[1:] != single:
        raise ShapeError(f"Model trained on patches shaped {single}, got {patch.fields.shape}")
    return fields


class ConfideModel:
    """
    Encoder g_phi, decoder f_theta (absent for the No-AE variant) and
    estimator h_omega bound to one PDE family, grid and context length.
    """

    kind = "confide"

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
        self.encoder = PatchEncoder(family.state_arity, n_ctx, shape, self.network, rng)
        self.decoder = None
        if variant != "no-ae":
            ic_aware = variant == "confide"
            self.decoder = IcAwareDecoder(family.state_arity, n_ctx, shape, self.network, rng, ic_aware=ic_aware)
        self.estimator = CoefficientEstimator(family, self.network, rng)

    def named_parameters(self) -> NamedParameters:
        out = self.encoder.named_parameters("encoder.")
        if self.decoder is not None:
            out += self.decoder.named_parameters("decoder.")
        return out + self.estimator.named_parameters("estimator.")

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def spec(self) -> Dict[str, Any]:
        """Everything needed to rebuild the architecture; stored in checkpoint headers."""
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

    def losses(self, fields: np.ndarray, alpha: float, initial: Optional[np.ndarray] = None) -> LossParts:
        """
        Training losses of a patch batch.

        L_AE is the mean squared reconstruction error and L_coef the mean
        squared functional residual, so alpha balances two per-entry means.

        Args:
            fields: patch batch [B, state, n_ctx, *space]
            alpha: autoencoder loss weight
            initial: t=0 slice of every patch's signal [B, state, *space];
                defaults to the patches' first slices
        """
        z = self.encode_fields(fields)
        patch = Patch(self.grid, fields, initial=initial)
        est = self.estimator(z, self.family.spatial_dims)
        coef = self.family.residual(est, patch)
        if self.decoder is None:
            return LossParts(total=coef * (1.0 - alpha), ae=None, coef=coef)
        recon = self.decoder(z, patch.initial_condition if self.decoder.ic_aware else None)
        diff = recon - fields
        ae = (diff * diff).mean()
        return LossParts(total=ae * alpha + coef * (1.0 - alpha), ae=ae, coef=coef)


def encode(model: ConfideModel, patch: Patch) -> np.ndarray:
    """
    Latent of a patch: [d_z] for a single patch, [B, d_z] for a batch.

    Raises:
        ShapeError: patch shape differs from the trained configuration
    """
    fields = batch_fields(model, patch)
    z = model.encode_fields(fields).data
    return z[0] if patch.fields.ndim == fields.ndim - 1 else z


def reconstruct(model: ConfideModel, patch: Patch):
    """
    Decoder output f_theta(g_phi(u^c) (+) u(t=0)) and its mean squared error.

    Returns:
        reconstruction: array shaped like the patch fields
        loss_ae: mean squared reconstruction error
    """
    if model.decoder is None:
        raise ConfigError("The No-AE variant has no decoder to reconstruct with")
    fields = batch_fields(model, patch)
    z = model.encode_fields(fields)
    ic = None
    if model.decoder.ic_aware:
        ic = np.asarray(patch.initial_condition, dtype=np.float64)
        ic = ic[None] if ic.ndim == fields.ndim - 2 else ic
    recon = model.decoder(z, ic).data
    loss_ae = float(np.mean((recon - fields) ** 2))
    if patch.fields.ndim == fields.ndim - 1:
        recon = recon[0]
    return recon, loss_ae


def estimate(model: ConfideModel, patch: Patch) -> CoefficientEstimate:
    """
    Coefficient estimate p = h_omega(g_phi(u^c)) of a single patch, with float
    scalars and numpy-valued coefficient-function heads.
    """
    fields = batch_fields(model, patch)
    if fields.shape[0] != 1:
        raise ShapeError(f"estimate takes one patch, got a batch of {fields.shape[0]}")
    z = model.encode_fields(fields).detach()
    values = model.estimator.scalars(z).data[0]
    scalars = {name: float(v) for name, v in zip(model.estimator.scalar_names, values)}
    heads = {name: _numpy_head(model.estimator, name, z) for name in model.estimator.heads}
    return CoefficientEstimate(model.family.family_id, scalars=scalars, heads=heads)


def _numpy_head(estimator: CoefficientEstimator, name: str, z: Tensor):
    def head(*args):
        shape = np.shape(args[0])
        flat = [np.asarray(a, dtype=np.float64).reshape(1, -1) for a in args]
        return estimator.head_values(name, z, flat).data.reshape(shape)

    return head


def rollout_steps(model, patch: Patch) -> int:
    """Steps from the patch's last slice to the end of the signal's horizon T."""
    offset = int(np.max(patch.offset)) if np.size(patch.offset) else 0
    return model.grid.n_t - (offset + model.n_ctx - 1)


def freeze_heads(family: PdeFamily, est: CoefficientEstimate, init: np.ndarray, grid: GridSpec) -> CoefficientEstimate:
    """
    Grid-mode estimate: every coefficient function is evaluated once on the
    states of `init` and held fixed per grid point for the whole rollout.
    """
    state, _ = family.spatial_derivatives(init, grid)
    heads = dict()
    for spec in family.head_specs:
        values = np.asarray(est.head(spec.name)(*[state[s] for s in spec.inputs]), dtype=np.float64)
        heads[spec.name] = lambda *args, values=values: values
    return CoefficientEstimate(est.family_id, scalars=dict(est.scalars), heads=heads, symbols=dict(est.symbols))


def infer(
    model: ConfideModel, patch: Patch, n_steps: Optional[int] = None, head_mode: str = "state"
) -> InferenceResult:
    """
    Estimates coefficients from a context prefix and predicts the rest of
    the signal.

    Args:
        model: trained model (not modified)
        patch: context u^c covering t in [0, t0]
        n_steps: rollout length; defaults to reaching the signal's horizon T
        head_mode: "state" evaluates coefficient functions on the current
            state every step; "grid" freezes them at the context's last slice

    Returns:
        result: estimate p and prediction u (slice 0 is the context's last slice)

    Raises:
        UnstableRolloutError: the rollout blew up; carries the partial prediction
    """
    if head_mode not in HEAD_MODES:
        raise ConfigError(f"Unknown head mode {head_mode!r}; expected one of {HEAD_MODES}")
    est = estimate(model, patch)
    n_steps = rollout_steps(model, patch) if n_steps is None else n_steps
    init = np.asarray(patch.last_slice, dtype=np.float64)
    rollout_est = freeze_heads(model.family, est, init, model.grid) if head_mode == "grid" else est
    prediction = solve_explicit(model.family, rollout_est, init, model.grid, n_steps)
    return InferenceResult(estimate=est, prediction=prediction)
