"""
Networks of the CONFIDE models: patch encoder g_phi, initial-conditions
aware decoder f_theta and coefficient estimator h_omega.

1-D families flatten the whole patch into the MLPs. FN2D patches first go
through a per-slice convolution stack (mirrored by deconvolutions in the
decoder) so the MLPs see 32 x 8 x 8 feature maps instead of raw 32 x 32
fields.
"""
from adapters.families.base import PdeFamily
from adapters.families.signal import CoefficientEstimate
from autodiff.layers import Conv2d, ConditionedMlp, ConvTranspose2d, Mlp, MlpSpec, NamedParameters
from autodiff.tensor import Tensor, concat, lift
from dataclasses import asdict, dataclass, fields
from interfaces.errors import ConfigError, ShapeError
import numpy as np
from typing import Any, Dict, List, Optional, Sequence, Tuple


@dataclass
class NetworkConfig:
    """
    Widths of every network.

    Attributes:
        d_z: latent dimension
        ae_width / ae_hidden: encoder and decoder MLPs (hidden width, hidden layers)
        estimator_width / estimator_hidden: scalar-coefficient MLP
        head_width / head_hidden: pointwise coefficient-function MLPs
        conv_channels: per-slice conv stack channels (2-D families only)
        conv_kernel / conv_stride: conv geometry; padding is kernel // 2
    """

    d_z: int = 64
    ae_width: int = 256
    ae_hidden: int = 5
    estimator_width: int = 1024
    estimator_hidden: int = 5
    head_width: int = 64
    head_hidden: int = 2
    conv_channels: Tuple[int, ...] = (16, 32)
    conv_kernel: int = 3
    conv_stride: int = 2

    def __post_init__(self):
        self.conv_channels = tuple(int(c) for c in self.conv_channels)

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        return d

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "NetworkConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"Unknown network settings {sorted(unknown)}")
        return cls(**d)


def conv_shapes(spatial_shape: Tuple[int, int], config: NetworkConfig) -> List[Tuple[int, int]]:
    """Spatial shape before the conv stack and after each of its layers."""
    padding = config.conv_kernel // 2
    shapes = [tuple(spatial_shape)]
    for _ in config.conv_channels:
        shapes.append(
            tuple((size + 2 * padding - config.conv_kernel) // config.conv_stride + 1 for size in shapes[-1])
        )
    return shapes


class SliceConvStack:
    """Conv + ReLU layers applied to every time slice independently."""

    def __init__(self, in_channels: int, spatial_shape: Tuple[int, int], config: NetworkConfig, rng) -> None:
        padding = config.conv_kernel // 2
        self.shapes = conv_shapes(spatial_shape, config)
        self.layers: List[Conv2d] = list()
        channels = in_channels
        for out_channels in config.conv_channels:
            self.layers.append(
                Conv2d(channels, out_channels, config.conv_kernel, rng, stride=config.conv_stride, padding=padding)
            )
            channels = out_channels
        self.out_channels = channels

    @property
    def feature_size(self) -> int:
        h, w = self.shapes[-1]
        return self.out_channels * h * w

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x).relu()
        return x

    def named_parameters(self, prefix: str = "") -> NamedParameters:
        out = list()
        for i, layer in enumerate(self.layers):
            out += layer.named_parameters(f"{prefix}conv{i}.")
        return out


class SliceDeconvStack:
    """Mirror of a `SliceConvStack`, restoring its input shape exactly."""

    def __init__(self, out_channels: int, spatial_shape: Tuple[int, int], config: NetworkConfig, rng) -> None:
        padding = config.conv_kernel // 2
        shapes = conv_shapes(spatial_shape, config)[::-1]
        channels = list(config.conv_channels[::-1]) + [out_channels]
        self.layers: List[ConvTranspose2d] = list()
        for i, (c_in, c_out) in enumerate(zip(channels[:-1], channels[1:])):
            extra = [
                size_out - ((size_in - 1) * config.conv_stride - 2 * padding + config.conv_kernel)
                for size_in, size_out in zip(shapes[i], shapes[i + 1])
            ]
            if extra[0] != extra[1] or not 0 <= extra[0] < config.conv_stride:
                raise ShapeError(f"Cannot mirror the conv stack for spatial shape {tuple(spatial_shape)}")
            self.layers.append(
                ConvTranspose2d(
                    c_in,
                    c_out,
                    config.conv_kernel,
                    rng,
                    stride=config.conv_stride,
                    padding=padding,
                    output_padding=extra[0],
                )
            )
        self.in_shape = (config.conv_channels[-1],) + tuple(shapes[0])

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = x.relu()
        return x

    def named_parameters(self, prefix: str = "") -> NamedParameters:
        out = list()
        for i, layer in enumerate(self.layers):
            out += layer.named_parameters(f"{prefix}deconv{i}.")
        return out


class PatchEncoder:
    """
    g_phi: patch [B, state, n_ctx, *space] -> latent [B, d_z].
    """

    def __init__(
        self, state_arity: int, n_ctx: int, spatial_shape: Tuple[int, ...], config: NetworkConfig, rng
    ) -> None:
        self.state_arity = state_arity
        self.n_ctx = n_ctx
        self.spatial_shape = tuple(spatial_shape)
        self.conv = SliceConvStack(state_arity, self.spatial_shape, config, rng) if len(spatial_shape) == 2 else None
        per_slice = self.conv.feature_size if self.conv else state_arity * int(np.prod(spatial_shape))
        self.mlp = Mlp(MlpSpec.uniform(n_ctx * per_slice, config.ae_width, config.ae_hidden, config.d_z), rng)

    @property
    def input_shape(self) -> Tuple[int, ...]:
        return (self.state_arity, self.n_ctx) + self.spatial_shape

    def __call__(self, fields: Tensor) -> Tensor:
        if tuple(fields.shape[1:]) != self.input_shape:
            raise ShapeError(f"Encoder expects patches shaped [B, {self.input_shape}], got {fields.shape}")
        batch = fields.shape[0]
        if self.conv is None:
            return self.mlp(fields.reshape(batch, -1))
        # per-slice convs: [B, state, T, H, W] -> [B * T, state, H, W]
        slices = fields.transpose(0, 2, 1, 3, 4).reshape((batch * self.n_ctx, self.state_arity) + self.spatial_shape)
        features = self.conv(slices)
        return self.mlp(features.reshape(batch, -1))

    def named_parameters(self, prefix: str = "") -> NamedParameters:
        out = self.conv.named_parameters(f"{prefix}") if self.conv else list()
        return out + self.mlp.named_parameters(f"{prefix}mlp.")


class IcAwareDecoder:
    """
    f_theta: latent (+ initial-condition slice) -> patch reconstruction.

    With `ic_aware=False` the decoder sees the latent only (the AE-IC variant).
    """

    def __init__(
        self,
        state_arity: int,
        n_ctx: int,
        spatial_shape: Tuple[int, ...],
        config: NetworkConfig,
        rng,
        ic_aware: bool = True,
    ) -> None:
        self.state_arity = state_arity
        self.n_ctx = n_ctx
        self.spatial_shape = tuple(spatial_shape)
        self.ic_aware = ic_aware
        self.slice_size = state_arity * int(np.prod(spatial_shape))
        self.input_width = config.d_z + (self.slice_size if ic_aware else 0)
        if len(spatial_shape) == 2:
            self.deconv = SliceDeconvStack(state_arity, self.spatial_shape, config, rng)
            n_out = n_ctx * int(np.prod(self.deconv.in_shape))
        else:
            self.deconv = None
            n_out = n_ctx * self.slice_size
        self.mlp = Mlp(MlpSpec.uniform(self.input_width, config.ae_width, config.ae_hidden, n_out), rng)

    def __call__(self, z: Tensor, ic: Optional[np.ndarray] = None) -> Tensor:
        """
        Args:
            z: latent [B, d_z]
            ic: initial-condition slice [B, state, *space]; required iff ic_aware

        Returns:
            reconstruction [B, state, n_ctx, *space]
        """
        batch = z.shape[0]
        if self.ic_aware:
            if ic is None or ic.shape != (batch, self.state_arity) + self.spatial_shape:
                raise ShapeError(
                    f"IC-aware decoder needs an initial slice [B, {self.state_arity}, {self.spatial_shape}]"
                )
            h = concat([z, lift(np.asarray(ic).reshape(batch, -1))], axis=-1)
        else:
            h = z
        out = self.mlp(h)
        if self.deconv is None:
            return out.reshape((batch, self.state_arity, self.n_ctx) + self.spatial_shape)
        maps = self.deconv(out.reshape((batch * self.n_ctx,) + self.deconv.in_shape))
        maps = maps.reshape((batch, self.n_ctx, self.state_arity) + self.spatial_shape)
        return maps.transpose(0, 2, 1, 3, 4)

    def named_parameters(self, prefix: str = "") -> NamedParameters:
        out = self.mlp.named_parameters(f"{prefix}mlp.")
        return out + (self.deconv.named_parameters(prefix) if self.deconv else list())


class CoefficientEstimator:
    """
    h_omega: latent -> coefficient estimate.

    Scalar coefficients come from one MLP; every coefficient function gets a
    small MLP evaluated pointwise on (latent, state values).
    """

    def __init__(self, family: PdeFamily, config: NetworkConfig, rng) -> None:
        self.family = family
        self.scalar_names = list(family.scalar_names)
        self.scalar_mlp = Mlp(
            MlpSpec.uniform(config.d_z, config.estimator_width, config.estimator_hidden, len(self.scalar_names)),
            rng,
        )
        self.heads: Dict[str, ConditionedMlp] = dict()
        self.head_inputs: Dict[str, Tuple[str, ...]] = dict()
        for spec in family.head_specs:
            widths = MlpSpec.uniform(config.d_z + len(spec.inputs), config.head_width, config.head_hidden, 1)
            self.heads[spec.name] = ConditionedMlp(widths, config.d_z, rng)
            self.head_inputs[spec.name] = spec.inputs

    def scalars(self, z: Tensor) -> Tensor:
        """Scalar coefficients [B, n_scalars]."""
        return self.scalar_mlp(z)

    def head_values(self, name: str, z: Tensor, args: Sequence[np.ndarray]) -> Tensor:
        """Head `name` at the points given by `args` (each [B, ...]); returns [B, ...]."""
        shape = np.shape(args[0])
        points = lift(np.stack([np.asarray(a, dtype=np.float64) for a in args], axis=-1))
        return self.heads[name](z, points).reshape(shape)

    def __call__(self, z: Tensor, spatial_dims: int) -> CoefficientEstimate:
        """
        Batched, differentiable estimate: scalars shaped [B, 1, 1(, 1)] to
        broadcast against [B, time, *space] derivative stacks.
        """
        batch = z.shape[0]
        values = self.scalars(z)
        broadcast = (batch,) + (1,) * (spatial_dims + 1)
        scalars = {name: values[:, i].reshape(broadcast) for i, name in enumerate(self.scalar_names)}
        heads = {name: self._bind(name, z) for name in self.heads}
        return CoefficientEstimate(self.family.family_id, scalars=scalars, heads=heads)

    def _bind(self, name: str, z: Tensor):
        def head(*args):
            return self.head_values(name, z, args)

        return head

    def named_parameters(self, prefix: str = "") -> NamedParameters:
        out = self.scalar_mlp.named_parameters(f"{prefix}scalars.")
        for name, head in self.heads.items():
            out += head.named_parameters(f"{prefix}heads.{name}.")
        return out
