"""
Network layers built on `autodiff.tensor`: dense MLPs with ReLU hidden
activations, an MLP conditioned on a per-sample context vector, and 2-D
convolution / deconvolution layers.

Every layer exposes `named_parameters()` in a fixed declaration order, which
is the order used by checkpoints.
"""
from autodiff.tensor import Tensor, conv2d, conv_transpose2d
from dataclasses import dataclass
from interfaces.errors import ShapeError
import numpy as np
from typing import List, Sequence, Tuple

NamedParameters = List[Tuple[str, Tensor]]


@dataclass(frozen=True)
class MlpSpec:
    """
    Layer widths of an MLP, input first. Hidden layers use ReLU, the output
    layer is linear.
    """

    widths: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 2:
            raise ShapeError(f"MLP needs input and output widths, got {self.widths}")
        if any(w <= 0 for w in self.widths):
            raise ShapeError(f"MLP widths must be positive, got {self.widths}")

    @classmethod
    def uniform(cls, n_in: int, hidden: int, n_hidden: int, n_out: int) -> "MlpSpec":
        return cls((n_in,) + (hidden,) * n_hidden + (n_out,))

    @property
    def n_in(self) -> int:
        return self.widths[0]

    @property
    def n_out(self) -> int:
        return self.widths[-1]


def kaiming_uniform(rng: np.random.Generator, fan_in: int, shape: Tuple[int, ...]) -> Tensor:
    """Kaiming-uniform init for ReLU layers: U(-sqrt(6/fan_in), sqrt(6/fan_in))."""
    bound = np.sqrt(6.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def init_mlp_params(spec: MlpSpec, rng: np.random.Generator) -> List[Tensor]:
    """Weights and biases [W0, b0, W1, b1, ...] for `spec`."""
    params = list()
    for n_in, n_out in zip(spec.widths[:-1], spec.widths[1:]):
        params.append(kaiming_uniform(rng, n_in, (n_in, n_out)))
        params.append(Tensor(np.zeros(n_out), requires_grad=True))
    return params


def forward_mlp(spec: MlpSpec, params: Sequence[Tensor], x: Tensor) -> Tensor:
    """
    Applies the MLP described by `spec` to the last axis of `x`.

    Args:
        spec: layer widths
        params: [W0, b0, W1, b1, ...] with Wi shaped [widths[i], widths[i+1]]
        x: tensor with last dimension spec.n_in (any leading dims)

    Returns:
        y: tensor with last dimension spec.n_out

    Raises:
        ShapeError: input width or parameter count does not match the MlpSpec
    """
    if x.shape[-1] != spec.n_in:
        raise ShapeError(f"MLP expects input width {spec.n_in}, got shape {x.shape}")
    n_layers = len(spec.widths) - 1
    if len(params) != 2 * n_layers:
        raise ShapeError(f"MLP with {n_layers} layers needs {2 * n_layers} params, got {len(params)}")
    h = x
    for i in range(n_layers):
        h = h @ params[2 * i] + params[2 * i + 1]
        if i < n_layers - 1:
            h = h.relu()
    return h


class Mlp:
    def __init__(self, spec: MlpSpec, rng: np.random.Generator) -> None:
        self.spec = spec
        self.params = init_mlp_params(spec, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return forward_mlp(self.spec, self.params, x)

    def named_parameters(self, prefix: str = "") -> NamedParameters:
        names = list()
        for i in range(len(self.spec.widths) - 1):
            names += [f"{prefix}layer{i}.weight", f"{prefix}layer{i}.bias"]
        return list(zip(names, self.params))


class ConditionedMlp(Mlp):
    """
    MLP applied pointwise to features that share a per-sample context vector.

    Equivalent to running an ordinary MLP on `concat(context, point)` for every
    point, but the context half of the first layer is applied once per sample
    and broadcast over points.
    """

    def __init__(self, spec: MlpSpec, n_context: int, rng: np.random.Generator) -> None:
        if not 0 < n_context < spec.n_in:
            raise ShapeError(f"context width {n_context} must be inside input width {spec.n_in}")
        super().__init__(spec, rng)
        self.n_context = n_context

    def __call__(self, context: Tensor, points: Tensor) -> Tensor:
        """
        Args:
            context: [B, n_context]
            points: [B, ..., n_in - n_context]

        Returns:
            [B, ..., n_out]
        """
        n_point = self.spec.n_in - self.n_context
        if context.ndim != 2 or context.shape[1] != self.n_context:
            raise ShapeError(f"context must be [B, {self.n_context}], got {context.shape}")
        if points.shape[-1] != n_point or points.shape[0] != context.shape[0]:
            raise ShapeError(f"points must be [{context.shape[0]}, ..., {n_point}], got {points.shape}")
        w0, b0 = self.params[0], self.params[1]
        from_context = context @ w0[: self.n_context]
        broadcast_shape = (context.shape[0],) + (1,) * (points.ndim - 2) + (from_context.shape[-1],)
        h = points @ w0[self.n_context :] + from_context.reshape(broadcast_shape) + b0
        rest = MlpSpec(self.spec.widths[1:]) if len(self.spec.widths) > 2 else None
        if rest is None:
            return h
        return forward_mlp(rest, self.params[2:], h.relu())


class Conv2d:
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int = 0,
    ) -> None:
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = kaiming_uniform(rng, fan_in, (out_channels, in_channels, kernel_size, kernel_size))
        self.bias = Tensor(np.zeros(out_channels), requires_grad=True)
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)

    def named_parameters(self, prefix: str = "") -> NamedParameters:
        return [(f"{prefix}weight", self.weight), (f"{prefix}bias", self.bias)]


class ConvTranspose2d:
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int = 0,
        output_padding: int = 0,
    ) -> None:
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = kaiming_uniform(rng, fan_in, (in_channels, out_channels, kernel_size, kernel_size))
        self.bias = Tensor(np.zeros(out_channels), requires_grad=True)
        self.stride = stride
        self.padding = padding
        self.output_padding = output_padding

    def __call__(self, x: Tensor) -> Tensor:
        return conv_transpose2d(
            x,
            self.weight,
            self.bias,
            stride=self.stride,
            padding=self.padding,
            output_padding=self.output_padding,
        )

    def named_parameters(self, prefix: str = "") -> NamedParameters:
        return [(f"{prefix}weight", self.weight), (f"{prefix}bias", self.bias)]
