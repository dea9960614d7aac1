"""Network layers: 2-D convolution, max-pooling, dense and tanh.

These are the only layer kinds the agent architectures use.  Convolutions
have stride 1 and same-size zero padding (output spatial dims equal input
spatial dims); pooling is non-overlapping with output dims
``floor(input / pool)`` per axis.

Image activations are channels-last ``(batch, height, width, channels)``.
Convolution is evaluated as one im2col matrix multiply per layer so nearly
all arithmetic lands in BLAS; the backward pass reuses the cached patch
matrix for the weight gradient and scatters the input gradient with a
small shifted-slice loop.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .tensor import ShapeError, Tensor

__all__ = [
    "LayerSpec",
    "conv2d",
    "maxpool2d",
    "dense",
    "forward_layer",
    "init_layer",
    "layer_output_shape",
    "Network",
]

LAYER_KINDS = ("conv2d", "maxpool2d", "dense", "tanh")


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a network stack.

    kind: "conv2d" | "maxpool2d" | "dense" | "tanh"
    units: output channels (conv2d) or output units (dense)
    kernel: (h, w) kernel size (conv2d) or pool size (maxpool2d)
    """

    kind: str
    units: int = 0
    kernel: tuple[int, int] = (1, 1)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ShapeError(f"unknown layer kind {self.kind!r}, expected one of {LAYER_KINDS}")
        if self.kind in ("conv2d", "dense") and self.units < 1:
            raise ShapeError(f"{self.kind} layer needs units >= 1, got {self.units}")
        if self.kind in ("conv2d", "maxpool2d") and min(self.kernel) < 1:
            raise ShapeError(f"{self.kind} layer needs a positive kernel, got {self.kernel}")


def _as_batched_images(x: Tensor, op: str) -> tuple[Tensor, bool]:
    if x.ndim == 3:
        return x.reshape((1,) + x.shape), True
    if x.ndim == 4:
        return x, False
    raise ShapeError(
        f"{op}: expected (H, W, C) or (B, H, W, C) input, got shape {x.shape}"
    )


def _im2col(arr: np.ndarray, kh: int, kw: int, pt: int, pb: int, pl: int, pr: int) -> np.ndarray:
    """Patch matrix (B*H*W, kh*kw*C) of the zero-padded input."""
    b, h, w, c = arr.shape
    pad = np.pad(arr, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    sb, sh, sw, sc = pad.strides
    windows = np.lib.stride_tricks.as_strided(
        pad,
        shape=(b, h, w, kh, kw, c),
        strides=(sb, sh, sw, sh, sw, sc),
        writeable=False,
    )
    return windows.reshape(b * h * w, kh * kw * c)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Same-padded stride-1 convolution.

    x: (B, H, W, Cin) or (H, W, Cin); weight: (kh, kw, Cin, Cout); bias: (Cout,).
    Output spatial dims equal input spatial dims.
    """
    x4, squeeze = _as_batched_images(x, "conv2d")
    b, h, w, cin = x4.shape
    kh, kw, wcin, cout = weight.shape
    if wcin != cin:
        raise ShapeError(
            f"conv2d: input shape {x.shape} has {cin} channels but kernel "
            f"{weight.shape} expects {wcin}"
        )
    pt, pl = (kh - 1) // 2, (kw - 1) // 2
    pb, pr = kh - 1 - pt, kw - 1 - pl

    xd = x4.data
    if kh == 1 and kw == 1:
        col = xd.reshape(b * h * w, cin)
    else:
        col = _im2col(xd, kh, kw, pt, pb, pl, pr)
    wmat = weight.data.reshape(kh * kw * cin, cout)
    out = col @ wmat
    out += bias.data
    out = out.reshape(b, h, w, cout)

    def vjp(g):
        gmat = g.reshape(b * h * w, cout)
        gw = (col.T @ gmat).reshape(weight.shape)
        gb = gmat.sum(axis=0)
        if kh == 1 and kw == 1:
            gx = (gmat @ wmat.T).reshape(b, h, w, cin)
        else:
            # Input gradient as a correlation of the output gradient with the
            # flipped kernel: one im2col + one GEMM, no scatter loop.
            wflip = weight.data[::-1, ::-1].transpose(0, 1, 3, 2)
            gcol = _im2col(g.reshape(b, h, w, cout), kh, kw, kh - 1 - pt, pt, kw - 1 - pl, pl)
            gx = (gcol @ wflip.reshape(kh * kw * cout, cin)).reshape(b, h, w, cin)
        if squeeze:
            gx = gx.reshape(h, w, cin)
        return (gx, gw, gb)

    res = Tensor._from_op(out, (x, weight, bias), vjp)
    return res.reshape(h, w, cout) if squeeze else res


def maxpool2d(x: Tensor, pool: tuple[int, int]) -> Tensor:
    """Non-overlapping max pooling; output dims are floor(input / pool).

    Gradient routes to the first maximal element of each window (row-major),
    which keeps the backward pass deterministic under ties.
    """
    x4, squeeze = _as_batched_images(x, "maxpool2d")
    ph, pw = pool
    b, h, w, c = x4.shape
    ho, wo = h // ph, w // pw
    if ho < 1 or wo < 1:
        raise ShapeError(f"maxpool2d: input {x.shape} smaller than pool {pool}")
    xd = x4.data
    # Window maxima as an elementwise max over the p*p strided sub-grids;
    # this stays on quarter-size contiguous-ish arrays instead of gathering
    # windows.
    out = xd[:, 0 : ho * ph : ph, 0 : wo * pw : pw, :].copy()
    for i in range(ph):
        for j in range(pw):
            if i == 0 and j == 0:
                continue
            np.maximum(out, xd[:, i : ho * ph : ph, j : wo * pw : pw, :], out=out)

    def vjp(g):
        # Route each window's gradient to its first maximal element in
        # row-major order (deterministic under ties).
        gx = np.zeros((b, h, w, c), dtype=g.dtype)
        taken = np.zeros(out.shape, dtype=bool)
        for i in range(ph):
            for j in range(pw):
                sub = xd[:, i : ho * ph : ph, j : wo * pw : pw, :]
                m = (sub == out) & ~taken
                taken |= m
                gx[:, i : ho * ph : ph, j : wo * pw : pw, :] = g * m
        if squeeze:
            gx = gx.reshape(h, w, c)
        return (gx,)

    res = Tensor._from_op(out, (x,), vjp)
    return res.reshape(ho, wo, c) if squeeze else res


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Fully connected layer; flattens any trailing dims of a batched input."""
    squeeze = x.ndim == 1
    if squeeze:
        x2 = x.reshape(1, x.shape[0])
    elif x.ndim == 2:
        x2 = x
    else:
        x2 = x.reshape(x.shape[0], -1)
    fin, fout = weight.shape
    if x2.shape[1] != fin:
        raise ShapeError(
            f"dense: input shape {x.shape} provides {x2.shape[1]} features but "
            f"weight {weight.shape} expects {fin}"
        )
    out = x2 @ weight + bias
    return out.reshape(fout) if squeeze else out


def layer_output_shape(spec: LayerSpec, in_shape: tuple[int, ...]) -> tuple[int, ...]:
    """Shape (without batch dim) produced by `spec` on `in_shape` input."""
    if spec.kind == "conv2d":
        if len(in_shape) != 3:
            raise ShapeError(f"conv2d expects (H, W, C) input, got {in_shape}")
        h, w, _ = in_shape
        return (h, w, spec.units)
    if spec.kind == "maxpool2d":
        if len(in_shape) != 3:
            raise ShapeError(f"maxpool2d expects (H, W, C) input, got {in_shape}")
        h, w, c = in_shape
        ph, pw = spec.kernel
        return (h // ph, w // pw, c)
    if spec.kind == "dense":
        return (spec.units,)
    return in_shape  # tanh


def init_layer(
    spec: LayerSpec,
    in_shape: tuple[int, ...],
    rng: np.random.Generator,
    dtype=np.float32,
) -> dict[str, Tensor]:
    """Fan-in scaled uniform initialization; biases start at zero."""
    if spec.kind == "conv2d":
        kh, kw = spec.kernel
        cin = in_shape[-1]
        fan_in = kh * kw * cin
        limit = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-limit, limit, size=(kh, kw, cin, spec.units)).astype(dtype)
        b = np.zeros(spec.units, dtype=dtype)
        return {"weight": Tensor(w, requires_grad=True), "bias": Tensor(b, requires_grad=True)}
    if spec.kind == "dense":
        fan_in = int(np.prod(in_shape))
        limit = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-limit, limit, size=(fan_in, spec.units)).astype(dtype)
        b = np.zeros(spec.units, dtype=dtype)
        return {"weight": Tensor(w, requires_grad=True), "bias": Tensor(b, requires_grad=True)}
    return {}


def forward_layer(x: Tensor, spec: LayerSpec, params: dict[str, Tensor]) -> Tensor:
    """Apply one layer described by `spec` with its `params`."""
    if spec.kind == "conv2d":
        return conv2d(x, params["weight"], params["bias"])
    if spec.kind == "maxpool2d":
        return maxpool2d(x, spec.kernel)
    if spec.kind == "dense":
        return dense(x, params["weight"], params["bias"])
    if spec.kind == "tanh":
        return x.tanh()
    raise ShapeError(f"unknown layer kind {spec.kind!r}")


class Network:
    """A sequential stack of layers with named parameters.

    The constructor materializes parameters for every layer given the
    (batch-free) input shape.  Calling the network applies the layers in
    order; a multi-dimensional activation is flattened automatically when it
    reaches a dense layer.
    """

    def __init__(
        self,
        name: str,
        specs: list[LayerSpec],
        in_shape: tuple[int, ...],
        rng: np.random.Generator,
        dtype=np.float32,
    ):
        self.name = name
        self.specs = list(specs)
        self.in_shape = tuple(in_shape)
        self.params: list[dict[str, Tensor]] = []
        shape = tuple(in_shape)
        for spec in self.specs:
            if spec.kind == "dense" and len(shape) > 1:
                shape = (int(np.prod(shape)),)
            self.params.append(init_layer(spec, shape, rng, dtype))
            shape = layer_output_shape(spec, shape)
        self.out_shape = shape

    def __call__(self, x: Tensor) -> Tensor:
        for spec, params in zip(self.specs, self.params):
            x = forward_layer(x, spec, params)
        return x

    def parameters(self) -> list[Tensor]:
        return [p[k] for p in self.params for k in ("weight", "bias") if k in p]

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        for i, p in enumerate(self.params):
            for k in ("weight", "bias"):
                if k in p:
                    yield f"{self.name}.{i}.{k}", p[k]

    def set_trainable(self, trainable: bool) -> None:
        for p in self.parameters():
            p.requires_grad = trainable
            if not trainable:
                p.grad = None

    def copy_weights_from(self, other: "Network") -> None:
        """Overwrite this network's parameters with exact copies of `other`'s."""
        ours, theirs = self.parameters(), other.parameters()
        if len(ours) != len(theirs):
            raise ShapeError(
                f"cannot copy weights between networks with {len(theirs)} and "
                f"{len(ours)} parameter tensors"
            )
        for dst, src in zip(ours, theirs):
            np.copyto(dst.data, src.data)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None
