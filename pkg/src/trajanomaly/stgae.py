"""Spatio-temporal graph auto-encoder.

Encoder: one spatial graph convolution (A V theta_s + b, PReLU) followed by one
temporal convolution over frames (kernel 3, PReLU), giving 5 latent features per
agent and frame. Decoder: five (3 x 1) convolutions over (frame x agent) mapping
the latent features to the 5 raw parameters of a bivariate Gaussian.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .graph import StGraphBatch

LATENT_DIM = 5
OUTPUT_DIM = 5
KERNEL_SIZE = 3
DECODER_LAYERS = 5
PRELU_INIT = 0.25
LOG_2PI = math.log(2.0 * math.pi)


def param_shapes(latent_dim: int = LATENT_DIM, output_dim: int = OUTPUT_DIM,
                 kernel_size: int = KERNEL_SIZE, decoder_layers: int = DECODER_LAYERS) -> dict[str, tuple]:
    shapes = {
        "spatial.w": (2, latent_dim),
        "spatial.b": (latent_dim,),
        "spatial.slope": (latent_dim,),
        "temporal.w": (kernel_size, latent_dim, latent_dim),
        "temporal.b": (latent_dim,),
        "temporal.slope": (latent_dim,),
    }
    width = latent_dim
    for k in range(decoder_layers):
        out = output_dim if k == decoder_layers - 1 else latent_dim
        shapes[f"dec{k}.w"] = (kernel_size, 1, width, out)
        shapes[f"dec{k}.b"] = (out,)
        if k < decoder_layers - 1:
            shapes[f"dec{k}.slope"] = (out,)
        width = out
    return shapes


class ModelParams:
    """Named trainable tensors of the auto-encoder."""

    def __init__(self, tensors: dict[str, Tensor]):
        self.tensors = tensors

    @classmethod
    def initialize(cls, seed: int = 0, **dims) -> "ModelParams":
        rng = np.random.default_rng(seed)
        tensors = {}
        shapes = param_shapes(**dims)
        for name, shape in shapes.items():
            if name.endswith(".slope"):
                data = np.full(shape, PRELU_INIT)
            elif name.endswith(".b"):
                # nonzero biases keep the first (all-zero) frame of a window off the PReLU kink
                fan_in = int(np.prod(shapes[name[:-2] + ".w"][:-1]))
                bound = math.sqrt(1.0 / fan_in)
                data = rng.uniform(-bound, bound, size=shape)
            else:
                # Kaiming-uniform; PReLU gain where a PReLU follows, unit gain on the output layer
                fan_in = int(np.prod(shape[:-1]))
                gain2 = 2.0 / (1.0 + PRELU_INIT ** 2) if name[:-2] + ".slope" in shapes else 1.0
                bound = math.sqrt(3.0 * gain2 / fan_in)
                data = rng.uniform(-bound, bound, size=shape)
            tensors[name] = Tensor(data, requires_grad=True, name=name)
        return cls(tensors)

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "ModelParams":
        return cls({k: Tensor(v, requires_grad=True, name=k) for k, v in arrays.items()})

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors.values())

    def __len__(self) -> int:
        return len(self.tensors)

    @property
    def n_decoder_layers(self) -> int:
        return sum(1 for k in self.tensors if k.startswith("dec") and k.endswith(".w"))

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.tensors.items()}

    def shapes(self) -> dict[str, tuple]:
        return {k: t.shape for k, t in self.tensors.items()}

    def copy(self) -> "ModelParams":
        return ModelParams.from_arrays(self.arrays())

    def n_values(self) -> int:
        return int(sum(t.data.size for t in self.tensors.values()))


@dataclass
class BivariateParams:
    mu: Tensor     # (..., 2)
    sigma: Tensor  # (..., 2), > 0
    rho: Tensor    # (...,), in (-1, 1)
    log_sigma: Tensor

    def numpy(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.mu.data, self.sigma.data, self.rho.data


def _as_batch(batch: StGraphBatch) -> tuple[Tensor, Tensor]:
    V, A = np.asarray(batch.V, dtype=np.float64), np.asarray(batch.A, dtype=np.float64)
    if V.ndim != 3 or V.shape[-1] != 2:
        raise dc.ShapeError(f"node features must be (T, N, 2), got {V.shape}")
    if A.shape != (V.shape[0], V.shape[1], V.shape[1]):
        raise dc.ShapeError(f"adjacency shape {A.shape} does not match node features {V.shape}")
    return Tensor(V), Tensor(A)


def _temporal_block(H: Tensor, params: ModelParams) -> Tensor:
    pad = params["temporal.w"].shape[0] // 2
    H = dc.conv1d(H, params["temporal.w"], params["temporal.b"], padding=pad)
    return dc.prelu(H, params["temporal.slope"])


def encode(batch: StGraphBatch, params: ModelParams) -> Tensor:
    """Latent features Z of shape (T', N, F_g)."""
    V, A = _as_batch(batch)
    H = dc.einsum("tnc,cf->tnf", dc.aggregate(A, V), params["spatial.w"]) + params["spatial.b"]
    H = dc.prelu(H, params["spatial.slope"])
    return _temporal_block(H, params)


def encode_without_interaction(V: np.ndarray, params: ModelParams) -> Tensor:
    """Interaction-free encoder path: no neighbour aggregation at all."""
    V = Tensor(np.asarray(V, dtype=np.float64))
    H = dc.einsum("tnc,cf->tnf", V, params["spatial.w"]) + params["spatial.b"]
    H = dc.prelu(H, params["spatial.slope"])
    return _temporal_block(H, params)


def decode(Z: Tensor, params: ModelParams) -> Tensor:
    """Raw decoder output of shape (T', N, F_f); length-preserving zero padding."""
    if Z.ndim != 3 or Z.shape[-1] != params["dec0.w"].shape[2]:
        raise dc.ShapeError(f"latent shape {Z.shape} does not match decoder input {params['dec0.w'].shape}")
    H = Z
    n = params.n_decoder_layers
    for k in range(n):
        w = params[f"dec{k}.w"]
        H = dc.conv2d(H, w, params[f"dec{k}.b"], padding=(w.shape[0] // 2, 0))
        if k < n - 1:
            H = dc.prelu(H, params[f"dec{k}.slope"])
    return H


def to_bivariate(raw: Tensor) -> BivariateParams:
    """Link functions: mu = (r1, r2), sigma = exp(r3, r4), rho = tanh(r5)."""
    raw = dc.as_tensor(raw)
    if raw.shape[-1] != 5:
        raise dc.ShapeError(f"expected 5 raw parameters on the last axis, got {raw.shape}")
    log_sigma = raw[..., 2:4]
    return BivariateParams(
        mu=raw[..., 0:2],
        sigma=dc.exp(log_sigma),
        rho=dc.tanh(raw[..., 4]),
        log_sigma=log_sigma,
    )


def nll_terms(bp: BivariateParams, targets: np.ndarray) -> Tensor:
    """Per-(t, i) negative log-likelihood of ``targets`` (..., 2)."""
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != bp.mu.shape:
        raise dc.ShapeError(f"targets {targets.shape} vs mean {bp.mu.shape}")
    dx = (Tensor(targets[..., 0]) - bp.mu[..., 0]) / bp.sigma[..., 0]
    dy = (Tensor(targets[..., 1]) - bp.mu[..., 1]) / bp.sigma[..., 1]
    one_m_r2 = 1.0 - dc.square(bp.rho)
    quad = dc.square(dx) + dc.square(dy) - 2.0 * (bp.rho * dx * dy)
    return (LOG_2PI + bp.log_sigma[..., 0] + bp.log_sigma[..., 1]
            + 0.5 * dc.log(one_m_r2) + 0.5 * (quad / one_m_r2))


def nll_loss(bp: BivariateParams, targets: np.ndarray) -> Tensor:
    return dc.mean(nll_terms(bp, targets))


def raw_nll(raw: Tensor, targets: np.ndarray) -> Tensor:
    """Mean bivariate NLL straight from raw decoder output, as one primitive.

    Same value as ``nll_loss(to_bivariate(raw), targets)``; the pullback is
    written out by hand so a training step records a single node for the head.
    """
    targets = np.asarray(targets, dtype=np.float64)
    r = raw.data
    if r.shape[-1] != 5 or targets.shape != r.shape[:-1] + (2,):
        raise dc.ShapeError(f"raw {r.shape} vs targets {targets.shape}")
    log_sx, log_sy = r[..., 2], r[..., 3]
    rho = np.tanh(r[..., 4])
    q = 1.0 - rho * rho
    # overflow is reported by the caller as a non-finite loss
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        dx = (targets[..., 0] - r[..., 0]) * np.exp(-log_sx)
        dy = (targets[..., 1] - r[..., 1]) * np.exp(-log_sy)
        dxy = dx * dy
        quad = dx * dx + dy * dy - 2.0 * rho * dxy
        terms = LOG_2PI + log_sx + log_sy + 0.5 * np.log(q) + 0.5 * quad / q
    n = terms.size

    def pullback(g):
        c = float(g) / n
        grad = np.empty_like(r)
        grad[..., 0] = -np.exp(-log_sx) * (dx - rho * dy) / q
        grad[..., 1] = -np.exp(-log_sy) * (dy - rho * dx) / q
        grad[..., 2] = 1.0 - (dx * dx - rho * dxy) / q
        grad[..., 3] = 1.0 - (dy * dy - rho * dxy) / q
        grad[..., 4] = -rho - dxy + rho * quad / q
        return (grad * c,)

    return dc.primitive(np.asarray(terms.mean()), (raw,), pullback)


def mse_loss(mu: Tensor, targets: np.ndarray) -> Tensor:
    """Mean over (t, i) of the squared Euclidean reconstruction error."""
    diff = mu - Tensor(np.asarray(targets, dtype=np.float64))
    return dc.mean(dc.sum(dc.square(diff), axis=-1))


def objective(params: ModelParams, batch: StGraphBatch, loss: str = "nll") -> Tensor:
    raw = decode(encode(batch, params), params)
    if loss == "nll":
        return raw_nll(raw, batch.V)
    if loss == "mse":
        return mse_loss(raw[..., 0:2], batch.V)
    raise ValueError(f"unknown loss {loss!r}")


def reconstruct(params: ModelParams, batch: StGraphBatch) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(mu, sigma, rho) arrays for every agent and frame of the batch."""
    return to_bivariate(decode(encode(batch, params), params)).numpy()
