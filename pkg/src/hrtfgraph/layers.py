"""Trainable layers shared by the personalization and upsampling models.

The graph-attention layer follows the self-transform variant: each head
carries separate weights for the node itself (Ws, a_s) and for its
neighbors (W, a).  Attention logits take an additive edge-log-weight bias,
which is how Gaussian spatial kernels enter; masked pairs use a large
negative constant so their softmax mass underflows to zero.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

#: additive logit for non-edges; exp(-1e30) underflows to exactly zero
MASKED = -1e30


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int,
                   fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Linear:
    """y = x @ W + b for row-vector or batched inputs."""

    def __init__(self, W: Tensor, b: Tensor):
        self.W = W
        self.b = b

    @classmethod
    def create(cls, rng, d_in: int, d_out: int) -> "Linear":
        W = Tensor(glorot_uniform(rng, (d_in, d_out), d_in, d_out),
                   requires_grad=True)
        b = Tensor(np.zeros(d_out), requires_grad=True)
        return cls(W, b)

    @property
    def d_in(self) -> int:
        return self.W.data.shape[0]

    @property
    def d_out(self) -> int:
        return self.W.data.shape[1]

    def __call__(self, x: Tensor) -> Tensor:
        return ad.add(ad.matmul(x, self.W), self.b)

    def parameters(self):
        return [("W", self.W), ("b", self.b)]


class GatLayer:
    """Multi-head graph attention with a separate self-transform per head.

    For head n and nodes s, q the logit is
    LeakyReLU(a_s . Ws h_s + a . W h_q) plus the edge-log-weight bias;
    attention is a softmax over the adjacency row (self included) and the
    output concatenates the ELU-activated heads.
    """

    def __init__(self, W, Ws, a, a_s, slope: float = 0.01):
        self.W = W        # [heads, d_in, d_out]
        self.Ws = Ws
        self.a = a        # [heads, d_out, 1]
        self.a_s = a_s
        self.slope = slope

    @classmethod
    def create(cls, rng, heads: int, d_in: int, d_out: int) -> "GatLayer":
        if heads < 1 or d_in < 1 or d_out < 1:
            raise ValueError(f"bad gat dimensions: {heads}/{d_in}/{d_out}")
        shape_w = (heads, d_in, d_out)
        W = Tensor(glorot_uniform(rng, shape_w, d_in, d_out), requires_grad=True)
        Ws = Tensor(glorot_uniform(rng, shape_w, d_in, d_out), requires_grad=True)
        shape_a = (heads, d_out, 1)
        a = Tensor(glorot_uniform(rng, shape_a, d_out, 1), requires_grad=True)
        a_s = Tensor(glorot_uniform(rng, shape_a, d_out, 1), requires_grad=True)
        return cls(W, Ws, a, a_s)

    @property
    def heads(self) -> int:
        return self.W.data.shape[0]

    @property
    def d_in(self) -> int:
        return self.W.data.shape[1]

    @property
    def d_out(self) -> int:
        return self.W.data.shape[2]

    def __call__(self, h: Tensor, bias: np.ndarray) -> Tensor:
        """``h`` is [n, d_in]; ``bias`` is the [n, n] logit offset holding
        edge log-weights and the non-edge mask.  Returns [n, heads*d_out]."""
        n = h.data.shape[0]
        if bias.shape != (n, n):
            raise ValueError(f"bias shape {bias.shape} for {n} nodes")
        if np.any(bias.max(axis=1) <= MASKED / 2):
            raise ValueError("a node has no incident edges (empty softmax row)")
        t_self = ad.matmul(h, self.Ws)   # [heads, n, d_out]
        t_neigh = ad.matmul(h, self.W)
        src = ad.matmul(t_self, self.a_s)   # [heads, n, 1]
        dst = ad.matmul(t_neigh, self.a)
        logits = ad.leaky_relu(
            ad.add(src, ad.transpose(dst, (0, 2, 1))), self.slope
        )
        alpha = ad.softmax(ad.add(logits, bias[None, :, :]), axis=2)
        mix = ad.matmul(alpha, t_neigh)  # [heads, n, d_out]
        diag = ad.tsum(ad.mul(alpha, np.eye(n)), axis=2, keepdims=True)
        out = ad.elu(ad.add(mix, ad.mul(diag, ad.sub(t_self, t_neigh))))
        return ad.reshape(
            ad.transpose(out, (1, 0, 2)), (n, self.heads * self.d_out)
        )

    def attention(self, h: Tensor, bias: np.ndarray) -> np.ndarray:
        """Attention rows per head, [heads, n, n]; for diagnostics/tests."""
        with ad.no_grad():
            t_self = ad.matmul(h, self.Ws)
            t_neigh = ad.matmul(h, self.W)
            src = ad.matmul(t_self, self.a_s)
            dst = ad.matmul(t_neigh, self.a)
            logits = ad.leaky_relu(
                ad.add(src, ad.transpose(dst, (0, 2, 1))), self.slope
            )
            alpha = ad.softmax(ad.add(logits, bias[None, :, :]), axis=2)
        return alpha.data

    def parameters(self):
        return [("W", self.W), ("Ws", self.Ws), ("a", self.a), ("a_s", self.a_s)]


class ConvTranspose1dLayer:
    """Stride-2-style transposed convolution with bias."""

    def __init__(self, w: Tensor, b: Tensor, stride: int, padding: int):
        self.w = w  # [c_in, c_out, k]
        self.b = b  # [c_out, 1]
        self.stride = stride
        self.padding = padding

    @classmethod
    def create(cls, rng, c_in: int, c_out: int, kernel: int = 4,
               stride: int = 2, padding: int = 1) -> "ConvTranspose1dLayer":
        w = Tensor(
            glorot_uniform(rng, (c_in, c_out, kernel), c_in * kernel,
                           c_out * kernel),
            requires_grad=True,
        )
        b = Tensor(np.zeros((c_out, 1)), requires_grad=True)
        return cls(w, b, stride, padding)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.add(
            ad.conv_transpose1d(x, self.w, stride=self.stride,
                                padding=self.padding),
            self.b,
        )

    def parameters(self):
        return [("w", self.w), ("b", self.b)]


def bias_matrix(adjacency: np.ndarray, log_weights: np.ndarray) -> np.ndarray:
    """Combine adjacency and edge log-weights into the attention bias."""
    return np.where(adjacency, log_weights, MASKED)


def loss_lsd(pred: Tensor, truth) -> Tensor:
    """Root-mean-square dB error over all bins of a pair spectrum."""
    t = truth if isinstance(truth, Tensor) else Tensor(truth)
    if pred.data.shape != t.data.shape:
        raise ValueError(
            f"prediction shape {pred.data.shape} vs truth {t.data.shape}"
        )
    d = ad.sub(pred, t)
    return ad.tsqrt(ad.tmean(ad.mul(d, d)))
