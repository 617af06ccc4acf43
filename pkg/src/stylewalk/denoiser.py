"""Conditional noise-prediction network and discriminator.

The denoiser is a 3-layer silu MLP over flattened motion clips.  Its input
is the concatenation [x_t, timestep_embedding(t), c, s] where c and s are
learned embedding rows selected by content and style id; selection happens
through a one-hot matmul so gradients flow into the tables.  The
discriminator is an unconditional 3-layer silu MLP emitting one unbounded
real score per clip.

Forward passes with frozen weights are pure; training owns all mutation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Node, Tape, as_array


def timestep_embedding(t: int, dim: int) -> np.ndarray:
    """Sinusoidal step encoding: pairs (sin, cos) of t / 10000^(2i/dim)."""
    if dim % 2 != 0:
        raise ValueError(f"embedding dim must be even, got {dim}")
    if t < 0:
        raise ValueError(f"step must be >= 0, got {t}")
    i = np.arange(dim // 2, dtype=np.float64)
    angle = float(t) / np.power(10000.0, 2.0 * i / dim)
    out = np.empty(dim, dtype=np.float64)
    out[0::2] = np.sin(angle)
    out[1::2] = np.cos(angle)
    return out


@dataclass(frozen=True)
class ConditionPair:
    """Content and style labels; embeddings are rows of the learned tables."""

    content_id: int
    style_id: int

    def resolve(self, params: "DenoiserParams") -> tuple[np.ndarray, np.ndarray]:
        """Look up the (content, style) embedding vectors for these ids."""
        params.check_ids(self.content_id, self.style_id)
        return (
            params.arrays["content_table"][self.content_id].copy(),
            params.arrays["style_table"][self.style_id].copy(),
        )


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def _mlp_arrays(rng, dims: list[int], prefix: str = "") -> dict[str, np.ndarray]:
    out = {}
    for k, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
        out[f"{prefix}w{k}"] = _glorot(rng, d_in, d_out)
        out[f"{prefix}b{k}"] = np.zeros(d_out)
    return out


@dataclass
class DenoiserParams:
    """All trainable weights of the noise-prediction network."""

    feature_dim: int
    time_dim: int
    embed_dim: int
    hidden: int
    n_content: int
    n_style: int
    arrays: dict[str, np.ndarray]

    @classmethod
    def init(
        cls,
        rng: np.random.Generator,
        feature_dim: int,
        *,
        time_dim: int = 32,
        embed_dim: int = 16,
        hidden: int = 256,
        n_content: int = 1,
        n_style: int = 1,
    ) -> "DenoiserParams":
        if hidden < 1 or feature_dim < 1:
            raise ValueError("feature_dim and hidden must be >= 1")
        if time_dim % 2 != 0:
            raise ValueError("time_dim must be even")
        arrays = {
            "content_table": rng.normal(0.0, 0.02, size=(n_content, embed_dim)),
            "style_table": rng.normal(0.0, 0.02, size=(n_style, embed_dim)),
        }
        in_dim = feature_dim + time_dim + 2 * embed_dim
        arrays.update(_mlp_arrays(rng, [in_dim, hidden, hidden, feature_dim]))
        return cls(feature_dim, time_dim, embed_dim, hidden, n_content, n_style, arrays)

    def check_ids(self, content_id: int, style_id: int) -> None:
        if not 0 <= content_id < self.n_content:
            raise ValueError(
                f"content_id {content_id} out of range 0..{self.n_content - 1}")
        if not 0 <= style_id < self.n_style:
            raise ValueError(
                f"style_id {style_id} out of range 0..{self.n_style - 1}")

    def bind(self, tape: Tape, trainable: bool) -> dict[str, Node]:
        """Register every array as a leaf on ``tape``."""
        return {
            k: tape.leaf(v, name=k, trainable=trainable)
            for k, v in self.arrays.items()
        }


@dataclass
class DiscriminatorParams:
    """Weights of the real/fake scoring network [D -> H_d -> H_d -> 1]."""

    feature_dim: int
    hidden: int
    arrays: dict[str, np.ndarray]

    @classmethod
    def init(cls, rng: np.random.Generator, feature_dim: int, *, hidden: int = 128):
        if hidden < 1 or feature_dim < 1:
            raise ValueError("feature_dim and hidden must be >= 1")
        arrays = _mlp_arrays(rng, [feature_dim, hidden, hidden, 1])
        return cls(feature_dim, hidden, arrays)

    def bind(self, tape: Tape, trainable: bool) -> dict[str, Node]:
        return {
            k: tape.leaf(v, name=k, trainable=trainable)
            for k, v in self.arrays.items()
        }


def _one_hot(ids: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((len(ids), n))
    out[np.arange(len(ids)), ids] = 1.0
    return out


def _mlp(tape: Tape, leaves: dict[str, Node], h: Node, n_layers: int = 3) -> Node:
    for k in range(n_layers):
        h = tape.add(tape.matmul(h, leaves[f"w{k}"]), leaves[f"b{k}"])
        if k < n_layers - 1:
            h = tape.silu(h)
    return h


def denoise_nodes(
    tape: Tape,
    leaves: dict[str, Node],
    params: DenoiserParams,
    x_node: Node,
    ts,
    content_ids,
    style_ids,
) -> Node:
    """Taped batched forward pass: [B, D] noisy clips -> [B, D] noise estimates.

    ts, content_ids and style_ids give one step index / label pair per row.
    """
    batch = x_node.shape[0]
    if x_node.value.ndim != 2 or x_node.shape[1] != params.feature_dim:
        raise ValueError(
            f"x_t must be [B, {params.feature_dim}], got {x_node.shape}")
    ts = np.asarray(ts, dtype=np.int64)
    content_ids = np.asarray(content_ids, dtype=np.int64)
    style_ids = np.asarray(style_ids, dtype=np.int64)
    if not (len(ts) == len(content_ids) == len(style_ids) == batch):
        raise ValueError("per-row step/condition lists must match the batch size")
    for c, s in zip(content_ids, style_ids):
        params.check_ids(int(c), int(s))

    temb = np.stack([timestep_embedding(int(t), params.time_dim) for t in ts])
    c_rows = tape.matmul(
        tape.leaf(_one_hot(content_ids, params.n_content)), leaves["content_table"])
    s_rows = tape.matmul(
        tape.leaf(_one_hot(style_ids, params.n_style)), leaves["style_table"])
    h = tape.concat([x_node, tape.leaf(temb), c_rows, s_rows], axis=1)
    return _mlp(tape, leaves, h)


def denoise(params: DenoiserParams, x_t, t: int, cond: ConditionPair) -> np.ndarray:
    """Predict the noise in a single clip x_t at step t under (content, style)."""
    x_t = as_array(x_t)
    if x_t.shape != (params.feature_dim,):
        raise ValueError(
            f"x_t must have dimension {params.feature_dim}, got shape {x_t.shape}")
    if t < 1:
        raise ValueError(f"step must be >= 1, got {t}")
    tape = Tape()
    leaves = params.bind(tape, trainable=False)
    out = denoise_nodes(
        tape, leaves, params, tape.leaf(x_t[None, :]),
        [t], [cond.content_id], [cond.style_id])
    return out.value[0]


def discriminate_nodes(
    tape: Tape, leaves: dict[str, Node], params: DiscriminatorParams, x_node: Node
) -> Node:
    """Taped batched scores: [B, D] clips -> [B, 1] unbounded reals."""
    if x_node.value.ndim != 2 or x_node.shape[1] != params.feature_dim:
        raise ValueError(
            f"x must be [B, {params.feature_dim}], got {x_node.shape}")
    return _mlp(tape, leaves, x_node)


def discriminate(params: DiscriminatorParams, x) -> float:
    """Scalar real/fake score for one clip (no squashing)."""
    x = as_array(x)
    if x.shape != (params.feature_dim,):
        raise ValueError(
            f"x must have dimension {params.feature_dim}, got shape {x.shape}")
    tape = Tape()
    leaves = params.bind(tape, trainable=False)
    return float(discriminate_nodes(tape, leaves, params, tape.leaf(x[None, :])).value[0, 0])
