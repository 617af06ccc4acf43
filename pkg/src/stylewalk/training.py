"""Losses and the alternating denoiser/discriminator training loop.

Per batch item the loop samples a step t uniformly in 1..T and a noise
draw eps, forms x_t by the closed-form forward marginal, predicts eps_hat,
and reconstructs x0_hat.  The discriminator updates first on

    L_adv = 1/2 (D(x0) - 1)^2 + 1/2 (D(x0_hat) - 0)^2

with x0_hat detached, then the denoiser updates on

    L = L_ddpm + lambda_foot L_foot + lambda_root L_root
        + lambda_adv 1/2 (D(x0_hat) - 1)^2

where the generator-side score flows gradients back through x0_hat.  All
losses are means over both batch and feature dimensions.  The loop is
single-threaded and bitwise deterministic given (seed, weights, batch
order).
"""

from __future__ import annotations

import dataclasses
import io
import json
import struct
from dataclasses import dataclass

import numpy as np

from .autodiff import AdamState, Tape, adam_step, as_array
from .denoiser import (ConditionPair, DenoiserParams, DiscriminatorParams,
                       denoise_nodes, discriminate_nodes)
from .motion import FeatureLayout, MotionClip, NormStats, compute_norm_stats, normalize
from .schedule import NoiseSchedule, make_linear_schedule


class ConfigError(ValueError):
    """Invalid training configuration."""


class NumericError(RuntimeError):
    """A loss term went non-finite during training."""


class CheckpointError(ValueError):
    """Unreadable or corrupt checkpoint file."""


@dataclass
class TrainConfig:
    total_steps: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.02
    lr_denoiser: float = 1e-3
    lr_discriminator: float = 1e-4
    batch_size: int = 32
    epochs: int = 10
    lambda_foot: float = 0.1
    lambda_root: float = 0.1
    lambda_adv: float = 0.01
    seed: int = 0
    clip_frames: int = 32
    dataset: str = "synthetic"
    time_dim: int = 32
    embed_dim: int = 16
    hidden: int = 256
    disc_hidden: int = 128

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        for name in ("lambda_foot", "lambda_root", "lambda_adv"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.total_steps < 1:
            raise ConfigError("total_steps must be >= 1")
        if not (0.0 < self.beta_start <= self.beta_end < 1.0):
            raise ConfigError(
                f"need 0 < beta_start <= beta_end < 1, got "
                f"({self.beta_start}, {self.beta_end})")
        if self.lr_denoiser <= 0 or self.lr_discriminator <= 0:
            raise ConfigError("learning rates must be positive")
        if self.clip_frames < 2:
            raise ConfigError("clip_frames must be >= 2")
        if self.time_dim % 2 != 0 or self.time_dim < 2:
            raise ConfigError("time_dim must be a positive even number")
        for name in ("embed_dim", "hidden", "disc_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")


def config_to_text(config: TrainConfig, meta: dict[str, str] | None = None) -> str:
    """Flat `key = value` text; meta entries get a `meta.` prefix."""
    lines = ["# stylewalk configuration"]
    for f in dataclasses.fields(config):
        lines.append(f"{f.name} = {getattr(config, f.name)!r}")
    for k, v in (meta or {}).items():
        lines.append(f"meta.{k} = {v}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> tuple[TrainConfig, dict[str, str]]:
    """Parse `key = value` lines with `#` comments; unknown keys rejected."""
    fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    values: dict = {}
    meta: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key.startswith("meta."):
            meta[key[len("meta."):]] = value
            continue
        if key not in fields:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        ftype = fields[key].type
        try:
            if ftype == "int":
                values[key] = int(value)
            elif ftype == "float":
                values[key] = float(value)
            else:
                values[key] = value.strip("'\"")
        except ValueError:
            raise ConfigError(
                f"config line {lineno}: bad value {value!r} for {key!r}") from None
    return TrainConfig(**values), meta


@dataclass(frozen=True)
class LossReport:
    """Per-batch loss values; total is the weighted denoiser objective."""

    l_ddpm: float
    l_foot: float
    l_root: float
    l_adv_d: float
    l_adv_g: float
    total: float

    def as_dict(self) -> dict[str, float]:
        return dataclasses.asdict(self)


# -- loss formulas (reference forms over plain arrays) ------------------------


def ddpm_loss(eps, eps_hat) -> float:
    """Mean squared error between true and predicted noise (all elements)."""
    eps, eps_hat = as_array(eps), as_array(eps_hat)
    if eps.shape != eps_hat.shape:
        raise ValueError(f"shape mismatch: {eps.shape} vs {eps_hat.shape}")
    return float(np.mean((eps - eps_hat) ** 2))


def aux_losses(x0, x0_hat, layout: FeatureLayout) -> tuple[float, float]:
    """(l_foot, l_root): squared-error means restricted to the named channels.

    Inputs are clip feature matrices [F, D] (or batches thereof).
    """
    x0, x0_hat = as_array(x0), as_array(x0_hat)
    if x0.shape != x0_hat.shape:
        raise ValueError(f"shape mismatch: {x0.shape} vs {x0_hat.shape}")
    if x0.shape[-1] != layout.dim:
        raise ValueError(f"last dimension {x0.shape[-1]} != layout dim {layout.dim}")
    diff = x0 - x0_hat
    l_foot = float(np.mean(diff[..., layout.contact_indices] ** 2))
    l_root = float(np.mean(diff[..., layout.root_indices] ** 2))
    return l_foot, l_root


def discriminator_loss(d_real, d_fake) -> float:
    """Batch mean of 1/2 (d_real - 1)^2 + 1/2 d_fake^2."""
    d_real, d_fake = np.atleast_1d(as_array(d_real)), np.atleast_1d(as_array(d_fake))
    if d_real.shape != d_fake.shape:
        raise ValueError(f"score batches differ: {d_real.shape} vs {d_fake.shape}")
    return float(np.mean(0.5 * (d_real - 1.0) ** 2 + 0.5 * d_fake ** 2))


def generator_adv_loss(d_fake) -> float:
    """Batch mean of 1/2 (d_fake - 1)^2 (least-squares generator side)."""
    d_fake = np.atleast_1d(as_array(d_fake))
    return float(np.mean(0.5 * (d_fake - 1.0) ** 2))


# -- training step -------------------------------------------------------------


def flat_channel_indices(layout: FeatureLayout, n_frames: int,
                         channel_indices: np.ndarray) -> np.ndarray:
    """Flattened [F*D] indices of the given per-frame channels."""
    frames = np.arange(n_frames)[:, None] * layout.dim
    return (frames + np.asarray(channel_indices)[None, :]).reshape(-1)


def _selection_matrix(dim: int, indices: np.ndarray) -> np.ndarray:
    sel = np.zeros((dim, len(indices)))
    sel[indices, np.arange(len(indices))] = 1.0
    return sel


def _check_finite(report: dict[str, float]) -> None:
    for name, value in report.items():
        if not np.isfinite(value):
            raise NumericError(f"non-finite loss term {name} = {value}")


def train_step(
    batch: list[tuple[np.ndarray, ConditionPair]],
    params: DenoiserParams,
    disc_params: DiscriminatorParams,
    opt_denoiser: AdamState,
    opt_discriminator: AdamState,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    config: TrainConfig,
    layout: FeatureLayout,
) -> LossReport:
    """One alternating update: discriminator first, then denoiser.

    Batch items are normalized flattened clips paired with their condition.
    Mutates params/disc_params arrays and the optimizer states in place.
    """
    if not batch:
        raise ValueError("empty batch")
    x0 = np.stack([as_array(item[0]).reshape(-1) for item in batch])
    conds = [item[1] for item in batch]
    n, dim = x0.shape
    if dim != params.feature_dim:
        raise ValueError(f"clip dimension {dim} != denoiser dimension {params.feature_dim}")
    n_frames = dim // layout.dim
    if n_frames * layout.dim != dim:
        raise ValueError("flattened clip length is not a multiple of the layout dim")

    ts = rng.integers(1, sched.total_steps + 1, size=n)
    eps = rng.standard_normal((n, dim))
    sqrt_ab = np.sqrt(sched.alpha_bars[ts - 1])
    sqrt_1m = np.sqrt(1.0 - sched.alpha_bars[ts - 1])
    x_t = sqrt_ab[:, None] * x0 + sqrt_1m[:, None] * eps

    # denoiser tape: eps_hat, x0_hat, and the auxiliary losses
    tape = Tape()
    den_leaves = params.bind(tape, trainable=True)
    x_t_node = tape.leaf(x_t)
    eps_hat = denoise_nodes(tape, den_leaves, params, x_t_node, ts,
                            [c.content_id for c in conds],
                            [c.style_id for c in conds])
    l_ddpm_node = tape.mse(eps_hat, tape.leaf(eps))
    # x0_hat = diag(1/sqrt(abar)) (x_t - diag(sqrt(1-abar)) eps_hat); row scales
    # differ per sample so they enter as constant diagonal matmuls
    scaled_eps = tape.matmul(tape.leaf(np.diag(sqrt_1m)), eps_hat)
    x0_hat = tape.matmul(tape.leaf(np.diag(1.0 / sqrt_ab)),
                         tape.sub(x_t_node, scaled_eps))

    foot_idx = flat_channel_indices(layout, n_frames, layout.contact_indices)
    root_idx = flat_channel_indices(layout, n_frames, layout.root_indices)
    sel_foot = tape.leaf(_selection_matrix(dim, foot_idx))
    sel_root = tape.leaf(_selection_matrix(dim, root_idx))
    l_foot_node = tape.mse(tape.matmul(x0_hat, sel_foot), tape.leaf(x0[:, foot_idx]))
    l_root_node = tape.mse(tape.matmul(x0_hat, sel_root), tape.leaf(x0[:, root_idx]))

    # discriminator update on detached x0_hat
    disc_tape = Tape()
    disc_leaves = disc_params.bind(disc_tape, trainable=True)
    d_real = discriminate_nodes(disc_tape, disc_leaves, disc_params,
                                disc_tape.leaf(x0))
    d_fake = discriminate_nodes(disc_tape, disc_leaves, disc_params,
                                disc_tape.leaf(x0_hat.value.copy()))
    l_adv_d_node = disc_tape.add(
        disc_tape.scalar_mul(disc_tape.mse(d_real, disc_tape.leaf(np.ones((n, 1)))), 0.5),
        disc_tape.scalar_mul(disc_tape.mse(d_fake, disc_tape.leaf(np.zeros((n, 1)))), 0.5))
    disc_grads = disc_tape.backward(l_adv_d_node)
    disc_params.arrays = adam_step(opt_discriminator, disc_params.arrays, disc_grads)

    # generator-side adversarial term against the updated discriminator;
    # gradients flow through x0_hat into the denoiser
    disc_frozen = disc_params.bind(tape, trainable=False)
    d_fake_g = discriminate_nodes(tape, disc_frozen, disc_params, x0_hat)
    l_adv_g_node = tape.scalar_mul(tape.mse(d_fake_g, tape.leaf(np.ones((n, 1)))), 0.5)

    total_node = tape.add(
        tape.add(
            tape.add(l_ddpm_node, tape.scalar_mul(l_foot_node, config.lambda_foot)),
            tape.scalar_mul(l_root_node, config.lambda_root)),
        tape.scalar_mul(l_adv_g_node, config.lambda_adv))

    report = LossReport(
        l_ddpm=float(l_ddpm_node.value),
        l_foot=float(l_foot_node.value),
        l_root=float(l_root_node.value),
        l_adv_d=float(l_adv_d_node.value),
        l_adv_g=float(l_adv_g_node.value),
        total=float(total_node.value),
    )
    _check_finite(report.as_dict())

    den_grads = tape.backward(total_node)
    params.arrays = adam_step(opt_denoiser, params.arrays, den_grads)
    return report


def run_training(
    clips: list[MotionClip],
    conds: list[ConditionPair],
    config: TrainConfig,
    n_content: int | None = None,
    n_style: int | None = None,
) -> tuple[DenoiserParams, DiscriminatorParams, NormStats, list[str]]:
    """Normalize the dataset, train for config.epochs, return weights and log.

    The log holds one JSON record per step with the step index and every
    LossReport field.
    """
    config.validate()
    if len(clips) != len(conds) or not clips:
        raise ValueError("need one condition per clip and at least one clip")
    layout = clips[0].layout
    n_frames = clips[0].frames
    for c in clips:
        if c.layout.dim != layout.dim or c.frames != n_frames:
            raise ValueError("all clips must share layout and frame count")
    if n_content is None:
        n_content = max(c.content_id for c in conds) + 1
    if n_style is None:
        n_style = max(c.style_id for c in conds) + 1

    stats = compute_norm_stats(clips)
    flats = [normalize(c, stats).features.reshape(-1) for c in clips]
    dim = n_frames * layout.dim

    rng = np.random.default_rng(config.seed)
    params = DenoiserParams.init(
        rng, dim, time_dim=config.time_dim, embed_dim=config.embed_dim,
        hidden=config.hidden, n_content=n_content, n_style=n_style)
    disc_params = DiscriminatorParams.init(rng, dim, hidden=config.disc_hidden)
    sched = make_linear_schedule(config.total_steps, config.beta_start, config.beta_end)
    opt_den = AdamState(lr=config.lr_denoiser)
    opt_disc = AdamState(lr=config.lr_discriminator)

    log: list[str] = []
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(flats))
        for start in range(0, len(order), config.batch_size):
            chosen = order[start:start + config.batch_size]
            batch = [(flats[i], conds[i]) for i in chosen]
            report = train_step(batch, params, disc_params, opt_den, opt_disc,
                                sched, rng, config, layout)
            record = {"step": step, "epoch": epoch}
            record.update(report.as_dict())
            log.append(json.dumps(record, sort_keys=True))
            step += 1
    return params, disc_params, stats, log


# -- checkpoint persistence ----------------------------------------------------

CHECKPOINT_MAGIC = b"SWDM"
CHECKPOINT_VERSION = 1


@dataclass
class CheckpointBundle:
    params: DenoiserParams
    disc_params: DiscriminatorParams
    stats: NormStats
    config: TrainConfig
    meta: dict[str, str]


def _named_arrays(params: DenoiserParams, disc_params: DiscriminatorParams,
                  stats: NormStats) -> dict[str, np.ndarray]:
    out = {f"denoiser.{k}": v for k, v in params.arrays.items()}
    out.update({f"disc.{k}": v for k, v in disc_params.arrays.items()})
    out["stats.mean"] = stats.mean
    out["stats.std"] = stats.std
    return out


def save_checkpoint(
    path,
    params: DenoiserParams,
    disc_params: DiscriminatorParams,
    stats: NormStats,
    config: TrainConfig,
    meta: dict[str, str] | None = None,
) -> None:
    """Binary format: magic, version u32, length-prefixed config text, then
    per named array: name length+bytes, rank, extents, little-endian f64."""
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    text = config_to_text(config, meta).encode("utf-8")
    buf.write(struct.pack("<I", len(text)))
    buf.write(text)
    named = _named_arrays(params, disc_params, stats)
    for name in sorted(named):
        arr = named[name]
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<I", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return data


def load_checkpoint(path) -> CheckpointBundle:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}")
        (text_len,) = struct.unpack("<I", _read_exact(fh, 4, "config length"))
        text = _read_exact(fh, text_len, "config text").decode("utf-8")
        config, meta = config_from_text(text)

        arrays: dict[str, np.ndarray] = {}
        while True:
            head = fh.read(4)
            if not head:
                break
            if len(head) != 4:
                raise CheckpointError("truncated checkpoint while reading array name length")
            (name_len,) = struct.unpack("<I", head)
            name = _read_exact(fh, name_len, "array name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(fh, 4, f"rank of {name}"))
            shape = struct.unpack(f"<{rank}Q", _read_exact(fh, 8 * rank, f"extents of {name}"))
            count = int(np.prod(shape, dtype=np.int64)) if rank else 1
            payload = _read_exact(fh, 8 * count, f"payload of {name}")
            arrays[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()

    den = {k[len("denoiser."):]: v for k, v in arrays.items() if k.startswith("denoiser.")}
    disc = {k[len("disc."):]: v for k, v in arrays.items() if k.startswith("disc.")}
    required = {"content_table", "style_table", "w0", "b0", "w1", "b1", "w2", "b2"}
    if not required <= set(den) or not {"w0", "b0", "w1", "b1", "w2", "b2"} <= set(disc):
        raise CheckpointError("checkpoint is missing parameter arrays")
    if "stats.mean" not in arrays or "stats.std" not in arrays:
        raise CheckpointError("checkpoint is missing normalization stats")

    params = DenoiserParams(
        feature_dim=den["b2"].shape[0],
        time_dim=config.time_dim,
        embed_dim=den["content_table"].shape[1],
        hidden=den["b0"].shape[0],
        n_content=den["content_table"].shape[0],
        n_style=den["style_table"].shape[0],
        arrays=den,
    )
    disc_params = DiscriminatorParams(
        feature_dim=disc["w0"].shape[0],
        hidden=disc["b0"].shape[0],
        arrays=disc,
    )
    stats = NormStats(mean=arrays["stats.mean"], std=arrays["stats.std"])
    return CheckpointBundle(params, disc_params, stats, config, meta)
