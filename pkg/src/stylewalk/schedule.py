"""Closed-form diffusion mathematics over a precomputed noise schedule.

Forward process (closed form for any step t, 1-indexed):

    q(x_t | x_0) = N(x_t; sqrt(abar_t) x_0, (1 - abar_t) I)
    x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps

with beta_t the per-step variances, alpha_t = 1 - beta_t and
abar_t = prod_{s<=t} alpha_s (abar_0 = 1 by convention).  The reverse
kernel keeps a fixed variance beta_t:

    x_{t-1} = (1/sqrt(alpha_t)) (x_t - beta_t/sqrt(1-abar_t) eps_hat)
              + sqrt(beta_t) z

No noise is injected at t = 1, so the final output is the predicted mean.
All operations are pure functions of the immutable schedule tables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import as_array


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step variance tables; index i holds step t = i + 1."""

    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def total_steps(self) -> int:
        return len(self.betas)

    def _check_step(self, t: int) -> int:
        t = int(t)
        if not 1 <= t <= self.total_steps:
            raise ValueError(f"step {t} out of range 1..{self.total_steps}")
        return t

    def beta(self, t: int) -> float:
        return float(self.betas[self._check_step(t) - 1])

    def alpha(self, t: int) -> float:
        return float(self.alphas[self._check_step(t) - 1])

    def alpha_bar(self, t: int) -> float:
        """abar_t; accepts t = 0 and returns 1 by convention."""
        if t == 0:
            return 1.0
        return float(self.alpha_bars[self._check_step(t) - 1])


def make_linear_schedule(
    total_steps: int, beta_start: float = 1e-4, beta_end: float = 0.02
) -> NoiseSchedule:
    """Linear beta ramp from beta_start (t=1) to beta_end (t=T).

    Rejects T = 0 and variance bounds outside (0, 1).
    """
    if total_steps < 1:
        raise ValueError(f"total_steps must be >= 1, got {total_steps}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")
    betas = np.linspace(beta_start, beta_end, total_steps)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    return NoiseSchedule(betas=betas, alphas=alphas, alpha_bars=alpha_bars)


def _check_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape {a.shape} vs {b.shape}")


def q_sample(sched: NoiseSchedule, x0, t: int, eps) -> np.ndarray:
    """Forward marginal: sqrt(abar_t) x0 + sqrt(1 - abar_t) eps."""
    x0, eps = as_array(x0), as_array(eps)
    _check_same_shape(x0, eps, "q_sample x0 vs eps")
    abar = sched.alpha_bar(sched._check_step(t))
    return np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * eps


def predict_x0(sched: NoiseSchedule, x_t, t: int, eps_hat) -> np.ndarray:
    """Invert the forward marginal: (x_t - sqrt(1-abar_t) eps_hat) / sqrt(abar_t).

    This reconstruction feeds the auxiliary and adversarial losses.
    """
    x_t, eps_hat = as_array(x_t), as_array(eps_hat)
    _check_same_shape(x_t, eps_hat, "predict_x0 x_t vs eps_hat")
    abar = sched.alpha_bar(sched._check_step(t))
    return (x_t - np.sqrt(1.0 - abar) * eps_hat) / np.sqrt(abar)


def posterior_mean(sched: NoiseSchedule, x_t, t: int, eps_hat) -> np.ndarray:
    """Reverse-kernel mean (1/sqrt(alpha_t)) (x_t - beta_t/sqrt(1-abar_t) eps_hat)."""
    x_t, eps_hat = as_array(x_t), as_array(eps_hat)
    _check_same_shape(x_t, eps_hat, "posterior_mean x_t vs eps_hat")
    t = sched._check_step(t)
    beta = sched.beta(t)
    abar = sched.alpha_bar(t)
    return (x_t - beta / np.sqrt(1.0 - abar) * eps_hat) / np.sqrt(sched.alpha(t))


def reverse_step(sched: NoiseSchedule, x_t, t: int, eps_hat, z) -> np.ndarray:
    """One reverse step: posterior mean plus sqrt(beta_t) z.

    z must be a standard-normal draw for t > 1 and the zero vector at t = 1
    (the final sample is the mean, with no residual noise).
    """
    z = as_array(z)
    t = sched._check_step(t)
    if t == 1 and np.any(z != 0.0):
        raise ValueError("z must be the zero vector at t = 1")
    return posterior_mean(sched, x_t, t, eps_hat) + np.sqrt(sched.beta(t)) * z


def sample_loop(sched: NoiseSchedule, denoiser_params, cond, rng_seed: int) -> np.ndarray:
    """Full reverse chain from isotropic noise, conditioned on (content, style).

    Draws x_T ~ N(0, I), then iterates reverse_step from t = T down to 1,
    querying the denoiser for eps_hat at each step.  Bitwise deterministic
    for a given rng_seed: the generator draws x_T first, then one z per
    step t > 1.
    """
    from .denoiser import denoise  # deferred: schedule math stays network-free

    rng = np.random.default_rng(rng_seed)
    x = rng.standard_normal(denoiser_params.feature_dim)
    for t in range(sched.total_steps, 0, -1):
        eps_hat = denoise(denoiser_params, x, t, cond)
        z = rng.standard_normal(x.shape) if t > 1 else np.zeros_like(x)
        x = reverse_step(sched, x, t, eps_hat, z)
    return x
