"""Noise schedule, forward noising, the mixed-conditioned denoiser and the reverse chain.

Steps are 1-based throughout: ``t`` ranges over ``1..T`` and
``schedule.alpha_bars[t - 1]`` is the cumulative product up to step ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Tuple, Union

import torch
from torch import nn

from horizonrec.config import DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_STEPS
from horizonrec.exceptions import DiffusionError
from horizonrec.helpers.data_utils import Domain

StepLike = Union[int, torch.Tensor]
Denoiser = Callable[[torch.Tensor, torch.Tensor, torch.Tensor, Domain], torch.Tensor]


@dataclass(frozen=True)
class DiffusionSchedule:
    steps: int
    betas: torch.Tensor
    alphas: torch.Tensor
    alpha_bars: torch.Tensor

    def __post_init__(self) -> None:
        if self.steps < 1 or len(self.betas) != self.steps:
            raise ValueError("schedule needs one beta per step and at least one step")
        if not bool(((self.betas > 0) & (self.betas < 1)).all()):
            raise ValueError("every beta must lie in (0, 1)")

    def alpha_bar(self, t: StepLike) -> torch.Tensor:
        return self.alpha_bars[_as_steps(t, self.steps) - 1]

    def posterior_weights(self, t: int) -> Tuple[float, float]:
        """Weights of the clean estimate and of ``h_t`` in the mean of ``q(h_{t-1} | h_t, h_0)``.

        Only defined for ``t >= 2``; at ``t = 1`` the posterior mean is the estimate itself.
        """
        t = int(t)
        if not 2 <= t <= self.steps:
            raise ValueError(f"posterior weights need 2 <= t <= {self.steps}, got {t}")
        beta, alpha = self.betas[t - 1], self.alphas[t - 1]
        bar, bar_prev = self.alpha_bars[t - 1], self.alpha_bars[t - 2]
        w_estimate = bar_prev.sqrt() * beta / (1.0 - bar)
        w_state = alpha.sqrt() * (1.0 - bar_prev) / (1.0 - bar)
        return float(w_estimate), float(w_state)

    def state(self) -> dict:
        return {"steps": self.steps, "betas": self.betas}

    @classmethod
    def from_state(cls, state: dict) -> "DiffusionSchedule":
        betas = state["betas"].to(torch.float64)
        return _schedule_from_betas(betas)


@dataclass
class NoisedState:
    state: torch.Tensor
    step: StepLike
    domain: Domain


def _schedule_from_betas(betas: torch.Tensor) -> DiffusionSchedule:
    alphas = 1.0 - betas
    return DiffusionSchedule(len(betas), betas, alphas, torch.cumprod(alphas, dim=0))


def make_schedule(
    steps: int = DEFAULT_STEPS,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> DiffusionSchedule:
    """Linear beta schedule over ``steps`` steps, in float64."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if not 0 < beta_start <= beta_end < 1:
        raise ValueError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    return _schedule_from_betas(torch.linspace(beta_start, beta_end, steps, dtype=torch.float64))


def _as_steps(t: StepLike, steps: int) -> torch.Tensor:
    t = torch.as_tensor(t, dtype=torch.long)
    if bool(((t < 1) | (t > steps)).any()):
        raise ValueError(f"diffusion step out of range 1..{steps}: {t.tolist()}")
    return t


def interpolate_noise(h: torch.Tensor, z: torch.Tensor, alpha_bar: Union[float, torch.Tensor]) -> torch.Tensor:
    """``sqrt(a) * h + sqrt(1 - a) * z`` with ``a`` scalar or one value per row."""
    alpha_bar = torch.as_tensor(alpha_bar, dtype=h.dtype)
    if alpha_bar.dim() == 1 and h.dim() == 2:
        alpha_bar = alpha_bar.unsqueeze(-1)
    return alpha_bar.sqrt() * h + (1.0 - alpha_bar).sqrt() * z


def forward_noise(
    h: torch.Tensor,
    z: torch.Tensor,
    t: StepLike,
    schedule: DiffusionSchedule,
    domain: Domain = Domain.TARGET,
) -> NoisedState:
    """Noise ``h`` towards ``z`` at step ``t`` (int or one step per row)."""
    if h.shape != z.shape:
        raise ValueError(f"representation shape {tuple(h.shape)} does not match noise shape {tuple(z.shape)}")
    state = interpolate_noise(h, z, schedule.alpha_bar(t))
    return NoisedState(state=state, step=t, domain=domain)


def timestep_embedding(t: torch.Tensor, width: int) -> torch.Tensor:
    """Sinusoidal embedding of integer steps, ``(batch,) -> (batch, width)``."""
    half = width // 2
    frequencies = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / max(half, 1))
    angles = t.to(torch.float64).unsqueeze(-1) * frequencies
    embedding = torch.cat([torch.sin(angles), torch.cos(angles)], dim=-1)
    if width % 2:
        embedding = torch.cat([embedding, torch.zeros(len(t), 1, dtype=torch.float64)], dim=-1)
    return embedding


class ConditionalDenoiser(nn.Module):
    """Attention over the three tokens (noised state, condition, step embedding).

    The output token at the noised-state slot goes through a feed-forward
    layer and a zero-initialised output projection, and is added to the
    noised state, so an untrained denoiser is the identity.
    """

    def __init__(self, hidden_size: int, dropout: float = 0.0) -> None:
        super().__init__()
        self.hidden_size = hidden_size
        self.domain_emb = nn.Embedding(2, hidden_size)
        nn.init.normal_(self.domain_emb.weight, std=hidden_size ** -0.5)
        self.norm = nn.LayerNorm(hidden_size)
        self.query = nn.Linear(hidden_size, hidden_size)
        self.key = nn.Linear(hidden_size, hidden_size)
        self.value = nn.Linear(hidden_size, hidden_size)
        self.ffn = nn.Sequential(nn.Linear(hidden_size, hidden_size), nn.ReLU(), nn.Dropout(dropout))
        self.out = nn.Linear(hidden_size, hidden_size)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def forward(
        self,
        h_t: torch.Tensor,
        condition: torch.Tensor,
        t: torch.Tensor,
        domain: Domain,
        return_attention: bool = False,
    ):
        domain_index = torch.full((h_t.shape[0],), 0 if domain is Domain.SOURCE else 1, dtype=torch.long)
        step = timestep_embedding(t.expand(h_t.shape[0]) if t.dim() == 0 else t, self.hidden_size).to(h_t.dtype)
        tokens = torch.stack([h_t + self.domain_emb(domain_index), condition, step], dim=1)
        x = self.norm(tokens)
        q, k, v = self.query(x), self.key(x), self.value(x)
        weights = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(self.hidden_size), dim=-1)
        attended = (weights @ v)[:, 0]
        output = h_t + self.out(self.ffn(attended))
        if return_attention:
            return output, weights
        return output


def denoise_step(
    h_t: torch.Tensor,
    condition: torch.Tensor,
    t: StepLike,
    denoiser: Denoiser,
    domain: Domain = Domain.TARGET,
) -> torch.Tensor:
    """One reverse step ``h_t -> h_{t-1}`` for a ``(batch, d)`` state."""
    steps = torch.as_tensor(t, dtype=torch.long)
    if steps.dim() == 0:
        steps = steps.expand(h_t.shape[0])
    if bool((steps < 1).any()):
        raise ValueError("denoise_step needs t >= 1")
    return denoiser(h_t, condition, steps, domain)


def reverse_chain(
    h_start: torch.Tensor,
    condition: torch.Tensor,
    schedule: DiffusionSchedule,
    denoiser: Denoiser,
    domain: Domain = Domain.TARGET,
) -> torch.Tensor:
    """Apply the denoiser for ``t = T, T-1, ..., 1`` without fresh noise.

    The denoiser estimates the clean representation from ``h_t``, the same
    one-shot target it is trained on.  Between calls the state moves to the
    posterior mean of ``h_{t-1}`` given ``h_t`` and that estimate; the DDPM
    variance term is dropped, so the chain is deterministic.  The last call's
    estimate is returned as is.

    Raises:
        DiffusionError: naming the step whose output is non-finite.
    """
    h = h_start
    for t in range(schedule.steps, 0, -1):
        estimate = denoise_step(h, condition, t, denoiser, domain)
        if t == 1:
            h = estimate
        else:
            w_estimate, w_state = schedule.posterior_weights(t)
            h = w_estimate * estimate + w_state * h
        if not bool(torch.isfinite(h).all()):
            raise DiffusionError(t)
    return h


def diffusion_loss(h: torch.Tensor, h_hat: torch.Tensor) -> torch.Tensor:
    """Mean over the batch of ``||h - h_hat||^2``."""
    if h.shape != h_hat.shape:
        raise ValueError(f"shape {tuple(h.shape)} does not match reconstruction {tuple(h_hat.shape)}")
    return (h - h_hat).pow(2).sum(dim=-1).mean()


def dual_diffusion_loss(pairs: Sequence[Tuple[torch.Tensor, torch.Tensor]]) -> torch.Tensor:
    """Average of :func:`diffusion_loss` over the diffused domains (zero if none)."""
    if not pairs:
        return torch.zeros(())
    return torch.stack([diffusion_loss(h, h_hat) for h, h_hat in pairs]).mean()
