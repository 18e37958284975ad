"""Actor and critic networks: small tanh MLPs in double precision.

The actor emits a state-dependent Gaussian per actuated boundary, with the
standard deviation produced by a log-sigma head clamped to a fixed range.
All randomness (initialization and action noise) is drawn from a numpy
Generator so training runs are bit-reproducible from a single seed.
"""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

__all__ = [
    "SIGMA_MIN",
    "SIGMA_MAX",
    "GaussianPolicy",
    "ValueNet",
    "policy_forward",
    "gaussian_log_prob",
    "sample_action",
    "init_net",
    "flat_params",
    "params_finite",
]

SIGMA_MIN = 0.02
SIGMA_MAX = 1.0
_LOG_2PI = math.log(2.0 * math.pi)


class GaussianPolicy(nn.Module):
    """tanh trunk with a combined (mu, log sigma) head."""

    def __init__(self, obs_dim: int, action_dim: int, hidden=(64, 64)):
        super().__init__()
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        layers = []
        last = obs_dim
        for width in hidden:
            layers += [nn.Linear(last, width), nn.Tanh()]
            last = width
        self.trunk = nn.Sequential(*layers)
        self.head = nn.Linear(last, 2 * action_dim)
        self.double()

    def forward(self, obs: torch.Tensor):
        out = self.head(self.trunk(obs))
        mu = out[..., : self.action_dim]
        log_sigma = out[..., self.action_dim:].clamp(math.log(SIGMA_MIN),
                                                     math.log(SIGMA_MAX))
        return mu, torch.exp(log_sigma)


class ValueNet(nn.Module):
    """tanh trunk with a scalar head."""

    def __init__(self, obs_dim: int, hidden=(64, 64)):
        super().__init__()
        self.obs_dim = obs_dim
        layers = []
        last = obs_dim
        for width in hidden:
            layers += [nn.Linear(last, width), nn.Tanh()]
            last = width
        self.trunk = nn.Sequential(*layers)
        self.head = nn.Linear(last, 1)
        self.double()

    def forward(self, obs: torch.Tensor) -> torch.Tensor:
        return self.head(self.trunk(obs)).squeeze(-1)


def init_net(net: nn.Module, rng: np.random.Generator,
             head_scale: float = 1.0) -> None:
    """Fan-in uniform initialization drawn from the numpy generator; the
    final layer is scaled down (small initial policy outputs stabilize the
    first updates)."""
    linears = [m for m in net.modules() if isinstance(m, nn.Linear)]
    for i, m in enumerate(linears):
        bound = 1.0 / math.sqrt(m.in_features)
        w = rng.uniform(-bound, bound, size=(m.out_features, m.in_features))
        b = rng.uniform(-bound, bound, size=m.out_features)
        if i == len(linears) - 1:
            w *= head_scale
            b *= head_scale
        with torch.no_grad():
            m.weight.copy_(torch.from_numpy(w))
            m.bias.copy_(torch.from_numpy(b))


def policy_forward(policy: GaussianPolicy, obs: np.ndarray):
    """Deterministic forward pass on one observation; returns numpy
    (mu, sigma) with sigma already clamped."""
    x = torch.from_numpy(np.asarray(obs, dtype=np.float64))
    if x.ndim == 1:
        x = x.unsqueeze(0)
    if x.shape[-1] != policy.obs_dim:
        raise ValueError(f"observation length {x.shape[-1]} does not match "
                         f"policy input {policy.obs_dim}")
    with torch.no_grad():
        mu, sigma = policy(x)
    return mu.numpy()[0], sigma.numpy()[0]


def gaussian_log_prob(mu: torch.Tensor, sigma: torch.Tensor,
                      actions: torch.Tensor) -> torch.Tensor:
    """Log density of the diagonal Gaussian at the (unclipped) actions,
    summed over action dimensions."""
    z = (actions - mu) / sigma
    return (-0.5 * z ** 2 - torch.log(sigma) - 0.5 * _LOG_2PI).sum(-1)


def sample_action(mu: np.ndarray, sigma: np.ndarray, rng: np.random.Generator):
    """Draw one action; returns (raw draw, clipped action, log prob at the
    raw draw)."""
    eps = rng.standard_normal(len(mu))
    raw = mu + sigma * eps
    logp = float(np.sum(-0.5 * eps ** 2 - np.log(sigma) - 0.5 * _LOG_2PI))
    return raw, np.clip(raw, -1.0, 1.0), logp


def flat_params(net: nn.Module) -> np.ndarray:
    return np.concatenate([p.detach().numpy().ravel() for p in net.parameters()])


def params_finite(net: nn.Module) -> bool:
    return all(torch.isfinite(p).all().item() for p in net.parameters())
