"""Spectral normalization with a persistent power-iteration estimate.

Each wrapped layer keeps its raw weight plus a left singular vector
estimate ``u``.  A forward pass in training mode runs one power-iteration
step (updating ``u`` in place) and divides the weight by the estimated top
singular value; eval-mode forwards reuse the stored ``u`` without mutating
it, so evaluation is bit-stable.  Gradients flow through the weight only
(``u``/``v`` are treated as constants), matching the usual formulation.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

_EPS = 1e-12


def estimate_sigma(weight: torch.Tensor, u: torch.Tensor,
                   n_power_iterations: int = 1) -> tuple[torch.Tensor, torch.Tensor]:
    """Estimate the top singular value of ``weight`` (viewed as a matrix).

    Returns (sigma, updated u).  ``u`` is advanced by ``n_power_iterations``
    steps without tracking gradients; sigma keeps the graph through
    ``weight`` so the normalized weight is differentiable.
    """
    w_mat = weight.reshape(weight.shape[0], -1)
    with torch.no_grad():
        for _ in range(n_power_iterations):
            v = F.normalize(w_mat.t() @ u, dim=0, eps=_EPS)
            u = F.normalize(w_mat @ v, dim=0, eps=_EPS)
        v = F.normalize(w_mat.t() @ u, dim=0, eps=_EPS)
    return u @ (w_mat @ v), u


def spectral_normalize(weight: torch.Tensor, u: torch.Tensor | None = None,
                       n_power_iterations: int = 1) -> torch.Tensor:
    """Return ``weight / sigma_1(weight)`` with sigma_1 from power iteration.

    Zero weights are returned unchanged (nothing to normalize).
    """
    if u is None:
        u = F.normalize(torch.randn(weight.shape[0], dtype=weight.dtype,
                                    device=weight.device), dim=0, eps=_EPS)
    sigma, _ = estimate_sigma(weight, u, n_power_iterations)
    if sigma == 0:
        return weight
    return weight / sigma


class _SpectralNormMixin:
    """Shared machinery for spectrally normalized layers."""

    weight: torch.Tensor
    u: torch.Tensor

    def _init_u(self):
        u = F.normalize(torch.randn(self.weight.shape[0]), dim=0, eps=_EPS)
        self.register_buffer("u", u)

    def normalized_weight(self) -> torch.Tensor:
        sigma, u_new = estimate_sigma(self.weight, self.u, n_power_iterations=1)
        if self.training:
            self.u.copy_(u_new)
        if sigma == 0:
            return self.weight
        return self.weight / sigma

    @torch.no_grad()
    def power_iterate(self, n: int) -> torch.Tensor:
        """Run ``n`` extra power-iteration steps; returns the sigma estimate."""
        sigma, u_new = estimate_sigma(self.weight, self.u, n_power_iterations=n)
        self.u.copy_(u_new)
        return sigma


class SNLinear(nn.Linear, _SpectralNormMixin):
    def __init__(self, in_features: int, out_features: int, bias: bool = True):
        super().__init__(in_features, out_features, bias=bias)
        self._init_u()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.linear(x, self.normalized_weight(), self.bias)


class SNConv2d(nn.Conv2d, _SpectralNormMixin):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 stride: int = 1, padding: int = 0, bias: bool = True):
        super().__init__(in_channels, out_channels, kernel_size,
                         stride=stride, padding=padding, bias=bias)
        self._init_u()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.conv2d(x, self.normalized_weight(), self.bias,
                        self.stride, self.padding)


def spectral_modules(module: nn.Module):
    """Yield every spectrally normalized submodule of ``module``."""
    for m in module.modules():
        if isinstance(m, _SpectralNormMixin):
            yield m
