"""Derivation of the Gaussian mean-squared-error clipping factor.

The ``int4`` preset shrinks each group's absmax by a constant factor before
computing the scale.  The factor is the minimizer of the expected squared
quantization error for groups of i.i.d. standard Gaussians, found by a 1-D
grid search over quadratures against the Gaussian density:

* the group absmax ``M`` has density ``g (2 Phi(m) - 1)**(g-1) 2 phi(m)``;
* conditioned on ``M = m``, the other ``g - 1`` entries are standard
  Gaussians truncated to ``[-m, m]``, and the extreme entry sits at ``+-m``;
* with clipping factor ``c`` the scale is ``c * m / grid_max`` and the error
  of a value ``x`` is ``clip(rint(x / s)) * s - x``.

Run as a script to print the minimizer; the frozen constant lives in
``quantformats.INT4_GAUSSIAN_CLIP`` and the derivation test checks the two
agree.
"""

from __future__ import annotations

import math

import numpy as np


def _phi(x: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _cdf(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    flat = x.reshape(-1)
    tgt = out.reshape(-1)
    for i in range(flat.size):
        tgt[i] = 0.5 * (1.0 + math.erf(flat[i] / math.sqrt(2.0)))
    return out


def _sq_err(x: np.ndarray, scale: np.ndarray, grid_max: int) -> np.ndarray:
    codes = np.clip(np.rint(x / scale), -grid_max, grid_max)
    err = codes * scale - x
    return err * err


def expected_mse(
    clip: float,
    bits: int = 4,
    group_size: int = 32,
    n_m: int = 320,
    n_x: int = 400,
    m_hi: float = 6.0,
) -> float:
    """Expected per-element squared error at clipping factor ``clip``."""
    gmax = 2 ** (bits - 1) - 1
    g = group_size
    m = np.linspace(0.15, m_hi, n_m)
    dens = g * (2.0 * _cdf(m) - 1.0) ** (g - 1) * 2.0 * _phi(m)
    # Inner integral over the truncated Gaussian, on a shared unit grid.
    u = np.linspace(0.0, 1.0, n_x)
    x = m[:, None] * u[None, :]  # (n_m, n_x)
    scale = (clip * m / gmax)[:, None]
    integrand = _phi(x) * _sq_err(x, scale, gmax)
    inner = 2.0 * m * np.trapezoid(integrand, u, axis=1)  # note du = dx / m
    trunc_mass = 2.0 * _cdf(m) - 1.0
    trunc_mse = inner / trunc_mass
    # The extreme element itself sits exactly at magnitude m.
    top_err = _sq_err(m, clip * m / gmax, gmax)
    per_elem = ((g - 1) * trunc_mse + top_err) / g
    return float(np.trapezoid(dens * per_elem, m))


def gaussian_mse_clip(
    bits: int = 4,
    group_size: int = 32,
    c_lo: float = 0.70,
    c_hi: float = 1.00,
    c_step: float = 0.0005,
    **quad_kwargs,
) -> float:
    """Grid-search minimizer of :func:`expected_mse` over (0, 1]."""
    cs = np.arange(c_lo, c_hi + 0.5 * c_step, c_step)
    losses = [expected_mse(float(c), bits, group_size, **quad_kwargs) for c in cs]
    return float(cs[int(np.argmin(losses))])


if __name__ == "__main__":
    c = gaussian_mse_clip()
    print(f"int4/group32 Gaussian MSE clipping factor: {c:.6f}")
    print(f"  mse(c*) = {expected_mse(c):.8e}")
    print(f"  mse(1.0) = {expected_mse(1.0):.8e}")
