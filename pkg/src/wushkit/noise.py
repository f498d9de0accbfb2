"""Quantization noise models and their transform-quality functionals.

Two idealized element-wise quantizers drive the analysis:

* ``FpRelative(b, b_tilde)``: a smoothed shared-scale float format.  A value
  picks up two independent relative perturbations, one from the element
  mantissa (b bits) and one from the shared scale's mantissa (b_tilde bits):
  ``eta = (1 + ln2 * 2**-b * xi) * (1 + ln2 * 2**-b_tilde * xi_t) - 1`` with
  ``xi, xi_t ~ U(-1/2, 1/2)``.
* ``IntAbsmax(bits)``: an integer grid scaled by the vector's absmax, whose
  error is ``|alpha|_inf * eta`` with ``eta = 2**(1-b) * xi`` per coordinate.

For a linear transform ``T`` applied before quantization (and undone after),
the expected squared reconstruction error of a Gaussian vector has a closed
form in the FP model and a two-sided bound chain in the INT model.  Both are
expressed through the generic parameterization ``T = U' S' R^T S^-1 U^T``
where ``(U, S**2)`` eigendecomposes the input's second moment and
``(U', S', R)`` are free: ``fp_trace_term`` evaluates the FP objective and
``int_bounds`` the INT chain.  ``one_sided_loss_mc`` estimates either loss
by straight Monte Carlo for cross-checking the algebra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np

from .errors import OutOfRange, ShapeMismatch, ValidationError
from .linalg import cholesky, invert, random_rotation

_LN2 = math.log(2.0)


@dataclass(frozen=True)
class FpRelative:
    """Relative-noise model of a shared-scale float format (SEaMb-style)."""

    mant_bits: int
    scale_mant_bits: int

    def __post_init__(self):
        if self.mant_bits < 0 or self.scale_mant_bits < 0:
            raise ValidationError("mantissa bit counts must be >= 0")

    def eta_second_moment(self) -> float:
        """Closed-form E[eta^2] (eta has mean zero by construction)."""
        u2 = _LN2 ** 2 * 4.0 ** -self.mant_bits / 12.0
        v2 = _LN2 ** 2 * 4.0 ** -self.scale_mant_bits / 12.0
        return u2 + v2 + u2 * v2

    def sample_eta(self, rng: np.random.Generator, shape) -> np.ndarray:
        xi = rng.random(shape) - 0.5
        xi_t = rng.random(shape) - 0.5
        return (1.0 + _LN2 * 2.0 ** -self.mant_bits * xi) * (
            1.0 + _LN2 * 2.0 ** -self.scale_mant_bits * xi_t
        ) - 1.0


@dataclass(frozen=True)
class IntAbsmax:
    """Absmax-scaled integer-grid noise model."""

    bits: int

    def __post_init__(self):
        if self.bits < 2:
            raise ValidationError("integer noise model needs bits >= 2")

    def eta_second_moment(self) -> float:
        return 4.0 ** (1 - self.bits) / 12.0

    def sample_eta(self, rng: np.random.Generator, shape) -> np.ndarray:
        return 2.0 ** (1 - self.bits) * (rng.random(shape) - 0.5)


NoiseModel = Union[FpRelative, IntAbsmax]


class LossEstimate(NamedTuple):
    value: float
    se: float


def _as_1d_positive(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeMismatch(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.isfinite(arr).all() or np.any(arr <= 0.0):
        raise ValidationError(f"{name} must be strictly positive and finite")
    return arr


def _check_orthogonal(q: np.ndarray, name: str, tol: float = 1e-6) -> None:
    d = q.shape[0]
    err = float(np.max(np.abs(q @ q.T - np.eye(d))))
    if err > tol:
        raise ValidationError(f"{name} is not orthogonal (|QQ^T - I|_max = {err:.2e})")


def compose_transform(u_prime, s_prime, r, u, s) -> np.ndarray:
    """Assemble ``T = U' diag(s') R^T diag(1/s) U^T``.

    ``(u, s)`` come from the input moment's eigendecomposition (moment
    eigenvalues are ``s**2``); ``(u_prime, s_prime, r)`` are the free
    parameters of the transform family.
    """
    up = np.asarray(u_prime, dtype=np.float64)
    uu = np.asarray(u, dtype=np.float64)
    rr = np.asarray(r, dtype=np.float64)
    sp = _as_1d_positive(s_prime, "s_prime")
    ss = _as_1d_positive(s, "s")
    return (up * sp[None, :]) @ rr.T @ ((1.0 / ss)[:, None] * uu.T)


def fp_trace_term(u_prime, s_prime, r, s) -> float:
    """FP-model loss functional divided by E[eta^2].

    Evaluates ``sum_k |S R S'^-1 U'^T e_k|^2 * |R S' U'^T e_k|^2`` for the
    transform ``T = U' S' R^T S^-1 U^T`` acting on data whose moment has
    singular values ``s**2``.  Equal to ``tr(S^2)`` whenever T is orthogonal
    and lower-bounded by ``(sum s)^2 / d``, attained at ``U' = Hadamard``,
    ``s' = sqrt(s)``, ``R = I``.
    """
    sp = _as_1d_positive(s_prime, "s_prime")
    ss = _as_1d_positive(s, "s")
    up = np.asarray(u_prime, dtype=np.float64)
    rr = np.asarray(r, dtype=np.float64)
    d = ss.size
    if up.shape != (d, d) or rr.shape != (d, d) or sp.size != d:
        raise ShapeMismatch("fp_trace_term arguments disagree on dimension")
    _check_orthogonal(up, "u_prime")
    _check_orthogonal(rr, "r")
    a = (ss[:, None] * rr) * (1.0 / sp)[None, :] @ up.T  # S R S'^-1 U'^T
    b = (rr * sp[None, :]) @ up.T  # R S' U'^T
    return float(((a * a).sum(axis=0) * (b * b).sum(axis=0)).sum())


class IntBoundChain(NamedTuple):
    lower: float
    upper: float


def int_bounds(s, s_prime) -> IntBoundChain:
    """INT-model loss bounds divided by ``E[eta^2] * E|Ty|_inf^2`` factors.

    For ``T`` with parameters ``(U', s', R = I)`` the loss obeys
    ``lower <= loss / E[eta^2] <= upper`` with
    ``lower = tr(S^2 S'^-2) tr(S'^2) / d`` and
    ``upper = tr(S^2 S'^-2) tr(S'^2)``; the upper bound is minimized, at
    value ``(sum s)^2``, exactly when ``s'`` is proportional to ``sqrt(s)``.
    """
    ss = _as_1d_positive(s, "s")
    sp = _as_1d_positive(s_prime, "s_prime")
    if ss.size != sp.size:
        raise ShapeMismatch("s and s_prime must have matching length")
    inv_sq = float(np.sum(ss * ss / (sp * sp)))
    fwd_sq = float(np.sum(sp * sp))
    return IntBoundChain(lower=inv_sq * fwd_sq / ss.size, upper=inv_sq * fwd_sq)


def one_sided_loss_mc(
    t,
    moment,
    model: NoiseModel,
    n_samples: int,
    seed: int,
    chunk: int = 65536,
) -> LossEstimate:
    """Monte Carlo estimate of ``E |T^-1 eps(T y)|^2`` with the model's eps.

    ``y`` is drawn zero-mean Gaussian with the given second moment.  Returns
    the sample mean and its standard error.  Singular transforms and
    non-positive-definite moments raise through :func:`~wushkit.linalg`.
    """
    if n_samples < 2:
        raise ValidationError("need at least 2 Monte Carlo samples")
    t_arr = np.asarray(t, dtype=np.float64)
    d = t_arr.shape[0]
    if t_arr.shape != (d, d):
        raise ShapeMismatch(f"transform must be square, got {t_arr.shape}")
    chol = cholesky(moment, 0.0)
    t_inv = invert(t_arr)
    rng = np.random.default_rng(seed)
    total = 0.0
    total_sq = 0.0
    remaining = n_samples
    while remaining > 0:
        m = min(chunk, remaining)
        z = rng.standard_normal((m, d))
        ty = (z @ chol.T) @ t_arr.T
        eta = model.sample_eta(rng, (m, d))
        if isinstance(model, IntAbsmax):
            amp = np.abs(ty).max(axis=1)
            eps = amp[:, None] * eta
        else:
            eps = eta * ty
        back = eps @ t_inv.T
        li = np.einsum("ij,ij->i", back, back)
        total += float(li.sum())
        total_sq += float((li * li).sum())
        remaining -= m
    mean = total / n_samples
    var = max(total_sq / n_samples - mean * mean, 0.0) * n_samples / (n_samples - 1)
    return LossEstimate(value=mean, se=math.sqrt(var / n_samples))


def midrise_int_quantizer(x: float, s: float, bits: Optional[int] = None) -> float:
    """The analysis quantizer ``q(x) = (floor(x / s) + 1/2) * s``.

    Never returns zero and satisfies ``|q(x) - x| <= s / 2``.  When ``bits``
    is given, inputs outside the representable range
    ``[-2**(bits-1), 2**(bits-1)) * s`` raise :class:`OutOfRange`.
    """
    if s == 0.0 or not math.isfinite(s):
        raise ValidationError(f"step must be finite and nonzero, got {s}")
    ratio = x / s
    if bits is not None:
        half_range = 2.0 ** (bits - 1)
        if not -half_range <= ratio < half_range:
            raise OutOfRange(
                f"x/s = {ratio:.6g} outside [-2**{bits - 1}, 2**{bits - 1})"
            )
    return (math.floor(ratio) + 0.5) * s


def random_spd_moment(d: int, seed: int, spread: float = 1.0):
    """A seeded random SPD second moment with log-normal eigenvalues.

    Returns ``(moment, s)`` where ``s`` holds the descending positive
    standard deviations (so ``moment`` eigendecomposes with eigenvalues
    ``s**2``).  ``spread`` is the log-space sigma: 0 gives the identity
    spectrum, larger values give stronger anisotropy.
    """
    if d < 1:
        raise ValidationError(f"dimension must be >= 1, got {d}")
    if spread < 0:
        raise ValidationError(f"spread must be nonnegative, got {spread}")
    rot_seed_ss, eig_ss = np.random.SeedSequence(seed).spawn(2)
    lam = np.exp(
        spread * np.random.default_rng(eig_ss).standard_normal(d)
    )
    lam[::-1].sort()
    q = random_rotation(d, int(rot_seed_ss.generate_state(1)[0]))
    moment = (q * lam[None, :]) @ q.T
    return 0.5 * (moment + moment.T), np.sqrt(lam)
