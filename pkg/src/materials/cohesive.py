"""
Cohesive surface densities φ and the proximal maps of their increment cost

All shipped laws are radial: φ depends on the jump y only through |y|, so
every proximal map reduces to a one-dimensional problem in r = |y|.
"""

import logging
from dataclasses import dataclass, replace
from typing import Union

import numpy as np
from scipy.optimize import brentq

from config.settings import TIE_TOLERANCE
from src.materials.bulk import MaterialError

logger = logging.getLogger(__name__)

COHESIVE_VARIANTS = ("linear", "griffith", "smooth_saturating")

ArrayLike = Union[float, np.ndarray]


@dataclass
class CohesiveLaw:
    """Radial cohesive density.

    linear:            φ(y) = b|y|
    griffith:          φ(y) = a + b|y| for y ≠ 0, φ(0) = 0
    smooth_saturating: φ(y) = a + c(1 − exp(−b|y|/c)) for y ≠ 0, φ(0) = 0

    ``a`` and ``b`` are scalars or one value per interface node.
    """

    variant: str = "linear"
    a: ArrayLike = 0.0
    b: ArrayLike = 0.0
    c: float = 1.0

    def __post_init__(self):
        if self.variant not in COHESIVE_VARIANTS:
            raise MaterialError(f"unknown cohesive variant {self.variant!r}")
        if self.variant == "linear" and np.any(np.asarray(self.a) != 0.0):
            raise MaterialError("the linear law has no activation term; use griffith for a > 0")
        if np.any(np.asarray(self.a, dtype=float) < 0.0):
            raise MaterialError("activation a must be >= 0")
        if np.any(np.asarray(self.b, dtype=float) < 0.0):
            raise MaterialError("slope b must be >= 0")
        if self.variant == "smooth_saturating" and self.c <= 0.0:
            raise MaterialError("saturation c must be > 0")

    @property
    def phi_bar(self) -> float:
        """Bound on |∂_y φ̃| away from 0"""
        return float(np.max(self.b))

    @property
    def activation(self) -> np.ndarray:
        """φ₀, the part of φ charged as soon as the crack opens"""
        return np.asarray(self.a, dtype=float)

    @property
    def is_convex(self) -> bool:
        """True when y ↦ (φ(y) − γ)⁺ is convex for every γ ≥ 0"""
        return self.variant == "linear" or (self.variant == "griffith" and not np.any(np.asarray(self.a) > 0.0))

    def restrict(self, index: np.ndarray) -> "CohesiveLaw":
        """Law with per-node parameter fields restricted to ``index``"""
        a, b = np.asarray(self.a, dtype=float), np.asarray(self.b, dtype=float)
        return replace(
            self,
            a=a[index] if a.ndim else float(a),
            b=b[index] if b.ndim else float(b),
        )

    def check_size(self, n_pairs: int):
        for name in ("a", "b"):
            value = np.asarray(getattr(self, name))
            if value.ndim and value.shape != (n_pairs,):
                raise MaterialError(f"cohesive field {name} has {value.size} values for {n_pairs} interface nodes")


def _radius(y) -> np.ndarray:
    """|y| for a scalar, a single vector (m,) or a stack of vectors (P, m)"""
    y = np.asarray(y, dtype=float)
    if y.ndim == 0:
        return np.abs(y)
    if y.ndim == 1:
        return np.asarray(np.linalg.norm(y))
    return np.linalg.norm(y, axis=-1)


def phi_radial(law: CohesiveLaw, r: np.ndarray, a=None, b=None) -> np.ndarray:
    """φ as a function of r = |y| ≥ 0 (parameters default to the law's own)"""
    r = np.asarray(r, dtype=float)
    a = np.asarray(law.a if a is None else a, dtype=float)
    b = np.asarray(law.b if b is None else b, dtype=float)
    if law.variant == "linear":
        return b * r
    if law.variant == "griffith":
        return np.where(r > 0.0, a + b * r, 0.0)
    return np.where(r > 0.0, a + law.c * (1.0 - np.exp(-b * r / law.c)), 0.0)


def phi(law: CohesiveLaw, y) -> np.ndarray:
    """
    Cohesive density φ(y)

    Args:
        law: Cohesive law
        y: Scalar jump, single jump vector (m,) or a stack (P, m)

    Returns:
        φ(y) ≥ 0, exactly 0 at y = 0
    """
    return phi_radial(law, _radius(y))


def increment_cost(law: CohesiveLaw, y, gamma) -> np.ndarray:
    """
    Increment cost (φ(y) − γ)⁺

    Raises:
        MaterialError: If gamma is negative
    """
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0.0):
        raise MaterialError("internal variable gamma must be >= 0")
    return np.maximum(phi(law, y) - gamma, 0.0)


def phi_tilde_gradient(law: CohesiveLaw, y) -> np.ndarray:
    """∂_y φ̃(y) for y ≠ 0 (zero at y = 0), same shape as ``y``"""
    y = np.asarray(y, dtype=float)
    r = _radius(y)
    b = np.asarray(law.b, dtype=float)
    if law.variant == "smooth_saturating":
        slope = b * np.exp(-b * r / law.c)
    else:
        slope = b * np.ones_like(r)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(r > 0.0, slope / np.where(r > 0.0, r, 1.0), 0.0)
    if y.ndim == 0:
        return scale * y
    if y.ndim == 1:
        return scale * y
    return scale[..., None] * y


def psi_tilde(law: CohesiveLaw, y) -> np.ndarray:
    """
    Homogenized limit ψ̃(y) = lim_{ε→0⁺} ∂_yφ̃(εy)·y

    Every shipped law has φ̃ with slope b at the origin, so ψ̃(y) = b|y|.

    Raises:
        MaterialError: If φ vanishes away from y = 0 (a = b = 0)
    """
    a = np.asarray(law.a, dtype=float)
    b = np.asarray(law.b, dtype=float)
    if np.any((a <= 0.0) & (b <= 0.0)):
        raise MaterialError(f"{law.variant} law with a = b = 0 has no ψ̃: φ must vanish only at y = 0")
    return b * _radius(y)


def _increment_objective(law: CohesiveLaw, r, r0, gamma, c, w, a, b):
    return 0.5 * c * (r - r0) ** 2 + w * np.maximum(phi_radial(law, r, a, b) - gamma, 0.0)


def _dead_zone_radius(law: CohesiveLaw, gamma: np.ndarray) -> np.ndarray:
    """Largest r > 0 with φ(r) ≤ γ (−1 when no r > 0 qualifies, inf when all do)"""
    a = np.broadcast_to(np.asarray(law.a, dtype=float), gamma.shape)
    b = np.broadcast_to(np.asarray(law.b, dtype=float), gamma.shape)
    excess = gamma - a
    radius = np.full(gamma.shape, -1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        if law.variant == "smooth_saturating":
            fraction = excess / law.c
            finite = (excess >= 0.0) & (fraction < 1.0) & (b > 0.0)
            radius = np.where(finite, -law.c / np.where(b > 0.0, b, 1.0) * np.log1p(-np.where(finite, fraction, 0.0)), radius)
            radius = np.where((excess >= 0.0) & ((fraction >= 1.0) | (b <= 0.0)), np.inf, radius)
        else:
            radius = np.where((excess >= 0.0) & (b > 0.0), excess / np.where(b > 0.0, b, 1.0), radius)
            radius = np.where((excess >= 0.0) & (b <= 0.0), np.inf, radius)
    return radius


def _smooth_stationary(law, r0, gamma, c, w, lower, a, b):
    """Local minimizer of the active branch of the saturating law, or nan"""
    cs = law.c
    if b <= 0.0:
        return r0 if r0 > lower else np.nan

    def slope(r):
        return c * (r - r0) + w * b * np.exp(-b * r / cs)

    ratio = w * b * b / (c * cs)
    inflection = cs / b * np.log(ratio) if ratio > 1.0 else 0.0
    start = max(lower, inflection, 0.0)
    if start >= r0 or slope(start) >= 0.0:
        return np.nan
    return brentq(slope, start, r0, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def prox_increment(law: CohesiveLaw, y0, gamma, c, w=1.0) -> np.ndarray:
    """
    Global minimizer of y ↦ ½c|y − y0|² + w(φ(y) − γ)⁺

    The minimizer is collinear with y0. Candidate radii are 0, the projection
    of |y0| onto the dead zone {φ ≤ γ} and the stationary point of the
    active branch; the best one wins and ties go to the smaller radius.

    Args:
        law: Cohesive law (parameter fields must match the stack size)
        y0: Scalar, single vector (m,) or stack (P, m)
        gamma: Internal variable, scalar or (P,)
        c: Stiffness, scalar or (P,), > 0
        w: Weight, scalar or (P,), > 0

    Returns:
        Minimizer with the shape of ``y0``
    """
    y0 = np.asarray(y0, dtype=float)
    r0 = np.atleast_1d(_radius(y0)).astype(float)
    shape = r0.shape
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), shape)
    c = np.broadcast_to(np.asarray(c, dtype=float), shape)
    w = np.broadcast_to(np.asarray(w, dtype=float), shape)
    a = np.broadcast_to(np.asarray(law.a, dtype=float), shape)
    b = np.broadcast_to(np.asarray(law.b, dtype=float), shape)

    dead = _dead_zone_radius(law, gamma)
    has_dead = dead >= 0.0
    lower = np.maximum(dead, 0.0)

    candidates = np.full(shape + (3,), np.nan)
    candidates[..., 0] = 0.0
    candidates[..., 1] = np.where(has_dead, np.minimum(r0, dead), np.nan)
    if law.variant == "smooth_saturating":
        stationary = np.full(shape, np.nan)
        for i in np.ndindex(shape):
            if np.isfinite(lower[i]):
                stationary[i] = _smooth_stationary(law, r0[i], gamma[i], c[i], w[i], lower[i], a[i], b[i])
        candidates[..., 2] = stationary
    else:
        shifted = r0 - w * b / c
        candidates[..., 2] = np.where(shifted > lower, shifted, np.nan)

    values = np.where(
        np.isnan(candidates),
        np.inf,
        _increment_objective(
            law, np.nan_to_num(candidates), r0[..., None], gamma[..., None],
            c[..., None], w[..., None], a[..., None], b[..., None],
        ),
    )
    best = values.min(axis=-1, keepdims=True)
    ties = values <= best + TIE_TOLERANCE * (1.0 + np.abs(best))
    radius = np.where(ties, candidates, np.inf).min(axis=-1)

    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(r0 > 0.0, radius / np.where(r0 > 0.0, r0, 1.0), 0.0)
    if y0.ndim == 0:
        return np.asarray(scale[0] * y0)
    if y0.ndim == 1:
        return scale[0] * y0
    return scale[:, None] * y0

