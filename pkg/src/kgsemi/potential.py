"""Smooth compactly supported drive profiles and their time derivatives.

The external drive is f(t) = amplitude * b(t), where b is a C-infinity bump
supported on (center - width, center + width) and normalized to b(center) = 1:

    b(t) = exp(4 - L^2 / (s (L - s))),   s = t - (center - width),  L = 2 width.

All derivatives up to third order are closed-form; finite differences appear
only in the test suite.  Evaluation is pure and side-effect free, so specs can
be shared freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

__all__ = [
    "PotentialSpec",
    "make_bump",
    "eval_potential",
    "eval_potential_deriv",
    "profile_derivatives",
    "sup_norms",
]

# Once s(L-s) falls below this fraction of L^2 the profile is returned as an
# exact zero, so the exponent never overflows.
_UNDERFLOW_FRACTION = 1e-300

_ZERO4 = (0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class PotentialSpec:
    """Homogeneous drive f: R -> R^dim, identically zero outside (0, T)."""

    dim: int
    T: float
    amplitude: tuple[float, ...]
    center: float
    width: float

    def __post_init__(self) -> None:
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if not (math.isfinite(self.T) and self.T > 0.0):
            raise ValueError(f"T must be positive and finite, got {self.T}")
        amp = tuple(float(a) for a in self.amplitude)
        if len(amp) != self.dim:
            raise ValueError(
                f"amplitude has length {len(amp)}, expected dim={self.dim}"
            )
        if not all(math.isfinite(a) for a in amp):
            raise ValueError("amplitude components must be finite")
        object.__setattr__(self, "amplitude", amp)
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "center", float(self.center))
        object.__setattr__(self, "width", float(self.width))
        if not (self.width > 0.0):
            raise ValueError(f"width must be positive, got {self.width}")
        if self.center - self.width < 0.0 or self.center + self.width > self.T:
            raise ValueError(
                "bump support (center-width, center+width) must lie inside [0, T]"
            )

    @property
    def amplitude_norm(self) -> float:
        return math.sqrt(sum(a * a for a in self.amplitude))

    @property
    def support(self) -> tuple[float, float]:
        return (self.center - self.width, self.center + self.width)


def make_bump(
    dim: int,
    amplitude,
    T: float,
    *,
    center: float | None = None,
    width: float | None = None,
) -> PotentialSpec:
    """Build a bump drive on (0, T); the canonical shape peaks at T/2.

    With the defaults the profile is exp(4 - T^2/(t(T-t))) on (0, T), so
    f(T/2) = amplitude exactly.  Passing center/width places a narrower bump
    anywhere inside (0, T); f(center) = amplitude still holds.
    """
    T = float(T)
    if center is None:
        center = T / 2.0
    if width is None:
        width = T / 2.0
    amplitude = tuple(np.atleast_1d(np.asarray(amplitude, dtype=float)).tolist())
    return PotentialSpec(dim=int(dim), T=T, amplitude=amplitude, center=float(center), width=float(width))


def profile_derivatives(spec: PotentialSpec, t: float) -> tuple[float, float, float, float]:
    """Scalar profile b(t) and its first three derivatives, exact zeros outside."""
    L = 2.0 * spec.width
    s = float(t) - (spec.center - spec.width)
    if s <= 0.0 or s >= L:
        return _ZERO4
    u = s * (L - s)
    L2 = L * L
    if u <= _UNDERFLOW_FRACTION * L2:
        return _ZERO4
    b0 = math.exp(4.0 - L2 / u)
    if b0 == 0.0:
        return _ZERO4
    du = L - 2.0 * s
    u2 = u * u
    u3 = u2 * u
    g1 = L2 * du / u2
    g2 = -2.0 * L2 * (u + du * du) / u3
    g3 = 12.0 * L2 * du / u3 + 6.0 * L2 * du ** 3 / (u3 * u)
    b1 = b0 * g1
    b2 = b0 * (g2 + g1 * g1)
    b3 = b0 * (g3 + 3.0 * g1 * g2 + g1 ** 3)
    return (b0, b1, b2, b3)


def _profile_arrays(spec: PotentialSpec, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (b, b') on an array of times; used by sup_norms and tests."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    L = 2.0 * spec.width
    s = t - (spec.center - spec.width)
    u = s * (L - s)
    inside = (s > 0.0) & (s < L) & (u > _UNDERFLOW_FRACTION * L * L)
    b0 = np.zeros_like(t)
    b1 = np.zeros_like(t)
    expo = np.full_like(t, -np.inf)
    expo[inside] = 4.0 - L * L / u[inside]
    live = expo > -745.0  # exp underflows to exact 0 below this
    vals = np.exp(expo[live])
    g1 = L * L * (L - 2.0 * s[live]) / u[live] ** 2
    b0[live] = vals
    b1[live] = vals * g1
    return b0, b1


def eval_potential(spec: PotentialSpec, t: float) -> np.ndarray:
    """f(t) as a length-dim vector; exactly zero outside (0, T)."""
    b0 = profile_derivatives(spec, t)[0]
    return np.array(spec.amplitude, dtype=float) * b0


def eval_potential_deriv(spec: PotentialSpec, t: float) -> np.ndarray:
    """df/dt as a length-dim vector (analytic, not finite-differenced)."""
    b1 = profile_derivatives(spec, t)[1]
    return np.array(spec.amplitude, dtype=float) * b1


def sup_norms(spec: PotentialSpec, grid_points: int = 4001) -> tuple[float, float]:
    """(sup_t |f(t)|, sup_t |df/dt(t)|) by dense sampling plus local refinement."""
    anorm = spec.amplitude_norm
    if anorm == 0.0:
        return (0.0, 0.0)
    lo, hi = spec.support
    t = np.linspace(lo, hi, grid_points)[1:-1]
    b0, b1 = _profile_arrays(spec, t)

    def refine(values: np.ndarray, order: int) -> float:
        i = int(np.argmax(np.abs(values)))
        a = t[max(i - 1, 0)]
        b = t[min(i + 1, len(t) - 1)]
        res = minimize_scalar(
            lambda x: -abs(profile_derivatives(spec, x)[order]),
            bounds=(a, b),
            method="bounded",
            options={"xatol": 1e-12 * spec.T},
        )
        return max(abs(values[i]), -float(res.fun))

    return (anorm * refine(b0, 0), anorm * refine(b1, 1))
