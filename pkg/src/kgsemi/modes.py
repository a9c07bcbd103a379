"""Per-mode dispersion and the semiclassical coefficient recurrence.

For a Fourier mode k the evolved vacuum is expanded on the instantaneous
pair basis as  sum_{s+j<=3} hbar^(s+j) A[s,j](t) Phi_s(t)  with A[0,0] = 1.
Seven of the ten coefficients are algebraic in eps(t) and its first three
time derivatives; A[0,1], A[0,2], A[0,3] are time integrals whose integrands
involve previously computed coefficients, so the whole triangle is obtained
from a single ODE solve of the coupled system.  Required coefficient time
derivatives are differentiated analytically, never numerically.

Everything here is a pure function of its arguments; tables are immutable
after construction and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .potential import PotentialSpec, profile_derivatives

__all__ = [
    "Dispersion",
    "ModeAmplitudes",
    "CoeffTable",
    "QuadratureError",
    "dispersion",
    "coeff_table",
    "survival_amplitude",
    "pair_amplitude",
    "amplitude_square_expansion",
    "mode_amplitudes",
    "expansion_pq",
    "RESIDUAL_COEFF_DEFAULT",
]

# Coefficient of the hbar^3/eps0^4 remainder envelope, calibrated once against
# the exact Gaussian evolution on the standard sample (see
# oracle.calibrate_residual_coeff) with a 4x safety factor.
RESIDUAL_COEFF_DEFAULT = 2.0


class QuadratureError(RuntimeError):
    """Raised when the coefficient integration fails to meet tolerance."""


@dataclass(frozen=True)
class Dispersion:
    """Instantaneous single-mode energy data (m = c = 1)."""

    eps: float
    eps_dot: float
    omega: float
    eps0: float


def _mode_tuple(k, dim: int | None = None) -> tuple[float, ...]:
    arr = np.atleast_1d(np.asarray(k))
    if arr.ndim != 1:
        raise ValueError(f"mode index must be a flat integer vector, got shape {arr.shape}")
    if dim is not None and arr.size != dim:
        raise ValueError(f"mode index has length {arr.size}, expected dim={dim}")
    return tuple(float(x) for x in arr)


def _eps_chain(hk: tuple[float, ...], amp: tuple[float, ...],
               b: tuple[float, float, float, float]) -> tuple[float, float, float, float]:
    """eps and its first three time derivatives for v = hbar*k + amp*b0(t).

    Uses d^n f/dt^n = amp * b_n, so all inner products reduce to the two
    scalars <v, amp> and |amp|^2.
    """
    b0, b1, b2, b3 = b
    vv = 0.0
    va = 0.0
    aa = 0.0
    for hki, ai in zip(hk, amp):
        vi = hki + ai * b0
        vv += vi * vi
        va += vi * ai
        aa += ai * ai
    eps = math.sqrt(vv + 1.0)
    e1 = b1 * va / eps
    e2 = (b1 * b1 * aa + b2 * va - e1 * e1) / eps
    e3 = (3.0 * b1 * b2 * aa + b3 * va - 3.0 * e1 * e2) / eps
    return eps, e1, e2, e3


def dispersion(k, t: float, hbar: float, spec: PotentialSpec) -> Dispersion:
    """eps_k(t) = sqrt(|hbar*k + f(t)|^2 + 1) with its time derivative."""
    if not hbar > 0.0:
        raise ValueError(f"hbar must be positive, got {hbar}")
    kt = _mode_tuple(k, spec.dim)
    hk = tuple(hbar * x for x in kt)
    eps, e1, _, _ = _eps_chain(hk, spec.amplitude, profile_derivatives(spec, t))
    eps0 = math.sqrt(sum(x * x for x in hk) + 1.0)
    return Dispersion(eps=eps, eps_dot=e1, omega=eps / hbar, eps0=eps0)


def _rhs_coeffs(eps: float, e1: float, e2: float, e3: float,
                a01: complex, a02: complex) -> tuple[complex, complex, complex]:
    """Time derivatives of the three integral coefficients.

    The intermediate algebraic coefficients are assembled exactly as in the
    recurrence; their time derivatives only involve eps, e1, e2, e3 and the
    current integral values.
    """
    ieps2 = 1.0 / (eps * eps)
    ieps3 = ieps2 / eps
    ieps4 = ieps2 * ieps2
    ieps5 = ieps4 / eps

    da01 = 1j * e1 * e1 * 0.125 * ieps3

    adot10 = -1j * (0.25 * e2 * ieps2 - 0.5 * e1 * e1 * ieps3)
    a11 = (0.5 / eps) * (1j * adot10 - 1j * (0.5 * e1 / eps) * a01)
    da02 = -(0.5 * e1 / eps) * a11

    a10 = -0.25j * e1 * ieps2
    a20 = -0.25j * e1 * ieps2 * a10
    adot11 = (
        0.125 * e3 * ieps3
        - 0.375 * e1 * e2 * ieps4
        - 0.5 * e1 * e2 * ieps4
        + e1 ** 3 * ieps5
        - 1j * (0.25 * e2 * ieps2 - 0.5 * e1 * e1 * ieps3) * a01
        - 1j * (0.25 * e1 * ieps2) * da01
    )
    a12 = (0.5 / eps) * (1j * adot11 + 1j * (0.5 * e1 / eps) * (2.0 * a20 - a02))
    da03 = -(0.5 * e1 / eps) * a12
    return da01, da02, da03


def coeff_table(k, hbar: float, spec: PotentialSpec, t_end: float,
                tol: float = 1e-10) -> "CoeffTable":
    """Solve the coefficient system on [0, t_end] for one mode.

    The three integral coefficients are integrated with DOP853 at
    rtol = atol = tol and kept as a dense interpolant; the algebraic ones are
    evaluated on demand from closed forms.  After the drive support ends all
    coefficients freeze (the right-hand side vanishes identically).
    """
    if not hbar > 0.0:
        raise ValueError(f"hbar must be positive, got {hbar}")
    if not (1e-14 < tol < 1e-4):
        raise ValueError(f"tol must lie in (1e-14, 1e-4), got {tol}")
    if t_end < 0.0:
        raise ValueError(f"t_end must be nonnegative, got {t_end}")
    kt = _mode_tuple(k, spec.dim)
    hk = tuple(hbar * x for x in kt)
    amp = spec.amplitude

    def rhs(t: float, y: np.ndarray) -> list[float]:
        b = profile_derivatives(spec, t)
        if b[1] == 0.0 and b[2] == 0.0 and b[3] == 0.0:
            return [0.0] * 6
        eps, e1, e2, e3 = _eps_chain(hk, amp, b)
        a01 = complex(y[0], y[1])
        a02 = complex(y[2], y[3])
        da01, da02, da03 = _rhs_coeffs(eps, e1, e2, e3, a01, a02)
        return [da01.real, da01.imag, da02.real, da02.imag, da03.real, da03.imag]

    if t_end == 0.0:
        sol = None
    else:
        sol = solve_ivp(
            rhs,
            (0.0, t_end),
            np.zeros(6),
            method="DOP853",
            rtol=tol,
            atol=tol,
            dense_output=True,
            max_step=spec.T / 10.0,
        )
        if not sol.success:
            raise QuadratureError(
                f"coefficient integration failed for k={kt} hbar={hbar}: "
                f"{sol.message} (worst t ~ {sol.t[-1]:.6g})"
            )
    return CoeffTable(mode=kt, hbar=hbar, spec=spec, t_end=float(t_end),
                      tol=tol, _sol=sol)


@dataclass(frozen=True)
class CoeffTable:
    """Semiclassical coefficient triangle A[s,j], s+j <= 3, for one mode."""

    mode: tuple[float, ...]
    hbar: float
    spec: PotentialSpec
    t_end: float
    tol: float
    _sol: object

    @property
    def time_grid(self) -> np.ndarray:
        if self._sol is None:
            return np.array([0.0])
        return self._sol.t

    def _integrals(self, t: float) -> tuple[complex, complex, complex]:
        if self._sol is None or t == 0.0:
            return 0.0 + 0.0j, 0.0 + 0.0j, 0.0 + 0.0j
        y = self._sol.sol(t)
        return (complex(y[0], y[1]), complex(y[2], y[3]), complex(y[4], y[5]))

    def coeff(self, s: int, j: int, t: float) -> complex:
        """A[s,j](t); raises for indices outside the computed triangle."""
        if not (0.0 <= t <= self.t_end):
            raise ValueError(f"t={t} outside table range [0, {self.t_end}]")
        if s < 0 or j < 0 or s + j > 3:
            raise KeyError(f"coefficient ({s},{j}) outside the s+j<=3 triangle")
        if s == 0 and j == 0:
            return 1.0 + 0.0j

        hk = tuple(self.hbar * x for x in self.mode)
        eps, e1, e2, e3 = _eps_chain(hk, self.spec.amplitude,
                                     profile_derivatives(self.spec, t))
        a01, a02, a03 = self._integrals(t)
        if (s, j) == (0, 1):
            return a01
        if (s, j) == (0, 2):
            return a02
        if (s, j) == (0, 3):
            return a03

        ieps2 = 1.0 / (eps * eps)
        ieps3 = ieps2 / eps
        ieps4 = ieps2 * ieps2
        ieps5 = ieps4 / eps
        a10 = -0.25j * e1 * ieps2
        if (s, j) == (1, 0):
            return a10
        a20 = -0.25j * e1 * ieps2 * a10
        if (s, j) == (2, 0):
            return a20
        if (s, j) == (3, 0):
            return -0.25j * e1 * ieps2 * a20

        adot10 = -1j * (0.25 * e2 * ieps2 - 0.5 * e1 * e1 * ieps3)
        a11 = (0.5 / eps) * (1j * adot10 - 1j * (0.5 * e1 / eps) * a01)
        if (s, j) == (1, 1):
            return a11
        adot20 = -0.125 * e1 * e2 * ieps4 + 0.25 * e1 ** 3 * ieps5
        if (s, j) == (2, 1):
            return (0.25 / eps) * (1j * adot20 - 1j * (e1 / eps) * a11)
        # remaining case: (1, 2)
        da01 = 1j * e1 * e1 * 0.125 * ieps3
        adot11 = (
            0.125 * e3 * ieps3
            - 0.375 * e1 * e2 * ieps4
            - 0.5 * e1 * e2 * ieps4
            + e1 ** 3 * ieps5
            - 1j * (0.25 * e2 * ieps2 - 0.5 * e1 * e1 * ieps3) * a01
            - 1j * (0.25 * e1 * ieps2) * da01
        )
        return (0.5 / eps) * (1j * adot11 + 1j * (0.5 * e1 / eps) * (2.0 * a20 - a02))


def survival_amplitude(table: CoeffTable, t: float, hbar: float | None = None) -> complex:
    """Truncated no-pair amplitude: the s = 0 row summed through hbar^3."""
    h = table.hbar if hbar is None else hbar
    return (1.0
            + h * table.coeff(0, 1, t)
            + h * h * table.coeff(0, 2, t)
            + h ** 3 * table.coeff(0, 3, t))


def pair_amplitude(table: CoeffTable, t: float, hbar: float | None = None) -> complex:
    """Truncated one-pair amplitude; leading term is -i hbar eps_dot/(4 eps^2)."""
    h = table.hbar if hbar is None else hbar
    return (h * table.coeff(1, 0, t)
            + h * h * table.coeff(1, 1, t)
            + h ** 3 * table.coeff(1, 2, t))


def amplitude_square_expansion(k, t: float, hbar: float, spec: PotentialSpec) -> float:
    """Closed-form |survival|^2 through second order: 1 - hbar^2 eps_dot^2/(16 eps^4)."""
    d = dispersion(k, t, hbar, spec)
    return 1.0 - hbar * hbar * d.eps_dot ** 2 / (16.0 * d.eps ** 4)


@dataclass(frozen=True)
class ModeAmplitudes:
    """Survival/pair amplitudes of one mode with a remainder envelope."""

    survive: complex
    pair: complex
    q: float
    p: float
    residual_bound: float


def mode_amplitudes(table: CoeffTable, t: float, *,
                    resid_coeff: float = RESIDUAL_COEFF_DEFAULT) -> ModeAmplitudes:
    a = survival_amplitude(table, t)
    c = pair_amplitude(table, t)
    hk2 = sum((table.hbar * x) ** 2 for x in table.mode)
    eps0 = math.sqrt(hk2 + 1.0)
    return ModeAmplitudes(
        survive=a,
        pair=c,
        q=abs(a) ** 2,
        p=abs(c) ** 2,
        residual_bound=resid_coeff * table.hbar ** 3 / eps0 ** 4,
    )


def expansion_pq(k_array: np.ndarray, t: float, hbar: float,
                 spec: PotentialSpec) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized per-mode (q, p) from the closed second-order forms.

    q = 1 - x and p = x with x = hbar^2 eps_dot^2 / (16 eps^4); this is the
    route used for large lattice sweeps, where the full coefficient tables
    would be prohibitively expensive.
    """
    k = np.asarray(k_array, dtype=float)
    if k.ndim == 1:
        k = k[:, None]
    if k.shape[1] != spec.dim:
        raise ValueError(f"mode array has dim {k.shape[1]}, expected {spec.dim}")
    b0, b1, _, _ = profile_derivatives(spec, t)
    amp = np.array(spec.amplitude)
    v = hbar * k + amp * b0
    eps2 = np.einsum("ij,ij->i", v, v) + 1.0
    vdotfd = v @ (amp * b1)
    x = hbar * hbar * vdotfd ** 2 / (16.0 * eps2 ** 3)
    return 1.0 - x, x
