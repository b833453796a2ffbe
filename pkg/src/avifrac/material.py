"""Constitutive layer for the regularized fracture model.

Holds the elastic parameters, the AT1/AT2 crack geometric functions, the
quadratic degradation function and the spectral tension/compression split
of plane-strain energy and stress.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels


def lame_from_engineering(E: float, nu: float) -> tuple[float, float]:
    """Convert Young's modulus and Poisson's ratio to Lame constants.

    Plane-strain (3D) convention:

        lambda = E*nu / ((1+nu)(1-2nu)),   mu = E / (2(1+nu))

    Raises ValueError for E <= 0 or nu outside (-1, 0.5).
    """
    if E <= 0.0:
        raise ValueError(f"Young's modulus must be positive, got {E}")
    if not (-1.0 < nu < 0.5):
        raise ValueError(f"Poisson's ratio must lie in (-1, 0.5), got {nu}")
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = E / (2.0 * (1.0 + nu))
    return lam, mu


@dataclass(frozen=True)
class MaterialParams:
    """Material and regularization parameters, SI units.

    E : Young's modulus (Pa)
    nu : Poisson's ratio
    rho : mass density (kg/m^3)
    gc : critical energy release rate (J/m^2)
    ell : regularization length of the smeared crack band (m)

    The Lame constants ``lam`` and ``mu`` are derived (plane strain).
    """

    E: float
    nu: float
    rho: float
    gc: float
    ell: float
    lam: float = field(init=False)
    mu: float = field(init=False)

    def __post_init__(self):
        lam, mu = lame_from_engineering(self.E, self.nu)
        if self.rho <= 0.0:
            raise ValueError("density must be positive")
        if self.gc <= 0.0:
            raise ValueError("critical energy release rate must be positive")
        if self.ell <= 0.0:
            raise ValueError("regularization length must be positive")
        if mu <= 0.0 or lam + 2.0 * mu <= 0.0:
            raise ValueError("Lame constants out of the admissible range")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", mu)


@dataclass(frozen=True)
class PhaseFieldVariant:
    """Crack geometric function w(d) and its normalization constant.

    kind='at2': w(d) = d^2, c_w = 1/2 (diffuse profile everywhere).
    kind='at1': w(d) = d,   c_w = 2/3 (compact support, elastic threshold).
    """

    kind: str

    def __post_init__(self):
        if self.kind not in ("at1", "at2"):
            raise ValueError(f"unknown variant {self.kind!r}, expected 'at1' or 'at2'")

    @property
    def cw(self) -> float:
        return 2.0 / 3.0 if self.kind == "at1" else 0.5

    @property
    def is_at1(self) -> bool:
        return self.kind == "at1"

    def w(self, d: float) -> float:
        return d if self.kind == "at1" else d * d

    def wprime(self, d: float) -> float:
        return 1.0 if self.kind == "at1" else 2.0 * d

    def wsecond(self, d: float) -> float:
        return 0.0 if self.kind == "at1" else 2.0

    @classmethod
    def from_name(cls, name: str) -> "PhaseFieldVariant":
        return cls(name.strip().lower())


AT1 = PhaseFieldVariant("at1")
AT2 = PhaseFieldVariant("at2")


def macaulay(x: float) -> tuple[float, float]:
    """Split a scalar into nonnegative and nonpositive parts, (x+|x|)/2 and (x-|x|)/2."""
    if not np.isfinite(x):
        raise ValueError(f"macaulay bracket requires a finite argument, got {x}")
    return (x + abs(x)) / 2.0, (x - abs(x)) / 2.0


def geometric_function(variant: PhaseFieldVariant, d: float) -> tuple[float, float, float, float]:
    """Evaluate (w, w', w'', c_w) of the chosen variant at phase value d in [0, 1]."""
    if not (0.0 <= d <= 1.0):
        raise ValueError(f"phase value must lie in [0, 1], got {d}")
    return variant.w(d), variant.wprime(d), variant.wsecond(d), variant.cw


def degradation(d: float) -> tuple[float, float, float]:
    """Quadratic stiffness degradation g(d) = (1-d)^2 with derivatives."""
    one = 1.0 - d
    return one * one, -2.0 * one, 2.0


@dataclass(frozen=True)
class SplitResult:
    """Tension/compression split of energy density and stress at one strain state."""

    psi_plus: float
    psi_minus: float
    sigma_plus: np.ndarray  # (2, 2), symmetric
    sigma_minus: np.ndarray  # (2, 2), symmetric


def spectral_split(strain: np.ndarray, lam: float, mu: float) -> SplitResult:
    """Spectral tension/compression split of a symmetric 2x2 strain tensor.

    psi_pm = lam/2 <tr eps>_pm^2 + mu tr(eps_pm^2) with eps_pm built from the
    signed principal strains; the plane-strain out-of-plane principal strain
    is identically zero and contributes nothing.
    """
    strain = np.asarray(strain, dtype=float)
    if strain.shape != (2, 2):
        raise ValueError("strain must be a 2x2 tensor")
    if not np.allclose(strain, strain.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(strain).max())):
        raise ValueError("strain must be symmetric")
    exy = 0.5 * (strain[0, 1] + strain[1, 0])
    out = _kernels.split_stress(strain[0, 0], strain[1, 1], exy, lam, mu)
    psip, psim, spxx, spyy, spxy, smxx, smyy, smxy = out
    sp = np.array([[spxx, spxy], [spxy, spyy]])
    sm = np.array([[smxx, smxy], [smxy, smyy]])
    return SplitResult(psip, psim, sp, sm)


def degraded_stress(strain: np.ndarray, d: float, params: MaterialParams) -> np.ndarray:
    """Cauchy stress g(d) * sigma_plus + sigma_minus at one material point."""
    if not (0.0 <= d <= 1.0):
        raise ValueError(f"phase value must lie in [0, 1], got {d}")
    split = spectral_split(strain, params.lam, params.mu)
    g, _, _ = degradation(d)
    return g * split.sigma_plus + split.sigma_minus


def isotropic_energy(strain: np.ndarray, lam: float, mu: float) -> float:
    """Undamaged isotropic strain energy density, lam/2 (tr eps)^2 + mu tr(eps^2)."""
    strain = np.asarray(strain, dtype=float)
    tr = strain[0, 0] + strain[1, 1]
    return 0.5 * lam * tr * tr + mu * float(np.sum(strain * strain))


def isotropic_stress(strain: np.ndarray, lam: float, mu: float) -> np.ndarray:
    """Undamaged isotropic stress, lam (tr eps) I + 2 mu eps."""
    strain = np.asarray(strain, dtype=float)
    tr = strain[0, 0] + strain[1, 1]
    return lam * tr * np.eye(2) + 2.0 * mu * strain
