"""Initial state of the dropped atom: trap ground state plus detachment recoil.

The ion is held in the ground state of a harmonic trap of frequency f, giving
an isotropic Gaussian of width zeta = sqrt(hbar / (2 m omega)) in position and
delta_p = hbar / (2 zeta) in momentum.  Photodetachment transfers a recoil of
fixed magnitude q = sqrt(2 m_positron * dE) to the atom, with direction
distributed as the dipole law 3 (qhat . nhat)^2 dOmega / (4 pi) about the
laser polarization nhat.  The resulting state factorizes into a vertical
Gaussian with momentum kick q_z and a horizontal momentum Gaussian centred on
the horizontal part of the kick.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .physcore import CONSTANTS, PhysicalConstants

DEFAULT_POLAR_NODES = 24
DEFAULT_AZIMUTH_NODES = 16


@dataclass(frozen=True)
class TrapConfig:
    """Harmonic-trap ground state parameters (SI)."""

    frequency: float
    width: float
    momentum_spread: float
    velocity_spread: float


def build_trap(frequency: float, constants: PhysicalConstants = CONSTANTS) -> TrapConfig:
    if not frequency > 0.0:
        raise DomainError(f"trap frequency must be positive, got {frequency!r}")
    omega = 2.0 * math.pi * frequency
    zeta = math.sqrt(constants.hbar / (2.0 * constants.atom_mass * omega))
    dp = constants.hbar / (2.0 * zeta)
    return TrapConfig(frequency=frequency, width=zeta, momentum_spread=dp,
                      velocity_spread=dp / constants.atom_mass)


@dataclass(frozen=True)
class PhotodetachConfig:
    """Recoil kick given to the atom when the excess electron is detached.

    Either `detachment_energy` > 0 (dipolar-distributed recoil of magnitude
    sqrt(2 m_positron dE)) or `kick_velocity` > 0 with zero detachment energy
    (deterministic kick along the polarization axis, the photon-free variant).
    """

    detachment_energy: float
    recoil_momentum: float
    recoil_velocity: float
    polarization: tuple
    kick_velocity: float = 0.0

    @property
    def dipolar(self) -> bool:
        return self.detachment_energy > 0.0


def build_photodetach(detachment_energy: float, polarization=(0.0, 1.0, 0.0),
                      kick_velocity: float = 0.0,
                      constants: PhysicalConstants = CONSTANTS) -> PhotodetachConfig:
    if detachment_energy < 0.0:
        raise DomainError("detachment energy must be >= 0")
    if kick_velocity < 0.0:
        raise DomainError("kick velocity must be >= 0")
    if detachment_energy > 0.0 and kick_velocity > 0.0:
        raise DomainError("specify either a detachment energy or a fixed kick, not both")
    pol = np.asarray(polarization, dtype=float)
    if pol.shape != (3,) or not np.all(np.isfinite(pol)):
        raise DomainError("polarization must be a finite 3-vector")
    norm = float(np.linalg.norm(pol))
    if norm == 0.0:
        raise DomainError("polarization vector must be nonzero")
    pol = pol / norm
    if detachment_energy > 0.0:
        # the recoiling lepton is the positron: its small mass sets the kick
        q = math.sqrt(2.0 * constants.positron_mass * detachment_energy)
    else:
        q = constants.atom_mass * kick_velocity
    return PhotodetachConfig(detachment_energy=detachment_energy,
                             recoil_momentum=q,
                             recoil_velocity=q / constants.atom_mass,
                             polarization=tuple(pol),
                             kick_velocity=kick_velocity)


@dataclass(frozen=True)
class RecoilQuadrature:
    """Nodes qhat_k and weights w_k integrating the dipole direction law."""

    directions: np.ndarray  # (K, 3)
    weights: np.ndarray     # (K,), sums to 1

    def __post_init__(self):
        if self.directions.ndim != 2 or self.directions.shape[1] != 3:
            raise DomainError("directions must be (K, 3)")
        if len(self.weights) != len(self.directions):
            raise DomainError("weights and directions must match in length")


def recoil_quadrature(photodetach: PhotodetachConfig,
                      n_polar: int = DEFAULT_POLAR_NODES,
                      n_azimuth: int = DEFAULT_AZIMUTH_NODES) -> RecoilQuadrature:
    """Product rule: Gauss-Legendre in cos(theta), uniform in azimuth.

    The dipole density 3 (qhat . nhat)^2 / (4 pi) is folded into the weights,
    so sum(w) = 1 holds exactly (the azimuth rule is exact for second
    harmonics once n_azimuth >= 4).
    """
    if not photodetach.dipolar:
        # deterministic kick: a single node along the polarization axis
        return RecoilQuadrature(directions=np.asarray([photodetach.polarization]),
                                weights=np.ones(1))
    if n_polar < 2:
        raise DomainError("need at least 2 polar nodes")
    if n_azimuth < 4:
        raise DomainError("need at least 4 azimuth nodes")
    u, wu = np.polynomial.legendre.leggauss(int(n_polar))
    phi = 2.0 * math.pi * (np.arange(n_azimuth) + 0.5) / n_azimuth
    su = np.sqrt(1.0 - u ** 2)
    qx = np.outer(su, np.cos(phi)).ravel()
    qy = np.outer(su, np.sin(phi)).ravel()
    qz = np.repeat(u, n_azimuth)
    dirs = np.stack([qx, qy, qz], axis=1)
    proj = dirs @ np.asarray(photodetach.polarization)
    w = 1.5 * proj ** 2 * np.repeat(wu, n_azimuth) / n_azimuth
    return RecoilQuadrature(directions=dirs, weights=w)


def polar_marginal(photodetach: PhotodetachConfig,
                   n_polar: int = DEFAULT_POLAR_NODES):
    """Azimuth-integrated node set (u_i, W_i) for the vertical projection.

    Integrating the dipole law over azimuth leaves the polar density
    (3/4) [(1 - n_z^2)(1 - u^2) + 2 n_z^2 u^2] with u = cos(theta) and n_z the
    vertical component of the polarization; the deterministic-kick variant
    degenerates to its single node.
    """
    if not photodetach.dipolar:
        return (np.asarray([photodetach.polarization[2]]), np.ones(1))
    if n_polar < 2:
        raise DomainError("need at least 2 polar nodes")
    u, wu = np.polynomial.legendre.leggauss(int(n_polar))
    nz2 = photodetach.polarization[2] ** 2
    rho = 0.75 * ((1.0 - nz2) * (1.0 - u ** 2) + 2.0 * nz2 * u ** 2)
    return u, rho * wu


@dataclass(frozen=True)
class FactoredState:
    """Post-detachment pure state for one recoil direction (SI).

    vertical:  psi0(z) = (2 pi zeta^2)^(-1/4) exp(-(z-h)^2/(4 zeta^2)
                                                 + i q_z (z-h)/hbar)
    horizontal: Gaussian momentum density centred on (q_x, q_y), width delta_p.
    """

    height: float
    width: float
    momentum_spread: float
    kick: tuple  # (q_x, q_y, q_z) SI momentum

    def vertical(self, z):
        z = np.asarray(z, dtype=float)
        dz = z - self.height
        amp = (2.0 * math.pi * self.width ** 2) ** (-0.25)
        return amp * np.exp(-dz ** 2 / (4.0 * self.width ** 2)
                            + 1j * self.kick[2] * dz / CONSTANTS.hbar)

    def horizontal_momentum_density(self, px, py):
        px = np.asarray(px, dtype=float)
        py = np.asarray(py, dtype=float)
        dp2 = self.momentum_spread ** 2
        arg = ((px - self.kick[0]) ** 2 + (py - self.kick[1]) ** 2) / (2.0 * dp2)
        return np.exp(-arg) / (2.0 * math.pi * dp2)


def initial_wavefunction(trap: TrapConfig, height: float, kick) -> FactoredState:
    """Factored state for a release height and an SI momentum kick vector."""
    if height <= 0.0:
        raise DomainError("release height must be positive")
    kick = np.asarray(kick, dtype=float)
    if kick.shape != (3,):
        raise DomainError("kick must be a 3-vector of SI momenta")
    return FactoredState(height=height, width=trap.width,
                         momentum_spread=trap.momentum_spread,
                         kick=tuple(kick))


def velocity_distribution(trap: TrapConfig, photodetach: PhotodetachConfig,
                          vx, vy, vz,
                          n_polar: int = DEFAULT_POLAR_NODES,
                          n_azimuth: int = DEFAULT_AZIMUTH_NODES):
    """Recoil-averaged velocity density after detachment (broadcasting).

    Pi0(v) = sum_k w_k N3(v - v_r qhat_k; delta_v): the dipole-weighted shell
    of radius v_r convolved with the isotropic trap Gaussian.
    """
    quad = recoil_quadrature(photodetach, n_polar, n_azimuth)
    vx, vy, vz = np.broadcast_arrays(np.asarray(vx, float), np.asarray(vy, float),
                                     np.asarray(vz, float))
    dv = trap.velocity_spread
    vr = photodetach.recoil_velocity
    norm = (2.0 * math.pi * dv * dv) ** (-1.5)
    out = np.zeros(vx.shape)
    for qhat, w in zip(quad.directions, quad.weights):
        d2 = ((vx - vr * qhat[0]) ** 2 + (vy - vr * qhat[1]) ** 2
              + (vz - vr * qhat[2]) ** 2)
        out += w * np.exp(-d2 / (2.0 * dv * dv))
    return norm * out
