"""Free fall from the mirror edge to the detection plane.

The gravitational propagator factorizes into the free one evaluated at a
shifted endpoint plus a z-independent phase,

    K_g(Z, z; tau) = exp(-i Phi) K_0(Z', z; tau),
    Z'  = Z + g tau^2 / 2,
    Phi = (m g tau / hbar) (Z + g tau^2 / 6),

so every propagated amplitude is a chirp integral over the end-of-disk state
and the detection-plane current needs the pair of mode sums F_n and G_n
computed by the kernels module.  With the atom landing at radial distance
rbar after total time T, the time above the disk is t = T d / rbar and the
fall takes tau = T - t; on a lattice where the t step is an integer multiple
of the T step, every cell's tau lands on one shared tau lattice and the
chirp sums are computed once per tau value.

The detector-plane observables come in three forms: `build_folded_map` (the
azimuth-integrated (t, T) density used for estimation, with the kick azimuth
reduced to exponentially scaled Bessel weights), `current_map_yt` (the
unfolded density on a (Y, T) cut through the detector plane), and
`annihilation_current` (a brute-force spot value summing explicit kick
directions, kept as an independent cross-check of the folded assembly).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.special as sps

from .airy import eigenfunction_matrix
from .errors import ConfigError, DomainError
from .gqs import (GQSBasis, build_basis, classical_cutoff_velocity,
                  overlap_matrix)
from .kernels import get_engine, mode_chirp_sums, simpson_weights
from .mirror import DiskGeometry
from .physcore import CONSTANTS, G_DEFAULT, PhysicalConstants
from .source import PhotodetachConfig, TrapConfig

SUPPORT_PAD = 15.0  # dimensionless support cut of mode n at lambda_n + 15


# ---------------------------------------------------------------------------
# propagator and generic profile propagation (also the tests' entry points)

def propagator_kernel(z_to, z_from, tau: float, g: float = G_DEFAULT,
                      constants: PhysicalConstants = CONSTANTS) -> np.ndarray:
    """Exact kernel K_g(z_to, z_from; tau) with broadcasting arguments."""
    if tau <= 0.0:
        raise DomainError("propagation time must be positive")
    m = constants.atom_mass
    hbar = constants.hbar
    zt = np.asarray(z_to, dtype=float)
    zf = np.asarray(z_from, dtype=float)
    action = ((zt - zf) ** 2 / (2.0 * tau)
              - 0.5 * g * tau * (zt + zf)
              - g * g * tau ** 3 / 24.0)
    pref = math.sqrt(m / (2.0 * math.pi * hbar * tau)) * np.exp(-0.25j * math.pi)
    return pref * np.exp(1j * (m / hbar) * action)


@dataclass(frozen=True)
class PropagationContext:
    """Per-(tau, detector point) quantities of the factorized propagator."""

    tau: float
    gravity: float
    detector_z: np.ndarray
    zprime: np.ndarray
    phase: np.ndarray  # Phi, the z-independent part


def make_context(tau: float, detector_z, g: float = G_DEFAULT,
                 constants: PhysicalConstants = CONSTANTS) -> PropagationContext:
    if tau <= 0.0:
        raise DomainError("propagation time must be positive")
    Z = np.atleast_1d(np.asarray(detector_z, dtype=float))
    zprime = Z + 0.5 * g * tau * tau
    phi = (constants.atom_mass * g * tau / constants.hbar) * (
        Z + g * tau * tau / 6.0)
    return PropagationContext(tau=tau, gravity=g, detector_z=Z,
                              zprime=zprime, phase=phi)


def propagate_profile(z, psi, tau: float, detector_z, g: float = G_DEFAULT,
                      constants: PhysicalConstants = CONSTANTS, weights=None):
    """Propagate a sampled profile psi(z) through the fall.

    Returns (psi_det, vterm) at the detector points, where vterm is
    (hbar / i m) d(psi_det)/dZ, the velocity-weighted amplitude whose product
    with conj(psi_det) gives the probability current.
    """
    z = np.asarray(z, dtype=float)
    psi = np.asarray(psi, dtype=complex)
    if z.ndim != 1 or psi.shape != z.shape:
        raise DomainError("psi must be sampled on the 1d grid z")
    if weights is None:
        weights = simpson_weights(z.shape[0], float(z[1] - z[0]))
    ctx = make_context(tau, detector_z, g, constants)
    m = constants.atom_mass
    hbar = constants.hbar
    alpha = m / (2.0 * hbar * tau)
    L = ctx.zprime.shape[0]
    chi_w = (psi * weights)[None, :]
    # complex profiles ride through as two real rows
    F_re, G_re = mode_chirp_sums(np.ascontiguousarray(chi_w.real), z,
                                 np.asarray([z.shape[0]], dtype=np.int64),
                                 np.full(L, alpha), ctx.zprime,
                                 np.full(L, 1.0 / tau),
                                 np.full(L, g * tau))
    F_im, G_im = mode_chirp_sums(np.ascontiguousarray(chi_w.imag), z,
                                 np.asarray([z.shape[0]], dtype=np.int64),
                                 np.full(L, alpha), ctx.zprime,
                                 np.full(L, 1.0 / tau),
                                 np.full(L, g * tau))
    SF = F_re[:, 0] + 1j * F_im[:, 0]
    SG = G_re[:, 0] + 1j * G_im[:, 0]
    pref = math.sqrt(m / (2.0 * math.pi * hbar * tau)) * np.exp(
        -0.25j * math.pi - 1j * ctx.phase)
    return pref * SF, pref * SG


def detection_rate(psi_det, vterm):
    """Downward probability flux -Re(conj(psi) vterm) at the detector."""
    return -np.real(np.conj(psi_det) * vterm)


def plane_current(z, psi, tau_values, detector_z: float,
                  g: float = G_DEFAULT,
                  constants: PhysicalConstants = CONSTANTS, weights=None):
    """Detection rate of a profile at one plane for a batch of fall times."""
    z = np.asarray(z, dtype=float)
    psi = np.asarray(psi, dtype=complex)
    tau = np.asarray(tau_values, dtype=float)
    if np.any(tau <= 0.0):
        raise DomainError("fall times must be positive")
    if weights is None:
        weights = simpson_weights(z.shape[0], float(z[1] - z[0]))
    m = constants.atom_mass
    hbar = constants.hbar
    alpha = m / (2.0 * hbar * tau)
    zprime = detector_z + 0.5 * g * tau * tau
    cut = np.asarray([z.shape[0]], dtype=np.int64)
    chi_re = np.ascontiguousarray((psi.real * weights)[None, :])
    chi_im = np.ascontiguousarray((psi.imag * weights)[None, :])
    F_re, G_re = mode_chirp_sums(chi_re, z, cut, alpha, zprime, 1.0 / tau,
                                 g * tau)
    F_im, G_im = mode_chirp_sums(chi_im, z, cut, alpha, zprime, 1.0 / tau,
                                 g * tau)
    SF = F_re[:, 0] + 1j * F_im[:, 0]
    SG = G_re[:, 0] + 1j * G_im[:, 0]
    return -(m / (2.0 * math.pi * hbar * tau)) * np.real(np.conj(SF) * SG)


# ---------------------------------------------------------------------------
# grids and windows

@dataclass(frozen=True)
class GridSpec:
    """Resolution and window controls for the estimation map."""

    fringe_samples: float = 5.0       # T samples per fastest mode beat
    t_nodes: int = 56                 # target size of the coarse t axis
    horizontal_sigmas: float = 4.0    # half-width of the landing-speed window
    vertical_pad_scales: float = 4.0  # extra velocity cut in units of v_g
    z_samples: float = 12.0           # samples per shortest z wavelength
    n_polar: int = 24                 # Gauss-Legendre nodes in the recoil tilt
    jacobian: str = "tau"             # 'tau' (as printed) or 'T' (flux exact)

    def __post_init__(self):
        if self.jacobian not in ("tau", "T"):
            raise ConfigError("jacobian must be 'tau' or 'T'")
        if self.fringe_samples < 2.0:
            raise ConfigError("need at least 2 samples per fringe")
        if self.t_nodes < 8:
            raise ConfigError("need at least 8 release-time nodes")


def fall_windows(basis: GQSBasis, trap: TrapConfig,
                 photodetach: PhotodetachConfig, geometry: DiskGeometry,
                 spec: GridSpec = GridSpec()) -> dict:
    """Landing-speed and fall-time windows that carry the transmitted flux."""
    v_hor = photodetach.recoil_velocity * math.sqrt(
        max(0.0, 1.0 - photodetach.polarization[2] ** 2))
    if photodetach.dipolar:
        uc = min(1.0, classical_cutoff_velocity(basis, geometry.release_height)
                 / max(photodetach.recoil_velocity, 1e-30))
        v_lo_center = photodetach.recoil_velocity * math.sqrt(
            max(0.0, 1.0 - uc * uc))
        v_hi_center = photodetach.recoil_velocity
    else:
        v_lo_center = v_hi_center = v_hor
    pad = spec.horizontal_sigmas * trap.velocity_spread
    v_lo = max(v_lo_center - pad, 0.5 * trap.velocity_spread)
    v_hi = v_hi_center + pad
    t_lo = geometry.travel_distance / v_hi
    t_hi = geometry.travel_distance / v_lo
    v_cut = (classical_cutoff_velocity(basis, geometry.release_height)
             + spec.vertical_pad_scales * basis.scales.velocity)
    g = basis.scales.g
    drop = 2.0 * g * (geometry.fall_height + geometry.release_height)
    root = math.sqrt(v_cut * v_cut + drop)
    tau_lo = (root - v_cut) / g
    tau_hi = (root + v_cut) / g
    return {"t_lo": t_lo, "t_hi": t_hi, "tau_lo": tau_lo, "tau_hi": tau_hi,
            "v_lo": v_lo, "v_hi": v_hi, "v_cut": v_cut}


@dataclass(frozen=True)
class GridAxes:
    """The (t, T) lattice: t steps by `stride` multiples of the T step."""

    t: np.ndarray
    T: np.ndarray
    step: float          # delta T
    stride: int          # delta t / delta T
    tau_lo: float
    n_tau: int

    @property
    def tau_values(self) -> np.ndarray:
        return self.tau_lo + self.step * np.arange(self.n_tau)


def grid_axes(basis: GQSBasis, trap: TrapConfig,
              photodetach: PhotodetachConfig, geometry: DiskGeometry,
              spec: GridSpec = GridSpec()) -> GridAxes:
    win = fall_windows(basis, trap, photodetach, geometry, spec)
    fringe = 2.0 * math.pi * basis.scales.time / basis.lam_max
    step = fringe / spec.fringe_samples
    stride = max(1, int(round((win["t_hi"] - win["t_lo"])
                              / ((spec.t_nodes - 1) * step))))
    n_t = int(math.ceil((win["t_hi"] - win["t_lo"]) / (stride * step))) + 1
    n_tau = int(math.ceil((win["tau_hi"] - win["tau_lo"]) / step)) + 1
    t = win["t_lo"] + stride * step * np.arange(n_t)
    n_T = (n_t - 1) * stride + n_tau
    T = win["t_lo"] + win["tau_lo"] + step * np.arange(n_T)
    return GridAxes(t=t, T=T, step=step, stride=stride,
                    tau_lo=win["tau_lo"], n_tau=n_tau)


@dataclass(frozen=True)
class ModeGrid:
    """Dimensionless mode samples shared by every gravity value in a scan."""

    xi: np.ndarray       # z / l
    wxi: np.ndarray      # Simpson weights in xi
    chi: np.ndarray      # (n_max, J) Ai(xi - lambda_n) / Ai'(-lambda_n)
    idx_cut: np.ndarray  # per-mode sample count up to the support cut


def _build_mode_grid(basis: GQSBasis, geometry: DiskGeometry,
                     tau_window, spec: GridSpec) -> ModeGrid:
    scales = basis.scales
    m = CONSTANTS.atom_mass
    hbar = CONSTANTS.hbar
    z_sup = basis.z_max
    k_mode = math.sqrt(basis.lam_max) / scales.length
    k_chirp = 0.0
    for tau in tau_window:
        zp = -geometry.fall_height + 0.5 * scales.g * tau * tau
        k_chirp = max(k_chirp, m * (abs(zp) + z_sup) / (hbar * tau))
    dz = 2.0 * math.pi / (spec.z_samples * (k_mode + k_chirp))
    count = int(math.ceil(z_sup / dz)) + 1
    if count % 2 == 0:
        count += 1
    xi_sup = z_sup / scales.length
    xi = np.linspace(0.0, xi_sup, count)
    wxi = simpson_weights(count, xi[1] - xi[0])
    chi = eigenfunction_matrix(basis.table, xi)
    cuts = basis.table.values + SUPPORT_PAD
    idx_cut = np.minimum(np.searchsorted(xi, cuts, side="right"),
                         count).astype(np.int64)
    for n in range(chi.shape[0]):
        chi[n, idx_cut[n]:] = 0.0
    return ModeGrid(xi=xi, wxi=wxi, chi=chi, idx_cut=idx_cut)


# ---------------------------------------------------------------------------
# the folded estimation map

@dataclass(frozen=True)
class FoldedMap:
    """Azimuth-integrated landing density on the (t, T) lattice.

    `density` is the probability density per (dt dT) of a transmitted atom:
    the radial landing density at rbar = d T / t times the Jacobian d T / t^2.
    `azimuth_model` tells how the detector azimuth is distributed at fixed
    (t, T): 'dipole' uses density ~ 1 + ratio cos 2(phi - pol_angle), the
    deterministic kick uses a von Mises law with per-t `concentration`.
    """

    g: float
    t: np.ndarray
    T: np.ndarray
    density: np.ndarray
    azimuth_model: str
    pol_angle: float
    azimuth_ratio: np.ndarray | None
    concentration: np.ndarray | None
    jacobian: str
    metadata: dict = field(compare=False)

    @property
    def cell_area(self) -> float:
        return (self.t[1] - self.t[0]) * (self.T[1] - self.T[0])

    def total_weight(self) -> float:
        return float(self.density.sum() * self.cell_area)


class MapMaker:
    """Builds folded maps for many gravity values on one fixed lattice.

    The lattice, the zero table, and the dimensionless mode samples are
    derived once at the reference gravity; `build(g)` recomputes only the
    SI-dependent pieces (scales, overlaps, chirp tables, Bessel weights).
    """

    def __init__(self, n_max: int, trap: TrapConfig,
                 photodetach: PhotodetachConfig, geometry: DiskGeometry,
                 spec: GridSpec = GridSpec(), g0: float = G_DEFAULT,
                 constants: PhysicalConstants = CONSTANTS):
        pol = np.asarray(photodetach.polarization)
        if photodetach.dipolar and not (abs(pol[2]) < 1e-12
                                        or abs(pol[2]) > 1.0 - 1e-12):
            raise ConfigError("folded maps support polarization either in "
                              "the detector plane or vertical")
        self.trap = trap
        self.photodetach = photodetach
        self.geometry = geometry
        self.spec = spec
        self.constants = constants
        self.g0 = g0
        self.basis0 = build_basis(n_max, g0, constants=constants)
        self.axes = grid_axes(self.basis0, trap, photodetach, geometry, spec)
        tau_vals = self.axes.tau_values
        self.mode_grid = _build_mode_grid(self.basis0, geometry,
                                          (tau_vals[0], tau_vals[-1]), spec)
        nz2 = pol[2] ** 2
        if photodetach.dipolar:
            u, wu = np.polynomial.legendre.leggauss(spec.n_polar)
            self.coef_even = 0.75 * ((1.0 - nz2) * (1.0 - u ** 2)
                                     + 2.0 * nz2 * u ** 2)
            self.coef_cos2 = 0.75 * (1.0 - nz2) * (1.0 - u ** 2)
        else:
            # deterministic kick: one direction, unit angular weight; the
            # azimuth structure lives entirely in the Gaussian ridge
            u, wu = np.asarray([pol[2]]), np.ones(1)
            self.coef_even = np.ones(1)
            self.coef_cos2 = np.zeros(1)
        self.node_u = u
        self.node_w = wu
        self.pol_angle = float(math.atan2(pol[1], pol[0])) if (
            1.0 - nz2) > 1e-24 else 0.0

    def build(self, g: float) -> FoldedMap:
        axes = self.axes
        spec = self.spec
        geom = self.geometry
        pd = self.photodetach
        basis = build_basis(self.basis0.n_max, g, table=self.basis0.table,
                            constants=self.constants)
        scales = basis.scales
        m = self.constants.atom_mass
        hbar = self.constants.hbar
        ell = scales.length

        qz_nodes = pd.recoil_momentum * self.node_u
        coeff = overlap_matrix(basis, geom.release_height, self.trap.width,
                               qz_nodes)
        fraction = float((self.node_w * self.coef_even) @
                         np.sum(np.abs(coeff) ** 2, axis=1)) if pd.dipolar \
            else float(np.sum(np.abs(coeff) ** 2))

        tau = axes.tau_values
        z = self.mode_grid.xi * ell
        chi_w = self.mode_grid.chi * (self.mode_grid.wxi
                                      * math.sqrt(ell))[None, :]
        alpha = m / (2.0 * hbar * tau)
        zprime = -geom.fall_height + 0.5 * g * tau * tau
        F, G = mode_chirp_sums(np.ascontiguousarray(chi_w), z,
                               self.mode_grid.idx_cut, alpha, zprime,
                               1.0 / tau, g * tau)

        n_t, n_T = axes.t.shape[0], axes.T.shape[0]
        M = axes.n_tau
        stride = axes.stride
        dp = self.trap.momentum_spread
        qbar = pd.recoil_momentum * np.sqrt(
            np.maximum(0.0, 1.0 - self.node_u ** 2))
        lam = basis.table.values
        d = geom.travel_distance

        density = np.zeros((n_t, n_T))
        even = np.zeros((n_t, n_T))
        cos2 = np.zeros((n_t, n_T)) if pd.dipolar else None
        concentration = np.zeros(n_t) if not pd.dipolar else None
        inv_tau_w = 1.0 / tau
        neg_mass = 0.0
        pos_mass = 0.0
        for i, ti in enumerate(axes.t):
            phase = lam * (ti / scales.time)
            ctil = coeff * (np.cos(phase) - 1j * np.sin(phase))[None, :]
            SF = ctil @ F.T
            SG = ctil @ G.T
            rate = -(m / (2.0 * math.pi * hbar)) * inv_tau_w[None, :] * (
                np.real(np.conj(SF) * SG))            # (n_u, M)
            pbar = m * d / ti
            kappa = pbar * qbar / (dp * dp)
            gauss = np.exp(-(pbar - qbar) ** 2 / (2.0 * dp * dp))
            w_even = (self.node_w * self.coef_even * gauss
                      * sps.ive(0, kappa))
            block = slice(i * stride, i * stride + M)
            A = w_even @ rate
            even[i, block] = A
            if pd.dipolar:
                w_cos2 = (self.node_w * self.coef_cos2 * gauss
                          * sps.ive(2, kappa))
                cos2[i, block] = w_cos2 @ rate
            else:
                concentration[i] = kappa[0]
            Tj = axes.T[block]
            w_time = tau if spec.jacobian == "tau" else Tj
            P = (d * d * Tj * Tj / ti ** 3) * (m * m / w_time ** 2) \
                / (dp * dp) * A
            neg_mass += -P[P < 0.0].sum()
            pos_mass += P[P > 0.0].sum()
            density[i, block] = np.maximum(P, 0.0)

        if pd.dipolar:
            with np.errstate(invalid="ignore", divide="ignore"):
                ratio = np.where(even > 0.0, cos2 / np.maximum(even, 1e-300),
                                 0.0)
            ratio = np.clip(ratio, 0.0, 1.0)
        else:
            ratio = None
        meta = {"fraction": fraction, "engine": get_engine(),
                "clipped_mass": float(neg_mass / max(pos_mass, 1e-300)),
                "n_z": int(z.shape[0]), "n_tau": int(M),
                "tau_lo": float(tau[0]), "tau_hi": float(tau[-1]),
                "g0": self.g0, "n_max": basis.n_max}
        return FoldedMap(g=g, t=axes.t.copy(), T=axes.T.copy(),
                         density=density, azimuth_model=(
                             "dipole" if pd.dipolar else "vonmises"),
                         pol_angle=self.pol_angle, azimuth_ratio=ratio,
                         concentration=concentration,
                         jacobian=spec.jacobian, metadata=meta)


def build_folded_map(n_max: int, trap: TrapConfig,
                     photodetach: PhotodetachConfig, geometry: DiskGeometry,
                     spec: GridSpec = GridSpec(), g: float = G_DEFAULT,
                     constants: PhysicalConstants = CONSTANTS) -> FoldedMap:
    """One-shot folded map at a single gravity value."""
    return MapMaker(n_max, trap, photodetach, geometry, spec, g0=g,
                    constants=constants).build(g)


# ---------------------------------------------------------------------------
# unfolded detector cut and the brute-force spot value

@dataclass(frozen=True)
class DetectorMap:
    """Unfolded event-rate density on a (Y, T) cut at X = 0."""

    g: float
    y: np.ndarray
    T: np.ndarray
    density: np.ndarray
    jacobian: str
    metadata: dict = field(compare=False)


def current_map_yt(basis: GQSBasis, trap: TrapConfig,
                   photodetach: PhotodetachConfig, geometry: DiskGeometry,
                   y_values, T_values, spec: GridSpec = GridSpec(),
                   clip: bool = True,
                   constants: PhysicalConstants = CONSTANTS) -> DetectorMap:
    """Density per unit detector area and time along the Y axis (X = 0)."""
    y = np.asarray(y_values, dtype=float)
    T = np.asarray(T_values, dtype=float)
    if np.any(y <= geometry.travel_distance):
        raise DomainError("detector cut must lie beyond the mirror edge")
    if np.any(T <= 0.0):
        raise DomainError("arrival times must be positive")
    pol = np.asarray(photodetach.polarization)
    nz2 = pol[2] ** 2
    if photodetach.dipolar and not (nz2 < 1e-12 or nz2 > 1.0 - 1e-12):
        raise ConfigError("detector cuts support polarization either in the "
                          "plane or vertical")
    m = constants.atom_mass
    hbar = constants.hbar
    scales = basis.scales
    d = geometry.travel_distance
    tmat = T[None, :] * d / y[:, None]
    taumat = T[None, :] - tmat
    if np.any(taumat <= 0.0):
        raise DomainError("every (y, T) cell must leave time for the fall")

    if photodetach.dipolar:
        u, wu = np.polynomial.legendre.leggauss(spec.n_polar)
        coef_even = 0.75 * ((1.0 - nz2) * (1.0 - u ** 2) + 2.0 * nz2 * u ** 2)
        coef_cos2 = 0.75 * (1.0 - nz2) * (1.0 - u ** 2)
    else:
        u, wu = np.asarray([pol[2]]), np.ones(1)
        coef_even = np.ones(1)
        coef_cos2 = np.zeros(1)
    pol_angle = float(math.atan2(pol[1], pol[0])) if (1.0 - nz2) > 1e-24 \
        else 0.0
    coeff = overlap_matrix(basis, geometry.release_height, trap.width,
                           photodetach.recoil_momentum * u)

    grid = _build_mode_grid(basis, geometry,
                            (float(taumat.min()), float(taumat.max())), spec)
    z = grid.xi * scales.length
    chi_w = grid.chi * (grid.wxi * math.sqrt(scales.length))[None, :]
    tau_flat = taumat.ravel()
    t_flat = tmat.ravel()
    F, G = mode_chirp_sums(np.ascontiguousarray(chi_w), z, grid.idx_cut,
                           m / (2.0 * hbar * tau_flat),
                           -geometry.fall_height + 0.5 * scales.g
                           * tau_flat ** 2,
                           1.0 / tau_flat, scales.g * tau_flat)

    lam = basis.table.values
    dp = trap.momentum_spread
    qbar = photodetach.recoil_momentum * np.sqrt(np.maximum(0.0, 1.0 - u * u))
    dens = np.empty(tau_flat.shape[0])
    w_time_flat = tau_flat if spec.jacobian == "tau" \
        else np.repeat(T[None, :], y.shape[0], axis=0).ravel()
    # at X = 0 the detector azimuth is +-pi/2; cos 2(phi - pol_angle) there
    cos2phi = math.cos(2.0 * (0.5 * math.pi - pol_angle))
    chunk = 2048
    for c0 in range(0, tau_flat.shape[0], chunk):
        sl = slice(c0, min(c0 + chunk, tau_flat.shape[0]))
        phase = np.outer(t_flat[sl] / scales.time, lam)
        ctil = coeff[None, :, :] * (np.cos(phase)
                                    - 1j * np.sin(phase))[:, None, :]
        SF = np.einsum("cun,cn->cu", ctil, F[sl])
        SG = np.einsum("cun,cn->cu", ctil, G[sl])
        rate = -(m / (2.0 * math.pi * hbar)) / tau_flat[sl][:, None] * (
            np.real(np.conj(SF) * SG))
        pbar = m * d / t_flat[sl]
        kap = np.outer(pbar, qbar) / (dp * dp)
        gauss = np.exp(-(pbar[:, None] - qbar[None, :]) ** 2
                       / (2.0 * dp * dp))
        if photodetach.dipolar:
            # only harmonics 0 and 2 of the kick azimuth survive the
            # dipole marginal, so the ring fold closes exactly
            wmix = (coef_even[None, :] * sps.ive(0, kap)
                    + cos2phi * coef_cos2[None, :] * sps.ive(2, kap))
        else:
            # single kick direction: evaluate the Gaussian ridge at the
            # detector azimuth (+pi/2 on the Y cut) directly
            wmix = np.exp(kap * (math.cos(0.5 * math.pi - pol_angle) - 1.0))
        dens[sl] = ((wu[None, :] * gauss * wmix) * rate).sum(axis=1) \
            * (m * m / w_time_flat[sl] ** 2) / (2.0 * math.pi * dp * dp)
    density = dens.reshape(y.shape[0], T.shape[0])
    neg = -density[density < 0.0].sum()
    pos = density[density > 0.0].sum()
    if clip:
        density = np.maximum(density, 0.0)
    meta = {"clipped_mass": float(neg / max(pos, 1e-300)),
            "engine": get_engine(), "n_z": int(z.shape[0])}
    return DetectorMap(g=scales.g, y=y.copy(), T=T.copy(), density=density,
                       jacobian=spec.jacobian, metadata=meta)


def annihilation_current(basis: GQSBasis, trap: TrapConfig,
                         photodetach: PhotodetachConfig,
                         geometry: DiskGeometry, x: float, y: float,
                         T: float, spec: GridSpec = GridSpec(),
                         n_azimuth: int = 16,
                         constants: PhysicalConstants = CONSTANTS) -> float:
    """Brute-force event-rate density at one detector point.

    Sums explicit kick directions with plain two-dimensional Gaussians, with
    no azimuth folding, no shared lattice and no clipping: the independent
    cross-check for the assembled maps.
    """
    rbar = math.hypot(x, y)
    if rbar <= geometry.travel_distance:
        raise DomainError("detector point must lie beyond the mirror edge")
    if T <= 0.0:
        raise DomainError("arrival time must be positive")
    t = T * geometry.travel_distance / rbar
    tau = T - t
    m = constants.atom_mass
    hbar = constants.hbar
    scales = basis.scales
    if photodetach.dipolar:
        u, wu = np.polynomial.legendre.leggauss(spec.n_polar)
        phi = 2.0 * math.pi * (np.arange(n_azimuth) + 0.5) / n_azimuth
    else:
        u, wu = np.asarray([photodetach.polarization[2]]), np.ones(1)
        phi = np.asarray([math.atan2(photodetach.polarization[1],
                                     photodetach.polarization[0])])
    coeff = overlap_matrix(basis, geometry.release_height, trap.width,
                           photodetach.recoil_momentum * u)
    grid = _build_mode_grid(basis, geometry, (tau, tau), spec)
    z = grid.xi * scales.length
    chi_w = grid.chi * (grid.wxi * math.sqrt(scales.length))[None, :]
    F, G = mode_chirp_sums(np.ascontiguousarray(chi_w), z, grid.idx_cut,
                           np.asarray([m / (2.0 * hbar * tau)]),
                           np.asarray([-geometry.fall_height
                                       + 0.5 * scales.g * tau * tau]),
                           np.asarray([1.0 / tau]),
                           np.asarray([scales.g * tau]))
    lam = basis.table.values
    ph = lam * (t / scales.time)
    ctil = coeff * (np.cos(ph) - 1j * np.sin(ph))[None, :]
    SF = ctil @ F[0]
    SG = ctil @ G[0]
    rate_u = -(m / (2.0 * math.pi * hbar * tau)) * np.real(np.conj(SF) * SG)

    dp = trap.momentum_spread
    pvec = m * np.asarray([x, y]) / T
    su = np.sqrt(np.maximum(0.0, 1.0 - u * u))
    pol = np.asarray(photodetach.polarization)
    total = 0.0
    for iu in range(u.shape[0]):
        qx = photodetach.recoil_momentum * su[iu] * np.cos(phi)
        qy = photodetach.recoil_momentum * su[iu] * np.sin(phi)
        d2 = (pvec[0] - qx) ** 2 + (pvec[1] - qy) ** 2
        gauss = np.exp(-d2 / (2.0 * dp * dp)) / (2.0 * math.pi * dp * dp)
        if photodetach.dipolar:
            proj = (su[iu] * np.cos(phi) * pol[0]
                    + su[iu] * np.sin(phi) * pol[1] + u[iu] * pol[2])
            w_dir = 1.5 * proj ** 2 * wu[iu] / n_azimuth
        else:
            w_dir = np.ones(1)
        total += float((w_dir * gauss).sum() * rate_u[iu])
    w_time = tau if spec.jacobian == "tau" else T
    return total * (m * m / (w_time * w_time))
