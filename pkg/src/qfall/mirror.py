"""Evolution of the retained state while it glides above the disk.

Above the mirror each mode only acquires the energy phase exp(-i lambda_n
t / t_g) (epsilon_g t_g = hbar, so E_n t / hbar = lambda_n t / t_g).  The
horizontal motion is free flight: an atom detected at radial distance rbar
from the release point after a total fall time T spent t = T d / rbar above
the disk of radius d, because the horizontal velocity is a constant of the
motion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .airy import momentum_matrix
from .errors import DomainError
from .gqs import GQSBasis


@dataclass(frozen=True)
class DiskGeometry:
    """Release point and detector layout (SI lengths).

    release_height: initial height of the atom above the mirror surface
    travel_distance: horizontal extent of the mirror from release to its edge
    fall_height: drop from the mirror edge to the detection plane
    """

    release_height: float
    travel_distance: float
    fall_height: float

    def __post_init__(self):
        for name in ("release_height", "travel_distance", "fall_height"):
            if not getattr(self, name) > 0.0:
                raise DomainError(f"{name} must be positive")


def time_above_mirror(geometry: DiskGeometry, radial_distance, total_time):
    """t = T d / rbar for an atom landing at rbar after total time T."""
    rbar = np.asarray(radial_distance, dtype=float)
    total = np.asarray(total_time, dtype=float)
    if np.any(rbar <= geometry.travel_distance):
        raise DomainError("detection radius must exceed the mirror radius")
    if np.any(total <= 0.0):
        raise DomainError("total fall time must be positive")
    t = total * geometry.travel_distance / rbar
    return t if t.ndim else float(t)


def evolve_to_end_of_disk(basis: GQSBasis, coefficients: np.ndarray,
                          t: float) -> np.ndarray:
    """Apply the mode phases accumulated during a time t above the mirror."""
    if t < 0.0:
        raise DomainError("time above the mirror must be nonnegative")
    phase = basis.table.values * (t / basis.scales.time)
    return coefficients * (np.cos(phase) - 1j * np.sin(phase))


def momentum_distribution_end(basis: GQSBasis, coefficients: np.ndarray,
                              t: float, momenta, samples: float = 12.0):
    """Vertical momentum density |psi~(p)|^2 at the end of the disk."""
    evolved = evolve_to_end_of_disk(basis, coefficients, t)
    mat = momentum_matrix(basis.table, np.asarray(momenta, dtype=float),
                          basis.scales, samples=samples)
    amp = evolved @ mat
    return np.abs(amp) ** 2
