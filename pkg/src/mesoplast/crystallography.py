"""FCC slip-system catalogue, loading orientations and Schmid factors.

All crystallographic vectors are stored in the crystal (cube) basis and
rotated to the laboratory frame with a crystal-to-global matrix ``A``
(``v_global = A @ v_crystal``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_SQRT2 = np.sqrt(2.0)
_SQRT3 = np.sqrt(3.0)
_SQRT6 = np.sqrt(6.0)

# The 12 glissile FCC systems, ordered lexicographically by plane normal and
# then by slip direction. Sign convention: the first nonzero component of
# each (unnormalized) plane normal and direction is positive.
_FCC_TABLE = [
    # plane (1,-1,-1)
    ((0, 1, -1), (1, -1, -1)),
    ((1, 0, 1), (1, -1, -1)),
    ((1, 1, 0), (1, -1, -1)),
    # plane (1,-1,1)
    ((0, 1, 1), (1, -1, 1)),
    ((1, 0, -1), (1, -1, 1)),
    ((1, 1, 0), (1, -1, 1)),
    # plane (1,1,-1)
    ((0, 1, 1), (1, 1, -1)),
    ((1, -1, 0), (1, 1, -1)),
    ((1, 0, 1), (1, 1, -1)),
    # plane (1,1,1)
    ((0, 1, -1), (1, 1, 1)),
    ((1, -1, 0), (1, 1, 1)),
    ((1, 0, -1), (1, 1, 1)),
]


@dataclass(frozen=True)
class SlipSystem:
    """One glissile FCC system: unit Burgers direction and plane normal."""

    burgers_dir: np.ndarray
    plane_normal: np.ndarray
    index: int

    def __post_init__(self):
        object.__setattr__(self, "burgers_dir", np.asarray(self.burgers_dir, float))
        object.__setattr__(self, "plane_normal", np.asarray(self.plane_normal, float))


@dataclass(frozen=True)
class Orientation:
    """Crystal-to-global rotation, ``v_global = c2g @ v_crystal``."""

    c2g: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.c2g, float)
        if A.shape != (3, 3):
            raise ValueError("c2g must be a 3x3 matrix")
        if not np.allclose(A @ A.T, np.eye(3), atol=1e-10):
            raise ValueError("c2g must be orthogonal")
        if np.linalg.det(A) < 0:
            raise ValueError("c2g must be a proper rotation (det = +1)")
        object.__setattr__(self, "c2g", A)

    def to_global(self, v_crystal) -> np.ndarray:
        return self.c2g @ np.asarray(v_crystal, float)

    def to_crystal(self, v_global) -> np.ndarray:
        return self.c2g.T @ np.asarray(v_global, float)


def fcc_catalogue() -> list[SlipSystem]:
    """All 12 <110>{111} systems with normalized vectors.

    The ordering (by plane, then direction, lexicographic, first nonzero
    component positive) is fixed so density insertion weighted by Schmid
    factors is reproducible.
    """
    systems = []
    for idx, (b, n) in enumerate(_FCC_TABLE):
        bv = np.array(b, float) / _SQRT2
        nv = np.array(n, float) / _SQRT3
        systems.append(SlipSystem(burgers_dir=bv, plane_normal=nv, index=idx))
    return systems


def orientation_tension() -> Orientation:
    """Symmetric double-slip orientation for uniaxial tension along Y.

    Rows are the global basis vectors in crystal components: X = [0,-1,1]/sqrt2,
    Y = [2,1,1]/sqrt6, Z = [-1,1,1]/sqrt3.
    """
    A = np.array([
        [0.0, -1.0 / _SQRT2, 1.0 / _SQRT2],
        [2.0 / _SQRT6, 1.0 / _SQRT6, 1.0 / _SQRT6],
        [-1.0 / _SQRT3, 1.0 / _SQRT3, 1.0 / _SQRT3],
    ])
    return Orientation(c2g=A)


def orientation_shear() -> Orientation:
    """Orientation for simple shear: slip direction [011] along global X."""
    A = np.array([
        [0.0, 1.0 / _SQRT2, 1.0 / _SQRT2],
        [-1.0 / _SQRT3, 1.0 / _SQRT3, -1.0 / _SQRT3],
        [-2.0 / _SQRT6, -1.0 / _SQRT6, 1.0 / _SQRT6],
    ])
    return Orientation(c2g=A)


def schmid_factor(system: SlipSystem, orientation: Orientation,
                  applied_stress, load_magnitude: float) -> float:
    """Resolved shear stress on a system per unit applied load.

    ``f = b_g . (sigma @ n_g) / load_magnitude`` with the Burgers direction
    and plane normal rotated to the laboratory frame. The normalization is
    the scalar load magnitude (t22 for tension, t12 for shear), not a tensor
    norm of the applied stress.
    """
    if load_magnitude <= 0.0:
        raise ValueError("load_magnitude must be positive")
    sigma = np.asarray(applied_stress, float)
    b_g = orientation.to_global(system.burgers_dir)
    n_g = orientation.to_global(system.plane_normal)
    return float(b_g @ (sigma @ n_g)) / load_magnitude


# Mobile segments are inserted on the two systems driven by each built-in
# loading orientation: primary + conjugate for the symmetric double-slip
# tension setup, and the two coplanar systems of the shear setup.
TENSION_ACTIVE_SYSTEMS = (8, 5)   # [101](11-1), [110](1-11)
SHEAR_ACTIVE_SYSTEMS = (3, 4)     # [011](1-11), [101]-type on (1-11)


def default_active_systems(orientation: Orientation) -> tuple[int, ...] | None:
    """Active-system set for the two built-in orientations, else None.

    None means "no default": callers then either pass an explicit list or
    distribute over all 12 systems by Schmid weight.
    """
    if np.allclose(orientation.c2g, orientation_tension().c2g, atol=1e-12):
        return TENSION_ACTIVE_SYSTEMS
    if np.allclose(orientation.c2g, orientation_shear().c2g, atol=1e-12):
        return SHEAR_ACTIVE_SYSTEMS
    return None


def tension_stress(load: float) -> np.ndarray:
    """Uniaxial t22 stress tensor."""
    s = np.zeros((3, 3))
    s[1, 1] = load
    return s


def shear_stress(load: float) -> np.ndarray:
    """Symmetric t12 stress tensor."""
    s = np.zeros((3, 3))
    s[0, 1] = s[1, 0] = load
    return s


def orientation_from_config(value) -> Orientation:
    """Resolve an orientation config entry.

    Accepts ``"tension"``, ``"shear"`` or nine whitespace/comma separated
    matrix entries (row major).
    """
    if isinstance(value, Orientation):
        return value
    if isinstance(value, str):
        key = value.strip().lower()
        if key == "tension":
            return orientation_tension()
        if key == "shear":
            return orientation_shear()
        parts = [p for p in value.replace(",", " ").split() if p]
        if len(parts) == 9:
            return Orientation(c2g=np.array([float(p) for p in parts]).reshape(3, 3))
        raise ValueError(f"unrecognized orientation {value!r}")
    arr = np.asarray(value, float)
    if arr.shape == (3, 3):
        return Orientation(c2g=arr)
    raise ValueError(f"unrecognized orientation {value!r}")
