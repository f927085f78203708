"""Material and junction-model parameters."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class MaterialParams:
    """Isotropic elasticity, drag and core regularization.

    The default Poisson ratio is derived from (E, mu) so that the pair is
    consistent for an isotropic solid: nu = E/(2 mu) - 1.
    """

    youngs_modulus: float = 110e9      # Pa
    shear_modulus: float = 48e9        # Pa
    poisson: float = 110.0 / 96.0 - 1.0
    burgers_mag: float = 2.55e-10      # m
    drag: float = 6.30e-5              # Pa s
    core_radius: float = 2 * 2.55e-10  # m, non-singular spreading radius
    max_glide_velocity: float = 1500.0  # m/s, phonon-drag saturation

    def __post_init__(self):
        if min(self.youngs_modulus, self.shear_modulus, self.burgers_mag,
               self.drag, self.core_radius, self.max_glide_velocity) <= 0.0:
            raise ValueError("material parameters must be positive")
        if not 0.0 < self.poisson < 0.5:
            raise ValueError("poisson ratio must lie in (0, 0.5)")

    @property
    def lame_lambda(self) -> float:
        e, nu = self.youngs_modulus, self.poisson
        return e * nu / ((1 + nu) * (1 - 2 * nu))


@dataclass(frozen=True)
class JunctionParams:
    """Thermal activation of junction breaking.

    A mobile node pinning within ``capture_radius`` of another line forms
    a junction that breaks after f * max_breaking_time with f ~ U(0, 1).
    The breaking clock runs in fast (dimensional) time. A released node is
    immune to the line it was pinned on until it has glided an arc of
    ``release_factor`` capture radii, after which re-capture (junction
    re-forming) is allowed. By default crossing mobile lines pin each other
    just like the sessile forest, so drag-only motion always terminates in
    an arrested configuration.
    """

    enabled: bool = True
    max_breaking_time: float = 1e-3   # s
    capture_radius: float = 5 * 2.55e-10  # m
    release_factor: float = 2.0
    pin_mobile_mobile: bool = True

    def __post_init__(self):
        if self.max_breaking_time <= 0.0 or self.capture_radius <= 0.0:
            raise ValueError("junction parameters must be positive")


def table_material() -> MaterialParams:
    """Copper-like parameter set used throughout the studies."""
    return MaterialParams()
