"""Coupled discrete dislocation dynamics / continuum crystal plasticity.

The package has three layers:

* ``mesoplast.dd`` -- a simplified 3D discrete dislocation dynamics engine:
  straight boundary-to-boundary segments with non-singular isotropic stress
  fields, overdamped glide, junction pinning against a sessile forest and
  thermally activated junction breaking.
* ``mesoplast.pta`` -- time averaging of the fast dislocation dynamics at
  frozen load, producing slow-scale plastic strain rates, plus the
  single-box slow-time driver.
* ``mesoplast.fem`` / ``mesoplast.coupling`` -- a finite element solver for
  the mesoscale field dislocation mechanics system (dislocation density
  transport, incompatibility recovery, equilibrium) fed block-wise by the
  time-averaged dislocation dynamics.

``mesoplast.harness`` orchestrates scenarios, ensembles and reporting; the
``mesoplast`` console script exposes the drivers.
"""

from mesoplast.crystallography import (
    Orientation,
    SlipSystem,
    fcc_catalogue,
    orientation_shear,
    orientation_tension,
    schmid_factor,
)
from mesoplast.dd.materials import MaterialParams, JunctionParams, table_material

__version__ = "0.1.0"

__all__ = [
    "Orientation",
    "SlipSystem",
    "fcc_catalogue",
    "orientation_shear",
    "orientation_tension",
    "schmid_factor",
    "MaterialParams",
    "JunctionParams",
    "table_material",
    "__version__",
]
