"""Simplified 3D discrete dislocation dynamics on straight segments."""

from mesoplast.dd.materials import MaterialParams, JunctionParams, table_material
from mesoplast.dd.fields import segment_stress, segment_stress_many, pk_force, node_velocity
from mesoplast.dd.network import (
    CoarseObservables,
    DislocationNetwork,
    Junction,
    Segment,
    StepRejected,
    observables,
    step_network,
)
from mesoplast.dd.microstructure import MicrostructureError, generate_microstructure

__all__ = [
    "MaterialParams",
    "JunctionParams",
    "table_material",
    "segment_stress",
    "segment_stress_many",
    "pk_force",
    "node_velocity",
    "CoarseObservables",
    "DislocationNetwork",
    "Junction",
    "Segment",
    "StepRejected",
    "observables",
    "step_network",
    "MicrostructureError",
    "generate_microstructure",
]
