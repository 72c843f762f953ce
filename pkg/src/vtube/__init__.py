"""Distributed virtual-tube passing for UAV swarms: control law and simulator."""

from .controller import AuxTubes, ControlParams, ControlTermSet, build_aux_tubes, dispatch, tube_command
from .dynamics import SwarmLimits, UavParams, UavState, filtered_position, step_euler, step_exact
from .geometry import Region, TubeSpec, arrival_test, classify_region
from .potentials import PotentialParams
from .simulation import Event, RunRecord, SimSettings, World, metrics, run

__version__ = "0.1.0"

__all__ = [
    "AuxTubes", "ControlParams", "ControlTermSet", "Event", "PotentialParams", "Region",
    "RunRecord", "SimSettings", "SwarmLimits", "TubeSpec", "UavParams", "UavState", "World",
    "arrival_test", "build_aux_tubes", "classify_region", "dispatch", "filtered_position",
    "metrics", "run", "step_euler", "step_exact", "tube_command",
]
