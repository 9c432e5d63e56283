"""Decentralized CBF-based highway merging: controllers, QP core, simulator,
metrics, and a reproducible Monte Carlo harness."""

from .constraints import BarrierGains, barrier_value, box_rows, constraint_row
from .controllers import (
    ControllerGains,
    DisturbanceLedger,
    Snapshot,
    c_cbf_step,
    dpc_cbf_step,
    fifo_step,
    make_controller,
)
from .geometry import Lane, LanePosition, OutOfZoneError, RoadNetwork, pair_separation, to_plane
from .qp import BACKEND, QpProblem, QpSolution, QpStatus, kkt_residuals, solve
from .simulation import (
    FaultSpec,
    Scenario,
    StepLog,
    VehicleParams,
    VehicleSpec,
    VehicleState,
    faulted_step,
    plant_step,
    run_scenario,
)

__version__ = "0.1.0"
