from .acc import MicroOp, acc_crack, acc_step, run_core_acc
from .oneipc import oneipc_step, run_core_oneipc
from .system import CoreStats, SimulationError, System, SystemResult, run_core, run_workload

__all__ = [
    "MicroOp", "acc_crack", "acc_step", "run_core_acc", "oneipc_step", "run_core_oneipc",
    "CoreStats", "SimulationError", "System", "SystemResult", "run_core", "run_workload",
]
