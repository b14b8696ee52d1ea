from .estimator import SpotIVEstimator, BootstrapFailureError
from .simulation_service import SimulationService, SimulationError, run_replication
from .dgp import generate, true_cate_oracle, true_phi_oracle, true_phi_curve
from .data_io import read_csv_dataset, write_csv_dataset, write_report, read_report

__all__ = [
    "SpotIVEstimator",
    "BootstrapFailureError",
    "SimulationService",
    "SimulationError",
    "run_replication",
    "generate",
    "true_cate_oracle",
    "true_phi_oracle",
    "true_phi_curve",
    "read_csv_dataset",
    "write_csv_dataset",
    "write_report",
    "read_report",
]
