"""Elastic graph smoothing: l1 + l2 penalized signal estimation on graphs,
a convergent message passing solver, and a semi-supervised node classifier
trained end to end through the unrolled solver."""

from .errors import InputError, NumericError
from .graphs import (Graph, NormalizedOperators, as_signal, build_graph,
                     load_graph, normalized_operators, spectral_norm)
from .solver import (EMPConfig, EMPState, ObjectiveBreakdown, Penalty,
                     appnp_reference_step, default_stepsizes, emp_run,
                     emp_step, initial_state, objective, prox_l2ball_rows,
                     prox_linf_clip)
from .oracles import (OracleMethod, OracleReport, closed_form_report,
                      exact_l2_solution, finite_difference_grad,
                      subgradient_solve)
from .nn import (MLPModel, TrainConfig, TrainReport, evaluate, forward,
                 init_model, loss, backward, adam_step, train)
from .data import (Dataset, SyntheticSpec, generate_synthetic, load_dataset,
                   load_perturbed_edges, write_dataset)

__version__ = "0.1.0"

__all__ = [
    "InputError", "NumericError",
    "Graph", "NormalizedOperators", "as_signal", "build_graph", "load_graph",
    "normalized_operators", "spectral_norm",
    "EMPConfig", "EMPState", "ObjectiveBreakdown", "Penalty",
    "appnp_reference_step", "default_stepsizes", "emp_run", "emp_step",
    "initial_state", "objective", "prox_l2ball_rows", "prox_linf_clip",
    "OracleMethod", "OracleReport", "closed_form_report", "exact_l2_solution",
    "finite_difference_grad", "subgradient_solve",
    "MLPModel", "TrainConfig", "TrainReport", "evaluate", "forward",
    "init_model", "loss", "backward", "adam_step", "train",
    "Dataset", "SyntheticSpec", "generate_synthetic", "load_dataset",
    "load_perturbed_edges", "write_dataset",
    "__version__",
]
