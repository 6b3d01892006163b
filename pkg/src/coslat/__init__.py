"""Cooperative simultaneous localization and tracking in sensor networks.

Particle-based belief propagation jointly localizes cooperating sensors and
tracks a noncooperative target; the likelihood-consensus scheme makes the
target update fully distributed.  A separate-CSL+DTT baseline and a Monte
Carlo harness reproduce the two benchmark scenarios.
"""

from .baseline import csl_step, dtt_step
from .consensusnet import (
    CommGraph,
    ConsensusConfig,
    TopologyViolationError,
    consensus_round,
    mailbox_exchange,
    run_consensus,
)
from .harness import RunRecord, export_csv, read_rmse_csv, rmse_curves, run_experiment
from .lconsensus import (
    BasisSpec,
    FitError,
    fit_log_message,
    fit_log_values,
    lc_target_belief,
    monomials,
    reconstruct_weights,
)
from .msgpass import (
    Belief,
    CoslatEngine,
    EngineConfig,
    MeasurementMessage,
    NetState,
    NodeModel,
    PredictionMessage,
    belief_update,
    coslat_step,
    extrinsic_message,
    measurement_message,
    prediction_message,
)
from .particles import (
    DegenerateWeightsError,
    KernelMessage,
    ParticleSet,
    importance_weight,
    kde_evaluate,
    moments,
    resample,
)
from .scenario import (
    MovementGate,
    NodeSpec,
    ScenarioConfig,
    TopologySnapshot,
    WorldState,
    build_topology,
    default_config,
    gate_movement,
    generate_measurements,
    generate_truth,
    load_config,
    load_truth,
    save_config,
    save_truth,
    validate_config,
)
from .statespace import (
    BoxVelocityPrior,
    DiracPrior,
    GaussianPrior,
    GaussianRangeNoise,
    MotionModel,
    propagate,
    range_likelihood,
    range_measurement,
)

__version__ = "0.1.0"
