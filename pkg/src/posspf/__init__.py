"""Possibilistic state estimation and a bearings-only tracking benchmark."""

__version__ = "0.1.0"

from .possq import (
    DiscreteWaterPour,
    EmptyInput,
    GaussianPossibility,
    NoUnitWeight,
    TooConcentrated,
    WaterPouredDensity,
    WeightsOutOfRange,
    normalize_density_to_possibility,
    possibility_of_event,
    sample_discrete,
    sample_water_poured,
    water_pour_continuous,
    water_pour_discrete,
)
from .filters import (
    AllWeightsZero,
    FilterStepRecord,
    LinearGaussianTransition,
    ParticleSet,
    PossibilityPFOptions,
    TEXTBOOK_OPTIONS,
    possibility_pf_init,
    possibility_pf_predict_update,
    possibility_pf_resample,
    possibility_pf_step,
    standard_pf_init,
    standard_pf_step,
    systematic_resample,
)
from .tma import (
    AtOrigin,
    CrlbResult,
    DynamicsConfig,
    ObserverTrajectory,
    bearing,
    bearing_likelihood,
    bearing_log_likelihood,
    crlb_curve,
    init_prior,
    observer_input,
    process_noise_matrix,
    transition_matrix,
    transition_possibility,
    wrap_angle,
)
from .bench import (
    BatchResult,
    NoiseModel,
    PriorConfig,
    RunReport,
    Scenario,
    Table1Cell,
    build_canonical_scenario,
    is_divergent,
    nominal_target_track,
    run_batch,
    run_single,
    sample_target_track,
    scenario_crlb,
    synthesize_measurements,
    table1_experiment,
    wilson_interval,
)
