"""Power-distortion interference classification for GNSS tracking channels.

Simulates complex correlator tap vectors under clean, multipath,
spoofing, and jamming conditions, measures received power together with
either a single-signal maximum-likelihood residual distortion statistic
or a two-tap symmetric difference, and classifies measurements with
Bayes-risk decision regions designed by Monte Carlo.
"""

from .bayes import (
    ConfusionMatrix,
    CostModel,
    Dataset,
    DecisionGridSpec,
    DecisionRegionGrid,
    HypothesisPriors,
    JammerPrior,
    MonteCarloConfig,
    MultipathPrior,
    SpoofPrior,
    TimelinePhase,
    TimelineResult,
    classify,
    confusion,
    design_regions,
    draw_scenario,
    generate_dataset,
    simulate_timeline,
    validate_schedule,
)
from .corrsim import (
    Hypothesis,
    NoiseModel,
    ScenarioParams,
    TapGrid,
    TapVector,
    agc_scale,
    autocorr,
    make_tap_grid,
    noise_covariance,
    noise_from_cn0,
    sample_noise,
    simulate_taps,
)
from .mle import (
    DegenerateGeometryError,
    MlConfig,
    SignalEstimate,
    coarse_search,
    distortion,
    fit_batch,
    fit_cost,
    refine_bisect,
    wls_solve,
)
from .monitors import (
    Measurement,
    PowerModel,
    default_sd_offset,
    measure_power,
    symmetric_difference,
)

__version__ = "0.1.0"
