"""isaclab: monostatic downlink ISAC precoding — bounds, designs, simulation.

Library plus CLI for LMMSE target-response estimation, eigenvalue-pairing MSE
lower bounds, water-filling sensing precoders, DoF-completion waveform
augmentation, and SINR-constrained MMSE precoder design via semidefinite
relaxation with constructive rank-one recovery.
"""

from .errors import (
    DimensionError,
    EmptyScene,
    IsaclabError,
    NotPositiveDefinite,
    NotPSD,
    NumericalFailure,
    ResidualNotPSD,
    ZeroBeamGain,
)
from .hermitian import EigenDecomposition, HermitianMatrix, eigh_desc, inv_pd, is_psd, sqrt_psd
from .model import (
    ChannelSet,
    SymbolBlock,
    SystemConfig,
    TargetScene,
    coherence_factor,
    dbm_to_watt,
    draw_target,
    gen_channels,
    gen_symbols,
    pathloss_gain,
    sample_covariance,
    steering_vector,
    target_covariance,
)
from .sensing import (
    SensingReceive,
    achievable_rate,
    lmmse_estimate,
    mse_analytic,
    mse_empirical,
    mse_of_precoder,
    per_user_sinr,
    simulate_echo,
)
from .bounds import (
    WaterfillResult,
    aligned_precoder,
    asymptotic_floor,
    lower_bound_full,
    lower_bound_rank_def,
    water_fill,
)
from .design import (
    DesignSolution,
    Precoder,
    VerifyReport,
    dof_complete,
    rank_one_extract,
    solve_mmse_sinr,
    verify_solution,
)
from .harness import (
    ExperimentSpec,
    ResultRow,
    default_scene,
    emit_results,
    empirical_checks,
    load_config,
    preset_spec,
    run_sinr_sweep,
    run_user_sweep,
)

__version__ = "0.1.0"
