"""Asymptotic moments of correlated Gram matrices and polynomial-expansion detection."""

__version__ = "0.1.0"

from .channel_models import (  # noqa: E402
    ChannelRealization,
    CorrelationProfile,
    draw_channel,
    gram,
    make_distributed_antenna_profile,
    make_identity_profile,
    make_jakes_profile,
    make_mimo_mac_profile,
    psd_sqrt,
)
from .detectors import (  # noqa: E402
    DetectorWeights,
    SinrReport,
    ber_bpsk,
    build_weight_system,
    lmmse_detect,
    lmmse_sinr_exact,
    optimal_weights,
    poly_detect,
    sinr_asymptotic,
    sinr_exact,
    solve_weights,
)
from .moment_engine import (  # noqa: E402
    MomentRecursionState,
    MomentTable,
    compute_recursion,
    empirical_moments,
    empirical_user_moments,
    global_moments,
    per_user_moments,
    weighted_moments,
)
from .stieltjes import FixedPointSolution, lmmse_asymptotic_sinr, solve, stieltjes_m  # noqa: E402
