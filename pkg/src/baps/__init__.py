"""Bayesian phase search carrier recovery for probabilistically shaped QAM."""

__version__ = "0.1.0"

from .channel import ChannelConfig, ChannelOutput, apply_channel, delta2_from_linewidth, wiener_phase
from .cpr import (
    CprConfig,
    CprResult,
    PilotEstimates,
    VonMisesPrior,
    baps,
    baps_block,
    bps,
    derotate,
    estimate_params,
    map_decision,
    pilot_ml_phase,
    ps_bps,
    recover_frame,
    supervised_cycle_slip_correct,
    von_mises_predict,
)
from .errors import ConfigurationError, DomainError
from .metrics import (
    MetricsRecord,
    error_rates,
    mutual_information,
    phase_error_stats,
    q_factor_from_ber,
)
from .shaping import (
    Constellation,
    Frame,
    ShapedPrior,
    build_qam,
    insert_pilots,
    lambda_for_rate,
    mb_prior,
    normalize,
    sample_source,
)
