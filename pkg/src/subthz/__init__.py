"""Sub-THz indoor channel sounding, beam optics, metrics and gain-dependent models."""

from .beam import (
    ApertureSpec,
    GaussianBeam,
    QuadratureError,
    aperture_integral,
    beam_geometry,
    beam_profile_table,
    coupled_power,
    field_at,
    rayleigh_range,
    waist_from_gain,
    waveguide_gain,
    wavelength,
)
from .campaign import CampaignConfig, ConfigError, run_campaign
from .fitting import (
    DistributionFit,
    FitError,
    GainCurveFit,
    LogDistanceFit,
    empirical_cdf,
    fit_distribution,
    fit_gain_curve,
    fit_log_distance,
    ks_statistic,
)
from .io import CirRecord, DatasetError, ingest_cir_dataset, write_cir_jsonl
from .metrics import (
    MetricRecord,
    k_factor,
    path_loss_from_cir,
    rms_angular_spread,
    rms_delay_spread,
)
from .model import (
    ExtrapolationWarning,
    Scenario,
    SynthesisParams,
    ds_of_gain,
    friis_pl0,
    kfactor_of_gain,
    log_distance_pl,
    ple_of_gain,
    synthesize_channel,
)
from .sounding import (
    ChannelImpulseResponse,
    FrameNotFoundError,
    MultipathTap,
    SequenceError,
    SoundingConfig,
    apply_multipath,
    build_tx_frame,
    detect_peaks,
    extract_cir,
    generate_mseq,
    sound_channel,
)

__version__ = "0.1.0"
