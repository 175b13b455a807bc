"""QKD simulation and analysis toolkit for imperfect single-photon sources.

Modules
-------
photonics   source statistics, polarization projection, channel, detectors
session     deterministic Monte Carlo engine (QKD and HBT runs)
streams     time-tag streams and their CSV/binary formats
timetag     delay histograms, temporal filtering, g2 estimation
protocol    B92 encoding, sifting, QBER measurement
security    secret-key-rate analytics and the per-pulse probability oracle
calibrate   saturation, lifetime and misalignment fits
cli         command-line front end
"""

from .photonics import (
    ChannelParams,
    DetectorParams,
    EfficiencyBudget,
    PhotonNumberDist,
    PolAngle,
    SaturationModel,
    SourceParams,
    efficiency_budget,
    emission_delay_cdf,
    malus_prob,
    multiphoton_prob,
    photon_number_dist,
    saturation_rate,
)
from .protocol import PulseLedger, PulseRecord, SiftedKey, b92_sift, encode_pattern, measure_qber
from .security import (
    KeyRateReport,
    OracleReport,
    SecurityInputs,
    SweepParams,
    beta_factor,
    binary_entropy,
    click_probability_oracle,
    compression_tau,
    ec_factor,
    expected_qber,
    skr_from_observed,
    skr_per_pulse,
    sweep_loss,
)
from .session import ScenarioConfig, derive_substream_seed, run_hbt_session, run_qkd_session
from .streams import Channel, TimeTagStream
from .timetag import (
    DelayHistogram,
    FilterScanRow,
    FilterWindow,
    apply_window,
    build_histogram,
    estimate_g2,
    filter_scan,
)
from .calibrate import PowerRatePoint, calibrate_q, fit_lifetime, fit_saturation

__version__ = "0.1.0"
