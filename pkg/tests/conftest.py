import pytest

from spqkd import config as cfgmod
from spqkd.config import builtin_config_path
from spqkd.photonics import ChannelParams, DetectorParams, SourceParams
from spqkd.session import ScenarioConfig, run_qkd_session


@pytest.fixture(scope="session")
def paper_parser():
    return cfgmod.load_config(builtin_config_path("paper_b92"))


@pytest.fixture(scope="session")
def paper_cfg(paper_parser):
    return cfgmod.scenario_from_config(paper_parser)


@pytest.fixture(scope="session")
def paper_filter(paper_parser):
    return cfgmod.filter_settings(paper_parser)


@pytest.fixture(scope="session")
def paper_run(paper_cfg):
    """One shared 2.5 s simulation of the demonstration scenario."""
    return run_qkd_session(paper_cfg)


def ideal_scenario(duration_s=0.1, seed=7, **overrides) -> ScenarioConfig:
    """Lossless, dark-free, perfectly aligned single-photon scenario."""
    params = dict(
        source=SourceParams(
            mu=1.0, g2_zero=0.0, lifetime_ns=3.45, rep_rate_hz=1e6, sync_delay_ns=148.0
        ),
        channel=ChannelParams(loss_db=0.0, setup_transmission=1.0),
        detectors=(DetectorParams(1.0, 0.0), DetectorParams(1.0, 0.0)),
        pol_misalignment_deg=0.0,
        pattern=(0, 1),
        duration_s=duration_s,
        seed=seed,
    )
    params.update(overrides)
    return ScenarioConfig(**params)
