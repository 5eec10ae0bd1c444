from __future__ import annotations

import numpy as np
import pytest

from dldspec.config import RunConfig, run_config_from_dict


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)


@pytest.fixture
def default_config() -> RunConfig:
    return run_config_from_dict({})


@pytest.fixture
def small_config() -> RunConfig:
    """Short default-physics run for fast end-to-end tests (~15k pulses)."""
    return run_config_from_dict({"simulation": {"duration_ps": 2e8, "seed": 7}})


def make_config(**sim_overrides) -> RunConfig:
    doc: dict = {"simulation": {}}
    geometry = sim_overrides.pop("geometry", None)
    correlation = sim_overrides.pop("correlation", None)
    doc["simulation"].update(sim_overrides)
    if geometry:
        doc["geometry"] = geometry
    if correlation:
        doc["correlation"] = correlation
    return run_config_from_dict(doc)
