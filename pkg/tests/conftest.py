import pytest

from soi_forge import synth


@pytest.fixture(scope="session")
def crossover():
    scenario = synth.crossover_scenario()
    frames = synth.render_all(scenario)
    return scenario, frames, scenario.gt_boxes()


@pytest.fixture(scope="session")
def appearance_shift():
    scenario = synth.appearance_shift_scenario()
    frames = synth.render_all(scenario)
    return scenario, frames, scenario.gt_boxes()
