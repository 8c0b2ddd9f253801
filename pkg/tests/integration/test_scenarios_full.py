"""Full runs of every registered scenario at its pinned resolution.

LPs at these resolutions go through HiGHS.
"""

import pytest

from stefan_lab.core.primal_dual import SolverOptions
from stefan_lab.core.scenarios import SCENARIOS, ScenarioConfig, run_scenario

HIGHS = SolverOptions(backend='highs')


@pytest.mark.slow
@pytest.mark.parametrize('name', sorted(SCENARIOS))
def test_scenario_passes(name, isolated_home):
    report = run_scenario(name, ScenarioConfig(quiet=True, threads=4, solver=HIGHS))
    failed = [(c.name, c.measured, c.expected) for c in report.failed]
    assert report.passed, failed
    assert report.criteria
    assert report.elapsed > 0.0


@pytest.mark.slow
def test_boundary_non_universality_is_informational(isolated_home):
    report = run_scenario('non_universality', ScenarioConfig(quiet=True, solver=HIGHS), eps=90.0 / 2048.0)
    assert report.measured['boundary_case'] is True
    assert report.criterion('boundary case flagged').informational
