"""Reference results on the bundled 3-, 6- and 14-bus cases.

These solve many dense moment relaxations and are deselected with
``pytest -m "not slow"``.
"""
import numpy as np
import pytest

from pfcert.acpf import OperationalLimits
from pfcert.certify import (
    COUNTEREXAMPLE,
    certify_region,
    check_jacobian,
    fit_box_heuristic,
    interval_table,
    maximize_delta,
    maximize_gamma,
)
from pfcert.conic import Infeasible
from pfcert.constants import COUNTEREXAMPLE_TOL
from pfcert.region import RegionSpec
from pfcert.util import syncrun

pytestmark = pytest.mark.slow

# case3 is bounded in test_certify: its published gamma is conservative
REFERENCE_GAMMA = {"case6": 0.7, "case14": 0.58}

# bus, quantity, lower, upper
REFERENCE_CASE14_INTERVALS = [
    (2, "p", -0.2942, 0.5280),
    (3, "p", -0.1455, 0.1752),
    (4, "p", -0.3904, 0.7206),
    (5, "p", -0.5806, 0.5078),
    (6, "p", -0.1618, 0.3206),
    (7, "p", -0.2446, 0.3401),
    (8, "p", -0.1108, 0.1073),
    (9, "p", -0.3683, 0.3285),
    (10, "p", -0.1274, 0.3497),
    (11, "p", -0.0939, 0.1750),
    (12, "p", -0.0446, 0.1292),
    (13, "p", -0.0953, 0.2338),
    (14, "p", -0.0504, 0.1198),
    (4, "q", 0.2802, 0.7384),
    (5, "q", 0.4454, 0.8873),
    (7, "q", 0.0253, 0.1944),
    (9, "q", -0.0964, 0.1750),
    (10, "q", 0.0210, 0.2547),
    (11, "q", 0.0181, 0.1586),
    (12, "q", -0.0086, 0.1278),
    (13, "q", 0.0020, 0.2213),
    (14, "q", 0.0066, 0.1034),
]


@pytest.fixture(scope="module")
def case6_limits(case6):
    return OperationalLimits.from_network(
        case6, flow_limit=0.4, generator_limits=False
    )


@pytest.fixture(scope="module")
def case6_unit_box(case6):
    return RegionSpec.box(np.zeros(case6.k), np.ones(case6.k))


@pytest.mark.parametrize("name", ["case6", "case14"])
def test_gamma_within_band(request, name):
    net = request.getfixturevalue(name)
    lims = OperationalLimits.from_network(net, generator_limits=False)
    result = maximize_gamma(net, lims, 0.05, 2.0, tol=1e-2)
    reference = REFERENCE_GAMMA[name]
    assert result.gamma == pytest.approx(reference, rel=0.15)

    # every gamma in the trail at or below gamma* was certified
    for gamma, outcome in result.trail:
        if gamma <= result.gamma:
            assert outcome == "infeasible"
    if result.gamma + 0.1 <= 2.0:
        above = check_jacobian(net, lims, result.gamma + 0.1)
        assert not isinstance(above, Infeasible)


def test_case3_jacobian_at_unit_gamma(case3):
    lims = OperationalLimits.from_network(case3, generator_limits=False)
    assert isinstance(check_jacobian(case3, lims, 1.0), Infeasible)


def test_case6_jacobian_at_flow_bound(case6, case6_limits):
    assert isinstance(check_jacobian(case6, case6_limits, 0.4), Infeasible)


def test_case6_unit_box_delta(case6, case6_limits, case6_unit_box):
    result = syncrun(
        maximize_delta(
            case6,
            case6_limits,
            0.4,
            case6_unit_box,
            1.0,
            tol=5e-3,
            mc_samples=20,
        )
    )
    assert 0.70 <= result.delta <= 0.75
    assert result.result.certified
    assert result.failing is not None


def test_case6_counterexample_past_delta(case6, case6_limits, case6_unit_box):
    result = syncrun(
        certify_region(
            case6,
            case6_limits,
            0.4,
            case6_unit_box.with_delta(0.73),
            mc_samples=0,
        )
    )
    assert not result.certified
    failing = result.failing
    assert failing.label == "flow(1,5) upper"
    assert failing.verdict == COUNTEREXAMPLE
    assert failing.violation <= COUNTEREXAMPLE_TOL
    assert case6_unit_box.with_delta(0.73).contains(failing.injection, tol=1e-6)

    i, j = case6.internal_index(1), case6.internal_index(5)
    gap = abs(failing.voltage[i] - failing.voltage[j])
    assert gap >= 0.4 - 1e-5


@pytest.fixture(scope="module")
def case14_run(case14):
    lims = OperationalLimits.from_network(case14, generator_limits=False)
    gamma = maximize_gamma(case14, lims, 0.05, 1.0, tol=1e-2)
    fit = fit_box_heuristic(case14, lims, 10_000, seed=0)
    template = RegionSpec.box(fit.center, np.maximum(fit.widths, 1e-9))
    return syncrun(
        maximize_delta(case14, lims, gamma.gamma, template, 1.0, tol=1e-2)
    )


def test_case14_fitted_box_is_sound(case14, case14_run):
    result = case14_run.result
    assert result.certified
    assert result.soundness.passed
    assert result.soundness.min_slack >= 1e-6

    table = interval_table(case14, result.region)
    assert len(table) == len(REFERENCE_CASE14_INTERVALS)
    assert np.all(table["lower"] <= table["upper"])


@pytest.mark.xfail(
    reason="the reference intervals came from an unknown box-fit sample set",
    strict=False,
)
def test_case14_intervals_near_reference(case14, case14_run):
    table = interval_table(case14, case14_run.result.region)
    ours = {
        (bus, quantity): (lower, upper)
        for bus, quantity, lower, upper in table[
            ["bus", "quantity", "lower", "upper"]
        ].itertuples(index=False)
    }
    close = 0
    for bus, quantity, lower, upper in REFERENCE_CASE14_INTERVALS:
        got = ours[(bus, quantity)]
        low_ok = abs(got[0] - lower) <= 0.25 * abs(lower)
        high_ok = abs(got[1] - upper) <= 0.25 * abs(upper)
        close += low_ok and high_ok
    assert close >= 0.8 * len(REFERENCE_CASE14_INTERVALS)
