import numpy as np
import pytest

from pfcert.acpf import (
    OperationalLimits,
    VoltageState,
    eval_operational,
    evaluate_F,
    jacobian_analytic,
    random_valid_state,
)
from pfcert.exceptions import RelaxationError
from pfcert.poly import (
    build_feasibility_system,
    build_jacobian_system,
    eval_poly,
    lift_state,
    poly_degree,
    split_point,
    variable_names,
)
from pfcert.region import RegionSpec


@pytest.fixture
def limits(case6):
    return OperationalLimits.from_network(case6, flow_limit=0.3)


@pytest.fixture
def state(case6):
    return random_valid_state(case6, np.random.default_rng(11), angle_spread=0.3)


def _by_prefix(system, prefix):
    return [p for p in system.equalities if p.label.startswith(prefix)]


def test_variable_names():
    assert variable_names("z", 2, 2) == ["z0", "z1", "re0", "re1", "im0", "im1"]


def test_jacobian_system_shape(case6, limits):
    system = build_jacobian_system(case6, limits, gamma=0.5)
    assert system.nvars == 8 + 6 + 6
    assert system.lead == "z"
    # J z rows, unit norm, two PV magnitudes, slack real and imaginary parts
    assert len(system.equalities) == 8 + 1 + 2 + 2
    assert len(system.inequalities) == 25
    assert system.degree == 3
    assert system.inequalities[0].label == "Hop: vmag(4) upper"
    assert system.equalities[8].label == "unit norm"


def test_jacobian_rows_match_analytic(case6, limits, state):
    system = build_jacobian_system(case6, limits)
    z = np.random.default_rng(4).standard_normal(case6.k)
    point = lift_state(case6, state, z)
    rows = np.array([eval_poly(p.poly, point) for p in _by_prefix(system, "Jz")])
    np.testing.assert_allclose(rows, jacobian_analytic(case6, state) @ z, atol=1e-9)


def test_jacobian_system_holds_at_singular_point(lossless_pv):
    # P = 2 sin(theta) is singular at theta = pi/2
    V = VoltageState(theta=np.array([0.0, np.pi / 2]), rho=np.zeros(2))
    system = build_jacobian_system(
        lossless_pv, OperationalLimits.unbounded(lossless_pv)
    )
    eqs, ineqs = system.residuals(lift_state(lossless_pv, V, [1.0]))
    np.testing.assert_allclose(eqs, 0, atol=1e-12)
    assert ineqs.size == 0
    assert system.max_violation(lift_state(lossless_pv, V, [0.5])) == pytest.approx(
        0.75
    )


def test_operational_polynomials_match_slacks(case6, limits, state):
    system = build_jacobian_system(case6, limits, gamma=0.5)
    point = lift_state(case6, state, np.zeros(case6.k))
    _, ineqs = system.residuals(point)
    np.testing.assert_allclose(
        ineqs, eval_operational(case6, limits.with_gamma(0.5), state), atol=1e-9
    )


def test_feasibility_system(case6, limits, state):
    s = evaluate_F(case6, state)
    region = RegionSpec.box(s, np.full(case6.k, 0.1))
    system = build_feasibility_system(case6, limits, None, region, active_index=2)
    assert system.lead == "s"
    assert system.equalities[0].label == "Hop: vmag(5) upper = 0"
    assert len(system.equalities) == 1 + 8 + 2 + 2
    assert len(system.inequalities) == 24 + 2 * 8
    assert system.degree == 2

    point = lift_state(case6, state, s)
    for p in _by_prefix(system, "F(V) = s") + _by_prefix(system, "Heq"):
        assert eval_poly(p.poly, point) == pytest.approx(0, abs=1e-9)
    region_rows = [p for p in system.inequalities if p.label.startswith("region")]
    assert all(eval_poly(p.poly, point) == pytest.approx(0.1) for p in region_rows)


def test_feasibility_system_with_ellipsoid(case3):
    lims = OperationalLimits.from_network(case3, flow_limit=0.5)
    region = RegionSpec.ellipsoid(case3.nominal_injection(), np.eye(case3.k), 0.2)
    system = build_feasibility_system(case3, lims, 0.4, region, 0)
    assert system.inequalities[-1].label == "region ellipsoid"
    assert poly_degree(system.inequalities[-1].poly) == 2


def test_feasibility_system_rejects_bad_index(case6, limits):
    region = RegionSpec.box(np.zeros(case6.k), np.ones(case6.k))
    with pytest.raises(RelaxationError) as exc_info:
        build_feasibility_system(case6, limits, None, region, active_index=99)
    assert "out of range" in str(exc_info.value)


def test_feasibility_system_rejects_bad_region(case6, limits):
    region = RegionSpec.box([0.0], [1.0])
    with pytest.raises(RelaxationError) as exc_info:
        build_feasibility_system(case6, limits, None, region, active_index=0)
    assert "dimension 1" in str(exc_info.value)


def test_split_point(case6, limits, state):
    system = build_jacobian_system(case6, limits)
    z = np.arange(case6.k, dtype=float)
    lead, voltage = split_point(system, lift_state(case6, state, z))
    np.testing.assert_allclose(lead, z)
    np.testing.assert_allclose(voltage, state.voltage)


def test_eval_poly_checks_dimension(case6, limits):
    system = build_jacobian_system(case6, limits)
    with pytest.raises(ValueError):
        eval_poly(system.equalities[0].poly, np.zeros(3))


def test_to_dict(case3):
    system = build_jacobian_system(case3, OperationalLimits.from_network(case3))
    payload = system.to_dict()
    assert payload["schema_version"] == "pfcert.polysystem/1"
    assert payload["variables"][:2] == ["z0", "z1"]
    unit = next(p for p in payload["equalities"] if p["label"] == "unit norm")
    zero = [0] * 8
    assert sorted(unit["terms"]) == sorted(
        [[[2] + zero[1:], 1.0], [[0, 2] + zero[2:], 1.0], [zero, -1.0]]
    )
