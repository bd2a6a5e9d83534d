import itertools
import math

import numpy as np
import pytest
from scipy.optimize import brentq

from pfcert.acpf import OperationalLimits, continuation_solve, eval_operational
from pfcert.certify import (
    CERTIFIED,
    COUNTEREXAMPLE,
    UNKNOWN,
    CertResult,
    ConstraintVerdict,
    certify_region,
    fit_box_heuristic,
    interval_table,
    maximize_gamma,
    operating_point,
)
from pfcert.conic import InfeasCertificate, Infeasible, Unknown
from pfcert.exceptions import PreconditionError
from pfcert.netmodel import BusKind
from pfcert.region import RegionKind, RegionSpec
from pfcert.util import syncrun
from pfcert.validate import SoundnessReport


@pytest.fixture
def pv_line(two_bus):
    return two_bus(kind=BusKind.PV, flow_limit=0.35)


@pytest.fixture
def certificate():
    return Infeasible(
        certificate=InfeasCertificate(
            mu=np.array([1.0]),
            Z=(np.zeros((1, 1)),),
            gap=1.0,
            residual=0.0,
            min_eig=0.0,
        ),
        backend="presolve",
    )


def _verdict(index, verdict, certificate=None):
    return ConstraintVerdict(
        index=index,
        label=f"c{index}",
        verdict=verdict,
        certificate=certificate.certificate if certificate else None,
    )


def test_operating_point(pv_line):
    lims = OperationalLimits.from_network(pv_line)
    V, margin = operating_point(pv_line, lims, np.array([0.6]))
    assert V.theta[1] == pytest.approx(math.asin(0.3))
    expected = 0.35**2 - (2 - 2 * math.cos(math.asin(0.3)))
    assert margin == pytest.approx(expected, abs=1e-7)


def test_operating_point_violating(pv_line):
    lims = OperationalLimits.from_network(pv_line)
    with pytest.raises(PreconditionError) as exc_info:
        operating_point(pv_line, lims, np.array([0.8]))
    assert "minimum constraint slack" in str(exc_info.value)


def test_operating_point_without_solution(pv_line):
    lims = OperationalLimits.from_network(pv_line)
    with pytest.raises(PreconditionError) as exc_info:
        operating_point(pv_line, lims, np.array([2.5]))
    assert "no power flow solution" in str(exc_info.value)


def test_maximize_gamma_bracket(pv_line):
    lims = OperationalLimits.from_network(pv_line)
    with pytest.raises(ValueError):
        maximize_gamma(pv_line, lims, 0.0, 1.0)
    with pytest.raises(ValueError):
        maximize_gamma(pv_line, lims, 1.0, 0.5)


def test_cert_result_certified(certificate):
    region = RegionSpec.box([0.6], [0.1])
    result = CertResult(
        gamma=0.5,
        region=region,
        jacobian=certificate,
        verdicts=(
            _verdict(0, CERTIFIED, certificate),
            _verdict(1, CERTIFIED, certificate),
        ),
        center_slack=0.25,
    )
    assert result.all_infeasible
    assert result.certified
    assert not result.unknown
    assert result.failing is None
    payload = result.to_dict()
    assert payload["certified"] is True
    assert payload["delta"] == 1.0
    assert payload["first_failing"] is None
    assert len(payload["jacobian"]["certificate_sha256"]) == 64
    assert payload["verdicts"][0]["certificate_sha256"] is not None


def test_cert_result_needs_margin_on_samples(certificate):
    result = CertResult(
        gamma=0.5,
        region=RegionSpec.box([0.6], [0.1]),
        jacobian=certificate,
        verdicts=(_verdict(0, CERTIFIED, certificate),),
        soundness=SoundnessReport(n_samples=10, n_failures=0, min_slack=1e-9),
    )
    assert result.all_infeasible
    assert not result.certified


def test_cert_result_unknown_never_certifies(certificate):
    result = CertResult(
        gamma=0.5,
        region=RegionSpec.box([0.6], [0.1]),
        jacobian=certificate,
        verdicts=(
            _verdict(0, CERTIFIED, certificate),
            _verdict(1, UNKNOWN),
            _verdict(2, COUNTEREXAMPLE),
        ),
    )
    assert not result.certified
    assert result.unknown
    assert result.failing.label == "c1"
    assert result.counterexample.label == "c2"
    assert result.to_dict()["first_failing"] == "c1"


def test_cert_result_requires_jacobian(certificate):
    result = CertResult(
        gamma=0.5,
        region=RegionSpec.box([0.6], [0.1]),
        jacobian=Unknown(message="stalled"),
        verdicts=(_verdict(0, CERTIFIED, certificate),),
    )
    assert not result.certified
    assert result.to_dict()["jacobian"] == {
        "outcome": "unknown",
        "certificate_sha256": None,
    }


def test_constraint_verdict_candidate():
    verdict = ConstraintVerdict(
        index=3,
        label="vmag(4) upper",
        verdict=COUNTEREXAMPLE,
        injection=np.array([0.1, 0.2]),
        voltage=np.array([1.0 + 0j, 0.9 - 0.1j]),
        violation=1e-9,
        eig_ratio=0.0,
    )
    candidate = verdict.to_dict()["candidate"]
    assert candidate["voltage_im"] == [0.0, -0.1]
    assert candidate["injection"] == [0.1, 0.2]
    assert not verdict.certified


def test_fit_box_heuristic(case6):
    lims = OperationalLimits.from_network(
        case6, flow_limit=0.5, generator_limits=False
    )
    fit = fit_box_heuristic(case6, lims, 300, seed=2, angle_spread=0.2)
    assert fit.center.shape == (case6.k,)
    assert np.all(fit.widths >= 0)
    assert 0 < len(fit.samples) <= 300
    region = fit.region()
    assert all(region.contains(s, tol=1e-12) for s in fit.samples)
    again = fit_box_heuristic(case6, lims, 300, seed=2, angle_spread=0.2)
    np.testing.assert_array_equal(again.center, fit.center)


def test_fit_box_ellipsoid(case6):
    lims = OperationalLimits.from_network(
        case6, flow_limit=0.5, generator_limits=False
    )
    fit = fit_box_heuristic(case6, lims, 300, seed=2, angle_spread=0.2)
    ellipsoid = fit.ellipsoid(delta=2.0)
    assert ellipsoid.kind is RegionKind.ELLIPSOID
    assert np.linalg.det(ellipsoid.shape) == pytest.approx(1.0)


def test_fit_box_heuristic_rejects_everything(two_bus):
    net = two_bus(flow_limit=1e-6)
    lims = OperationalLimits.from_network(net)
    with pytest.raises(PreconditionError) as exc_info:
        fit_box_heuristic(net, lims, 20)
    assert "none of 20 sampled voltage profiles" in str(exc_info.value)
    with pytest.raises(ValueError):
        fit_box_heuristic(net, lims, 0)


def test_interval_table(case6):
    widths = np.linspace(0.1, 0.8, case6.k)
    region = RegionSpec.box(case6.nominal_injection(), widths, delta=0.5)
    table = interval_table(case6, region)
    assert list(table.columns) == ["bus", "quantity", "lower", "upper", "center"]
    assert list(table["bus"]) == [2, 3, 4, 5, 6, 4, 5, 6]
    assert list(table["quantity"]) == ["p"] * 5 + ["q"] * 3
    np.testing.assert_allclose(table["upper"] - table["lower"], widths)


def test_case3_gamma_between_published_and_singular(case3):
    lims = OperationalLimits.from_network(case3, generator_limits=False)
    result = maximize_gamma(case3, lims, 0.05, 2.0, tol=1e-2)
    # the published bound holds, and a singular Jacobian exists at 1.4503
    assert 1.0 <= result.gamma <= 1.4503
    for gamma, outcome in result.trail:
        if gamma <= result.gamma:
            assert outcome == "infeasible"


def _case3_box(case3, delta):
    return RegionSpec.box(case3.nominal_injection(), np.ones(case3.k), delta)


def _certify_case3(case3, lims, jacobian, region):
    return syncrun(
        certify_region(case3, lims, 1.0, region, jacobian=jacobian, mc_samples=0)
    )


def test_case3_small_box_certified(case3, case3_limits, case3_jacobian):
    assert isinstance(case3_jacobian, Infeasible)
    result = _certify_case3(
        case3, case3_limits, case3_jacobian, _case3_box(case3, 0.01)
    )
    assert result.certified
    assert len(result.verdicts) == len(case3.edges)
    assert all(v.certificate is not None for v in result.verdicts)


def test_case3_certification_shrinks_with_delta(case3, case3_limits, case3_jacobian):
    deltas = [0.005, 0.01, 0.02, 0.04, 0.08, 0.16]
    outcomes = [
        _certify_case3(
            case3, case3_limits, case3_jacobian, _case3_box(case3, delta)
        ).certified
        for delta in deltas
    ]
    # once a box fails, every larger box fails
    assert outcomes[0]
    assert outcomes == sorted(outcomes, reverse=True)
    assert not outcomes[-1]


def test_case3_feasible_boundary_point_blocks_certificate(
    case3, case3_solution, case3_limits, case3_jacobian
):
    s0 = case3.nominal_injection()
    region = _case3_box(case3, 0.3)
    constraints = case3_limits.constraints(case3)

    def slacks_at(corner, t):
        s = s0 + t * (corner - s0)
        V = continuation_solve(case3, s0, case3_solution, s)
        return eval_operational(case3, case3_limits, V, constraints)

    corners = [np.array(c) for c in itertools.product(*zip(*region.bounds()))]
    corner = next(c for c in corners if slacks_at(c, 1.0).min() < 0)
    # a point on the segment where the tightest bound is exactly active
    t = brentq(lambda t: slacks_at(corner, t).min(), 0.0, 1.0, xtol=1e-12)
    slacks = slacks_at(corner, t)
    reached = int(np.argmin(slacks))
    assert abs(slacks[reached]) <= 1e-9
    assert np.delete(slacks, reached).min() >= 0

    result = _certify_case3(case3, case3_limits, case3_jacobian, region)
    assert not result.certified
    assert result.verdicts[reached].label == constraints[reached].label
    assert result.verdicts[reached].verdict != CERTIFIED
