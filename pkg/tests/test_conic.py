import numpy as np
import pytest
from sympy.polys.domains import RR
from sympy.polys.orderings import grlex
from sympy.polys.rings import ring

from pfcert.conic import (
    Feasible,
    Infeasible,
    InfeasCertificate,
    SolverSettings,
    Unknown,
    certificate_digest,
    certificate_from_json,
    certificate_to_json,
    import_status,
    problem_digest,
    solve_feasibility,
    verify_certificate,
)
from pfcert.moment import dense_relaxation, lift_point
from pfcert.poly import LabeledPolynomial, PolySystem

R, x = ring("x", RR, grlex)


def _problem(equalities=(), inequalities=()):
    system = PolySystem(
        variables=("x",),
        lead="s",
        nlead=1,
        nbus=0,
        equalities=tuple(LabeledPolynomial(*e) for e in equalities),
        inequalities=tuple(LabeledPolynomial(*i) for i in inequalities),
    )
    return dense_relaxation(system)


@pytest.fixture
def contradictory():
    # x = 1 and x = 2 are inconsistent already as linear moment equations
    return _problem([("one", x - 1), ("two", x - 2)], [("box", 4 - x**2)])


@pytest.fixture
def presolved(contradictory):
    status = solve_feasibility(contradictory)
    assert isinstance(status, Infeasible)
    return status


def test_presolve_certifies_linear_inconsistency(contradictory, presolved):
    assert presolved.backend == "presolve"
    cert = presolved.certificate
    assert cert.gap == pytest.approx(1.0)
    assert all(not Z.any() for Z in cert.Z)
    assert verify_certificate(contradictory, cert)


def test_pinned_moments_refuted_by_eigenvector():
    # x = 1/2 fixes every moment; x >= 1 then fails on the localizing block
    prob = _problem([("half", x - 0.5)], [("at least one", x - 1)])
    status = solve_feasibility(prob, SolverSettings(backend="cvxopt"))
    assert isinstance(status, Infeasible)
    assert status.backend == "cvxopt"
    assert verify_certificate(prob, status.certificate)


def test_pinned_moments_feasible():
    prob = _problem([("half", x - 0.5)], [("nonnegative", x)])
    status = solve_feasibility(prob, SolverSettings(backend="cvxopt"))
    assert isinstance(status, Feasible)
    assert status.y[1] == pytest.approx(0.5)


def test_sum_of_squares_equation_is_infeasible():
    # x^2 + 1 = 0 forces a negative diagonal in the moment matrix
    prob = _problem([("no real root", x**2 + 1)])
    status = solve_feasibility(prob)
    assert isinstance(status, Infeasible)
    assert verify_certificate(prob, status.certificate)


def test_interval_is_feasible():
    prob = _problem(inequalities=[("interval", 1 - x**2)])
    status = solve_feasibility(prob)
    assert isinstance(status, Feasible)
    assert prob.equality_residual(status.y) <= 1e-7
    assert status.min_eig >= -1e-7


def test_verify_rejects_tampered_certificates(contradictory, presolved):
    cert = presolved.certificate
    flipped = InfeasCertificate(
        mu=-cert.mu, Z=cert.Z, gap=-cert.gap, residual=0.0, min_eig=0.0
    )
    assert not verify_certificate(contradictory, flipped)
    short = InfeasCertificate(
        mu=cert.mu[:-1], Z=cert.Z, gap=cert.gap, residual=0.0, min_eig=0.0
    )
    assert not verify_certificate(contradictory, short)
    negative = InfeasCertificate(
        mu=cert.mu,
        Z=tuple(Z - np.eye(Z.shape[0]) for Z in cert.Z),
        gap=cert.gap,
        residual=0.0,
        min_eig=-1.0,
    )
    assert not verify_certificate(contradictory, negative)


def test_certificate_json(contradictory, presolved):
    cert = presolved.certificate
    payload = certificate_to_json(cert)
    assert payload["schema_version"] == "pfcert.certificate/1"
    restored = certificate_from_json(payload)
    np.testing.assert_allclose(restored.mu, cert.mu)
    assert [Z.shape for Z in restored.Z] == [Z.shape for Z in cert.Z]
    assert verify_certificate(contradictory, restored)
    assert certificate_digest(restored) == certificate_digest(cert)


def test_digests_are_stable(contradictory):
    again = _problem([("one", x - 1), ("two", x - 2)], [("box", 4 - x**2)])
    assert problem_digest(again) == problem_digest(contradictory)
    other = _problem([("one", x - 1)], [("box", 4 - x**2)])
    assert problem_digest(other) != problem_digest(contradictory)


def test_import_status_infeasible(contradictory, presolved):
    payload = {
        "schema_version": "pfcert.status/1",
        "status": "infeasible",
        "certificate": certificate_to_json(presolved.certificate),
    }
    status = import_status(contradictory, payload)
    assert isinstance(status, Infeasible)
    assert status.backend == "external"


def test_import_status_rejects_bad_certificate(contradictory, presolved):
    tampered = certificate_to_json(presolved.certificate)
    tampered["mu"] = [-v for v in tampered["mu"]]
    status = import_status(
        contradictory, {"status": "infeasible", "certificate": tampered}
    )
    assert isinstance(status, Unknown)
    assert "failed verification" in status.message

    status = import_status(
        contradictory, {"status": "infeasible", "certificate": {"mu": []}}
    )
    assert isinstance(status, Unknown)
    assert "malformed certificate" in status.message


def test_import_status_feasible():
    prob = _problem(inequalities=[("interval", 1 - x**2)])
    status = import_status(
        prob, {"status": "feasible", "y": lift_point([0.5], prob).tolist()}
    )
    assert isinstance(status, Feasible)

    status = import_status(prob, {"status": "feasible", "y": [1.0, 0.5]})
    assert isinstance(status, Unknown)
    assert "wrong size" in status.message

    outside = import_status(
        prob, {"status": "feasible", "y": lift_point([2.0], prob).tolist()}
    )
    assert isinstance(outside, Unknown)


def test_import_status_passes_messages_through():
    prob = _problem(inequalities=[("interval", 1 - x**2)])
    status = import_status(prob, {"status": "unknown", "message": "stalled"})
    assert isinstance(status, Unknown)
    assert status.message == "stalled"
    status = import_status(prob, {"schema_version": "other/2", "status": "feasible"})
    assert "unsupported status schema" in status.message


def test_solver_settings_backend():
    with pytest.raises(ValueError) as exc_info:
        SolverSettings(backend="mosek")
    assert "unknown backend 'mosek'" in str(exc_info.value)
    assert SolverSettings().backend == "auto"
