import dataclasses
import logging
import math
import tempfile
from pathlib import Path
from typing import Any, ClassVar, Optional, Sequence, Union

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse import linalg as splinalg

from pfcert.constants import (
    CERTIFICATE_SCHEMA_VERSION,
    EPS_PSD,
    EPS_RES,
    FEASIBILITY_TOL,
    IPM_MAX_ITERS,
    IPM_MAX_VARS,
    SCS_MAX_ITERS,
    STATUS_SCHEMA_VERSION,
)
from pfcert.exceptions import RelaxationError
from pfcert.external import run_external_solver
from pfcert.moment import MomentProblem, tri_indices, tri_size
from pfcert.util import canonical_json, sha256_of

logger = logging.getLogger(__name__)

BACKENDS = ("auto", "cvxopt", "scs", "external")

# dense least squares below this many matrix entries
_DENSE_LIMIT = 4_000_000


@dataclasses.dataclass(frozen=True)
class SolverSettings:
    backend: str = "auto"
    tol: float = FEASIBILITY_TOL
    eps_res: float = EPS_RES
    eps_psd: float = EPS_PSD
    ipm_max_iters: int = IPM_MAX_ITERS
    scs_max_iters: int = SCS_MAX_ITERS
    ipm_max_vars: int = IPM_MAX_VARS
    external_command: Optional[str] = None

    def __post_init__(self) -> None:
        if self.backend not in BACKENDS:
            raise ValueError(
                f"unknown backend '{self.backend}' (choose from {', '.join(BACKENDS)})"
            )


@dataclasses.dataclass(frozen=True, eq=False)
class InfeasCertificate:
    """Multipliers with A'mu + sum_k adj(Z_k) = 0, Z_k PSD and b'mu > 0."""

    mu: np.ndarray
    Z: tuple[np.ndarray, ...]
    gap: float
    residual: float
    min_eig: float


@dataclasses.dataclass(frozen=True, eq=False)
class Feasible:
    outcome: ClassVar[str] = "feasible"
    y: np.ndarray
    residual: float
    min_eig: float
    backend: str = ""


@dataclasses.dataclass(frozen=True, eq=False)
class Infeasible:
    outcome: ClassVar[str] = "infeasible"
    certificate: InfeasCertificate
    backend: str = ""


@dataclasses.dataclass(frozen=True, eq=False)
class Unknown:
    outcome: ClassVar[str] = "unknown"
    residual: float = math.inf
    min_eig: float = -math.inf
    message: str = ""
    backend: str = ""


ConicStatus = Union[Feasible, Infeasible, Unknown]


def _sym(Z: np.ndarray) -> np.ndarray:
    return (Z + Z.T) / 2


def _min_eig(matrices: Sequence[np.ndarray]) -> float:
    if not matrices:
        return math.inf
    return min(
        float(np.linalg.eigvalsh(_sym(Z))[0]) if Z.size else math.inf
        for Z in matrices
    )


def _psd_projection(Z: np.ndarray) -> np.ndarray:
    if not Z.size:
        return Z
    values, vectors = np.linalg.eigh(_sym(Z))
    return (vectors * np.clip(values, 0.0, None)) @ vectors.T


def _adjoint_sum(prob: MomentProblem, Zs: Sequence[np.ndarray]) -> np.ndarray:
    total = np.zeros(prob.m)
    for block, Z in zip(prob.blocks, Zs):
        total += block.adjoint(_sym(Z))
    return total


def _measure(
    prob: MomentProblem, mu: np.ndarray, Zs: Sequence[np.ndarray]
) -> InfeasCertificate:
    residual_vec = prob.A.T @ mu + _adjoint_sum(prob, Zs)
    residual = float(np.max(np.abs(residual_vec))) if residual_vec.size else 0.0
    return InfeasCertificate(
        mu=mu,
        Z=tuple(Zs),
        gap=float(prob.b @ mu),
        residual=residual,
        min_eig=_min_eig(Zs),
    )


def verify_certificate(
    prob: MomentProblem,
    cert: InfeasCertificate,
    eps_psd: float = EPS_PSD,
    eps_res: float = EPS_RES,
) -> bool:
    """Check the Farkas conditions from scratch, after scaling to b'mu = 1."""
    if cert.mu.shape != (prob.A.shape[0],) or len(cert.Z) != len(prob.blocks):
        return False
    for block, Z in zip(prob.blocks, cert.Z):
        if Z.shape != (block.side, block.side):
            return False
    if not np.all(np.isfinite(cert.mu)):
        return False
    if not all(np.all(np.isfinite(Z)) for Z in cert.Z):
        return False

    gap = float(prob.b @ cert.mu)
    if not gap > 0:
        return False

    measured = _measure(prob, cert.mu / gap, [Z / gap for Z in cert.Z])
    return measured.residual <= eps_res and measured.min_eig >= -eps_psd


def _least_squares(M: sparse.spmatrix, rhs: np.ndarray) -> np.ndarray:
    if M.shape[0] * M.shape[1] <= _DENSE_LIMIT:
        return np.linalg.lstsq(M.toarray(), rhs, rcond=None)[0]
    return splinalg.lsqr(M, rhs, atol=1e-14, btol=1e-14, iter_lim=20 * M.shape[1])[0]


def assemble_certificate(
    prob: MomentProblem,
    Zs: Sequence[np.ndarray],
    mu_hint: Optional[np.ndarray] = None,
) -> Optional[InfeasCertificate]:
    """Project PSD multipliers onto the cone and fit mu by least squares.

    Returns the normalized (b'mu = 1) candidate with the smaller residual, or
    None when no candidate has a positive gap.
    """
    Zs = [_psd_projection(np.asarray(Z, dtype=float)) for Z in Zs]
    target = -_adjoint_sum(prob, Zs)
    candidates = [_least_squares(prob.A.T.tocsr(), target)]
    if mu_hint is not None and mu_hint.shape == (prob.A.shape[0],):
        candidates.append(np.asarray(mu_hint, dtype=float))

    best: Optional[InfeasCertificate] = None
    for mu in candidates:
        gap = float(prob.b @ mu)
        if not gap > 0 or not math.isfinite(gap):
            continue
        cert = _measure(prob, mu / gap, [Z / gap for Z in Zs])
        if best is None or cert.residual < best.residual:
            best = cert
    return best


def _check_primal(
    prob: MomentProblem, y: Optional[np.ndarray], settings: SolverSettings, backend: str
) -> ConicStatus:
    if y is None or not np.all(np.isfinite(y)):
        return Unknown(message="no primal point", backend=backend)
    residual = prob.equality_residual(y)
    eigs = prob.min_eigenvalues(y)
    min_eig = float(np.min(eigs)) if eigs.size else math.inf
    if residual <= settings.tol and min_eig >= -settings.tol:
        return Feasible(y=y, residual=residual, min_eig=min_eig, backend=backend)
    return Unknown(
        residual=residual,
        min_eig=min_eig,
        message="primal point outside tolerance",
        backend=backend,
    )


def _check_dual(
    prob: MomentProblem,
    Zs: Optional[Sequence[np.ndarray]],
    settings: SolverSettings,
    backend: str,
    mu_hint: Optional[np.ndarray] = None,
) -> Optional[Infeasible]:
    if Zs is None:
        return None
    cert = assemble_certificate(prob, Zs, mu_hint)
    if cert is None:
        return None
    if verify_certificate(prob, cert, settings.eps_psd, settings.eps_res):
        return Infeasible(certificate=cert, backend=backend)
    logger.debug(
        "%s certificate rejected: residual %.3e, min eig %.3e",
        backend,
        cert.residual,
        cert.min_eig,
    )
    return None


def _presolve(
    prob: MomentProblem, settings: SolverSettings
) -> tuple[Optional[ConicStatus], np.ndarray]:
    """Least-squares solution of A y = b; an inconsistent system is its own
    certificate with mu = r / |r|^2 and no PSD multipliers."""
    y = _least_squares(prob.A, prob.b)
    r = prob.b - prob.A @ y
    norm = float(r @ r)
    if math.sqrt(norm) > settings.tol * max(1.0, float(np.linalg.norm(prob.b))):
        zeros = [np.zeros((block.side, block.side)) for block in prob.blocks]
        cert = _measure(prob, r / norm, zeros)
        if verify_certificate(prob, cert, settings.eps_psd, settings.eps_res):
            return Infeasible(certificate=cert, backend="presolve"), y
    if not prob.blocks:
        return _check_primal(prob, y, settings, "presolve"), y
    return None, y


def _solve_cvxopt(
    prob: MomentProblem, settings: SolverSettings, y_p: np.ndarray
) -> ConicStatus:
    from cvxopt import matrix, solvers

    backend = "cvxopt"
    A = prob.A.toarray()
    N = scipy.linalg.null_space(A) if A.shape[0] else np.eye(prob.m)
    t = N.shape[1]

    if t == 0:
        status = _check_primal(prob, y_p, settings, backend)
        if isinstance(status, Feasible):
            return status
        # y is pinned: the most negative eigenvector of any block refutes it
        Zs = []
        for block in prob.blocks:
            values, vectors = np.linalg.eigh(block.evaluate(y_p))
            v = vectors[:, :1]
            Zs.append(v @ v.T if values[0] < 0 else np.zeros((block.side, block.side)))
        return _check_dual(prob, Zs, settings, backend) or status

    Gs, hs = [], []
    for block in prob.blocks:
        side = block.side
        rows, cols = tri_indices(side)
        mapped = np.asarray(block.coeffs @ N)
        full = np.zeros((side * side, t))
        # column-major positions of (r, c) and (c, r)
        full[rows + cols * side] = mapped
        full[cols + rows * side] = mapped
        Gs.append(matrix(-full))
        hs.append(matrix(block.evaluate(y_p)))

    options = {
        "show_progress": False,
        "maxiters": settings.ipm_max_iters,
        "abstol": 1e-10,
        "reltol": 1e-10,
        "feastol": 1e-10,
    }
    try:
        sol = solvers.sdp(matrix(np.zeros(t)), Gs=Gs, hs=hs, options=options)
    except (ArithmeticError, ValueError) as e:
        logger.warning("cvxopt failed: %s", e)
        return Unknown(message=f"cvxopt: {e}", backend=backend)

    logger.debug(
        "cvxopt status %s after %s iterations", sol["status"], sol.get("iterations")
    )

    x = sol.get("x")
    primal = (
        _check_primal(prob, y_p + N @ np.array(x).ravel(), settings, backend)
        if x is not None
        else Unknown(message=f"cvxopt status {sol['status']}", backend=backend)
    )
    if isinstance(primal, Feasible):
        return primal

    zs = sol.get("zs")
    if zs:
        Zs = [np.tril(np.array(z)) + np.tril(np.array(z), -1).T for z in zs]
        infeasible = _check_dual(prob, Zs, settings, backend)
        if infeasible is not None:
            return infeasible

    return dataclasses.replace(primal, message=f"cvxopt status {sol['status']}")


def _svec_scale(side: int) -> np.ndarray:
    rows, cols = tri_indices(side)
    return np.where(rows == cols, 1.0, math.sqrt(2.0))


def _smat(values: np.ndarray, side: int) -> np.ndarray:
    rows, cols = tri_indices(side)
    unscaled = values / _svec_scale(side)
    Z = np.zeros((side, side))
    Z[rows, cols] = unscaled
    Z[cols, rows] = unscaled
    return Z


def _solve_scs(prob: MomentProblem, settings: SolverSettings) -> ConicStatus:
    import scs

    backend = "scs"
    p = prob.A.shape[0]
    stacked = [prob.A]
    for block in prob.blocks:
        stacked.append(-sparse.diags(_svec_scale(block.side)) @ block.coeffs)
    data = {
        "A": sparse.vstack(stacked).tocsc(),
        "b": np.concatenate(
            [prob.b, np.zeros(sum(tri_size(block.side) for block in prob.blocks))]
        ),
        "c": np.zeros(prob.m),
    }
    cone = {"z": p, "s": [block.side for block in prob.blocks]}

    try:
        solver = scs.SCS(
            data,
            cone,
            verbose=False,
            max_iters=settings.scs_max_iters,
            eps_abs=settings.tol / 10,
            eps_rel=settings.tol / 10,
            eps_infeas=settings.tol / 10,
        )
        sol = solver.solve()
    except (ValueError, RuntimeError) as e:
        logger.warning("scs failed: %s", e)
        return Unknown(message=f"scs: {e}", backend=backend)

    info = sol["info"]
    logger.debug("scs status %s after %s iterations", info["status"], info["iter"])

    primal = _check_primal(prob, np.asarray(sol["x"]), settings, backend)
    if isinstance(primal, Feasible):
        return primal

    y = np.asarray(sol["y"])
    if np.all(np.isfinite(y)):
        # SCS certifies with y in K*, A'y = 0, b'y = -1; hence mu = -y_z
        Zs, offset = [], p
        for block in prob.blocks:
            size = tri_size(block.side)
            Zs.append(_smat(y[offset : offset + size], block.side))
            offset += size
        infeasible = _check_dual(prob, Zs, settings, backend, mu_hint=-y[:p])
        if infeasible is not None:
            return infeasible

    return dataclasses.replace(primal, message=f"scs status {info['status']}")


def export_problem(prob: MomentProblem) -> dict[str, Any]:
    return prob.to_dict()


def problem_digest(prob: MomentProblem) -> str:
    return sha256_of(prob.to_json())


def certificate_to_json(cert: InfeasCertificate) -> dict[str, Any]:
    blocks = []
    for Z in cert.Z:
        rows, cols = tri_indices(Z.shape[0])
        blocks.append({"side": int(Z.shape[0]), "lower": Z[rows, cols].tolist()})
    return {
        "schema_version": CERTIFICATE_SCHEMA_VERSION,
        "mu": cert.mu.tolist(),
        "blocks": blocks,
        "gap": cert.gap,
        "residual": cert.residual,
        "min_eig": cert.min_eig,
    }


def certificate_from_json(payload: dict[str, Any]) -> InfeasCertificate:
    if payload.get("schema_version") != CERTIFICATE_SCHEMA_VERSION:
        raise RelaxationError(
            f"unsupported certificate schema '{payload.get('schema_version')}'"
        )
    Zs = []
    for entry in payload["blocks"]:
        side = int(entry["side"])
        rows, cols = tri_indices(side)
        Z = np.zeros((side, side))
        Z[rows, cols] = entry["lower"]
        Z[cols, rows] = entry["lower"]
        Zs.append(Z)
    return InfeasCertificate(
        mu=np.array(payload["mu"], dtype=float),
        Z=tuple(Zs),
        gap=float(payload.get("gap", math.nan)),
        residual=float(payload.get("residual", math.nan)),
        min_eig=float(payload.get("min_eig", math.nan)),
    )


def certificate_digest(cert: InfeasCertificate) -> str:
    return sha256_of(canonical_json(certificate_to_json(cert)))


def import_status(
    prob: MomentProblem,
    payload: dict[str, Any],
    settings: Optional[SolverSettings] = None,
) -> ConicStatus:
    """Status document from an external solver, re-checked locally."""
    settings = settings or SolverSettings()
    backend = "external"
    version = payload.get("schema_version", STATUS_SCHEMA_VERSION)
    if version != STATUS_SCHEMA_VERSION:
        return Unknown(
            message=f"unsupported status schema '{version}'", backend=backend
        )

    status = payload.get("status")
    if status == "feasible" and payload.get("y") is not None:
        y = np.asarray(payload["y"], dtype=float)
        if y.shape != (prob.m,):
            return Unknown(message="moment vector has the wrong size", backend=backend)
        return _check_primal(prob, y, settings, backend)

    if status == "infeasible" and payload.get("certificate") is not None:
        try:
            cert = certificate_from_json(payload["certificate"])
        except (KeyError, TypeError, ValueError) as e:
            return Unknown(message=f"malformed certificate: {e}", backend=backend)
        if len(cert.Z) == len(prob.blocks):
            infeasible = _check_dual(prob, cert.Z, settings, backend, mu_hint=cert.mu)
            if infeasible is not None:
                return infeasible
        return Unknown(
            message="external certificate failed verification", backend=backend
        )

    return Unknown(message=str(payload.get("message", status)), backend=backend)


def _solve_external(prob: MomentProblem, settings: SolverSettings) -> ConicStatus:
    with tempfile.TemporaryDirectory(prefix="pfcert_") as tmp:
        problem_path = Path(tmp, "problem.json")
        status_path = Path(tmp, "status.json")
        problem_path.write_text(prob.to_json())
        payload = run_external_solver(
            settings.external_command, problem_path, status_path
        )
    return import_status(prob, payload, settings)


def solve_feasibility(
    prob: MomentProblem, settings: Optional[SolverSettings] = None
) -> ConicStatus:
    """Decide the conic feasibility problem.

    ``Feasible`` is returned only with a moment vector inside tolerance and
    ``Infeasible`` only with a certificate that passes ``verify_certificate``;
    everything else, including solver breakdowns, is ``Unknown``.
    """
    settings = settings or SolverSettings()

    status, y_p = _presolve(prob, settings)
    if status is not None:
        return status

    if settings.backend == "external":
        return _solve_external(prob, settings)
    if settings.backend == "scs":
        return _solve_scs(prob, settings)

    use_ipm = settings.backend == "cvxopt" or prob.m <= settings.ipm_max_vars
    if use_ipm:
        status = _solve_cvxopt(prob, settings, y_p)
        if settings.backend == "cvxopt" or not isinstance(status, Unknown):
            return status
        logger.info("interior point returned unknown (%s); trying scs", status.message)

    return _solve_scs(prob, settings)
