import dataclasses
import logging
import math
from typing import Any, Optional

import numpy as np
import pandas as pd

from pfcert.acpf import (
    OperationalLimits,
    VoltageState,
    eval_operational,
    evaluate_F,
    min_slack,
    random_valid_state,
    solve_from_starts,
)
from pfcert.conic import (
    ConicStatus,
    Feasible,
    InfeasCertificate,
    Infeasible,
    SolverSettings,
    certificate_digest,
    export_problem,
    problem_digest,
    solve_feasibility,
)
from pfcert.constants import (
    BISECTION_TOL,
    COUNTEREXAMPLE_TOL,
    STRICTNESS_MARGIN,
)
from pfcert.exceptions import CertificationError, PreconditionError
from pfcert.moment import extract_candidate, relax
from pfcert.netmodel import Network
from pfcert.poly import build_feasibility_system, build_jacobian_system, split_point
from pfcert.region import RegionSpec, ellipsoid_shape
from pfcert.util import WorkerPool, finite_or_none
from pfcert.validate import SoundnessReport, monte_carlo_soundness

logger = logging.getLogger(__name__)

CERTIFIED = "certified-infeasible"
COUNTEREXAMPLE = "counterexample"
RELAXATION_FEASIBLE = "relaxation-feasible"
UNKNOWN = "unknown"


def check_jacobian(
    net: Network,
    lims: OperationalLimits,
    gamma: float,
    settings: Optional[SolverSettings] = None,
) -> ConicStatus:
    """Relaxation of the Jacobian-singularity system at ``gamma``;
    ``Infeasible`` proves J_F(V) nonsingular wherever H^op(V; gamma) >= 0."""
    system = build_jacobian_system(net, lims, gamma)
    return solve_feasibility(relax(system), settings)


@dataclasses.dataclass(frozen=True, eq=False)
class GammaResult:
    gamma: float
    status: ConicStatus
    trail: tuple[tuple[float, str], ...]

    def to_dict(self) -> dict[str, Any]:
        cert = (
            certificate_digest(self.status.certificate)
            if isinstance(self.status, Infeasible)
            else None
        )
        return {
            "gamma": self.gamma,
            "outcome": self.status.outcome,
            "certificate_sha256": cert,
            "trail": [[g, outcome] for g, outcome in self.trail],
        }


def maximize_gamma(
    net: Network,
    lims: OperationalLimits,
    gamma_lo: float,
    gamma_hi: float,
    tol: float = BISECTION_TOL,
    settings: Optional[SolverSettings] = None,
) -> GammaResult:
    """Bisect for the largest gamma whose Jacobian system relaxation is
    infeasible. Unknown outcomes count as not certified."""
    if not 0 < gamma_lo <= gamma_hi:
        raise ValueError(f"invalid gamma bracket [{gamma_lo}, {gamma_hi}]")

    trail: list[tuple[float, str]] = []

    def check(gamma: float) -> ConicStatus:
        status = check_jacobian(net, lims, gamma, settings)
        trail.append((gamma, status.outcome))
        logger.info("gamma %.6g: %s", gamma, status.outcome)
        return status

    best = check(gamma_lo)
    if not isinstance(best, Infeasible):
        raise CertificationError(
            f"no certificate at requested floor gamma={gamma_lo} ({best.outcome})",
            result=GammaResult(gamma_lo, best, tuple(trail)),
        )

    top = check(gamma_hi) if gamma_hi > gamma_lo else best
    if isinstance(top, Infeasible):
        return GammaResult(gamma_hi, top, tuple(trail))

    lo, hi = gamma_lo, gamma_hi
    while hi - lo > tol:
        mid = (lo + hi) / 2
        status = check(mid)
        if isinstance(status, Infeasible):
            lo, best = mid, status
        else:
            hi = mid

    return GammaResult(lo, best, tuple(trail))


@dataclasses.dataclass(frozen=True, eq=False)
class ConstraintVerdict:
    index: int
    label: str
    verdict: str
    backend: str = ""
    message: str = ""
    certificate: Optional[InfeasCertificate] = None
    problem_sha256: Optional[str] = None
    injection: Optional[np.ndarray] = None
    voltage: Optional[np.ndarray] = None
    violation: Optional[float] = None
    eig_ratio: Optional[float] = None
    problem: Optional[dict[str, Any]] = None

    @property
    def certified(self) -> bool:
        return self.verdict == CERTIFIED

    def to_dict(self) -> dict[str, Any]:
        entry: dict[str, Any] = {
            "index": self.index,
            "label": self.label,
            "verdict": self.verdict,
            "backend": self.backend,
            "problem_sha256": self.problem_sha256,
            "certificate_sha256": (
                certificate_digest(self.certificate) if self.certificate else None
            ),
        }
        if self.message:
            entry["message"] = self.message
        if self.injection is not None:
            entry["candidate"] = {
                "injection": self.injection.tolist(),
                "voltage_re": self.voltage.real.tolist(),
                "voltage_im": self.voltage.imag.tolist(),
                "violation": self.violation,
                "eig_ratio": self.eig_ratio,
            }
        return entry


def _constraint_verdict(
    net: Network,
    lims: OperationalLimits,
    region: RegionSpec,
    index: int,
    settings: Optional[SolverSettings],
    keep_problem: bool = False,
) -> ConstraintVerdict:
    system = build_feasibility_system(net, lims, None, region, index)
    label = system.equalities[0].label.removesuffix(" = 0").removeprefix("Hop: ")
    prob = relax(system)
    status = solve_feasibility(prob, settings)
    common = dict(
        index=index,
        label=label,
        backend=status.backend,
        problem_sha256=problem_digest(prob),
        problem=export_problem(prob) if keep_problem else None,
    )

    if isinstance(status, Infeasible):
        return ConstraintVerdict(
            verdict=CERTIFIED, certificate=status.certificate, **common
        )

    if isinstance(status, Feasible):
        # tightness: is the relaxation's first-order point a genuine witness?
        candidate = extract_candidate(prob, status.y)
        violation = system.max_violation(candidate.point)
        injection, voltage = split_point(system, candidate.point)
        verdict = RELAXATION_FEASIBLE
        if violation <= COUNTEREXAMPLE_TOL:
            verdict = COUNTEREXAMPLE
        return ConstraintVerdict(
            verdict=verdict,
            injection=injection,
            voltage=voltage,
            violation=violation,
            eig_ratio=candidate.eig_ratio,
            **common,
        )

    return ConstraintVerdict(verdict=UNKNOWN, message=status.message, **common)


@dataclasses.dataclass(frozen=True, eq=False)
class CertResult:
    gamma: float
    region: RegionSpec
    jacobian: ConicStatus
    verdicts: tuple[ConstraintVerdict, ...]
    soundness: Optional[SoundnessReport] = None
    center_slack: float = math.inf

    @property
    def delta(self) -> float:
        return self.region.delta

    @property
    def all_infeasible(self) -> bool:
        return isinstance(self.jacobian, Infeasible) and all(
            v.certified for v in self.verdicts
        )

    @property
    def certified(self) -> bool:
        if not self.all_infeasible:
            return False
        return self.soundness is None or self.soundness.strict(STRICTNESS_MARGIN)

    @property
    def unknown(self) -> bool:
        return any(v.verdict == UNKNOWN for v in self.verdicts)

    @property
    def failing(self) -> Optional[ConstraintVerdict]:
        for verdict in self.verdicts:
            if not verdict.certified:
                return verdict
        return None

    @property
    def counterexample(self) -> Optional[ConstraintVerdict]:
        for verdict in self.verdicts:
            if verdict.verdict == COUNTEREXAMPLE:
                return verdict
        return None

    def to_dict(self) -> dict[str, Any]:
        failing = self.failing
        return {
            "certified": self.certified,
            "gamma": self.gamma,
            "delta": self.delta,
            "region": self.region.to_dict(),
            "center_slack": finite_or_none(self.center_slack),
            "jacobian": {
                "outcome": self.jacobian.outcome,
                "certificate_sha256": (
                    certificate_digest(self.jacobian.certificate)
                    if isinstance(self.jacobian, Infeasible)
                    else None
                ),
            },
            "first_failing": failing.label if failing else None,
            "verdicts": [v.to_dict() for v in self.verdicts],
            "soundness": self.soundness.to_dict() if self.soundness else None,
        }


def operating_point(
    net: Network, lims: OperationalLimits, s: np.ndarray
) -> tuple[VoltageState, float]:
    """A strictly feasible power flow solution at ``s``, with its minimum slack."""
    s = np.asarray(s, dtype=float)
    found = solve_from_starts(
        net, lims, s, (VoltageState.initial(net), VoltageState.flat(net))
    )
    if found is None or not found[1] > 0:
        if found is None:
            detail = "no power flow solution"
        else:
            detail = f"minimum constraint slack {found[1]:.3e}"
        raise PreconditionError(
            "region center is not strictly feasible "
            f"({detail}); a strictly feasible point inside the region is required"
        )
    return found


async def _certify(
    pool: WorkerPool,
    net: Network,
    lims: OperationalLimits,
    gamma: float,
    region: RegionSpec,
    jacobian: ConicStatus,
    settings: Optional[SolverSettings],
    V0: VoltageState,
    center_slack: float,
    mc_samples: int,
    seed: int,
    keep_problems: bool,
) -> CertResult:
    lims = lims.with_gamma(gamma)
    count = len(lims.constraints(net))
    verdicts = await pool.map(
        _constraint_verdict,
        [(net, lims, region, i, settings, keep_problems) for i in range(count)],
    )
    verdicts = sorted(verdicts, key=lambda v: v.index)
    for verdict in verdicts:
        logger.info("delta %.6g %s: %s", region.delta, verdict.label, verdict.verdict)

    soundness = None
    if all(v.certified for v in verdicts) and mc_samples > 0:
        soundness = monte_carlo_soundness(
            net, lims, region, V0, n_samples=mc_samples, seed=seed
        )

    return CertResult(
        gamma=gamma,
        region=region,
        jacobian=jacobian,
        verdicts=tuple(verdicts),
        soundness=soundness,
        center_slack=center_slack,
    )


def _require_jacobian(
    net: Network,
    lims: OperationalLimits,
    gamma: float,
    settings: Optional[SolverSettings],
    jacobian: Optional[ConicStatus],
) -> ConicStatus:
    if jacobian is None:
        jacobian = check_jacobian(net, lims, gamma, settings)
    if not isinstance(jacobian, Infeasible):
        raise PreconditionError(
            f"Jacobian non-singularity is not certified at gamma={gamma} "
            f"({jacobian.outcome})"
        )
    return jacobian


async def certify_region(
    net: Network,
    lims: OperationalLimits,
    gamma: float,
    region: RegionSpec,
    settings: Optional[SolverSettings] = None,
    jobs: int = 1,
    jacobian: Optional[ConicStatus] = None,
    mc_samples: int = 100,
    seed: int = 0,
    keep_problems: bool = False,
) -> CertResult:
    """Check every operational constraint's strict-feasibility relaxation over
    ``region``; the region is certified when all are infeasible, the Jacobian
    system is infeasible at ``gamma`` and sampled injections keep a margin."""
    lims_gamma = lims.with_gamma(gamma)
    V0, center_slack = operating_point(net, lims_gamma, region.center)
    jacobian = _require_jacobian(net, lims, gamma, settings, jacobian)
    async with WorkerPool(jobs) as pool:
        return await _certify(
            pool,
            net,
            lims,
            gamma,
            region,
            jacobian,
            settings,
            V0,
            center_slack,
            mc_samples,
            seed,
            keep_problems,
        )


@dataclasses.dataclass(frozen=True, eq=False)
class DeltaResult:
    delta: float
    result: CertResult
    failing: Optional[CertResult]
    trail: tuple[tuple[float, bool], ...]

    def to_dict(self) -> dict[str, Any]:
        failing = self.failing.failing if self.failing else None
        return {
            "delta": self.delta,
            "result": self.result.to_dict(),
            "failing_delta": self.failing.delta if self.failing else None,
            "failing_constraint": failing.label if failing else None,
            "failing_verdict": failing.to_dict() if failing else None,
            "trail": [[d, ok] for d, ok in self.trail],
        }


async def maximize_delta(
    net: Network,
    lims: OperationalLimits,
    gamma: float,
    template: RegionSpec,
    delta_hi: float,
    tol: float = BISECTION_TOL,
    settings: Optional[SolverSettings] = None,
    jobs: int = 1,
    jacobian: Optional[ConicStatus] = None,
    mc_samples: int = 100,
    seed: int = 0,
    keep_problems: bool = False,
) -> DeltaResult:
    """Bisect the region scale for the largest certified delta."""
    lims_gamma = lims.with_gamma(gamma)
    V0, center_slack = operating_point(net, lims_gamma, template.center)
    jacobian = _require_jacobian(net, lims, gamma, settings, jacobian)
    trail: list[tuple[float, bool]] = []

    async with WorkerPool(jobs) as pool:

        async def attempt(delta: float) -> CertResult:
            result = await _certify(
                pool,
                net,
                lims,
                gamma,
                template.with_delta(delta),
                jacobian,
                settings,
                V0,
                center_slack,
                mc_samples,
                seed,
                keep_problems,
            )
            trail.append((delta, result.certified))
            verdict = "certified" if result.certified else "not certified"
            logger.info("delta %.6g: %s", delta, verdict)
            return result

        floor = await attempt(tol)
        if not floor.certified:
            raise CertificationError(
                f"no nontrivial region: not certified at delta={tol}"
                + (f" ({floor.failing.label})" if floor.failing else ""),
                result=floor,
            )

        top = await attempt(delta_hi)
        if top.certified:
            return DeltaResult(delta_hi, top, None, tuple(trail))

        lo, hi = tol, delta_hi
        best, failing = floor, top
        while hi - lo > tol:
            mid = (lo + hi) / 2
            result = await attempt(mid)
            if result.certified:
                lo, best = mid, result
            else:
                hi, failing = mid, result

    return DeltaResult(lo, best, failing, tuple(trail))


@dataclasses.dataclass(frozen=True, eq=False)
class BoxFit:
    center: np.ndarray
    widths: np.ndarray
    samples: np.ndarray
    n_drawn: int

    def region(self, delta: float = 1.0, min_width: float = 1e-9) -> RegionSpec:
        return RegionSpec.box(self.center, np.maximum(self.widths, min_width), delta)

    def ellipsoid(self, delta: float = 1.0) -> RegionSpec:
        return RegionSpec.ellipsoid(self.center, ellipsoid_shape(self.samples), delta)


def fit_box_heuristic(
    net: Network,
    lims: OperationalLimits,
    n_samples: int,
    seed: int = 0,
    angle_spread: float = 0.5,
    v_band: Optional[tuple[float, float]] = None,
) -> BoxFit:
    """Box around the injections of random voltage profiles that satisfy
    the operational constraints."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    if v_band is None:
        pq = list(net.pq)
        finite_lo = lims.v_min[pq][np.isfinite(lims.v_min[pq])]
        finite_hi = lims.v_max[pq][np.isfinite(lims.v_max[pq])]
        v_band = (
            float(finite_lo.min()) if finite_lo.size else 0.9,
            float(finite_hi.max()) if finite_hi.size else 1.1,
        )

    rng = np.random.default_rng(seed)
    constraints = lims.constraints(net)
    accepted = []
    for _ in range(n_samples):
        V = random_valid_state(net, rng, angle_spread, v_band)
        if min_slack(eval_operational(net, lims, V, constraints)) > 0:
            accepted.append(evaluate_F(net, V))

    if not accepted:
        raise PreconditionError(
            f"none of {n_samples} sampled voltage profiles satisfied the operational "
            "constraints; widen the sampling box (angle spread or voltage band)"
        )

    samples = np.array(accepted)
    lo, hi = samples.min(axis=0), samples.max(axis=0)
    logger.info("box fit accepted %d of %d samples", len(accepted), n_samples)
    return BoxFit(
        center=(lo + hi) / 2,
        widths=(hi - lo) / 2,
        samples=samples,
        n_drawn=n_samples,
    )


def interval_table(net: Network, region: RegionSpec) -> pd.DataFrame:
    """Per-bus injection intervals of a region, by original bus number."""
    lower, upper = region.bounds()
    quantities = ["p"] * net.n + ["q"] * len(net.pq)
    buses = [net.ext_ids[i] for i in net.nsb] + [net.ext_ids[i] for i in net.pq]
    return pd.DataFrame(
        {
            "bus": buses,
            "quantity": quantities,
            "lower": lower,
            "upper": upper,
            "center": region.center,
        }
    )

