import dataclasses
import logging
import math
from typing import Any, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from pfcert.acpf import (
    OperationalLimits,
    VoltageState,
    continuation_solve,
    eval_operational,
    evaluate_F,
    jacobian_analytic,
    min_singular_value,
    min_slack,
    newton_solve,
)
from pfcert.constants import SINGULARITY_THRESHOLD, STRICTNESS_MARGIN
from pfcert.exceptions import NoConvergence
from pfcert.netmodel import Network
from pfcert.region import RegionSpec
from pfcert.util import finite_or_none

logger = logging.getLogger(__name__)


class _Singular(Exception):
    def __init__(self, t: float, x: np.ndarray, sigma: float) -> None:
        self.t = t
        self.x = x
        self.sigma = sigma


@dataclasses.dataclass(frozen=True)
class OdeCheckpoint:
    t: float
    residual: float
    expected: float
    rel_error: float
    min_slack: float


@dataclasses.dataclass(frozen=True, eq=False)
class OdeReport:
    checkpoints: tuple[OdeCheckpoint, ...]
    min_sigma: float
    min_slack: float
    aborted: bool = False
    abort_time: Optional[float] = None
    abort_state: Optional[VoltageState] = None
    contradiction: bool = False

    def decay_ok(self, rtol: float = 0.01) -> bool:
        return not self.aborted and all(c.rel_error <= rtol for c in self.checkpoints)

    def to_dict(self) -> dict[str, Any]:
        return {
            "checkpoints": [dataclasses.asdict(c) for c in self.checkpoints],
            "min_sigma": finite_or_none(self.min_sigma),
            "min_slack": finite_or_none(self.min_slack),
            "aborted": self.aborted,
            "abort_time": self.abort_time,
            "contradiction": self.contradiction,
            "decay_ok": self.decay_ok(),
        }


def ode_validate(
    net: Network,
    s0: np.ndarray,
    V0: VoltageState,
    s: np.ndarray,
    t_end: float = 5.0,
    steps: int = 5,
    lims: Optional[OperationalLimits] = None,
    region: Optional[RegionSpec] = None,
    samples_per_step: int = 10,
) -> OdeReport:
    """Integrate dx/dt = J(x)^-1 (s - F(x)) from V0 and compare the residual
    with its exact decay F(V(t)) - s = exp(-t) (F(V0) - s).

    Residuals are measured on the integrator's state before a Newton
    clean-up pulls F(V(t)) back onto the exact decay path. A Jacobian whose
    smallest singular value drops below the singularity threshold aborts
    the run; inside ``region`` that contradicts a certificate.
    """
    s = np.asarray(s, dtype=float)
    s0 = np.asarray(s0, dtype=float)
    start_gap = evaluate_F(net, V0) - s
    start_norm = float(np.linalg.norm(start_gap))
    constraints = lims.constraints(net) if lims is not None else []

    def rhs(t: float, x: np.ndarray) -> np.ndarray:
        V = V0.with_unknowns(net, x)
        J = jacobian_analytic(net, V)
        sigma = min_singular_value(J)
        if sigma < SINGULARITY_THRESHOLD:
            raise _Singular(t, x, sigma)
        return np.linalg.solve(J, s - evaluate_F(net, V))

    def observe(x: np.ndarray) -> tuple[float, float]:
        V = V0.with_unknowns(net, x)
        sigma = min_singular_value(jacobian_analytic(net, V))
        slack = (
            min_slack(eval_operational(net, lims, V, constraints))
            if lims is not None
            else math.inf
        )
        return sigma, slack

    x = V0.unknowns(net)
    min_sigma, path_slack = observe(x)
    checkpoints: list[OdeCheckpoint] = []
    times = np.linspace(0.0, t_end, steps + 1)

    for t_a, t_b in zip(times[:-1], times[1:]):
        try:
            sol = solve_ivp(
                rhs,
                (t_a, t_b),
                x,
                method="RK45",
                rtol=1e-9,
                atol=1e-11,
                t_eval=np.linspace(t_a, t_b, samples_per_step + 1)[1:],
            )
        except _Singular as e:
            V = V0.with_unknowns(net, e.x)
            inside = region is not None and region.contains(s)
            logger.warning(
                "Jacobian became singular at t=%.4g (sigma %.3e)%s",
                e.t,
                e.sigma,
                "; target lies inside the certified region" if inside else "",
            )
            return OdeReport(
                checkpoints=tuple(checkpoints),
                min_sigma=min(min_sigma, e.sigma),
                min_slack=path_slack,
                aborted=True,
                abort_time=float(e.t),
                abort_state=V,
                contradiction=inside,
            )

        if not sol.success:
            logger.warning("integration failed on [%g, %g]: %s", t_a, t_b, sol.message)

        for column in sol.y.T:
            sigma, slack = observe(column)
            min_sigma = min(min_sigma, sigma)
            path_slack = min(path_slack, slack)

        x = sol.y[:, -1]
        V = V0.with_unknowns(net, x)
        residual = float(np.linalg.norm(evaluate_F(net, V) - s))
        expected = math.exp(-t_b) * start_norm
        if expected > 0:
            rel_error = abs(residual - expected) / expected
        else:
            rel_error = 0.0 if residual <= 1e-12 else math.inf
        checkpoints.append(
            OdeCheckpoint(
                t=float(t_b),
                residual=residual,
                expected=expected,
                rel_error=rel_error,
                min_slack=path_slack,
            )
        )

        if start_norm > 0:
            target = s + math.exp(-t_b) * start_gap
            try:
                x = newton_solve(net, target, V, tol=1e-12, max_iter=5).unknowns(net)
            except NoConvergence as e:
                if e.state is not None:
                    x = e.state.unknowns(net)

    return OdeReport(
        checkpoints=tuple(checkpoints),
        min_sigma=min_sigma,
        min_slack=path_slack,
    )


@dataclasses.dataclass(frozen=True)
class SampleFailure:
    index: int
    injection: tuple[float, ...]
    reason: str
    min_slack: Optional[float] = None


@dataclasses.dataclass(frozen=True)
class SoundnessReport:
    n_samples: int
    n_failures: int
    min_slack: float
    failures: tuple[SampleFailure, ...] = ()
    seed: int = 0

    @property
    def vacuous(self) -> bool:
        return self.n_samples == 0

    @property
    def passed(self) -> bool:
        return self.n_failures == 0

    def strict(self, margin: float = STRICTNESS_MARGIN) -> bool:
        return self.passed and (self.vacuous or self.min_slack >= margin)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_samples": self.n_samples,
            "n_failures": self.n_failures,
            "min_slack": finite_or_none(self.min_slack),
            "vacuous": self.vacuous,
            "passed": self.passed,
            "seed": self.seed,
            "failures": [dataclasses.asdict(f) for f in self.failures],
        }


def _sample_solution(
    net: Network,
    s0: np.ndarray,
    V0: VoltageState,
    s: np.ndarray,
) -> Optional[VoltageState]:
    try:
        return continuation_solve(net, s0, V0, s)
    except NoConvergence:
        pass
    try:
        return newton_solve(net, s, V0)
    except NoConvergence:
        return None


def monte_carlo_soundness(
    net: Network,
    lims: OperationalLimits,
    region: RegionSpec,
    V0: VoltageState,
    n_samples: int = 500,
    seed: int = 0,
    samples: Optional[Sequence[np.ndarray]] = None,
) -> SoundnessReport:
    """Solve the power flow at random injections of the region, continuing
    from the solution V0 at the center; every sample must be strictly
    feasible."""
    rng = np.random.default_rng(seed)
    points = (
        np.asarray(samples, dtype=float).reshape(-1, region.dim)
        if samples is not None
        else region.sample(rng, n_samples)
    )
    constraints = lims.constraints(net)
    failures: list[SampleFailure] = []
    worst = math.inf

    for index, s in enumerate(points):
        V = _sample_solution(net, region.center, V0, s)
        if V is None:
            failures.append(SampleFailure(index, tuple(s.tolist()), "no-solution"))
            continue
        margin = min_slack(eval_operational(net, lims, V, constraints))
        worst = min(worst, margin)
        if not margin > 0:
            failures.append(
                SampleFailure(index, tuple(s.tolist()), "constraint-violating", margin)
            )

    if failures:
        logger.warning("%d of %d samples failed", len(failures), len(points))

    return SoundnessReport(
        n_samples=len(points),
        n_failures=len(failures),
        min_slack=worst,
        failures=tuple(failures),
        seed=seed,
    )
