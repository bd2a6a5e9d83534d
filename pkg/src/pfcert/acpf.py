import dataclasses
import logging
import math
from typing import Iterable, Optional, Sequence

import numpy as np

from pfcert.constants import NEWTON_MAX_ITER, NEWTON_TOL, SINGULARITY_THRESHOLD
from pfcert.exceptions import ModelError, NoConvergence
from pfcert.netmodel import BusKind, Network

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True, eq=False)
class VoltageState:
    """Voltage phasors in log-polar form, V_i = exp(rho_i + j theta_i)."""

    theta: np.ndarray
    rho: np.ndarray

    @classmethod
    def flat(cls, net: Network) -> "VoltageState":
        rho = np.zeros(len(net.buses))
        for bus in net.buses:
            if bus.kind is not BusKind.PQ:
                rho[bus.index] = math.log(bus.v_set)
        return cls(theta=np.zeros(len(net.buses)), rho=rho)

    @classmethod
    def initial(cls, net: Network) -> "VoltageState":
        """The voltages stored in the case, with PV and slack buses pinned."""
        theta = np.array([bus.theta_init for bus in net.buses], dtype=float)
        rho = np.array(
            [
                math.log(bus.v_set if bus.kind is not BusKind.PQ else bus.v_init)
                for bus in net.buses
            ]
        )
        theta[0] = 0.0
        return cls(theta=theta, rho=rho)

    @classmethod
    def from_rectangular(cls, voltage: np.ndarray) -> "VoltageState":
        voltage = np.asarray(voltage, dtype=complex)
        return cls(theta=np.angle(voltage), rho=np.log(np.abs(voltage)))

    @property
    def voltage(self) -> np.ndarray:
        return np.exp(self.rho + 1j * self.theta)

    @property
    def magnitude(self) -> np.ndarray:
        return np.exp(self.rho)

    def unknowns(self, net: Network) -> np.ndarray:
        return np.concatenate([self.theta[1:], self.rho[list(net.pq)]])

    def with_unknowns(self, net: Network, x: np.ndarray) -> "VoltageState":
        theta = self.theta.copy()
        rho = self.rho.copy()
        theta[1:] = x[: net.n]
        rho[list(net.pq)] = x[net.n :]
        return VoltageState(theta=theta, rho=rho)

    def is_valid(self, net: Network, tol: float = 1e-12) -> bool:
        if abs(self.theta[0]) > tol:
            return False
        for bus in net.buses:
            if bus.kind is not BusKind.PQ:
                if abs(self.rho[bus.index] - math.log(bus.v_set)) > tol:
                    return False
        return True

    def validated(self, net: Network) -> "VoltageState":
        if not self.is_valid(net, tol=1e-9):
            raise ModelError(
                "voltage state violates the reference angle or a pinned magnitude"
            )
        return self


@dataclasses.dataclass(frozen=True)
class OpConstraint:
    kind: str  # vmag, flow, q, p
    side: str  # upper, lower
    bus: int
    bound: float
    other: Optional[int] = None
    label: str = ""


@dataclasses.dataclass(frozen=True, eq=False)
class OperationalLimits:
    """Bounds of the operational constraints, with the line tightening parameter.

    Flow bounds apply to |V_i - V_j| and are replaced by min(gamma, flow_max).
    Any bound that is not finite is left out of the constraint list.
    """

    v_min: np.ndarray
    v_max: np.ndarray
    flow_max: np.ndarray
    q_min: np.ndarray
    q_max: np.ndarray
    p_min_slack: float = -math.inf
    p_max_slack: float = math.inf
    gamma: float = math.inf

    def __post_init__(self) -> None:
        if not self.gamma > 0:
            raise ModelError(f"gamma must be positive, got {self.gamma}")
        if np.any(self.v_min > self.v_max) or np.any(self.q_min > self.q_max):
            raise ModelError("operational limits contain an empty interval")
        if self.p_min_slack > self.p_max_slack:
            raise ModelError("slack active power interval is empty")

    @classmethod
    def from_network(
        cls,
        net: Network,
        gamma: float = math.inf,
        v_band: Optional[tuple[float, float]] = None,
        flow_limit: Optional[float] = None,
        generator_limits: bool = True,
    ) -> "OperationalLimits":
        size = len(net.buses)
        if v_band is not None:
            v_min = np.full(size, float(v_band[0]))
            v_max = np.full(size, float(v_band[1]))
        else:
            v_min = np.array([bus.v_min for bus in net.buses], dtype=float)
            v_max = np.array([bus.v_max for bus in net.buses], dtype=float)

        if flow_limit is not None:
            flow_max = np.full(len(net.edges), float(flow_limit))
        else:
            flow_max = net.edge_flow_limits

        if generator_limits:
            q_min = np.array([bus.q_min for bus in net.buses], dtype=float)
            q_max = np.array([bus.q_max for bus in net.buses], dtype=float)
            p_min, p_max = net.buses[0].p_min, net.buses[0].p_max
        else:
            q_min, q_max = np.full(size, -math.inf), np.full(size, math.inf)
            p_min, p_max = -math.inf, math.inf

        return cls(
            v_min=v_min,
            v_max=v_max,
            flow_max=flow_max,
            q_min=q_min,
            q_max=q_max,
            p_min_slack=p_min,
            p_max_slack=p_max,
            gamma=gamma,
        )

    @classmethod
    def unbounded(cls, net: Network) -> "OperationalLimits":
        size = len(net.buses)
        return cls(
            v_min=np.full(size, -math.inf),
            v_max=np.full(size, math.inf),
            flow_max=np.full(len(net.edges), math.inf),
            q_min=np.full(size, -math.inf),
            q_max=np.full(size, math.inf),
        )

    def with_gamma(self, gamma: Optional[float]) -> "OperationalLimits":
        if gamma is None:
            return self
        return dataclasses.replace(self, gamma=float(gamma))

    def effective_flow_max(self) -> np.ndarray:
        return np.minimum(self.flow_max, self.gamma)

    def constraints(self, net: Network) -> list[OpConstraint]:
        """Scalar constraints in their fixed order.

        PQ magnitudes (upper, lower), branch flows, PV reactive power
        (upper, lower), slack reactive power, slack active power.
        """
        ext = net.ext_ids
        out: list[OpConstraint] = []

        def add(kind, side, bus, bound, other=None, name=None):
            if math.isfinite(bound):
                name = name or f"{kind}({ext[bus]})"
                out.append(
                    OpConstraint(kind, side, bus, float(bound), other, f"{name} {side}")
                )

        for i in net.pq:
            add("vmag", "upper", i, self.v_max[i])
            add("vmag", "lower", i, self.v_min[i])

        for (i, j), bound in zip(net.edges, self.effective_flow_max()):
            add("flow", "upper", i, bound, j, f"flow({ext[i]},{ext[j]})")

        for i in net.pv:
            add("q", "upper", i, self.q_max[i])
            add("q", "lower", i, self.q_min[i])

        add("q", "upper", 0, self.q_max[0])
        add("q", "lower", 0, self.q_min[0])
        add("p", "upper", 0, self.p_max_slack)
        add("p", "lower", 0, self.p_min_slack)

        return out


@dataclasses.dataclass(frozen=True, eq=False)
class JacobianQuadForm:
    """Jacobian written as a quadratic function of the voltage phasors.

    J(V) = sum_i delta_i |V_i|^2
         + sum_(i,j) gamma_ij Re(V_i conj V_j) + psi_ij Im(V_i conj V_j)

    with one ``delta`` matrix per PQ bus and one (gamma, psi) pair per edge.
    """

    pq: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    delta: np.ndarray
    gamma: np.ndarray
    psi: np.ndarray

    def evaluate(self, V: VoltageState) -> np.ndarray:
        voltage = V.voltage
        magnitudes = np.abs(voltage[list(self.pq)]) ** 2
        if self.edges:
            a = np.array([edge[0] for edge in self.edges])
            b = np.array([edge[1] for edge in self.edges])
            products = voltage[a] * voltage[b].conj()
        else:
            products = np.zeros(0, dtype=complex)
        return (
            np.einsum("i,ijk->jk", magnitudes, self.delta)
            + np.einsum("e,ejk->jk", products.real, self.gamma)
            + np.einsum("e,ejk->jk", products.imag, self.psi)
        )


def bus_power(net: Network, V: VoltageState) -> np.ndarray:
    """Complex power injected at every bus."""
    voltage = V.voltage
    return voltage * np.conj(net.Y @ voltage)


def evaluate_F(net: Network, V: VoltageState) -> np.ndarray:
    power = bus_power(net, V)
    return np.concatenate([power.real[1:], power.imag[list(net.pq)]])


def jacobian_analytic(net: Network, V: VoltageState) -> np.ndarray:
    """Derivatives of F with respect to (theta on buses 1..n, rho on PQ buses)."""
    voltage = V.voltage
    Y = net.Y
    current = Y @ voltage
    diag_v = np.diag(voltage)

    dS_dtheta = 1j * diag_v @ np.conj(np.diag(current) - Y @ diag_v)
    dS_drho = diag_v @ np.conj(Y @ diag_v) + np.diag(np.conj(current)) @ diag_v

    nsb = list(net.nsb)
    pq = list(net.pq)
    return np.block(
        [
            [dS_dtheta[np.ix_(nsb, nsb)].real, dS_drho[np.ix_(nsb, pq)].real],
            [dS_dtheta[np.ix_(pq, nsb)].imag, dS_drho[np.ix_(pq, pq)].imag],
        ]
    )


def jacobian_quadform(net: Network) -> JacobianQuadForm:
    k, n = net.k, net.n
    pq = net.pq
    G, B = net.G, net.B
    edges = net.edges

    # column of theta_i / rho_i, row of P_i / Q_i
    theta_col = {i: i - 1 for i in net.nsb}
    rho_col = {bus: n + pos for pos, bus in enumerate(pq)}
    p_row = theta_col
    q_row = rho_col

    delta = np.zeros((len(pq), k, k))
    for pos, i in enumerate(pq):
        delta[pos, p_row[i], rho_col[i]] += 2 * G[i, i]
        delta[pos, q_row[i], rho_col[i]] -= 2 * B[i, i]

    gamma = np.zeros((len(edges), k, k))
    psi = np.zeros((len(edges), k, k))

    for e, (a, b) in enumerate(edges):
        # row bus i sees neighbour j; Im(V_i conj V_j) = sg * Im(V_a conj V_b)
        for i, j, sg in ((a, b, 1.0), (b, a, -1.0)):
            g, bb = G[i, j], B[i, j]
            if g == 0 and bb == 0:
                continue

            if i in p_row:
                r = p_row[i]
                gamma[e, r, p_row[i]] += bb
                psi[e, r, p_row[i]] += -g * sg
                if j in theta_col:
                    gamma[e, r, theta_col[j]] -= bb
                    psi[e, r, theta_col[j]] += g * sg
                for col_bus in (i, j):
                    if col_bus in rho_col:
                        gamma[e, r, rho_col[col_bus]] += g
                        psi[e, r, rho_col[col_bus]] += bb * sg

            if i in q_row:
                r = q_row[i]
                gamma[e, r, theta_col[i]] += g
                psi[e, r, theta_col[i]] += bb * sg
                if j in theta_col:
                    gamma[e, r, theta_col[j]] -= g
                    psi[e, r, theta_col[j]] -= bb * sg
                for col_bus in (i, j):
                    if col_bus in rho_col:
                        gamma[e, r, rho_col[col_bus]] -= bb
                        psi[e, r, rho_col[col_bus]] += g * sg

    return JacobianQuadForm(pq=pq, edges=edges, delta=delta, gamma=gamma, psi=psi)


def _inf_norm(values: np.ndarray) -> float:
    return float(np.max(np.abs(values))) if values.size else 0.0


def min_singular_value(J: np.ndarray) -> float:
    if J.size == 0:
        return math.inf
    return float(np.linalg.svd(J, compute_uv=False)[-1])


def newton_solve(
    net: Network,
    s: np.ndarray,
    V0: VoltageState,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
) -> VoltageState:
    """Solve F(V) = s for the unknowns (theta on buses 1..n, rho on PQ buses).

    Full Newton steps, halved until the residual norm decreases. Raises
    NoConvergence, flagged ``singular`` when the Jacobian loses rank.
    """
    s = np.asarray(s, dtype=float)
    if s.shape != (net.k,):
        raise ModelError(f"injection vector must have length {net.k}, got {s.shape}")

    V = V0
    x = V.unknowns(net)
    mismatch = evaluate_F(net, V) - s
    residual = _inf_norm(mismatch)

    for iteration in range(max_iter):
        if residual <= tol:
            return V

        J = jacobian_analytic(net, V)
        if min_singular_value(J) < SINGULARITY_THRESHOLD:
            raise NoConvergence(residual, iteration, singular=True, state=V)
        dx = np.linalg.solve(J, -mismatch)

        norm = np.linalg.norm(mismatch)
        step = 1.0
        for _ in range(12):
            trial = V.with_unknowns(net, x + step * dx)
            trial_mismatch = evaluate_F(net, trial) - s
            if np.linalg.norm(trial_mismatch) < norm:
                break
            step /= 2

        x = x + step * dx
        V = trial
        mismatch = trial_mismatch
        residual = _inf_norm(mismatch)

    if residual <= tol:
        return V
    raise NoConvergence(residual, max_iter, state=V)


def continuation_solve(
    net: Network,
    s0: np.ndarray,
    V0: VoltageState,
    s: np.ndarray,
    steps: int = 10,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
) -> VoltageState:
    """Follow the solution branch through V0 along s0 + t (s - s0), t in [0, 1].

    Tangent predictor, Newton corrector; the step is halved on failure.
    """
    s0 = np.asarray(s0, dtype=float)
    s = np.asarray(s, dtype=float)
    direction = s - s0
    V = V0
    t, dt = 0.0, 1.0 / max(1, steps)
    min_dt = dt / 64

    while t < 1.0:
        dt = min(dt, 1.0 - t)
        J = jacobian_analytic(net, V)
        if min_singular_value(J) < SINGULARITY_THRESHOLD:
            raise NoConvergence(
                _inf_norm(evaluate_F(net, V) - s), 0, singular=True, state=V
            )
        tangent = np.linalg.solve(J, direction)
        predicted = V.with_unknowns(net, V.unknowns(net) + dt * tangent)
        try:
            V = newton_solve(
                net, s0 + (t + dt) * direction, predicted, tol=tol, max_iter=max_iter
            )
        except NoConvergence as e:
            dt /= 2
            if dt < min_dt:
                raise NoConvergence(
                    _inf_norm(evaluate_F(net, V) - s),
                    e.iterations,
                    singular=e.singular,
                    state=V,
                ) from e
            continue
        t += dt

    return V


def eval_operational(
    net: Network,
    lims: OperationalLimits,
    V: VoltageState,
    constraints: Optional[Sequence[OpConstraint]] = None,
) -> np.ndarray:
    """Constraint slacks; positive means strictly satisfied."""
    if constraints is None:
        constraints = lims.constraints(net)

    voltage = V.voltage
    power = bus_power(net, V)
    squared = np.abs(voltage) ** 2

    slacks = np.empty(len(constraints))
    for pos, c in enumerate(constraints):
        if c.kind == "vmag":
            value, bound = squared[c.bus], c.bound**2
        elif c.kind == "flow":
            value = abs(voltage[c.bus] - voltage[c.other]) ** 2
            bound = c.bound**2
        elif c.kind == "q":
            value, bound = power[c.bus].imag, c.bound
        else:
            value, bound = power[c.bus].real, c.bound
        slacks[pos] = bound - value if c.side == "upper" else value - bound
    return slacks


def min_slack(slacks: np.ndarray) -> float:
    return float(np.min(slacks)) if slacks.size else math.inf


def random_valid_state(
    net: Network,
    rng: np.random.Generator,
    angle_spread: float = 0.5,
    v_band: tuple[float, float] = (0.9, 1.1),
) -> VoltageState:
    V = VoltageState.flat(net)
    theta = V.theta.copy()
    rho = V.rho.copy()
    theta[1:] = rng.uniform(-angle_spread, angle_spread, net.n)
    pq = list(net.pq)
    rho[pq] = np.log(rng.uniform(v_band[0], v_band[1], len(pq)))
    return VoltageState(theta=theta, rho=rho)


def solve_from_starts(
    net: Network,
    lims: OperationalLimits,
    s: np.ndarray,
    starts: Iterable[VoltageState],
    stop_on_strict: bool = True,
) -> Optional[tuple[VoltageState, float]]:
    """Newton from each start; keep the solution with the largest minimum slack."""
    constraints = lims.constraints(net)
    best: Optional[tuple[VoltageState, float]] = None

    for start in starts:
        try:
            V = newton_solve(net, s, start)
        except NoConvergence:
            continue
        margin = min_slack(eval_operational(net, lims, V, constraints))
        if best is None or margin > best[1]:
            best = (V, margin)
        if stop_on_strict and margin > 0:
            break

    return best
