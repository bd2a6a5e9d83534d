import dataclasses
import logging
from typing import Any, Optional, Sequence

import numpy as np
from sympy.polys.domains import RR
from sympy.polys.orderings import grlex
from sympy.polys.rings import PolyElement, ring

from pfcert.acpf import (
    JacobianQuadForm,
    OperationalLimits,
    VoltageState,
    jacobian_quadform,
)
from pfcert.constants import POLYSYSTEM_SCHEMA_VERSION
from pfcert.exceptions import RelaxationError
from pfcert.netmodel import Network
from pfcert.region import RegionSpec

logger = logging.getLogger(__name__)

Monomial = tuple[int, ...]
Polynomial = PolyElement


@dataclasses.dataclass(frozen=True)
class LabeledPolynomial:
    label: str
    poly: Polynomial

    @property
    def degree(self) -> int:
        return poly_degree(self.poly)


def poly_degree(p: Polynomial) -> int:
    if not p:
        return 0
    return max(sum(monom) for monom in p.keys())


def _compiled(p: Polynomial) -> tuple[np.ndarray, np.ndarray]:
    terms = p.terms()
    if not terms:
        return np.zeros((0, p.ring.ngens), dtype=int), np.zeros(0)
    monoms = np.array([monom for monom, _ in terms], dtype=int)
    coeffs = np.array([float(coeff) for _, coeff in terms])
    return monoms, coeffs


def eval_poly(p: Polynomial, x: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (p.ring.ngens,):
        raise ValueError(f"point has dimension {x.shape}, expected {p.ring.ngens}")
    monoms, coeffs = _compiled(p)
    if not coeffs.size:
        return 0.0
    return float(coeffs @ np.prod(x**monoms, axis=1))


@dataclasses.dataclass(frozen=True, eq=False)
class PolySystem:
    """Polynomial equalities (p = 0) and inequalities (p >= 0) over
    V^c = (lead, Re V_0..Re V_n, Im V_0..Im V_n), where the lead block is the
    Jacobian null vector z or the injection vector s."""

    variables: tuple[str, ...]
    lead: str
    nlead: int
    nbus: int
    equalities: tuple[LabeledPolynomial, ...]
    inequalities: tuple[LabeledPolynomial, ...]

    @property
    def nvars(self) -> int:
        return len(self.variables)

    @property
    def degree(self) -> int:
        return max(
            (p.degree for p in self.equalities + self.inequalities), default=0
        )

    def residuals(self, x: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
        eqs = np.array([eval_poly(p.poly, x) for p in self.equalities])
        ineqs = np.array([eval_poly(p.poly, x) for p in self.inequalities])
        return eqs, ineqs

    def max_violation(
        self, x: Sequence[float], skip_label: Optional[str] = None
    ) -> float:
        violation = 0.0
        for p in self.equalities:
            if p.label != skip_label:
                violation = max(violation, abs(eval_poly(p.poly, x)))
        for p in self.inequalities:
            if p.label != skip_label:
                violation = max(violation, -eval_poly(p.poly, x))
        return violation

    def to_dict(self) -> dict[str, Any]:
        def dump(p: LabeledPolynomial) -> dict[str, Any]:
            return {
                "label": p.label,
                "terms": [
                    [list(monom), float(coeff)] for monom, coeff in p.poly.terms()
                ],
            }

        return {
            "schema_version": POLYSYSTEM_SCHEMA_VERSION,
            "variables": list(self.variables),
            "lead": self.lead,
            "equalities": [dump(p) for p in self.equalities],
            "inequalities": [dump(p) for p in self.inequalities],
        }


def variable_names(lead: str, nlead: int, nbus: int) -> list[str]:
    return (
        [f"{lead}{i}" for i in range(nlead)]
        + [f"re{i}" for i in range(nbus)]
        + [f"im{i}" for i in range(nbus)]
    )


def _make_ring(lead: str, nlead: int, nbus: int):
    names = variable_names(lead, nlead, nbus)
    R, *gens = ring(names, RR, grlex)
    return R, names, gens[:nlead], gens[nlead : nlead + nbus], gens[nlead + nbus :]


class _Rectangular:
    """Bilinear voltage quantities as polynomials in (Re V, Im V)."""

    def __init__(self, e: Sequence[Polynomial], f: Sequence[Polynomial]) -> None:
        self.e = e
        self.f = f

    def mag(self, i: int) -> Polynomial:
        return self.e[i] ** 2 + self.f[i] ** 2

    def re(self, i: int, j: int) -> Polynomial:
        if i == j:
            return self.mag(i)
        return self.e[i] * self.e[j] + self.f[i] * self.f[j]

    def im(self, i: int, j: int) -> Polynomial:
        return self.f[i] * self.e[j] - self.e[i] * self.f[j]


def _bus_power(net: Network, rect: _Rectangular) -> tuple[list, list]:
    """P_i = sum_j G_ij Re(V_i conj V_j) + B_ij Im(...), Q_i = G Im - B Re."""
    G, B = net.G, net.B
    size = len(net.buses)
    P: list = []
    Q: list = []
    for i in range(size):
        p = 0
        q = 0
        for j in np.flatnonzero(net.Y[i]):
            j = int(j)
            g, b = float(G[i, j]), float(B[i, j])
            c = rect.re(i, j)
            if i == j:
                p = p + g * c
                q = q - b * c
                continue
            s = rect.im(i, j)
            p = p + g * c + b * s
            q = q + g * s - b * c
        P.append(p)
        Q.append(q)
    return P, Q


def injection_polynomials(net: Network, rect: _Rectangular) -> list:
    P, Q = _bus_power(net, rect)
    return [P[i] for i in net.nsb] + [Q[i] for i in net.pq]


def operational_polynomials(
    net: Network, lims: OperationalLimits, rect: _Rectangular
) -> list[LabeledPolynomial]:
    """H^op(V) >= 0 in the constraint order of ``OperationalLimits.constraints``."""
    P, Q = _bus_power(net, rect)
    out: list[LabeledPolynomial] = []
    for c in lims.constraints(net):
        if c.kind == "vmag":
            value, bound = rect.mag(c.bus), c.bound**2
        elif c.kind == "flow":
            de = rect.e[c.bus] - rect.e[c.other]
            df = rect.f[c.bus] - rect.f[c.other]
            value, bound = de**2 + df**2, c.bound**2
        elif c.kind == "q":
            value, bound = Q[c.bus], c.bound
        else:
            value, bound = P[c.bus], c.bound
        poly = bound - value if c.side == "upper" else value - bound
        out.append(LabeledPolynomial(f"Hop: {c.label}", poly))
    return out


def equality_constraints(net: Network, rect: _Rectangular) -> list[LabeledPolynomial]:
    """H^eq: pinned PV magnitudes, and the slack phasor fixed to (v_0, 0)."""
    out = [
        LabeledPolynomial(
            f"Heq: vmag({net.ext_ids[i]})", rect.mag(i) - net.buses[i].v_set**2
        )
        for i in net.pv
    ]
    v0 = net.buses[0].v_set
    out.append(LabeledPolynomial("Heq: re(slack)", rect.e[0] - v0))
    out.append(LabeledPolynomial("Heq: im(slack)", rect.f[0]))
    return out


def _jacobian_entries(
    qf: JacobianQuadForm, rect: _Rectangular, k: int
) -> list[list[Any]]:
    entries: list[list[Any]] = [[0] * k for _ in range(k)]
    terms: list[tuple[np.ndarray, Polynomial]] = []
    for pos, i in enumerate(qf.pq):
        terms.append((qf.delta[pos], rect.mag(i)))
    for e, (a, b) in enumerate(qf.edges):
        terms.append((qf.gamma[e], rect.re(a, b)))
        terms.append((qf.psi[e], rect.im(a, b)))

    for matrix, monomial in terms:
        for r, c in zip(*np.nonzero(matrix)):
            entries[r][c] = entries[r][c] + float(matrix[r, c]) * monomial
    return entries


def build_jacobian_system(
    net: Network, lims: OperationalLimits, gamma: Optional[float] = None
) -> PolySystem:
    """J_F(V) z = 0, z'z = 1, H^eq(V) = 0 and H^op(V; gamma) >= 0
    over (z, Re V, Im V)."""
    lims = lims.with_gamma(gamma)
    k, size = net.k, len(net.buses)
    R, names, z, e, f = _make_ring("z", k, size)
    rect = _Rectangular(e, f)
    entries = _jacobian_entries(jacobian_quadform(net), rect, k)
    labels = net.injection_labels()

    equalities: list[LabeledPolynomial] = []
    for r in range(k):
        row = R.zero
        for c in range(k):
            if entries[r][c] != 0:
                row = row + entries[r][c] * z[c]
        equalities.append(LabeledPolynomial(f"Jz: {labels[r]}", row))
    equalities.append(
        LabeledPolynomial("unit norm", sum((zi**2 for zi in z), R.zero) - 1)
    )
    equalities += equality_constraints(net, rect)

    return PolySystem(
        variables=tuple(names),
        lead="z",
        nlead=k,
        nbus=size,
        equalities=tuple(_in_ring(R, p) for p in equalities),
        inequalities=tuple(
            _in_ring(R, p) for p in operational_polynomials(net, lims, rect)
        ),
    )


def build_feasibility_system(
    net: Network,
    lims: OperationalLimits,
    gamma: Optional[float],
    region: RegionSpec,
    active_index: int,
) -> PolySystem:
    """Operational constraint ``active_index`` held at equality, F(V) = s,
    H^eq(V) = 0, the remaining H^op(V; gamma) >= 0 and s in the region."""
    lims = lims.with_gamma(gamma)
    k, size = net.k, len(net.buses)
    if region.dim != k:
        raise RelaxationError(f"region has dimension {region.dim}, network has {k}")

    R, names, s, e, f = _make_ring("s", k, size)
    rect = _Rectangular(e, f)
    hop = operational_polynomials(net, lims, rect)
    if not 0 <= active_index < len(hop):
        raise RelaxationError(
            f"constraint index {active_index} out of range (0..{len(hop) - 1})"
        )

    active = hop[active_index]
    labels = net.injection_labels()
    equalities = [LabeledPolynomial(f"{active.label} = 0", active.poly)]
    equalities += [
        LabeledPolynomial(f"F(V) = s: {labels[r]}", poly - s[r])
        for r, poly in enumerate(injection_polynomials(net, rect))
    ]
    equalities += equality_constraints(net, rect)

    inequalities = [p for pos, p in enumerate(hop) if pos != active_index]
    inequalities += [
        LabeledPolynomial(label, poly) for label, poly in region.polynomials(s)
    ]

    return PolySystem(
        variables=tuple(names),
        lead="s",
        nlead=k,
        nbus=size,
        equalities=tuple(_in_ring(R, p) for p in equalities),
        inequalities=tuple(_in_ring(R, p) for p in inequalities),
    )


def _in_ring(R, p: LabeledPolynomial) -> LabeledPolynomial:
    # constants built from plain numbers still need to live in the ring
    if not isinstance(p.poly, PolyElement):
        return LabeledPolynomial(p.label, R(p.poly))
    return p


def lift_state(
    net: Network, V: VoltageState, lead: Sequence[float]
) -> np.ndarray:
    """Point of V^c for a voltage state and a lead vector (z or s)."""
    voltage = V.voltage
    return np.concatenate([np.asarray(lead, dtype=float), voltage.real, voltage.imag])


def split_point(sys: PolySystem, x: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Lead vector and complex voltages of a point of V^c."""
    x = np.asarray(x, dtype=float)
    lead = x[: sys.nlead]
    re = x[sys.nlead : sys.nlead + sys.nbus]
    im = x[sys.nlead + sys.nbus :]
    return lead, re + 1j * im

