import dataclasses
import json
import logging
import math
import re
from enum import Enum
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from pfcert.constants import NETWORK_SCHEMA_VERSION
from pfcert.exceptions import CaseParseError, ModelError
from pfcert.util import canonical_json, finite_or_none, none_to_inf

logger = logging.getLogger(__name__)

BUNDLED_CASES = ("case3", "case6", "case14")

# minimum column counts of the MATPOWER tables we read
_TABLE_WIDTHS = {"bus": 13, "gen": 10, "branch": 11}

_TABLE_START = re.compile(r"^\s*mpc\.(\w+)\s*=\s*\[(.*)$")
_BASE_MVA = re.compile(r"^\s*mpc\.baseMVA\s*=\s*([-+0-9.eE]+)\s*;")


class BusKind(str, Enum):
    SLACK = "slack"
    PV = "pv"
    PQ = "pq"


@dataclasses.dataclass(frozen=True)
class Bus:
    index: int
    ext_id: int
    kind: BusKind
    v_set: float = 1.0
    v_min: float = 0.0
    v_max: float = math.inf
    q_min: float = -math.inf
    q_max: float = math.inf
    p_min: float = -math.inf
    p_max: float = math.inf
    p_inj: float = 0.0
    q_inj: float = 0.0
    g_shunt: float = 0.0
    b_shunt: float = 0.0
    v_init: float = 1.0
    theta_init: float = 0.0

    def __post_init__(self) -> None:
        # PV and slack magnitudes are pinned, their bands are informational
        if self.kind is BusKind.PQ and not self.v_min < self.v_max:
            raise ModelError(
                f"bus {self.ext_id}: v_min ({self.v_min}) must be below "
                f"v_max ({self.v_max})"
            )
        if self.q_min > self.q_max:
            raise ModelError(
                f"bus {self.ext_id}: q_min ({self.q_min}) exceeds q_max ({self.q_max})"
            )
        if self.kind is not BusKind.PQ and self.v_set <= 0:
            raise ModelError(f"bus {self.ext_id}: voltage set-point must be positive")


@dataclasses.dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    y_series: complex
    y_shunt: complex = 0j
    tap: complex = 1 + 0j
    flow_limit: float = math.inf

    def __post_init__(self) -> None:
        if self.from_bus == self.to_bus:
            raise ModelError(f"branch {self.from_bus}-{self.to_bus} is a self loop")
        if not self.flow_limit > 0:
            raise ModelError(
                f"branch {self.from_bus}-{self.to_bus}: flow limit must be positive"
            )
        if self.tap == 0:
            raise ModelError(f"branch {self.from_bus}-{self.to_bus}: zero tap ratio")


@dataclasses.dataclass(frozen=True)
class Network:
    """Algebraic network model with the slack bus renumbered to index 0.

    Buses are stored in internal order; ``ext_id`` keeps the original case
    numbering for reports. Derived quantities (admittance matrix, index sets,
    merged edges) are computed once on first access.
    """

    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    base_mva: float = 100.0
    name: str = "network"

    def __post_init__(self) -> None:
        slack = [bus for bus in self.buses if bus.kind is BusKind.SLACK]
        if not slack:
            raise ModelError("network has no slack bus")
        if len(slack) > 1:
            raise ModelError(
                "network has multiple slack buses: "
                + ", ".join(str(bus.ext_id) for bus in slack)
            )
        for position, bus in enumerate(self.buses):
            if bus.index != position:
                raise ModelError(f"bus {bus.ext_id} stored out of internal order")
        if self.buses[0].kind is not BusKind.SLACK:
            raise ModelError("slack bus must be internal bus 0")
        for branch in self.branches:
            for end in (branch.from_bus, branch.to_bus):
                if not 0 <= end < len(self.buses):
                    raise ModelError(f"branch references unknown bus index {end}")

    @property
    def n(self) -> int:
        return len(self.buses) - 1

    @cached_property
    def pv(self) -> tuple[int, ...]:
        return tuple(bus.index for bus in self.buses if bus.kind is BusKind.PV)

    @cached_property
    def pq(self) -> tuple[int, ...]:
        return tuple(bus.index for bus in self.buses if bus.kind is BusKind.PQ)

    @property
    def nsb(self) -> tuple[int, ...]:
        return tuple(range(1, self.n + 1))

    @property
    def k(self) -> int:
        return self.n + len(self.pq)

    @cached_property
    def ext_ids(self) -> tuple[int, ...]:
        return tuple(bus.ext_id for bus in self.buses)

    def internal_index(self, ext_id: int) -> int:
        try:
            return self.ext_ids.index(ext_id)
        except ValueError:
            raise ModelError(f"no bus numbered {ext_id} in {self.name}") from None

    @cached_property
    def _merged_edges(self) -> tuple[tuple[tuple[int, int], ...], np.ndarray]:
        edges: dict[frozenset, tuple[int, int]] = {}
        limits: dict[frozenset, float] = {}
        for branch in self.branches:
            key = frozenset((branch.from_bus, branch.to_bus))
            if key not in edges:
                edges[key] = (branch.from_bus, branch.to_bus)
                limits[key] = branch.flow_limit
            else:
                limits[key] = min(limits[key], branch.flow_limit)
        return tuple(edges.values()), np.array(
            [limits[key] for key in edges], dtype=float
        )

    @property
    def edges(self) -> tuple[tuple[int, int], ...]:
        return self._merged_edges[0]

    @property
    def edge_flow_limits(self) -> np.ndarray:
        return self._merged_edges[1].copy()

    @cached_property
    def Y(self) -> np.ndarray:
        return build_admittance(self.buses, self.branches)

    @property
    def G(self) -> np.ndarray:
        return self.Y.real

    @property
    def B(self) -> np.ndarray:
        return self.Y.imag

    def nominal_injection(self) -> np.ndarray:
        """Scheduled injection vector: active at buses 1..n, reactive at PQ buses."""
        p = [self.buses[i].p_inj for i in self.nsb]
        q = [self.buses[i].q_inj for i in self.pq]
        return np.array(p + q, dtype=float)

    def injection_labels(self) -> list[str]:
        return [f"p({self.ext_ids[i]})" for i in self.nsb] + [
            f"q({self.ext_ids[i]})" for i in self.pq
        ]

    def with_flow_limit(self, flow_limit: Optional[float]) -> "Network":
        if flow_limit is None:
            return self
        return dataclasses.replace(
            self,
            branches=tuple(
                dataclasses.replace(branch, flow_limit=float(flow_limit))
                for branch in self.branches
            ),
        )


def build_admittance(
    buses: Union[tuple[Bus, ...], list[Bus]],
    branches: Union[tuple[Branch, ...], list[Branch]],
) -> np.ndarray:
    """Assemble the bus admittance matrix with the standard two-port branch model.

    The tap ``t`` sits on the from side: Yff = (ys + ysh/2)/|t|^2,
    Yft = -ys/conj(t), Ytf = -ys/t, Ytt = ys + ysh/2.
    """
    size = len(buses)
    rows: list[int] = []
    cols: list[int] = []
    vals: list[complex] = []

    for branch in branches:
        i, j = branch.from_bus, branch.to_bus
        ys, ysh, tap = branch.y_series, branch.y_shunt, branch.tap
        rows += [i, i, j, j]
        cols += [i, j, i, j]
        vals += [
            (ys + ysh / 2) / abs(tap) ** 2,
            -ys / tap.conjugate(),
            -ys / tap,
            ys + ysh / 2,
        ]
        if abs(np.angle(tap)) > 0:
            logger.warning(
                "branch %d-%d has a phase shift; admittance matrix is asymmetric",
                i,
                j,
            )

    for bus in buses:
        rows.append(bus.index)
        cols.append(bus.index)
        vals.append(complex(bus.g_shunt, bus.b_shunt))

    # duplicates are summed on conversion
    Y = sparse.coo_matrix(
        (np.array(vals, dtype=complex), (rows, cols)), shape=(size, size)
    ).toarray()

    if size > 1:
        ends = ([b.from_bus for b in branches], [b.to_bus for b in branches])
        pattern = sparse.coo_matrix(
            (np.ones(len(branches)), ends), shape=(size, size)
        )
        count, _ = connected_components(pattern, directed=False)
        if count > 1:
            logger.warning("network graph has %d connected components", count)

    return Y


def _strip_comment(line: str) -> str:
    return line.split("%", 1)[0]


def _parse_tables(text: str) -> tuple[float, dict[str, list[tuple[int, list[float]]]]]:
    base_mva: Optional[float] = None
    tables: dict[str, list[tuple[int, list[float]]]] = {}
    current: Optional[str] = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)

        if current is None:
            match = _BASE_MVA.match(line)
            if match:
                base_mva = float(match.group(1))
                continue

            match = _TABLE_START.match(line)
            if not match:
                continue
            name, rest = match.groups()
            if name not in _TABLE_WIDTHS:
                # gencost and friends are not needed
                current = "_skip"
            else:
                current = name
                tables[name] = []
            line = rest

        closed = "]" in line
        if closed:
            line = line.split("]", 1)[0]

        if current != "_skip":
            for chunk in line.split(";"):
                if not chunk.strip():
                    continue
                try:
                    row = [float(value) for value in chunk.split()]
                except ValueError:
                    raise CaseParseError(
                        f"non-numeric entry in mpc.{current}: '{chunk.strip()}'",
                        line=lineno,
                    ) from None
                if len(row) < _TABLE_WIDTHS[current]:
                    raise CaseParseError(
                        f"mpc.{current} row has {len(row)} columns, "
                        f"expected at least {_TABLE_WIDTHS[current]}",
                        line=lineno,
                    )
                tables[current].append((lineno, row))

        if closed:
            current = None

    if current is not None:
        raise CaseParseError(f"unterminated table mpc.{current}")
    if base_mva is None:
        raise CaseParseError("mpc.baseMVA not found")
    for name in ("bus", "branch"):
        if name not in tables:
            raise CaseParseError(f"mpc.{name} table not found")
    tables.setdefault("gen", [])

    return base_mva, tables


def _parse_matpower(
    text: str, name: str, flow_limit: Optional[float] = None
) -> Network:
    base, tables = _parse_tables(text)

    raw_buses: dict[int, tuple[int, list[float]]] = {}
    for lineno, row in tables["bus"]:
        ext_id, btype = int(row[0]), int(row[1])
        if btype not in (1, 2, 3, 4):
            raise CaseParseError(f"bus {ext_id}: unknown bus type {btype}", line=lineno)
        if ext_id in raw_buses:
            raise CaseParseError(f"duplicate bus number {ext_id}", line=lineno)
        if btype == 4:
            logger.warning("dropping isolated bus %d", ext_id)
            continue
        raw_buses[ext_id] = (lineno, row)

    gens: dict[int, list[list[float]]] = {}
    for lineno, row in tables["gen"]:
        ext_id = int(row[0])
        if row[7] <= 0:
            continue
        if ext_id not in raw_buses:
            raise CaseParseError(f"generator at unknown bus {ext_id}", line=lineno)
        gens.setdefault(ext_id, []).append(row)

    slack = [ext for ext, (_, row) in raw_buses.items() if int(row[1]) == 3]
    if not slack:
        raise ModelError(f"{name}: no slack bus")
    if len(slack) > 1:
        raise ModelError(
            f"{name}: multiple slack buses: " + ", ".join(str(s) for s in slack)
        )

    order = slack + [ext for ext in raw_buses if ext != slack[0]]
    position = {ext: idx for idx, ext in enumerate(order)}
    va_ref = math.radians(raw_buses[slack[0]][1][8])

    buses: list[Bus] = []
    for ext in order:
        _, row = raw_buses[ext]
        btype = int(row[1])
        pd, qd, gs, bs = row[2] / base, row[3] / base, row[4] / base, row[5] / base
        vm, va, vmax, vmin = row[7], row[8], row[11], row[12]
        bus_gens = gens.get(ext, [])

        if btype == 2 and not bus_gens:
            logger.warning(
                "bus %d is typed PV but has no generator; treating as PQ", ext
            )
            btype = 1

        pg = sum(g[1] for g in bus_gens) / base
        qg = sum(g[2] for g in bus_gens) / base
        kind = {1: BusKind.PQ, 2: BusKind.PV, 3: BusKind.SLACK}[btype]

        fields: dict[str, Any] = dict(
            index=position[ext],
            ext_id=ext,
            kind=kind,
            v_min=vmin,
            v_max=vmax,
            p_inj=pg - pd,
            q_inj=qg - qd,
            g_shunt=gs,
            b_shunt=bs,
            v_init=vm,
            theta_init=math.radians(va) - va_ref,
        )

        if kind is BusKind.PQ:
            fields["v_set"] = vm
        else:
            v_set = bus_gens[0][5] if bus_gens else vm
            fields.update(v_set=v_set, v_init=v_set)
            if bus_gens:
                fields.update(
                    q_min=sum(g[4] for g in bus_gens) / base - qd,
                    q_max=sum(g[3] for g in bus_gens) / base - qd,
                )
            if kind is BusKind.SLACK and bus_gens:
                fields.update(
                    theta_init=0.0,
                    p_min=sum(g[9] for g in bus_gens) / base - pd,
                    p_max=sum(g[8] for g in bus_gens) / base - pd,
                )
        buses.append(Bus(**fields))

    branches: list[Branch] = []
    for lineno, row in tables["branch"]:
        fbus, tbus = int(row[0]), int(row[1])
        if row[10] <= 0:
            continue
        if fbus not in position or tbus not in position:
            logger.warning("dropping branch %d-%d touching a removed bus", fbus, tbus)
            continue
        z = complex(row[2], row[3])
        if z == 0:
            raise ModelError(f"line {lineno}: branch {fbus}-{tbus} has zero impedance")
        ratio = row[8] if row[8] != 0 else 1.0
        shift = math.radians(row[9])
        tap = ratio * complex(math.cos(shift), math.sin(shift))
        branches.append(
            Branch(
                from_bus=position[fbus],
                to_bus=position[tbus],
                y_series=1 / z,
                y_shunt=complex(0, row[4]),
                tap=tap,
            )
        )

    net = Network(
        buses=tuple(buses), branches=tuple(branches), base_mva=base, name=name
    )
    return net.with_flow_limit(flow_limit)


def parse_case(
    text: str,
    name: str = "network",
    flow_limit: Optional[float] = None,
) -> Network:
    """Parse a MATPOWER case or the native JSON schema into a Network.

    ``flow_limit`` overrides every branch bound on |V_i - V_j|; MATPOWER
    ``rateA`` values are MVA ratings and are not used.
    """
    if text.lstrip().startswith("{"):
        return from_json(text).with_flow_limit(flow_limit)
    return _parse_matpower(text, name, flow_limit)


def load_case(path: Union[str, Path], flow_limit: Optional[float] = None) -> Network:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise CaseParseError(f"cannot read case file '{path}': {e.strerror}") from e
    return parse_case(text, name=path.stem, flow_limit=flow_limit)


def bundled_case(name: str, flow_limit: Optional[float] = None) -> Network:
    if name not in BUNDLED_CASES:
        raise ModelError(
            f"unknown bundled case '{name}' (available: {', '.join(BUNDLED_CASES)})"
        )
    text = resources.files("pfcert.cases").joinpath(f"{name}.m").read_text()
    return parse_case(text, name=name, flow_limit=flow_limit)


def resolve_case(case: str, flow_limit: Optional[float] = None) -> Network:
    """A path to a case file, or the name of a bundled case."""
    if case in BUNDLED_CASES and not Path(case).exists():
        return bundled_case(case, flow_limit=flow_limit)
    return load_case(case, flow_limit=flow_limit)


def _complex_pair(value: complex) -> list[float]:
    return [value.real, value.imag]


def to_dict(net: Network) -> dict[str, Any]:
    buses = []
    for bus in net.buses:
        entry: dict[str, Any] = {}
        for field in dataclasses.fields(Bus):
            value = getattr(bus, field.name)
            if isinstance(value, BusKind):
                value = value.value
            elif isinstance(value, float):
                value = finite_or_none(value)
            entry[field.name] = value
        buses.append(entry)

    branches = [
        {
            "from_bus": br.from_bus,
            "to_bus": br.to_bus,
            "y_series": _complex_pair(br.y_series),
            "y_shunt": _complex_pair(br.y_shunt),
            "tap": _complex_pair(br.tap),
            "flow_limit": finite_or_none(br.flow_limit),
        }
        for br in net.branches
    ]

    return {
        "schema_version": NETWORK_SCHEMA_VERSION,
        "name": net.name,
        "base_mva": net.base_mva,
        "buses": buses,
        "branches": branches,
    }


def to_json(net: Network) -> str:
    return canonical_json(to_dict(net))


# sign applied to null bounds when reading them back
_INFINITE_SIGNS = {
    "v_max": 1.0,
    "q_min": -1.0,
    "q_max": 1.0,
    "p_min": -1.0,
    "p_max": 1.0,
}


def from_dict(payload: dict[str, Any]) -> Network:
    version = payload.get("schema_version")
    if version != NETWORK_SCHEMA_VERSION:
        raise CaseParseError(
            f"unsupported network schema '{version}', "
            f"expected '{NETWORK_SCHEMA_VERSION}'"
        )
    try:
        buses = []
        for entry in payload["buses"]:
            fields = dict(entry)
            fields["kind"] = BusKind(fields["kind"])
            for key, sign in _INFINITE_SIGNS.items():
                fields[key] = none_to_inf(fields.get(key), sign)
            buses.append(Bus(**fields))

        branches = [
            Branch(
                from_bus=int(entry["from_bus"]),
                to_bus=int(entry["to_bus"]),
                y_series=complex(*entry["y_series"]),
                y_shunt=complex(*entry["y_shunt"]),
                tap=complex(*entry["tap"]),
                flow_limit=none_to_inf(entry["flow_limit"]),
            )
            for entry in payload["branches"]
        ]
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ModelError):
            raise
        raise CaseParseError(f"malformed network document: {e}") from e

    return Network(
        buses=tuple(buses),
        branches=tuple(branches),
        base_mva=float(payload.get("base_mva", 100.0)),
        name=str(payload.get("name", "network")),
    )


def from_json(text: str) -> Network:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise CaseParseError(f"invalid JSON: {e.msg}", line=e.lineno) from e
    return from_dict(payload)
