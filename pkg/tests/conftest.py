import math
import os
from pathlib import Path

import pytest

from pfcert.acpf import OperationalLimits, VoltageState, newton_solve
from pfcert.certify import check_jacobian
from pfcert.netmodel import Branch, Bus, BusKind, Network, bundled_case


def _two_bus(
    x: float = 0.5,
    r: float = 0.0,
    kind: BusKind = BusKind.PQ,
    p: float = 0.0,
    q: float = 0.0,
    v_min: float = 0.0,
    v_max: float = math.inf,
    flow_limit: float = math.inf,
) -> Network:
    """Slack bus 1 feeding bus 2 through a single line."""
    buses = (
        Bus(index=0, ext_id=1, kind=BusKind.SLACK, v_set=1.0),
        Bus(
            index=1,
            ext_id=2,
            kind=kind,
            v_set=1.0,
            v_min=v_min,
            v_max=v_max,
            p_inj=p,
            q_inj=q,
        ),
    )
    branches = (
        Branch(
            from_bus=0,
            to_bus=1,
            y_series=1 / complex(r, x),
            flow_limit=flow_limit,
        ),
    )
    return Network(buses=buses, branches=branches, name="two_bus")


@pytest.fixture
def two_bus():
    return _two_bus


@pytest.fixture
def tmp_chdir(tmp_path: Path):
    old = os.getcwd()
    os.chdir(tmp_path)
    yield tmp_path
    os.chdir(old)


@pytest.fixture(scope="session")
def case3() -> Network:
    return bundled_case("case3")


@pytest.fixture(scope="session")
def case6() -> Network:
    return bundled_case("case6")


@pytest.fixture(scope="session")
def case14() -> Network:
    return bundled_case("case14")


@pytest.fixture
def lossless_pq() -> Network:
    return _two_bus()


@pytest.fixture
def lossless_pv() -> Network:
    return _two_bus(kind=BusKind.PV)


@pytest.fixture(scope="session")
def case3_solution(case3):
    return newton_solve(case3, case3.nominal_injection(), VoltageState.initial(case3))


@pytest.fixture(scope="session")
def case3_limits(case3, case3_solution):
    """Uniform branch bound 15% above the largest nominal branch difference."""
    voltage = case3_solution.voltage
    widest = max(abs(voltage[i] - voltage[j]) for i, j in case3.edges)
    return OperationalLimits.from_network(
        case3, flow_limit=1.15 * widest, generator_limits=False
    )


@pytest.fixture(scope="session")
def case3_jacobian(case3, case3_limits):
    return check_jacobian(case3, case3_limits, 1.0)
