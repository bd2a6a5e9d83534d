import argparse
import dataclasses
import logging
from pathlib import Path
from typing import Any, Optional

import numpy as np

from pfcert.acpf import OperationalLimits
from pfcert.certify import BoxFit, fit_box_heuristic
from pfcert.conic import SolverSettings
from pfcert.constants import BISECTION_TOL, IPM_MAX_ITERS, SCS_MAX_ITERS
from pfcert.exceptions import ModelError
from pfcert.netmodel import Network, resolve_case
from pfcert.region import RegionKind, RegionSpec

logger = logging.getLogger(__name__)

CENTER_SOURCES = ("nominal", "zero", "fit")
SHAPE_SOURCES = ("uniform", "fit")


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce a run; serialized into every report."""

    case: str
    flow_limit: Optional[float] = None
    v_band: Optional[tuple[float, float]] = None
    generator_limits: bool = True
    gamma_floor: float = 0.05
    gamma_max: float = 2.0
    gamma: Optional[float] = None
    region: str = RegionKind.BOX.value
    center: str = "nominal"
    shape: str = "uniform"
    fit_samples: int = 10_000
    angle_spread: float = 0.5
    delta_max: float = 1.0
    delta: Optional[float] = None
    tol: float = BISECTION_TOL
    seed: int = 0
    mc_samples: int = 100
    out: str = "pfcert-out"
    jobs: int = 1
    backend: str = "auto"
    ipm_max_iters: int = IPM_MAX_ITERS
    scs_max_iters: int = SCS_MAX_ITERS
    external_solver: Optional[str] = None

    def __post_init__(self) -> None:
        if self.center not in CENTER_SOURCES:
            raise ModelError(f"unknown center source '{self.center}'")
        if self.shape not in SHAPE_SOURCES:
            raise ModelError(f"unknown region shape source '{self.shape}'")
        RegionKind(self.region)

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        names = {field.name for field in dataclasses.fields(cls)}
        values = {
            name: getattr(args, name)
            for name in names
            if getattr(args, name, None) is not None
        }
        if "v_band" in values:
            values["v_band"] = tuple(values["v_band"])
        if isinstance(values.get("out"), Path):
            values["out"] = str(values["out"])
        return cls(**values)

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> "RunConfig":
        names = {field.name for field in dataclasses.fields(cls)}
        values = {key: value for key, value in payload.items() if key in names}
        if values.get("v_band") is not None:
            values["v_band"] = tuple(values["v_band"])
        return cls(**values)

    def to_dict(self) -> dict[str, Any]:
        payload = dataclasses.asdict(self)
        if self.v_band is not None:
            payload["v_band"] = list(self.v_band)
        return payload

    def load_network(self) -> Network:
        return resolve_case(self.case, flow_limit=self.flow_limit)

    def limits(self, net: Network) -> OperationalLimits:
        return OperationalLimits.from_network(
            net,
            v_band=self.v_band,
            flow_limit=self.flow_limit,
            generator_limits=self.generator_limits,
        )

    def solver_settings(self) -> SolverSettings:
        return SolverSettings(
            backend=self.backend,
            ipm_max_iters=self.ipm_max_iters,
            scs_max_iters=self.scs_max_iters,
            external_command=self.external_solver,
        )

    def box_fit(self, net: Network, lims: OperationalLimits) -> BoxFit:
        return fit_box_heuristic(
            net,
            lims,
            self.fit_samples,
            seed=self.seed,
            angle_spread=self.angle_spread,
        )

    def region_template(self, net: Network, lims: OperationalLimits) -> RegionSpec:
        """Region at unit scale, from the configured center and shape sources."""
        kind = RegionKind(self.region)
        fit = self.box_fit(net, lims) if "fit" in (self.center, self.shape) else None

        if self.center == "nominal":
            center = net.nominal_injection()
        elif self.center == "zero":
            center = np.zeros(net.k)
        else:
            center = fit.center

        if self.shape == "fit" and kind is RegionKind.BOX:
            return RegionSpec.box(center, np.maximum(fit.widths, 1e-9))
        if self.shape == "fit":
            return RegionSpec.ellipsoid(center, fit.ellipsoid().shape)
        if kind is RegionKind.BOX:
            return RegionSpec.box(center, np.ones(net.k))
        return RegionSpec.ellipsoid(center, np.eye(net.k))
