import dataclasses
import logging
from enum import Enum
from typing import Any, Optional, Sequence

import numpy as np

from pfcert.exceptions import ModelError

logger = logging.getLogger(__name__)


class RegionKind(str, Enum):
    BOX = "box"
    ELLIPSOID = "ellipsoid"


@dataclasses.dataclass(frozen=True, eq=False)
class RegionSpec:
    """Box ``center +/- delta * widths`` or ellipsoid
    ``(s - center)' shape (s - center) <= delta^2`` in injection space."""

    kind: RegionKind
    center: np.ndarray
    delta: float = 1.0
    widths: Optional[np.ndarray] = None
    shape: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.delta < 0:
            raise ModelError(f"region scale must be non-negative, got {self.delta}")
        k = self.center.shape[0]
        if self.kind is RegionKind.BOX:
            if self.widths is None or self.widths.shape != (k,):
                raise ModelError(f"box widths must have length {k}")
            if np.any(self.widths <= 0):
                raise ModelError("box widths must be positive")
        else:
            if self.shape is None or self.shape.shape != (k, k):
                raise ModelError(f"ellipsoid shape must be {k}x{k}")
            if not np.allclose(self.shape, self.shape.T):
                raise ModelError("ellipsoid shape must be symmetric")
            try:
                np.linalg.cholesky(self.shape)
            except np.linalg.LinAlgError:
                raise ModelError("ellipsoid shape must be positive definite") from None

    @classmethod
    def box(
        cls, center: Sequence[float], widths: Sequence[float], delta: float = 1.0
    ) -> "RegionSpec":
        return cls(
            kind=RegionKind.BOX,
            center=np.asarray(center, dtype=float),
            widths=np.asarray(widths, dtype=float),
            delta=float(delta),
        )

    @classmethod
    def ellipsoid(
        cls, center: Sequence[float], shape: np.ndarray, delta: float = 1.0
    ) -> "RegionSpec":
        return cls(
            kind=RegionKind.ELLIPSOID,
            center=np.asarray(center, dtype=float),
            shape=np.asarray(shape, dtype=float),
            delta=float(delta),
        )

    @property
    def dim(self) -> int:
        return int(self.center.shape[0])

    def with_delta(self, delta: float) -> "RegionSpec":
        return dataclasses.replace(self, delta=float(delta))

    def contains(self, s: np.ndarray, tol: float = 0.0) -> bool:
        offset = np.asarray(s, dtype=float) - self.center
        if self.kind is RegionKind.BOX:
            return bool(np.all(np.abs(offset) <= self.delta * self.widths + tol))
        return bool(offset @ self.shape @ offset <= self.delta**2 + tol)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind is RegionKind.BOX:
            half = self.delta * self.widths
        else:
            half = self.delta * np.sqrt(np.diag(np.linalg.inv(self.shape)))
        return self.center - half, self.center + half

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Uniform samples from the region, one per row."""
        k = self.dim
        if self.kind is RegionKind.BOX:
            unit = rng.uniform(-1.0, 1.0, size=(count, k))
            return self.center + self.delta * unit * self.widths

        direction = rng.standard_normal(size=(count, k))
        norms = np.linalg.norm(direction, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        radius = rng.uniform(size=(count, 1)) ** (1.0 / k)
        ball = direction / norms * radius
        # (s - c)' Q (s - c) = delta^2 |u|^2 when s - c = delta L^-T u, Q = L L'
        lower = np.linalg.cholesky(self.shape)
        offsets = np.linalg.solve(lower.T, ball.T).T
        return self.center + self.delta * offsets

    def polynomials(self, svars: Sequence[Any]) -> list[tuple[str, Any]]:
        """Membership as polynomial inequalities ``p >= 0`` in the given variables."""
        out: list[tuple[str, Any]] = []
        if self.kind is RegionKind.BOX:
            for pos, (var, c, w) in enumerate(zip(svars, self.center, self.widths)):
                half = float(self.delta * w)
                out.append((f"region s{pos} upper", half + float(c) - var))
                out.append((f"region s{pos} lower", var - float(c) + half))
            return out

        offsets = [var - float(c) for var, c in zip(svars, self.center)]
        quad = 0
        for a, da in enumerate(offsets):
            for b, db in enumerate(offsets):
                if self.shape[a, b] != 0:
                    quad = quad + float(self.shape[a, b]) * da * db
        out.append(("region ellipsoid", float(self.delta**2) - quad))
        return out

    def to_dict(self) -> dict[str, Any]:
        payload: dict[str, Any] = {
            "kind": self.kind.value,
            "center": self.center.tolist(),
            "delta": self.delta,
        }
        if self.widths is not None:
            payload["widths"] = self.widths.tolist()
        if self.shape is not None:
            payload["shape"] = self.shape.tolist()
        return payload

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> "RegionSpec":
        try:
            kind = RegionKind(payload["kind"])
            center = payload["center"]
            delta = payload.get("delta", 1.0)
            if kind is RegionKind.BOX:
                return cls.box(center, payload["widths"], delta)
            return cls.ellipsoid(center, np.asarray(payload["shape"]), delta)
        except (KeyError, ValueError) as e:
            if isinstance(e, ModelError):
                raise
            raise ModelError(f"malformed region: {e}") from e


def ellipsoid_shape(samples: np.ndarray) -> np.ndarray:
    """Inverse sample covariance scaled to unit determinant."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    count, k = samples.shape
    if count <= k:
        raise ModelError(
            f"need more than {k} samples to fit a {k}-dimensional ellipsoid, "
            f"got {count}"
        )
    covariance = np.atleast_2d(np.cov(samples, rowvar=False))
    sign, logdet = np.linalg.slogdet(covariance)
    if sign <= 0 or not np.isfinite(logdet):
        raise ModelError("sample covariance is singular")
    shape = np.linalg.inv(covariance) * np.exp(logdet / k)
    return (shape + shape.T) / 2
