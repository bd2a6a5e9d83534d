import dataclasses
import json
import logging
from functools import cached_property
from itertools import combinations_with_replacement
from typing import Any, Callable, Optional, Sequence, Union

import numpy as np
from scipy import sparse

from pfcert.constants import PROBLEM_SCHEMA_VERSION, RELAXATION_DEGREE
from pfcert.exceptions import RelaxationError
from pfcert.poly import Polynomial, PolySystem, poly_degree
from pfcert.util import canonical_json

logger = logging.getLogger(__name__)

# a monomial as the sorted tuple of its variable indices, () for the constant
Key = tuple[int, ...]


def tri_indices(side: int) -> tuple[np.ndarray, np.ndarray]:
    """Lower-triangle (row, col) pairs in column-major order."""
    cols, rows = np.triu_indices(side)
    return rows, cols


def tri_size(side: int) -> int:
    return side * (side + 1) // 2


def _key(monom: Sequence[int]) -> Key:
    return tuple(i for i, power in enumerate(monom) for _ in range(power))


def _merge(*keys: Key) -> Key:
    return tuple(sorted(sum(keys, ())))


class MomentIndex:
    """Bijection between monomials of degree <= ``degree`` and moment positions.

    Monomials are graded: all of degree 0, then 1, and so on, each degree in
    lexicographic order of its sorted variable indices.
    """

    def __init__(self, nvars: int, degree: int = RELAXATION_DEGREE) -> None:
        self.nvars = nvars
        self.degree = degree
        self.keys: list[Key] = [
            combo
            for d in range(degree + 1)
            for combo in combinations_with_replacement(range(nvars), d)
        ]
        self._positions = {key: pos for pos, key in enumerate(self.keys)}

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def m(self) -> int:
        return len(self.keys)

    def position(self, key: Key) -> int:
        try:
            return self._positions[key]
        except KeyError:
            raise RelaxationError(
                f"monomial of degree {len(key)} exceeds relaxation degree {self.degree}"
            ) from None

    def basis(self, degree: int) -> list[Key]:
        return [key for key in self.keys if len(key) <= degree]

    def first_order_positions(self) -> np.ndarray:
        return np.array([self._positions[(i,)] for i in range(self.nvars)], dtype=int)

    @cached_property
    def _keys_by_degree(self) -> list[tuple[np.ndarray, np.ndarray]]:
        out = []
        for d in range(1, self.degree + 1):
            positions = [pos for pos, key in enumerate(self.keys) if len(key) == d]
            factors = np.array([self.keys[pos] for pos in positions], dtype=int)
            out.append((np.array(positions, dtype=int), factors.reshape(-1, d)))
        return out

    def lift(self, x: Sequence[float]) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.nvars,):
            raise ValueError(f"point has dimension {x.shape}, expected {self.nvars}")
        y = np.empty(self.m)
        y[0] = 1.0
        for positions, factors in self._keys_by_degree:
            y[positions] = np.prod(x[factors], axis=1)
        return y


@dataclasses.dataclass(frozen=True, eq=False)
class PsdBlock:
    """Symmetric matrix whose lower-triangle entries (column-major) are
    ``coeffs @ y``."""

    label: str
    side: int
    coeffs: sparse.csr_matrix

    def evaluate(self, y: np.ndarray) -> np.ndarray:
        rows, cols = tri_indices(self.side)
        values = self.coeffs @ y
        matrix = np.zeros((self.side, self.side))
        matrix[rows, cols] = values
        matrix[cols, rows] = values
        return matrix

    def adjoint(self, Z: np.ndarray) -> np.ndarray:
        """The vector a with a'y = <Z, evaluate(y)> for every y."""
        rows, cols = tri_indices(self.side)
        weights = np.where(rows == cols, 1.0, 2.0)
        return self.coeffs.T @ (Z[rows, cols] * weights)


@dataclasses.dataclass(frozen=True, eq=False)
class MomentProblem:
    """Find y with A y = b and every PSD block positive semidefinite."""

    index: MomentIndex
    A: sparse.csr_matrix
    b: np.ndarray
    blocks: tuple[PsdBlock, ...]
    eq_labels: tuple[str, ...] = ()
    variables: tuple[str, ...] = ()

    @property
    def m(self) -> int:
        return self.A.shape[1]

    @property
    def moment_block(self) -> Optional[PsdBlock]:
        for block in self.blocks:
            if block.label == "moment":
                return block
        return None

    def equality_residual(self, y: np.ndarray) -> float:
        r = self.A @ y - self.b
        return float(np.max(np.abs(r))) if r.size else 0.0

    def min_eigenvalues(self, y: np.ndarray) -> np.ndarray:
        return np.array(
            [np.linalg.eigvalsh(block.evaluate(y))[0] for block in self.blocks]
        )

    def to_dict(self) -> dict[str, Any]:
        A = self.A.tocoo()
        return {
            "schema_version": PROBLEM_SCHEMA_VERSION,
            "m": self.m,
            "nvars": self.index.nvars,
            "degree": self.index.degree,
            "variables": list(self.variables),
            "equalities": {
                "rows": A.row.tolist(),
                "cols": A.col.tolist(),
                "vals": A.data.tolist(),
                "b": self.b.tolist(),
                "labels": list(self.eq_labels),
            },
            "psd_blocks": [
                {
                    "label": block.label,
                    "side": block.side,
                    "entries": [
                        [int(r), int(c), float(v)]
                        for r, c, v in zip(*_coo_triplets(block.coeffs))
                    ],
                }
                for block in self.blocks
            ],
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())


def _coo_triplets(matrix: sparse.spmatrix):
    coo = matrix.tocoo()
    return coo.row, coo.col, coo.data


def problem_from_json(payload: Union[str, dict[str, Any]]) -> MomentProblem:
    if isinstance(payload, str):
        payload = json.loads(payload)
    if payload.get("schema_version") != PROBLEM_SCHEMA_VERSION:
        raise RelaxationError(
            f"unsupported problem schema '{payload.get('schema_version')}'"
        )
    index = MomentIndex(payload["nvars"], payload["degree"])
    m = payload["m"]
    if m != index.m:
        raise RelaxationError(f"moment vector size {m} does not match index {index.m}")

    eqs = payload["equalities"]
    b = np.array(eqs["b"], dtype=float)
    A = sparse.csr_matrix(
        (eqs["vals"], (eqs["rows"], eqs["cols"])), shape=(len(b), m)
    )
    blocks = []
    for entry in payload["psd_blocks"]:
        side = entry["side"]
        triplets = np.array(entry["entries"], dtype=float).reshape(-1, 3)
        coeffs = sparse.csr_matrix(
            (triplets[:, 2], (triplets[:, 0].astype(int), triplets[:, 1].astype(int))),
            shape=(tri_size(side), m),
        )
        blocks.append(PsdBlock(entry["label"], side, coeffs))

    return MomentProblem(
        index=index,
        A=A,
        b=b,
        blocks=tuple(blocks),
        eq_labels=tuple(eqs.get("labels", ())),
        variables=tuple(payload.get("variables", ())),
    )


def _terms(p: Polynomial) -> list[tuple[Key, float]]:
    return [(_key(monom), float(coeff)) for monom, coeff in p.terms()]


def _localizing_block(
    index: MomentIndex, label: str, terms: list[tuple[Key, float]], basis: list[Key]
) -> PsdBlock:
    rows, cols = tri_indices(len(basis))
    entries: dict[tuple[int, int], float] = {}
    for entry, (r, c) in enumerate(zip(rows, cols)):
        base = _merge(basis[r], basis[c])
        for key, coeff in terms:
            slot = (entry, index.position(_merge(key, base)))
            entries[slot] = entries.get(slot, 0.0) + coeff
    entries = {slot: v for slot, v in entries.items() if v != 0.0}
    coeffs = sparse.csr_matrix(
        (
            list(entries.values()),
            ([slot[0] for slot in entries], [slot[1] for slot in entries]),
        ),
        shape=(tri_size(len(basis)), index.m),
    )
    return PsdBlock(label, len(basis), coeffs)


def dense_relaxation(sys: PolySystem, degree: int = RELAXATION_DEGREE) -> MomentProblem:
    """Order ``degree // 2`` moment relaxation, all monomials up to ``degree``.

    Every equality of degree d is multiplied by each monomial of degree
    <= degree - d; every inequality g localizes as L_y(g X X') over the
    monomial vector X of degree (degree - deg g) // 2.
    """
    index = MomentIndex(sys.nvars, degree)
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    labels: list[str] = ["normalization"]

    rows.append(0)
    cols.append(index.position(()))
    vals.append(1.0)
    row = 1

    for eq in sys.equalities:
        d = poly_degree(eq.poly)
        if d > degree:
            raise RelaxationError(
                f"equality '{eq.label}' has degree {d} above relaxation degree {degree}"
            )
        terms = _terms(eq.poly)
        if not terms:
            continue
        for multiplier in index.basis(degree - d):
            for key, coeff in terms:
                rows.append(row)
                cols.append(index.position(_merge(key, multiplier)))
                vals.append(coeff)
            labels.append(f"{eq.label} * {_describe(multiplier, sys.variables)}")
            row += 1

    b = np.zeros(row)
    b[0] = 1.0
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(row, index.m))

    blocks = [
        _localizing_block(index, "moment", [((), 1.0)], index.basis(degree // 2))
    ]
    for ineq in sys.inequalities:
        d = poly_degree(ineq.poly)
        if d > degree:
            raise RelaxationError(
                f"inequality '{ineq.label}' has degree {d} "
                f"above relaxation degree {degree}"
            )
        half = (degree - d) // 2
        blocks.append(
            _localizing_block(index, ineq.label, _terms(ineq.poly), index.basis(half))
        )

    logger.debug(
        "relaxation: %d moments, %d equality rows, %d PSD blocks (largest side %d)",
        index.m,
        row,
        len(blocks),
        max(block.side for block in blocks),
    )

    return MomentProblem(
        index=index,
        A=A,
        b=b,
        blocks=tuple(blocks),
        eq_labels=tuple(labels),
        variables=sys.variables,
    )


def _describe(key: Key, variables: Sequence[str]) -> str:
    if not key:
        return "1"
    return "*".join(variables[i] if i < len(variables) else f"x{i}" for i in key)


RELAXATIONS: dict[str, Callable[..., MomentProblem]] = {
    "dense": dense_relaxation,
}


def relax(
    sys: PolySystem, degree: int = RELAXATION_DEGREE, method: str = "dense"
) -> MomentProblem:
    try:
        builder = RELAXATIONS[method]
    except KeyError:
        raise RelaxationError(f"unknown relaxation '{method}'") from None
    return builder(sys, degree)


def lift_point(
    x: Sequence[float], index: Union[MomentIndex, MomentProblem]
) -> np.ndarray:
    if isinstance(index, MomentProblem):
        index = index.index
    return index.lift(x)


@dataclasses.dataclass(frozen=True, eq=False)
class Candidate:
    point: np.ndarray
    eigenvalues: np.ndarray
    eig_ratio: float


def extract_candidate(prob: MomentProblem, y: np.ndarray) -> Candidate:
    """First-order moments as a primal point, with the moment matrix spectrum.

    ``eig_ratio`` is lambda_2 / lambda_1 of the moment matrix, zero for a
    rank-one (exact) moment vector.
    """
    point = np.asarray(y, dtype=float)[prob.index.first_order_positions()]
    block = prob.moment_block
    if block is None:
        return Candidate(point=point, eigenvalues=np.zeros(0), eig_ratio=0.0)

    eigenvalues = np.linalg.eigvalsh(block.evaluate(y))[::-1]
    if eigenvalues.size < 2 or eigenvalues[0] <= 0:
        ratio = 0.0
    else:
        ratio = float(max(eigenvalues[1], 0.0) / eigenvalues[0])
    return Candidate(point=point, eigenvalues=eigenvalues, eig_ratio=ratio)
