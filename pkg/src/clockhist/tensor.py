"""Dense complex linear algebra over labeled tensor-product spaces.

Every vector and operator carries an ordered tuple of :class:`SpaceLabel`
factors.  The canonical factor order is clock first, then the system, then
memory registers by index ("T", "Q", "M1", "M2", ...); constructors in the
higher layers always build in that order, while :func:`kron` itself just
concatenates.  Leftmost factors are slowest-varying in the flat index
(standard Kronecker convention).

All values are immutable after construction (arrays are copied and
write-locked), so everything here is safe to share across workers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from math import prod
from typing import Iterable, Sequence

import numpy as np

from .errors import ToleranceError

# Certificate tolerances, stated once and reused everywhere.
HERMITICITY_TOL = 1e-12
UNITARITY_TOL = 1e-10
KRAUS_TOL = 1e-10

_LABEL_RE = re.compile(r"^(T|Q|M[1-9][0-9]*)$")


@dataclass(frozen=True)
class SpaceLabel:
    """A named tensor factor of fixed dimension ("T", "Q" or "M<k>")."""

    name: str
    dim: int

    def __post_init__(self):
        if not _LABEL_RE.match(self.name):
            raise ValueError(
                f"space name must be 'T', 'Q' or 'M<k>', got {self.name!r}"
            )
        if self.dim < 1:
            raise ValueError(f"space {self.name!r} needs dim >= 1, got {self.dim}")

    def _sort_key(self) -> tuple[int, int]:
        if self.name == "T":
            return (0, 0)
        if self.name == "Q":
            return (1, 0)
        return (2, int(self.name[1:]))


def canonical_factors(factors: Iterable[SpaceLabel]) -> tuple[SpaceLabel, ...]:
    """Sort factors into the canonical T, Q, M1.. order."""
    return tuple(sorted(factors, key=SpaceLabel._sort_key))


def total_dim(factors: Sequence[SpaceLabel]) -> int:
    return prod(f.dim for f in factors)


def _check_unique(factors: Sequence[SpaceLabel]) -> None:
    names = [f.name for f in factors]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate space label in {names}")


def _frozen_complex(values, shape_hint: str) -> np.ndarray:
    arr = np.array(values, dtype=complex)
    if not np.all(np.isfinite(arr.view(float))):
        raise ValueError(f"non-finite entries in {shape_hint}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class StateVector:
    """A complex vector over an ordered list of labeled factors."""

    factors: tuple[SpaceLabel, ...]
    amplitudes: np.ndarray

    def __post_init__(self):
        factors = tuple(self.factors)
        _check_unique(factors)
        amps = _frozen_complex(self.amplitudes, "state vector")
        if amps.ndim != 1 or amps.size != total_dim(factors):
            raise ValueError(
                f"amplitude length {amps.size} != product of dims "
                f"{total_dim(factors)}"
            )
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def factor_index(self, label: SpaceLabel | str) -> int:
        name = label if isinstance(label, str) else label.name
        for i, f in enumerate(self.factors):
            if f.name == name:
                return i
        raise ValueError(f"no factor named {name!r} in {self.factor_names()}")

    def factor_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.factors)


@dataclass(frozen=True)
class Operator:
    """A dense square matrix over an ordered list of labeled factors.

    Hermiticity/unitarity certificates are computed lazily and cached; the
    corresponding defects are the max absolute entry of A - A^dag and of
    A^dag A - I.
    """

    factors: tuple[SpaceLabel, ...]
    matrix: np.ndarray

    def __post_init__(self):
        factors = tuple(self.factors)
        _check_unique(factors)
        mat = _frozen_complex(self.matrix, "operator matrix")
        d = total_dim(factors)
        if mat.ndim != 2 or mat.shape != (d, d):
            raise ValueError(f"matrix shape {mat.shape} != ({d}, {d})")
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "matrix", mat)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def factor_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.factors)

    @cached_property
    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    @cached_property
    def unitarity_defect(self) -> float:
        gram = self.matrix.conj().T @ self.matrix
        return float(np.max(np.abs(gram - np.eye(self.dim))))

    @property
    def is_hermitian(self) -> bool:
        return self.hermiticity_defect <= HERMITICITY_TOL

    @property
    def is_unitary(self) -> bool:
        return self.unitarity_defect <= UNITARITY_TOL

    def require_hermitian(self) -> "Operator":
        if not self.is_hermitian:
            raise ToleranceError(
                f"operator on {self.factor_names()} is not hermitian "
                f"(defect {self.hermiticity_defect:.3e} > {HERMITICITY_TOL})"
            )
        return self

    def require_unitary(self) -> "Operator":
        if not self.is_unitary:
            raise ToleranceError(
                f"operator on {self.factor_names()} is not unitary "
                f"(defect {self.unitarity_defect:.3e} > {UNITARITY_TOL})"
            )
        return self

    def dagger(self) -> "Operator":
        return Operator(self.factors, self.matrix.conj().T)


def identity(*factors: SpaceLabel) -> Operator:
    return Operator(tuple(factors), np.eye(total_dim(factors)))


def basis_vector(factor: SpaceLabel, k: int) -> StateVector:
    if not 0 <= k < factor.dim:
        raise ValueError(f"basis index {k} out of range for {factor.name} (dim {factor.dim})")
    amps = np.zeros(factor.dim, dtype=complex)
    amps[k] = 1.0
    return StateVector((factor,), amps)


def kron(a, b):
    """Tensor product of two vectors or two operators (factor lists concatenate)."""
    if isinstance(a, StateVector) and isinstance(b, StateVector):
        factors = a.factors + b.factors
        _check_unique(factors)
        return StateVector(factors, np.kron(a.amplitudes, b.amplitudes))
    if isinstance(a, Operator) and isinstance(b, Operator):
        factors = a.factors + b.factors
        _check_unique(factors)
        return Operator(factors, np.kron(a.matrix, b.matrix))
    raise TypeError(f"kron needs two vectors or two operators, got {type(a).__name__} and {type(b).__name__}")


def kron_all(items):
    """Left fold of :func:`kron` over a nonempty sequence."""
    items = list(items)
    if not items:
        raise ValueError("kron_all of empty sequence")
    out = items[0]
    for item in items[1:]:
        out = kron(out, item)
    return out


def apply(a: Operator, v: StateVector) -> StateVector:
    """Matrix-vector product; requires identical factor lists."""
    if a.factors != v.factors:
        raise ValueError(
            f"factor mismatch: operator on {a.factor_names()}, vector on {v.factor_names()}"
        )
    return StateVector(v.factors, a.matrix @ v.amplitudes)


def partial_project(v: StateVector, label: SpaceLabel | str, k: int) -> StateVector:
    """Unnormalized slice <k|_label v on the remaining factors.

    The squared norm of the result is the probability weight of branch k,
    and the slices over k decompose the squared norm of v exactly.
    """
    idx = v.factor_index(label)
    factor = v.factors[idx]
    if not 0 <= k < factor.dim:
        raise ValueError(f"index {k} out of range for {factor.name} (dim {factor.dim})")
    dims = [f.dim for f in v.factors]
    sliced = v.amplitudes.reshape(dims).take(k, axis=idx)
    rest = v.factors[:idx] + v.factors[idx + 1:]
    return StateVector(rest, sliced.reshape(-1))


def matrix_exp(h: Operator, theta: float) -> Operator:
    """exp(-i h theta) for hermitian h, via eigendecomposition (hbar = 1)."""
    h.require_hermitian()
    evals, evecs = np.linalg.eigh(h.matrix)
    mat = (evecs * np.exp(-1j * evals * theta)) @ evecs.conj().T
    return Operator(h.factors, mat)


@dataclass(frozen=True)
class KrausCompleteness:
    """Result of the Kraus normalization check: sum_a K_a^dag K_a vs identity."""

    max_deviation: float

    @property
    def passed(self) -> bool:
        return self.max_deviation <= KRAUS_TOL


def check_kraus_complete(ks: Sequence[Operator]) -> KrausCompleteness:
    if not ks:
        raise ValueError("empty Kraus family")
    shape = ks[0].matrix.shape
    for k in ks[1:]:
        if k.matrix.shape != shape:
            raise ValueError("Kraus operators must share one shape")
    acc = sum(k.matrix.conj().T @ k.matrix for k in ks)
    return KrausCompleteness(float(np.max(np.abs(acc - np.eye(shape[0])))))


def permute_factors(x, order: Sequence[str]):
    """Reorder the factors of a vector or operator to the named order."""
    current = x.factor_names()
    if sorted(current) != sorted(order):
        raise ValueError(f"order {tuple(order)} is not a permutation of {current}")
    perm = [current.index(name) for name in order]
    dims = [f.dim for f in x.factors]
    new_factors = tuple(x.factors[p] for p in perm)
    if isinstance(x, StateVector):
        arr = x.amplitudes.reshape(dims).transpose(perm).reshape(-1)
        return StateVector(new_factors, arr)
    if isinstance(x, Operator):
        n = len(dims)
        arr = x.matrix.reshape(dims + dims)
        arr = arr.transpose(list(perm) + [p + n for p in perm])
        d = x.dim
        return Operator(new_factors, arr.reshape(d, d))
    raise TypeError(f"cannot permute {type(x).__name__}")


def embed_operator(op: Operator, factors: Sequence[SpaceLabel]) -> Operator:
    """Extend op by identities onto a larger factor list (matching names/dims)."""
    factors = tuple(factors)
    _check_unique(factors)
    by_name = {f.name: f for f in factors}
    for f in op.factors:
        target = by_name.get(f.name)
        if target is None:
            raise ValueError(f"factor {f.name!r} absent from target {tuple(b.name for b in factors)}")
        if target.dim != f.dim:
            raise ValueError(f"factor {f.name!r} dim mismatch: {f.dim} vs {target.dim}")
    rest = [f for f in factors if f.name not in {g.name for g in op.factors}]
    wide = op if not rest else kron(op, identity(*rest))
    return permute_factors(wide, [f.name for f in factors])
