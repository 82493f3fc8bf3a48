"""PARAFAC(R) coefficient tensors.

A coefficient tensor is stored through its marginals: ``R`` groups of ``J``
vectors, the r-th group holding one vector per mode. No normalisation is
imposed on the marginals; only the reconstructed tensor is identified.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from math import prod
from typing import Sequence

import numpy as np

from .tensor import TensorError, vectorize

__all__ = [
    "ParafacCoefficient",
    "reconstruct",
    "rank_one",
    "mode_last_matricization",
    "design_matrices",
    "parameter_count",
]


@dataclass(frozen=True)
class ParafacCoefficient:
    """Marginals ``marginals[r][j]`` of a rank-R PARAFAC tensor."""

    marginals: tuple

    def __post_init__(self):
        groups = tuple(tuple(np.asarray(b, dtype=float) for b in g) for g in self.marginals)
        if not groups:
            raise TensorError("PARAFAC rank must be positive")
        shape = tuple(b.shape[0] for b in groups[0])
        for g in groups:
            if any(b.ndim != 1 for b in g) or tuple(b.shape[0] for b in g) != shape:
                raise TensorError("all PARAFAC components must share per-mode lengths")
        object.__setattr__(self, "marginals", groups)

    @classmethod
    def from_factors(cls, factors: Sequence[np.ndarray]) -> "ParafacCoefficient":
        """Build from factor matrices ``factors[j]`` of shape ``I_j x R``."""
        R = factors[0].shape[1]
        return cls(tuple(tuple(F[:, r] for F in factors) for r in range(R)))

    @property
    def rank(self) -> int:
        return len(self.marginals)

    @property
    def order(self) -> int:
        return len(self.marginals[0])

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(b.shape[0] for b in self.marginals[0])

    def factors(self) -> list[np.ndarray]:
        return [np.column_stack([g[j] for g in self.marginals]) for j in range(self.order)]

    def replace(self, r: int, j: int, value) -> "ParafacCoefficient":
        groups = [list(g) for g in self.marginals]
        groups[r][j] = np.asarray(value, dtype=float)
        return ParafacCoefficient(tuple(tuple(g) for g in groups))


def rank_one(vectors: Sequence[np.ndarray]) -> np.ndarray:
    return reduce(np.multiply.outer, [np.asarray(v, dtype=float) for v in vectors])


def reconstruct(c: ParafacCoefficient) -> np.ndarray:
    """Sum of the R rank-one outer products."""
    return sum(rank_one(g) for g in c.marginals)


def mode_last_matricization(c: ParafacCoefficient) -> np.ndarray:
    """``B_(J) = sum_r beta_J^(r) vec(beta_1^(r) o ... o beta_{J-1}^(r))'``."""
    out = np.zeros((c.dims[-1], prod(c.dims[:-1])))
    for g in c.marginals:
        out += np.outer(g[-1], vectorize(rank_one(g[:-1])))
    return out


def _kron_with_identity(vectors: Sequence[np.ndarray], j: int) -> np.ndarray:
    """``v_{J-1} kron ... kron I_{d_j} kron ... kron v_1`` over the first J-1 modes."""
    out = np.ones((1, 1))
    for i, v in enumerate(vectors):
        block = np.eye(v.shape[0]) if i == j else np.asarray(v, dtype=float)[:, None]
        out = np.kron(block, out)
    return out


def design_matrices(c: ParafacCoefficient, r: int, x) -> list[np.ndarray]:
    """Linear maps ``b_j`` with ``vec(B_r x_J x) = b_j @ beta_j^(r)`` for every mode j.

    ``r`` is zero-based. For the response modes ``b_j`` is the inner product
    ``<beta_J^(r), x>`` times a Kronecker product of the other marginals with an
    identity in slot j; for the last mode it is ``vec(beta_1 o ... o beta_{J-1}) x'``.
    """
    if not 0 <= r < c.rank:
        raise TensorError(f"component index {r} out of range for rank {c.rank}")
    x = np.asarray(x, dtype=float)
    g = c.marginals[r]
    if x.shape != (c.dims[-1],):
        raise TensorError(f"regressor of shape {x.shape} does not match last mode {c.dims[-1]}")
    head = g[:-1]
    scale = float(g[-1] @ x)
    mats = [scale * _kron_with_identity(head, j) for j in range(len(head))]
    mats.append(np.outer(vectorize(rank_one(head)), x))
    return mats


def parameter_count(dims: Sequence[int], R: int, form: str) -> int:
    """Free parameters of an ART(1) coefficient for a response of ``dims``.

    ``unrestricted`` counts every entry of the square coefficient tensor,
    ``mode_last_parafac`` a PARAFAC on the mode-(N+1) form, and
    ``contracted_parafac`` a PARAFAC on the order-2N contracted form.
    """
    dims = [int(d) for d in dims]
    if not dims:
        raise TensorError("dims must be nonempty")
    total = prod(dims)
    if form == "unrestricted":
        return total * total
    if form == "mode_last_parafac":
        return R * (sum(dims) + total)
    if form == "contracted_parafac":
        return 2 * R * sum(dims)
    raise TensorError(f"unknown parametrization {form!r}")
