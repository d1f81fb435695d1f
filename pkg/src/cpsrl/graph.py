"""Bipartite causal graphs, scopes and consistent-factorization enumeration.

Left variables are the state and action features ``x`` (``d_x`` of them),
right variables are the next-state features ``y`` (``d_y`` of them).  A graph
is stored as one sorted parent tuple per right variable.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from math import comb, prod
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, InfeasiblePriorError

Scope = tuple[int, ...]


def make_scope(indices: Iterable[int], d_x: int | None = None) -> Scope:
    """Canonical scope: sorted, duplicate-free tuple of ints."""
    idx = [int(i) for i in indices]
    if len(set(idx)) != len(idx):
        raise ContractError(f"duplicate index in scope {idx}")
    if d_x is not None:
        for i in idx:
            if not 0 <= i < d_x:
                raise ContractError(f"scope index {i} outside [0, {d_x})")
    return tuple(sorted(idx))


@dataclass(frozen=True)
class CausalGraph:
    d_x: int
    d_y: int
    parents: tuple[Scope, ...]

    def __post_init__(self):
        if self.d_x < 0 or self.d_y < 0:
            raise ContractError("negative graph dimension")
        if len(self.parents) != self.d_y:
            raise ContractError(
                f"expected {self.d_y} parent sets, got {len(self.parents)}")
        canon = tuple(make_scope(p, self.d_x) for p in self.parents)
        object.__setattr__(self, "parents", canon)

    @classmethod
    def from_parents(cls, d_x: int, parents: Sequence[Iterable[int]]) -> "CausalGraph":
        parents = [tuple(p) for p in parents]
        return cls(d_x, len(parents), tuple(parents))

    @classmethod
    def empty(cls, d_x: int, d_y: int) -> "CausalGraph":
        return cls(d_x, d_y, tuple(() for _ in range(d_y)))

    @property
    def sparseness(self) -> int:
        return max((len(p) for p in self.parents), default=0)

    def is_sparse(self, Z: int) -> bool:
        return self.sparseness <= Z

    def edges(self) -> set[tuple[int, int]]:
        return {(i, j) for j, p in enumerate(self.parents) for i in p}

    def to_dict(self) -> dict:
        return {"d_x": self.d_x, "d_y": self.d_y,
                "parents": [list(p) for p in self.parents]}

    @classmethod
    def from_dict(cls, data: dict) -> "CausalGraph":
        return cls(int(data["d_x"]), int(data["d_y"]),
                   tuple(tuple(p) for p in data["parents"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "CausalGraph":
        return cls.from_dict(json.loads(text))


def scope_select(x: Sequence[int], scope: Sequence[int]) -> tuple[int, ...]:
    """Project ``x`` onto the positions in ``scope`` (in scope order)."""
    n = len(x)
    out = []
    for i in scope:
        if not 0 <= i < n:
            raise ContractError(f"scope index {i} out of bounds for length {n}")
        out.append(int(x[i]))
    return tuple(out)


def assignment_index(sub: Sequence[int], supports: Sequence[int]) -> int:
    """Mixed-radix (row-major) code of ``sub`` in ``[0, prod(supports))``."""
    if len(sub) != len(supports):
        raise ContractError("assignment and supports differ in length")
    idx = 0
    for v, n in zip(sub, supports):
        if not 0 <= v < n:
            raise ContractError(f"value {v} outside support {n}")
        idx = idx * n + int(v)
    return idx


def index_to_assignment(index: int, supports: Sequence[int]) -> tuple[int, ...]:
    total = prod(supports)
    if not 0 <= index < total:
        raise ContractError(f"index {index} outside [0, {total})")
    out = []
    for n in reversed(supports):
        index, v = divmod(index, n)
        out.append(v)
    return tuple(reversed(out))


def radix_weights(supports: Sequence[int]) -> np.ndarray:
    """Place values such that ``assignment @ weights == assignment_index``."""
    w = np.ones(len(supports), dtype=np.int64)
    for i in range(len(supports) - 2, -1, -1):
        w[i] = w[i + 1] * supports[i + 1]
    return w


def enumerate_consistent_scopes(d_x: int, fixed: Iterable[int], Z: int) -> list[Scope]:
    """All scopes ``s`` with ``fixed <= s <= range(d_x)`` and ``|s| <= Z``.

    Ordered by size, then lexicographically.
    """
    fixed = make_scope(fixed, d_x)
    if Z > d_x:
        raise ContractError(f"Z={Z} exceeds d_x={d_x}")
    if len(fixed) > Z:
        raise InfeasiblePriorError(
            f"prior fixes {len(fixed)} parents but Z={Z}")
    free = [i for i in range(d_x) if i not in fixed]
    out = []
    for size in range(len(fixed), Z + 1):
        group = [tuple(sorted(fixed + extra))
                 for extra in itertools.combinations(free, size - len(fixed))]
        out.extend(sorted(group))
    return out


def count_consistent_scopes(d_x: int, eta: int, Z: int) -> tuple[int, int]:
    """Closed-form size of the candidate set and its ``2**(d_x - eta)`` bound."""
    if not 0 <= eta <= Z <= d_x:
        raise ContractError(f"need 0 <= eta <= Z <= d_x, got {eta}, {Z}, {d_x}")
    count = sum(comb(d_x - eta, i) for i in range(Z - eta + 1))
    return count, 2 ** (d_x - eta)


def is_subgraph(a: CausalGraph, b: CausalGraph) -> bool:
    if a.d_x != b.d_x or a.d_y != b.d_y:
        raise ContractError("graphs have different dimensions")
    return all(set(pa) <= set(pb) for pa, pb in zip(a.parents, b.parents))
