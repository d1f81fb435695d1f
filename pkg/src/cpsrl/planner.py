"""Exact finite-horizon planning on flat MDPs."""
from __future__ import annotations

import itertools

import numpy as np

from .errors import ContractError, SizeCapError
from .fmdp import TabularMdp

BRUTE_FORCE_CAP = 10**6


def backward_induction(m: TabularMdp) -> tuple[np.ndarray, np.ndarray]:
    """Optimal deterministic non-stationary policy and its value table.

    Returns ``policy`` of shape (H, S) and ``V`` of shape (H + 1, S) with
    ``V[H] == 0``.  Ties go to the lowest action index.
    """
    S, H = m.S, m.H
    V = np.zeros((H + 1, S))
    policy = np.zeros((H, S), dtype=np.int64)
    for h in range(H - 1, -1, -1):
        Q = m.R + m.P @ V[h + 1]
        policy[h] = np.argmax(Q, axis=1)
        V[h] = Q[np.arange(S), policy[h]]
    return policy, V


def policy_values(m: TabularMdp, policy) -> np.ndarray:
    """Value table (H + 1, S) of a deterministic policy."""
    pi = np.asarray(policy)
    if pi.shape != (m.H, m.S):
        raise ContractError(f"policy shape {pi.shape}, expected {(m.H, m.S)}")
    if pi.min() < 0 or pi.max() >= m.A:
        raise ContractError("policy references an undefined action")
    S = np.arange(m.S)
    V = np.zeros((m.H + 1, m.S))
    for h in range(m.H - 1, -1, -1):
        a = pi[h]
        V[h] = m.R[S, a] + m.P[S, a] @ V[h + 1]
    return V


def evaluate_policy(m: TabularMdp, policy) -> float:
    return float(m.mu @ policy_values(m, policy)[0])


def optimal_value(m: TabularMdp) -> float:
    _, V = backward_induction(m)
    return float(m.mu @ V[0])


def brute_force_optimal(m: TabularMdp, chunk: int = 4096) -> float:
    """Best mu-value over every deterministic non-stationary policy.

    Enumerates all ``A ** (S * H)`` policies; used as a test oracle.
    """
    S, A, H = m.S, m.A, m.H
    n_pol = A ** (S * H)
    if n_pol > BRUTE_FORCE_CAP:
        raise SizeCapError(f"{n_pol} policies exceed cap {BRUTE_FORCE_CAP}")
    states = np.arange(S)
    best = -np.inf
    it = itertools.product(range(A), repeat=S * H)
    while True:
        block = np.array(list(itertools.islice(it, chunk)), dtype=np.int64)
        if block.size == 0:
            break
        pols = block.reshape(-1, H, S)
        V = np.zeros((len(pols), S))
        for h in range(H - 1, -1, -1):
            a = pols[:, h, :]
            V = m.R[states, a] + np.einsum("nst,nt->ns", m.P[states, a], V)
        best = max(best, float((V @ m.mu).max()))
    return best
