"""Spatio-temporal interaction graph for one scene window.

Nodes are per-frame relative displacements; edge weights are the inverse
distance between two agents' displacements, and each frame's adjacency is
renormalised as D^-1/2 (A + I) D^-1/2.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# distance floor for nearly identical displacements (weight cap 1e6)
MIN_DISTANCE = 1e-6


@dataclass(frozen=True)
class StGraphBatch:
    V: np.ndarray  # (T', N, 2) relative displacements
    A: np.ndarray  # (T', N, N) normalised adjacency

    @property
    def n_frames(self) -> int:
        return self.V.shape[0]

    @property
    def n_agents(self) -> int:
        return self.V.shape[1]


def _ordered_sum(x: np.ndarray, axis: int) -> np.ndarray:
    # sorting first makes the sum independent of element order
    return np.sort(x, axis=axis).sum(axis=axis)


def to_relative(window: np.ndarray) -> np.ndarray:
    """Frame-to-frame displacements of a (T', N, 2) window; the first frame is zero."""
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 3 or window.shape[-1] != 2:
        raise ValueError(f"expected a (T, N, 2) window, got shape {window.shape}")
    if window.shape[0] < 2:
        raise ValueError("window needs at least two frames")
    V = np.zeros_like(window)
    V[1:] = window[1:] - window[:-1]
    return V


def edge_weight(v_i, v_j) -> float:
    d = float(np.hypot(*(np.asarray(v_i, dtype=np.float64) - np.asarray(v_j, dtype=np.float64))))
    if d == 0.0:
        return 0.0
    return 1.0 / max(d, MIN_DISTANCE)


def edge_weights(V_t: np.ndarray) -> np.ndarray:
    """Raw (N, N) adjacency for one frame of displacements (N, 2)."""
    diff = V_t[:, None, :] - V_t[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    with np.errstate(divide="ignore"):
        w = 1.0 / np.maximum(dist, MIN_DISTANCE)
    w[dist == 0.0] = 0.0
    return w


def normalize_adjacency(A: np.ndarray) -> np.ndarray:
    """D^-1/2 (A + I) D^-1/2 for an (N, N) weight matrix, or a stack (..., N, N)."""
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[-1]
    A_tilde = A + np.eye(n)
    d_inv_sqrt = 1.0 / np.sqrt(_ordered_sum(A_tilde, axis=-1))
    return d_inv_sqrt[..., :, None] * A_tilde * d_inv_sqrt[..., None, :]


def build_graph(window: np.ndarray) -> StGraphBatch:
    """Node features and normalised adjacency for a (T', N, 2) position window."""
    V = to_relative(window)
    raw = np.stack([edge_weights(v) for v in V])
    return StGraphBatch(V=V, A=normalize_adjacency(raw))


def identity_graph(window: np.ndarray) -> StGraphBatch:
    """Interaction-free variant: every adjacency slice is the identity."""
    V = to_relative(window)
    T, N = V.shape[:2]
    return StGraphBatch(V=V, A=np.broadcast_to(np.eye(N), (T, N, N)).copy())
