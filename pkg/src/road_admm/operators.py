"""Agent graphs and the consensus matrix family derived from them.

Stacked vectors are agent-major: block ``i`` of a length ``D*N`` vector holds
agent ``i``'s ``N`` coordinates, so every operator below is a graph matrix
tensored with ``I_N``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .exceptions import AllZeroSpectrum, DisconnectedGraph, InvalidEdge, NotSymmetric, ValidationError

#: eigenvalues below this fraction of the largest one count as zero
EIG_RTOL = 1e-10


@dataclass(frozen=True)
class Topology:
    """Undirected, connected agent graph with per-agent dimension ``N``.

    ``edges`` are normalised to ``(i, j)`` with ``i < j`` and sorted;
    ``arcs`` holds both orientations of every edge, sorted lexicographically.
    """

    D: int
    N: int
    edges: tuple[tuple[int, int], ...]
    arcs: tuple[tuple[int, int], ...] = field(init=False)

    def __post_init__(self):
        arcs = sorted([(i, j) for i, j in self.edges] + [(j, i) for i, j in self.edges])
        object.__setattr__(self, "arcs", tuple(arcs))

    @property
    def E(self) -> int:
        return len(self.edges)

    @property
    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.D, self.D))
        for i, j in self.edges:
            A[i, j] = A[j, i] = 1.0
        return A

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1).astype(int)

    @property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        nbrs: list[list[int]] = [[] for _ in range(self.D)]
        for i, j in self.arcs:
            nbrs[i].append(j)
        return tuple(tuple(n) for n in nbrs)


def _is_connected(D: int, edges: Iterable[tuple[int, int]]) -> bool:
    nbrs: list[list[int]] = [[] for _ in range(D)]
    for i, j in edges:
        nbrs[i].append(j)
        nbrs[j].append(i)
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for w in nbrs[u]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return len(seen) == D


def build_topology(D: int, N: int, edges: Iterable[Sequence[int]]) -> Topology:
    """Validate an edge list and return a connected :class:`Topology`.

    Raises
    ------
    InvalidEdge
        Self-loop, duplicate edge (in either orientation) or out-of-range index.
    DisconnectedGraph
        Some agent cannot be reached from agent 0.
    """
    if int(D) != D or D < 2:
        raise ValidationError(f"need at least 2 agents, got D={D}")
    if int(N) != N or N < 1:
        raise ValidationError(f"dimension must be a positive integer, got N={N}")
    D, N = int(D), int(N)
    normalised: set[tuple[int, int]] = set()
    for edge in edges:
        if len(edge) != 2:
            raise InvalidEdge(f"edge {edge!r} is not a pair")
        i, j = int(edge[0]), int(edge[1])
        if not (0 <= i < D and 0 <= j < D):
            raise InvalidEdge(f"edge ({i}, {j}) has an index outside [0, {D})")
        if i == j:
            raise InvalidEdge(f"self-loop at agent {i}")
        key = (min(i, j), max(i, j))
        if key in normalised:
            raise InvalidEdge(f"duplicate edge {key}")
        normalised.add(key)
    if not normalised:
        raise InvalidEdge("edge list is empty")
    if not _is_connected(D, normalised):
        raise DisconnectedGraph(f"graph on {D} agents with edges {sorted(normalised)} is not connected")
    return Topology(D=D, N=N, edges=tuple(sorted(normalised)))


def path_topology(D: int, N: int = 1) -> Topology:
    return build_topology(D, N, [(i, i + 1) for i in range(D - 1)])


def ring_topology(D: int, N: int = 1) -> Topology:
    if D < 3:
        return path_topology(D, N)
    return build_topology(D, N, [(i, (i + 1) % D) for i in range(D)])


def complete_topology(D: int, N: int = 1) -> Topology:
    return build_topology(D, N, [(i, j) for i in range(D) for j in range(i + 1, D)])


def star_topology(D: int, N: int = 1, center: int = 0) -> Topology:
    return build_topology(D, N, [(center, j) for j in range(D) if j != center])


def random_connected_topology(D: int, N: int = 1, p: float = 0.5, seed: int = 0,
                              max_tries: int = 10_000) -> Topology:
    """Erdos-Renyi graph G(D, p), redrawn from the same stream until connected."""
    if not 0.0 < p <= 1.0:
        raise ValidationError(f"edge probability must lie in (0, 1], got {p}")
    rng = np.random.default_rng(seed)
    pairs = [(i, j) for i in range(D) for j in range(i + 1, D)]
    for _ in range(max_tries):
        keep = rng.random(len(pairs)) < p
        edges = [pair for pair, k in zip(pairs, keep) if k]
        if edges and _is_connected(D, edges):
            return build_topology(D, N, edges)
    raise DisconnectedGraph(f"no connected G({D}, {p}) sample in {max_tries} draws")


def spectral_stats(M: np.ndarray, rtol: float = EIG_RTOL) -> tuple[float, float]:
    """Return ``(smallest nonzero eigenvalue, largest eigenvalue)`` of a symmetric PSD matrix.

    An eigenvalue counts as nonzero when it exceeds ``rtol * sigma_max``.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {M.shape}")
    if not np.allclose(M, M.T, rtol=0.0, atol=1e-12):
        raise NotSymmetric("matrix is not symmetric within 1e-12")
    eig = np.linalg.eigvalsh(M)
    sigma_max = float(eig[-1])
    if sigma_max <= 0.0:
        raise AllZeroSpectrum("matrix has no positive eigenvalue")
    nonzero = eig[eig > rtol * sigma_max]
    return float(nonzero[0]), sigma_max


def psd_sqrt(M: np.ndarray, rtol: float = EIG_RTOL) -> np.ndarray:
    """Symmetric square root of a PSD matrix; eigenvalues below ``rtol*max`` are clamped to 0."""
    w, V = np.linalg.eigh(M)
    w = np.where(w > rtol * w.max(), w, 0.0)
    S = (V * np.sqrt(w)) @ V.T
    return 0.5 * (S + S.T)


def psd_pinv(M: np.ndarray, rtol: float = EIG_RTOL) -> np.ndarray:
    w, V = np.linalg.eigh(M)
    inv = np.zeros_like(w)
    mask = w > rtol * w.max()
    inv[mask] = 1.0 / w[mask]
    P = (V * inv) @ V.T
    return 0.5 * (P + P.T)


@dataclass(frozen=True)
class ConsensusOperators:
    """Arc incidence matrices and the Laplacian family built from them.

    ``spectra`` maps each of ``"W"``, ``"L_plus"``, ``"L_minus"``, ``"Q"`` to
    ``(sigma_min_nonzero, sigma_max)``; these are raw eigenvalues, never squared.
    """

    topology: Topology
    A1: np.ndarray
    A2: np.ndarray
    M_plus: np.ndarray
    M_minus: np.ndarray
    W: np.ndarray
    L_plus: np.ndarray
    L_minus: np.ndarray
    Q: np.ndarray
    Q_pinv: np.ndarray
    spectra: dict[str, tuple[float, float]]

    @property
    def W_inv(self) -> np.ndarray:
        return np.diag(1.0 / np.diag(self.W))

    def consensus_basis(self) -> np.ndarray:
        """``D*N x N`` matrix whose columns span the consensus subspace ``1_D (x) R^N``."""
        t = self.topology
        return np.kron(np.ones((t.D, 1)), np.eye(t.N))


def build_operators(t: Topology) -> ConsensusOperators:
    D, N = t.D, t.N
    I_N = np.eye(N)
    A1 = np.zeros((2 * t.E * N, D * N))
    A2 = np.zeros_like(A1)
    for q, (i, j) in enumerate(t.arcs):
        A1[q * N:(q + 1) * N, i * N:(i + 1) * N] = I_N
        A2[q * N:(q + 1) * N, j * N:(j + 1) * N] = I_N
    M_plus = A1.T + A2.T
    M_minus = A1.T - A2.T
    L_plus = 0.5 * M_plus @ M_plus.T
    L_minus = 0.5 * M_minus @ M_minus.T
    W = np.kron(np.diag(t.degrees.astype(float)), I_N)
    Q = psd_sqrt(0.5 * L_minus)
    spectra = {
        "W": spectral_stats(W),
        "L_plus": spectral_stats(L_plus),
        "L_minus": spectral_stats(L_minus),
        "Q": spectral_stats(Q),
    }
    return ConsensusOperators(
        topology=t, A1=A1, A2=A2, M_plus=M_plus, M_minus=M_minus,
        W=W, L_plus=L_plus, L_minus=L_minus, Q=Q, Q_pinv=psd_pinv(Q), spectra=spectra,
    )
