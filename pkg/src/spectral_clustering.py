"""
Spectral co-clustering of users and RRHs on the bipartite gain graph.

Vertices are ordered users first, then RRHs. The only edges join a user
and an RRH, weighted by their large-scale gain. Users with similar
propagation conditions end up in the same cluster; the branch-and-price
solver then keeps same-cluster users on different pilots.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import eigh
from sklearn.cluster import KMeans

from config import get_logger

logger = get_logger(__name__)

# Retries with K+1 before splitting oversized clusters directly
MAX_RERUNS = 5


class ClusteringError(Exception):
    """Raised for invalid gains, cluster counts or degenerate embeddings."""
    pass


@dataclass(frozen=True)
class BipartiteGainGraph:
    """Complete bipartite graph between users and RRHs."""

    weights: np.ndarray
    num_users: int
    num_rrhs: int

    @property
    def num_vertices(self) -> int:
        return self.num_users + self.num_rrhs

    @property
    def degrees(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    @property
    def degree_matrix(self) -> np.ndarray:
        return np.diag(self.degrees)

    @property
    def laplacian(self) -> np.ndarray:
        return self.degree_matrix - self.weights

    @property
    def normalized_laplacian(self) -> np.ndarray:
        """S = D^-1/2 L D^-1/2."""
        inv_root = 1.0 / np.sqrt(self.degrees)
        return self.laplacian * np.outer(inv_root, inv_root)


def build_graph(beta: np.ndarray) -> BipartiteGainGraph:
    """
    Bipartite gain graph from an (RRHs, users) gain matrix.

    Raises:
        ClusteringError: If any gain is not positive
    """
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    if beta.size == 0:
        raise ClusteringError("Gain matrix is empty")
    if np.any(~(beta > 0)):
        raise ClusteringError("Gains must be positive")

    num_rrhs, num_users = beta.shape
    total = num_users + num_rrhs
    weights = np.zeros((total, total))
    weights[:num_users, num_users:] = beta.T
    weights[num_users:, :num_users] = beta
    weights.flags.writeable = False
    return BipartiteGainGraph(weights, num_users, num_rrhs)


@dataclass(frozen=True)
class SpectralEmbedding:
    """Selected eigenvectors (columns) and their eigenvalues."""

    vectors: np.ndarray
    eigenvalues: np.ndarray


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # First clearly nonzero component of each column made positive
    fixed = vectors.copy()
    for j in range(fixed.shape[1]):
        nonzero = np.flatnonzero(np.abs(fixed[:, j]) > 1e-12)
        if nonzero.size and fixed[nonzero[0], j] < 0:
            fixed[:, j] = -fixed[:, j]
    return fixed


def normalized_spectral_embedding(
    graph: BipartiteGainGraph,
    num_clusters: int,
    include_null_vector: bool = False
) -> SpectralEmbedding:
    """
    Eigenvectors of S for the K smallest nonzero eigenvalues.

    Args:
        graph: Bipartite gain graph
        num_clusters: K
        include_null_vector: Start from the zero eigenvalue instead

    Raises:
        ClusteringError: If K is out of range
    """
    start = 0 if include_null_vector else 1
    limit = graph.num_vertices - start
    if not 1 <= num_clusters <= limit:
        raise ClusteringError(f"K must lie in 1..{limit}, got: {num_clusters}")

    values, vectors = eigh(graph.normalized_laplacian)
    chosen = slice(start, start + num_clusters)
    return SpectralEmbedding(_fix_signs(vectors[:, chosen]), values[chosen].copy())


def row_normalize(rows: np.ndarray) -> np.ndarray:
    """
    Scale every row to unit Euclidean norm.

    Raises:
        ClusteringError: If a row is zero
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    norms = np.linalg.norm(rows, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ClusteringError(f"Cannot normalize zero rows: {zero.tolist()[:10]}")
    return rows / norms[:, None]


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray
    inertia: float
    iterations: int


def kmeans(
    rows: np.ndarray,
    num_clusters: int,
    seed: int,
    n_init: int = 10,
    max_iter: int = 300,
    tol: float = 1e-9
) -> KMeansResult:
    """
    Lloyd k-means from k-means++ seeding, best of n_init restarts.

    Returns:
        KMeansResult with labels in 1..K

    Raises:
        ClusteringError: If K exceeds the number of rows
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if not 1 <= num_clusters <= rows.shape[0]:
        raise ClusteringError(f"K must lie in 1..{rows.shape[0]}, got: {num_clusters}")

    model = KMeans(
        n_clusters=num_clusters,
        init="k-means++",
        n_init=n_init,
        max_iter=max_iter,
        tol=tol,
        algorithm="lloyd",
        random_state=seed,
    )
    model.fit(rows)
    return KMeansResult(model.labels_.astype(int) + 1, float(model.inertia_), int(model.n_iter_))


def cut_value(graph: BipartiteGainGraph, membership: np.ndarray) -> float:
    """Total weight of edges joining different clusters."""
    membership = np.asarray(membership).reshape(-1)
    crossing = membership[:, None] != membership[None, :]
    return float(np.sum(graph.weights[crossing]) / 2.0)


def ncut_value(graph: BipartiteGainGraph, membership: np.ndarray, num_clusters: Optional[int] = None) -> float:
    """
    Normalized cut sum_k cut(V_k, complement) / (2 Vol(V_k)).

    Labels 1..num_clusters with no vertex are skipped with a warning.
    """
    membership = np.asarray(membership).reshape(-1)
    if membership.shape[0] != graph.num_vertices:
        raise ClusteringError(
            f"Membership covers {membership.shape[0]} of {graph.num_vertices} vertices"
        )

    labels = range(1, num_clusters + 1) if num_clusters else np.unique(membership)
    degrees = graph.degrees
    total = 0.0
    for label in labels:
        inside = membership == label
        if not np.any(inside):
            logger.warning(f"Cluster {label} is empty; skipped in Ncut")
            continue
        cut = float(np.sum(graph.weights[np.ix_(inside, ~inside)]))
        total += cut / (2.0 * float(np.sum(degrees[inside])))
    return total


@dataclass(frozen=True)
class ClusterResult:
    """User and RRH cluster indices (1..K) with the Ncut of the partition."""

    user_membership: np.ndarray
    rrh_membership: np.ndarray
    num_clusters: int
    ncut_value: float
    eigenvalues: np.ndarray
    reruns: int = 0
    splits: int = 0

    @property
    def largest_user_cluster(self) -> int:
        if self.user_membership.size == 0:
            return 0
        return int(np.max(np.bincount(self.user_membership)))


def default_cluster_count(num_users: int, num_pilots: int) -> int:
    """K = max(P, ceil(N_u / P))."""
    return max(num_pilots, int(np.ceil(num_users / num_pilots)))


def _relabel(labels: np.ndarray) -> np.ndarray:
    _, dense = np.unique(labels, return_inverse=True)
    return dense.reshape(-1) + 1


def _split_oversized(labels: np.ndarray, rows: np.ndarray, num_users: int, cap: int, seed: int) -> tuple:
    """Split user clusters above the cap with k-means, falling back to index chunks."""
    labels = labels.copy()
    splits = 0
    next_label = int(labels.max()) + 1
    while True:
        counts = np.bincount(labels[:num_users])
        largest = int(np.argmax(counts))
        if counts[largest] <= cap:
            return labels, splits
        members = np.flatnonzero(labels[:num_users] == largest)
        parts = int(np.ceil(members.size / cap))
        sub = kmeans(rows[members], parts, seed, n_init=10).labels
        if np.max(np.bincount(sub)) >= members.size:
            # Identical rows: k-means cannot separate them
            sub = np.arange(members.size) // cap + 1
        for part in np.unique(sub)[1:]:
            labels[members[sub == part]] = next_label
            next_label += 1
        splits += 1
        logger.warning(f"Split a cluster of {members.size} users into {parts} parts")


def cluster_users(
    beta: np.ndarray,
    num_pilots: int,
    num_clusters: Optional[int] = None,
    seed: int = 0,
    include_null_vector: bool = False,
    n_init: int = 10
) -> ClusterResult:
    """
    Spectral clustering of users (and RRHs) from the gain matrix.

    With automatic K, a user cluster larger than P triggers a rerun with
    K + 1 (up to MAX_RERUNS times); clusters still too large are then split
    by k-means on their embedding rows.

    Args:
        beta: (RRHs, users) gains
        num_pilots: P
        num_clusters: K override (no size guard when given)
        seed: k-means seed
        include_null_vector: Keep the zero-eigenvalue eigenvector
        n_init: k-means restarts

    Returns:
        ClusterResult
    """
    graph = build_graph(beta)
    if num_pilots < 1:
        raise ClusteringError(f"Pilot count must be >= 1, got: {num_pilots}")

    auto = num_clusters is None
    limit = graph.num_vertices - (0 if include_null_vector else 1)
    k = default_cluster_count(graph.num_users, num_pilots) if auto else int(num_clusters)
    if auto:
        k = min(k, limit)

    reruns = 0
    while True:
        embedding = normalized_spectral_embedding(graph, k, include_null_vector)
        rows = row_normalize(embedding.vectors)
        labels = kmeans(rows, k, seed, n_init=n_init).labels
        too_big = np.max(np.bincount(labels[:graph.num_users])) > num_pilots
        if not (auto and too_big) or reruns >= MAX_RERUNS or k + 1 > limit:
            break
        reruns += 1
        k += 1
        logger.warning(f"A user cluster exceeds {num_pilots} users; rerunning with K={k}")

    splits = 0
    if auto and np.max(np.bincount(labels[:graph.num_users])) > num_pilots:
        labels, splits = _split_oversized(labels, rows, graph.num_users, num_pilots, seed)

    labels = _relabel(labels)
    value = ncut_value(graph, labels)
    result = ClusterResult(
        user_membership=labels[:graph.num_users],
        rrh_membership=labels[graph.num_users:],
        num_clusters=int(labels.max()),
        ncut_value=value,
        eigenvalues=embedding.eigenvalues,
        reruns=reruns,
        splits=splits,
    )
    logger.debug(f"Clustering: K={result.num_clusters}, Ncut={value:.4f}, reruns={reruns}, splits={splits}")
    return result
