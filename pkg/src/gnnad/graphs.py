"""Graph containers: symmetric sparse adjacency, bipartite graphs, labels."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DataError


class SparseAdjacency:
    """Symmetric neighbor lists over ``num_nodes`` nodes, CSR-backed.

    Neighbor lists are sorted and deduplicated; self-loops are rejected
    (encoders add the self contribution explicitly where their update rule
    calls for it). Construction symmetrizes the given edges, so u in N(v)
    iff v in N(u).
    """

    def __init__(self, num_nodes: int, edges):
        if num_nodes <= 0:
            raise ValueError(f"num_nodes must be positive, got {num_nodes}")
        self.num_nodes = int(num_nodes)
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            if edges.min() < 0 or edges.max() >= num_nodes:
                raise ValueError(
                    f"edge endpoint out of range [0, {num_nodes}):"
                    f" [{edges.min()}, {edges.max()}]"
                )
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ValueError("self-loops are not stored in the adjacency")
        both = np.vstack([edges, edges[:, ::-1]])
        keys = np.unique(both[:, 0] * np.int64(num_nodes) + both[:, 1])
        self.indices = (keys % num_nodes).astype(np.int64)
        sources = (keys // num_nodes).astype(np.int64)
        self.indptr = np.zeros(num_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(sources, minlength=num_nodes), out=self.indptr[1:])
        self._matrix = None
        self._inv_deg = None
        self._self_loop_edges = None

    @property
    def num_undirected_edges(self) -> int:
        return len(self.indices) // 2

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v] : self.indptr[v + 1]]

    def matrix(self) -> sp.csr_matrix:
        """0/1 CSR matrix view, cached (used for aggregation matvecs)."""
        if self._matrix is None:
            data = np.ones(len(self.indices))
            self._matrix = sp.csr_matrix(
                (data, self.indices, self.indptr),
                shape=(self.num_nodes, self.num_nodes),
            )
        return self._matrix

    def inverse_degrees(self) -> np.ndarray:
        """1/deg per node with 0 for isolated nodes (mean aggregation)."""
        if self._inv_deg is None:
            deg = self.degrees().astype(np.float64)
            with np.errstate(divide="ignore"):
                inv = np.where(deg > 0, 1.0 / np.maximum(deg, 1), 0.0)
            self._inv_deg = inv
        return self._inv_deg

    def self_loop_edges(self):
        """(src, dst, indptr) arrays for N(v) ∪ {v}, grouped by dst.

        Edge e attends from src[e] to dst[e]; dst blocks are contiguous and
        delimited by the returned indptr, with v itself appended at the end
        of its own block. Used by attention encoders.
        """
        if self._self_loop_edges is None:
            n = self.num_nodes
            src = np.insert(self.indices, self.indptr[1:], np.arange(n))
            counts = self.degrees() + 1
            dst = np.repeat(np.arange(n), counts)
            indptr = np.zeros(n + 1, dtype=np.int64)
            np.cumsum(counts, out=indptr[1:])
            self._self_loop_edges = (src, dst, indptr)
        return self._self_loop_edges

    def undirected_edges(self) -> np.ndarray:
        """Canonical (u, v) list with u < v, sorted."""
        u = np.repeat(np.arange(self.num_nodes), self.degrees())
        v = self.indices
        keep = u < v
        return np.column_stack([u[keep], v[keep]])

    def permuted(self, perm) -> "SparseAdjacency":
        """Relabel nodes: new id of node v is perm[v]."""
        perm = np.asarray(perm, dtype=np.int64)
        edges = self.undirected_edges()
        return SparseAdjacency(self.num_nodes, perm[edges])


@dataclass
class BipartiteGraph:
    """Users [0, U) and objects [U, U+O) with undirected user-object edges."""

    num_users: int
    num_objects: int
    edges: np.ndarray  # (m, 2) rows of (user_id, object_node_id), deduplicated
    adjacency: SparseAdjacency = field(repr=False)

    @property
    def num_nodes(self) -> int:
        return self.num_users + self.num_objects

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @classmethod
    def from_edges(cls, num_users: int, num_objects: int, edges) -> "BipartiteGraph":
        """Validate id ranges, collapse duplicate edges, build the adjacency."""
        if num_users <= 0 or num_objects <= 0:
            raise ValueError(
                f"need at least one user and one object, got U={num_users},"
                f" O={num_objects}"
            )
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        n = num_users + num_objects
        if edges.size:
            users, objects = edges[:, 0], edges[:, 1]
            if users.min() < 0 or users.max() >= num_users:
                raise DataError(
                    f"user id out of range [0, {num_users}):"
                    f" [{users.min()}, {users.max()}]"
                )
            if objects.min() < num_users or objects.max() >= n:
                raise DataError(
                    f"object node id out of range [{num_users}, {n}):"
                    f" [{objects.min()}, {objects.max()}]"
                )
            keys = np.unique(users * np.int64(n) + objects)
            edges = np.column_stack([keys // n, keys % n])
        return cls(
            num_users=num_users,
            num_objects=num_objects,
            edges=edges,
            adjacency=SparseAdjacency(n, edges),
        )


@dataclass
class LabelSet:
    """user_id -> {0, 1} labels; 1 marks an abnormal user. Objects stay unlabeled."""

    labels: dict[int, int]

    def __post_init__(self):
        for uid, lab in self.labels.items():
            if lab not in (0, 1):
                raise DataError(f"label for user {uid} must be 0 or 1, got {lab}")

    def __len__(self) -> int:
        return len(self.labels)

    def user_ids(self) -> np.ndarray:
        return np.array(sorted(self.labels), dtype=np.int64)

    def values_for(self, user_ids) -> np.ndarray:
        return np.array([self.labels[int(u)] for u in user_ids], dtype=np.int64)

    def class_counts(self) -> tuple[int, int]:
        pos = sum(self.labels.values())
        return len(self.labels) - pos, pos

    def validate_user_range(self, num_users: int):
        for uid in self.labels:
            if not 0 <= uid < num_users:
                raise DataError(
                    f"labeled id {uid} is not a user id (users are [0, {num_users}))"
                )
