"""Comparison-graph data model, incidence/triad algebra, and least squares.

Items are labeled 1..K. Every pair is stored once, in the orientation
i < j, with the skew-symmetry convention Y(j,i) = -Y(i,j) applied at
ingestion. Profiles over pairs live in the lexicographic order
(1,2), (1,3), ..., (1,K), (2,3), ..., (K-1,K).
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass
from types import MappingProxyType

import numpy as np

from .errors import DisconnectedGraph, IndexOutOfRange
from .numerics import sym_eig


def pair_count(k: int) -> int:
    return k * (k - 1) // 2


@functools.lru_cache(maxsize=32)
def lex_pairs(k: int) -> np.ndarray:
    """All pairs (i, j), i < j, 1-based, in lexicographic order; shape (P, 2)."""
    pairs = np.array(list(itertools.combinations(range(1, k + 1), 2)), dtype=np.int64)
    pairs = pairs.reshape(pair_count(k), 2)
    pairs.setflags(write=False)
    return pairs


@functools.lru_cache(maxsize=16)
def triad_indices(k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """0-based index arrays (i, j, k) over all triads i < j < k."""
    triads = np.array(list(itertools.combinations(range(k), 3)), dtype=np.int64)
    triads = triads.reshape(-1, 3)
    for col in range(3):
        triads[:, col].setflags(write=False)
    return triads[:, 0], triads[:, 1], triads[:, 2]


def edges_connected(pairs: np.ndarray, items: "tuple[int, ...] | None", k: int) -> bool:
    """Whether the subgraph induced on ``items`` (or all of 1..k) is connected,
    using only edges with both endpoints inside the set."""
    universe = tuple(range(1, k + 1)) if items is None else tuple(sorted(set(items)))
    if len(universe) <= 1:
        return True
    member = np.zeros(k + 1, dtype=bool)
    member[list(universe)] = True
    parent = {v: v for v in universe}

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    groups = len(universe)
    for i, j in pairs:
        i, j = int(i), int(j)
        if member[i] and member[j]:
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[ri] = rj
                groups -= 1
                if groups == 1:
                    return True
    return groups == 1


def pair_index(i: int, j: int, k: int) -> int:
    """Lexicographic index of the pair (i, j) with 1 <= i < j <= k."""
    if not (1 <= i < j <= k):
        raise IndexOutOfRange(f"pair ({i},{j}) is not an ordered pair within 1..{k}")
    return (i - 1) * (2 * k - i) // 2 + (j - i - 1)


def pair_indices(pairs: np.ndarray, k: int) -> np.ndarray:
    """Vectorized ``pair_index`` for an (E, 2) array of i<j pairs."""
    i = pairs[:, 0].astype(np.int64)
    j = pairs[:, 1].astype(np.int64)
    return (i - 1) * (2 * k - i) // 2 + (j - i - 1)


@dataclass(frozen=True)
class PreferenceProfile:
    """A vector over all pairs of K items, stored for i < j only.

    The entry for (j, i) is by convention the negation of the (i, j)
    entry. Entries may be NaN to mark pairs on which the quantity is
    undefined (e.g. per-edge means of pairs that were never compared).
    """

    k: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (pair_count(self.k),):
            raise ValueError(
                f"profile for K={self.k} needs length {pair_count(self.k)}, "
                f"got {values.shape}"
            )
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, k: int) -> "PreferenceProfile":
        return cls(k, np.zeros(pair_count(k)))

    @classmethod
    def from_entries(cls, k: int, entries: dict[tuple[int, int], float]) -> "PreferenceProfile":
        values = np.zeros(pair_count(k))
        for (i, j), v in entries.items():
            if i < j:
                values[pair_index(i, j, k)] = v
            else:
                values[pair_index(j, i, k)] = -v
        return cls(k, values)

    @classmethod
    def from_merits(cls, mu: np.ndarray) -> "PreferenceProfile":
        """The linear profile with entries mu_i - mu_j."""
        mu = np.asarray(mu, dtype=float)
        k = mu.shape[0]
        pairs = lex_pairs(k)
        return cls(k, mu[pairs[:, 0] - 1] - mu[pairs[:, 1] - 1])

    def get(self, i: int, j: int) -> float:
        if i < j:
            return float(self.values[pair_index(i, j, self.k)])
        return -float(self.values[pair_index(j, i, self.k)])

    def norm2(self) -> float:
        return float(self.values @ self.values)


@dataclass(frozen=True)
class TriadVector:
    """The profile encoding the cycle i -> j -> k -> i for a triad i < j < k.

    Its three nonzero entries sit at (i,j) = +1, (j,k) = +1 and
    (i,k) = -1 (the (k,i) leg folded into i < j storage), so it is
    orthogonal to every linear profile.
    """

    triad: tuple[int, int, int]
    k: int
    values: np.ndarray

    def as_profile(self) -> PreferenceProfile:
        return PreferenceProfile(self.k, self.values)


def triad_vector(i: int, j: int, k: int, n_items: int) -> TriadVector:
    if not (1 <= i < j < k <= n_items):
        raise IndexOutOfRange(
            f"triad ({i},{j},{k}) is not strictly increasing within 1..{n_items}"
        )
    values = np.zeros(pair_count(n_items))
    values[pair_index(i, j, n_items)] = 1.0
    values[pair_index(j, k, n_items)] = 1.0
    values[pair_index(i, k, n_items)] = -1.0
    return TriadVector(triad=(i, j, k), k=n_items, values=values)


def add_triads(
    k: int, terms: list[tuple[tuple[int, int, int], float]]
) -> PreferenceProfile:
    """The cyclic profile sum of gamma-weighted triad vectors."""
    values = np.zeros(pair_count(k))
    for (i, j, kk), gamma in terms:
        values += gamma * triad_vector(i, j, kk, k).values
    return PreferenceProfile(k, values)


def incidence_matrix(k: int) -> np.ndarray:
    """Dense (P, K) matrix with row (i,j) carrying +1 at i and -1 at j."""
    return incidence_rows(lex_pairs(k), k)


def incidence_rows(pairs: np.ndarray, k: int) -> np.ndarray:
    """Incidence rows for an explicit (E, 2) pair array."""
    e = pairs.shape[0]
    b = np.zeros((e, k))
    rows = np.arange(e)
    b[rows, pairs[:, 0] - 1] = 1.0
    b[rows, pairs[:, 1] - 1] = -1.0
    return b


def incidence_t_apply(values: np.ndarray, pairs: np.ndarray, k: int) -> np.ndarray:
    """B' x for pair-indexed values without materializing B."""
    out = np.zeros(k)
    np.add.at(out, pairs[:, 0] - 1, values)
    np.subtract.at(out, pairs[:, 1] - 1, values)
    return out


def merit_differences(mu: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    """(B mu) restricted to the given pairs: entries mu_i - mu_j."""
    mu = np.asarray(mu, dtype=float)
    return mu[pairs[:, 0] - 1] - mu[pairs[:, 1] - 1]


class ComparisonGraph:
    """Items 1..K with a sample of cardinal outcomes on each compared pair.

    Outcomes are stored flat, grouped by edge in lexicographic pair
    order; per-edge counts, sums and sums of squares are derived once at
    construction. Instances are immutable and safe to share.
    """

    __slots__ = (
        "k",
        "pairs",
        "_flat",
        "_offsets",
        "counts",
        "sums",
        "sumsq",
        "_samples_view",
        "_components",
    )

    def __init__(self, k: int, pairs: np.ndarray, flat: np.ndarray, offsets: np.ndarray):
        if k < 2:
            raise ValueError("a comparison graph needs at least two items")
        self.k = int(k)
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        if pairs.size and not (
            np.all(pairs[:, 0] >= 1)
            and np.all(pairs[:, 1] <= k)
            and np.all(pairs[:, 0] < pairs[:, 1])
        ):
            raise IndexOutOfRange("edge list contains a pair outside 1 <= i < j <= K")
        if pairs.shape[0] > 1 and np.any(
            pair_indices(pairs[1:], k) <= pair_indices(pairs[:-1], k)
        ):
            raise ValueError("edge list must be strictly lexicographically sorted")
        flat = np.asarray(flat, dtype=float)
        offsets = np.asarray(offsets, dtype=np.int64)
        if offsets.shape != (pairs.shape[0] + 1,) or (offsets.size and offsets[-1] != flat.shape[0]):
            raise ValueError("offsets do not match the flat sample array")
        counts = np.diff(offsets)
        if np.any(counts <= 0):
            raise ValueError("every stored edge must carry at least one outcome")
        for arr in (pairs, flat, offsets):
            arr.setflags(write=False)
        self.pairs = pairs
        self._flat = flat
        self._offsets = offsets
        self.counts = counts
        self.counts.setflags(write=False)
        starts = offsets[:-1]
        self.sums = np.add.reduceat(flat, starts) if len(starts) else np.zeros(0)
        self.sumsq = np.add.reduceat(flat * flat, starts) if len(starts) else np.zeros(0)
        self.sums.setflags(write=False)
        self.sumsq.setflags(write=False)
        self._samples_view = None
        self._components = None

    @classmethod
    def from_samples(
        cls, k: int, samples: dict[tuple[int, int], "np.ndarray | list[float]"]
    ) -> "ComparisonGraph":
        """Build from a mapping pair -> outcomes; (j, i) keys are negated."""
        folded: dict[tuple[int, int], list[float]] = {}
        for (i, j), ys in samples.items():
            if i == j:
                raise IndexOutOfRange(f"pair ({i},{j}) compares an item with itself")
            ys = np.asarray(ys, dtype=float).ravel()
            if i < j:
                folded.setdefault((i, j), []).extend(ys.tolist())
            else:
                folded.setdefault((j, i), []).extend((-ys).tolist())
        return cls._from_folded(k, folded)

    @classmethod
    def from_comparisons(
        cls, k: int, rows: "list[tuple[int, int, float]]"
    ) -> "ComparisonGraph":
        """Build from (i, j, y) rows; rows with j < i are stored as (i, j, -y)."""
        folded: dict[tuple[int, int], list[float]] = {}
        for i, j, y in rows:
            if i == j:
                raise IndexOutOfRange(f"pair ({i},{j}) compares an item with itself")
            if i < j:
                folded.setdefault((i, j), []).append(float(y))
            else:
                folded.setdefault((j, i), []).append(-float(y))
        return cls._from_folded(k, folded)

    @classmethod
    def _from_folded(
        cls, k: int, folded: dict[tuple[int, int], list[float]]
    ) -> "ComparisonGraph":
        keys = sorted(folded, key=lambda p: (p[0], p[1]))
        if keys:
            pairs = np.array(keys, dtype=np.int64)
            lengths = np.array([len(folded[p]) for p in keys], dtype=np.int64)
            offsets = np.concatenate([[0], np.cumsum(lengths)])
            flat = np.concatenate([np.asarray(folded[p], dtype=float) for p in keys])
        else:
            pairs = np.zeros((0, 2), dtype=np.int64)
            offsets = np.zeros(1, dtype=np.int64)
            flat = np.zeros(0)
        return cls(k, pairs, flat, offsets)

    @property
    def samples(self) -> MappingProxyType:
        """Read-only mapping pair -> outcome array (views into flat storage)."""
        if self._samples_view is None:
            view = {
                (int(i), int(j)): self._flat[self._offsets[e] : self._offsets[e + 1]]
                for e, (i, j) in enumerate(self.pairs)
            }
            self._samples_view = MappingProxyType(view)
        return self._samples_view

    @property
    def edge_count(self) -> int:
        return self.pairs.shape[0]

    @property
    def n_total(self) -> int:
        return int(self._flat.shape[0])

    @property
    def flat_values(self) -> np.ndarray:
        return self._flat

    @property
    def offsets(self) -> np.ndarray:
        return self._offsets

    @property
    def means(self) -> np.ndarray:
        return self.sums / self.counts

    def edge_set(self) -> frozenset[tuple[int, int]]:
        return frozenset((int(i), int(j)) for i, j in self.pairs)

    def n(self, i: int, j: int) -> int:
        if i > j:
            i, j = j, i
        row = self._edge_row(i, j)
        return int(self.counts[row]) if row is not None else 0

    def _edge_row(self, i: int, j: int) -> int | None:
        idx = pair_indices(self.pairs, self.k) if self.edge_count else np.zeros(0, dtype=np.int64)
        target = pair_index(i, j, self.k)
        pos = int(np.searchsorted(idx, target))
        if pos < idx.shape[0] and idx[pos] == target:
            return pos
        return None

    def lex_edge_indices(self) -> np.ndarray:
        """Lexicographic pair index of each stored edge."""
        return pair_indices(self.pairs, self.k)

    def components(self) -> tuple[tuple[int, ...], ...]:
        """Connected components of (V, E), as sorted 1-based item tuples."""
        if self._components is None:
            parent = list(range(self.k + 1))

            def find(x: int) -> int:
                while parent[x] != x:
                    parent[x] = parent[parent[x]]
                    x = parent[x]
                return x

            for i, j in self.pairs:
                ri, rj = find(int(i)), find(int(j))
                if ri != rj:
                    parent[ri] = rj
            groups: dict[int, list[int]] = {}
            for v in range(1, self.k + 1):
                groups.setdefault(find(v), []).append(v)
            self._components = tuple(
                tuple(sorted(g)) for g in sorted(groups.values(), key=lambda g: g[0])
            )
        return self._components

    @property
    def is_connected(self) -> bool:
        return len(self.components()) == 1

    def induced(self, items: "list[int] | tuple[int, ...]") -> tuple["ComparisonGraph", tuple[int, ...]]:
        """Subgraph on ``items`` with labels remapped to 1..len(items).

        Returns the subgraph together with the sorted original labels, so
        new label r corresponds to original ``labels[r - 1]``.
        """
        labels = tuple(sorted(set(int(x) for x in items)))
        if not labels or labels[0] < 1 or labels[-1] > self.k:
            raise IndexOutOfRange("induced item set outside 1..K")
        relabel = {orig: new for new, orig in enumerate(labels, start=1)}
        member = np.zeros(self.k + 1, dtype=bool)
        member[list(labels)] = True
        keep = member[self.pairs[:, 0]] & member[self.pairs[:, 1]]
        rows = np.nonzero(keep)[0]
        folded_pairs = np.array(
            [(relabel[int(i)], relabel[int(j)]) for i, j in self.pairs[rows]],
            dtype=np.int64,
        ).reshape(-1, 2)
        order = np.argsort(pair_indices(folded_pairs, len(labels))) if rows.size else np.zeros(0, dtype=int)
        chunks = [
            self._flat[self._offsets[r] : self._offsets[r + 1]] for r in rows[order]
        ]
        flat = np.concatenate(chunks) if chunks else np.zeros(0)
        lengths = np.array([c.shape[0] for c in chunks], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(lengths)]) if chunks else np.zeros(1, dtype=np.int64)
        sub = ComparisonGraph(len(labels), folded_pairs[order], flat, offsets)
        return sub, labels


@dataclass(frozen=True)
class FitResult:
    """Least-squares merits, per-edge means, pooled error variance, and the
    bottleneck sample count of the graph."""

    mu_hat: np.ndarray
    nu_hat: PreferenceProfile
    sigma2_hat: float | None
    m_bottleneck: int


def laplacian(g: ComparisonGraph) -> np.ndarray:
    """K x K weighted Laplacian: diagonal row sums of n_ij, off-diagonal -n_ij."""
    n = np.zeros((g.k, g.k))
    i = g.pairs[:, 0] - 1
    j = g.pairs[:, 1] - 1
    w = g.counts.astype(float)
    np.subtract.at(n, (i, j), w)
    np.subtract.at(n, (j, i), w)
    np.add.at(n, (i, i), w)
    np.add.at(n, (j, j), w)
    return n


def laplacian_pinv(g: ComparisonGraph) -> np.ndarray:
    """Pseudoinverse of the graph Laplacian, asserting nullity one."""
    form = sym_eig(laplacian(g))
    expected = g.k - len(g.components())
    if form.rank != expected:
        raise AssertionError(
            f"Laplacian rank {form.rank} does not match graph structure ({expected})"
        )
    return form.pinv_matrix()


def score_sums(g: ComparisonGraph) -> np.ndarray:
    """The vector S with S_i the signed total of all outcomes involving item i."""
    return incidence_t_apply(g.sums, g.pairs, g.k)


def pooled_sigma2(g: ComparisonGraph) -> float | None:
    """Pooled within-edge variance over edges with n_ij >= 2; None if no
    edge is replicated. Valid under both the null and the alternative
    because it never touches between-edge structure."""
    mask = g.counts >= 2
    if not np.any(mask):
        return None
    ss = g.sumsq[mask] - g.sums[mask] ** 2 / g.counts[mask]
    df = int(np.sum(g.counts[mask] - 1))
    return float(np.sum(ss) / df)


def fit_merits(g: ComparisonGraph) -> np.ndarray:
    """Least-squares merit vector (sum zero) from the Laplacian pseudoinverse."""
    if not g.is_connected:
        raise DisconnectedGraph(g.components())
    return laplacian_pinv(g) @ score_sums(g)


def lse_fit(g: ComparisonGraph) -> FitResult:
    """Fit merits by Laplacian least squares and collect edge-level summaries."""
    mu = fit_merits(g)
    values = np.full(pair_count(g.k), np.nan)
    values[g.lex_edge_indices()] = g.means
    _, m = bottleneck_spanning_tree(g)
    return FitResult(
        mu_hat=mu,
        nu_hat=PreferenceProfile(g.k, values),
        sigma2_hat=pooled_sigma2(g),
        m_bottleneck=m,
    )


def decompose(nu: PreferenceProfile) -> tuple[PreferenceProfile, PreferenceProfile]:
    """Split a profile into its linear part (projection onto the incidence
    column space) and the orthogonal cyclic remainder."""
    k = nu.k
    pairs = lex_pairs(k)
    t = incidence_t_apply(nu.values, pairs, k)
    linear = merit_differences(t / k, pairs)
    return PreferenceProfile(k, linear), PreferenceProfile(k, nu.values - linear)


def psi_squared(nu_cyclic: PreferenceProfile, k: int | None = None) -> float:
    """Average cyclic energy: ||cyclic part||^2 divided by the pair count."""
    k = nu_cyclic.k if k is None else k
    return nu_cyclic.norm2() / pair_count(k)


def bottleneck_spanning_tree(
    g: ComparisonGraph,
) -> tuple[tuple[tuple[int, int], ...], int]:
    """Spanning tree maximizing the minimum edge count, and that minimum.

    Greedy descending-weight insertion: the maximum spanning tree has the
    maximum-bottleneck property, so the smallest weight it accepts is the
    bottleneck value.
    """
    if not g.is_connected:
        raise DisconnectedGraph(g.components())
    order = np.lexsort((g.lex_edge_indices(), -g.counts))
    parent = list(range(g.k + 1))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    tree: list[tuple[int, int]] = []
    m = 0
    for row in order:
        i, j = int(g.pairs[row, 0]), int(g.pairs[row, 1])
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            tree.append((i, j))
            m = int(g.counts[row])
            if len(tree) == g.k - 1:
                break
    return tuple(sorted(tree)), m


def inconsistent_triads(
    nu: PreferenceProfile,
    edge_set: "frozenset[tuple[int, int]] | set[tuple[int, int]]",
    tol: float = 1e-9,
) -> list[tuple[int, int, int]]:
    """Triads with all three edges present whose cycle sum exceeds ``tol``.

    The cycle sum of (i, j, k) is nu_ij + nu_jk + nu_ki with the stored
    convention nu_ki = -nu_ik; it vanishes identically on linear profiles.
    """
    k = nu.k
    present = sorted({(min(i, j), max(i, j)) for i, j in edge_set})
    adjacency: dict[int, set[int]] = {}
    for i, j in present:
        adjacency.setdefault(i, set()).add(j)
    out = []
    for i, j in present:
        for kk in sorted(adjacency.get(j, ()) & adjacency.get(i, set())):
            cycle = nu.get(i, j) + nu.get(j, kk) + nu.get(kk, i)
            if abs(cycle) > tol:
                out.append((i, j, kk))
    return out
