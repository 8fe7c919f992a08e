"""Tests for growing comparison graphs: the averaged residual statistic on
complete balanced graphs, the localized block test calibrated by a
model-based residual bootstrap, and sparse-graph variants driven by
edge-presence indicators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as _stats

from .errors import (
    DisconnectedSubgraph,
    EmptyBlock,
    MTooSmall,
    NotComplete,
    SplitInvalid,
    UnequalCounts,
)
from .fixed import TestReport
from .graph import (
    ComparisonGraph,
    PreferenceProfile,
    fit_merits,
    incidence_t_apply,
    merit_differences,
    pair_count,
    pair_indices,
)
from .numerics import RngStream, as_stream, run_chunks

BOOTSTRAP_CHUNK = 512
RMK_CHECK_RTOL = 1e-8


def _require_complete_equal(g: ComparisonGraph) -> int:
    """Validate a complete graph with a constant per-pair count; return it."""
    if g.edge_count != pair_count(g.k):
        raise NotComplete(
            f"graph has {g.edge_count} of {pair_count(g.k)} pairs compared"
        )
    m = int(g.counts[0])
    if np.any(g.counts != m):
        raise UnequalCounts("per-pair comparison counts are not constant")
    return m


def hk_quadratic(values: np.ndarray, pairs: np.ndarray, k: int) -> float:
    """x' (I - BB'/K) x for pair-indexed x, without materializing BB'."""
    t = incidence_t_apply(values, pairs, k)
    return float(values @ values - (t @ t) / k)


def statistic_rmk(g: ComparisonGraph) -> float:
    """Averaged squared residual on a complete balanced graph.

    Computed directly from the fitted merits and cross-checked against
    the algebraically identical quadratic form in I - BB'/K.
    """
    _require_complete_equal(g)
    mu = fit_merits(g)
    nu_hat = g.means
    resid = nu_hat - merit_differences(mu, g.pairs)
    direct = float(np.mean(resid**2))
    identity = hk_quadratic(nu_hat, g.pairs, g.k) / pair_count(g.k)
    scale = max(abs(direct), abs(identity), 1e-12)
    if abs(direct - identity) > RMK_CHECK_RTOL * scale:
        raise AssertionError(
            f"residual and projector forms disagree: {direct!r} vs {identity!r}"
        )
    return direct


def var_rmk_normal(k: int, m: int, sigma2: float, psi2: float) -> float:
    """Closed-form variance of the averaged residual under normal errors."""
    c2 = math.comb(k, 2)
    return (
        2.0 * math.comb(k - 1, 2) * sigma2**2 / (c2**2 * m**2)
        + 4.0 * psi2 * sigma2 / (c2 * m)
    )


def power_rmk(k: int, m: int, sigma2: float, psi2: float, alpha: float) -> float:
    """Normal-approximation power of the one-sided averaged-residual test."""
    sd0 = math.sqrt(var_rmk_normal(k, m, sigma2, 0.0))
    z = _stats.norm.ppf(1.0 - alpha)
    return float(_stats.norm.sf(z - psi2 / sd0))


def sigma2_pooled_mk(g: ComparisonGraph) -> float:
    """Plug-in error variance from within-pair spread on a balanced graph."""
    m = _require_complete_equal(g)
    if m < 2:
        raise MTooSmall("per-pair variance needs at least two comparisons per pair")
    ss = float(np.sum(g.sumsq - g.sums**2 / m))
    return ss / ((m - 1) * pair_count(g.k))


@dataclass(frozen=True)
class LocalizedSplit:
    """A suspected-cyclic item subset and, implicitly, its complement."""

    items: tuple[int, ...]

    @classmethod
    def of(cls, items) -> "LocalizedSplit":
        return cls(tuple(sorted(set(int(x) for x in items))))

    def validate(self, k: int) -> tuple[int, ...]:
        """Check 0 < |U| < K and 1-based range; return the complement."""
        if not self.items:
            raise SplitInvalid("candidate set is empty")
        if self.items[0] < 1 or self.items[-1] > k:
            raise SplitInvalid(f"candidate items outside 1..{k}")
        if len(self.items) >= k:
            raise SplitInvalid("candidate set must be a proper subset of the items")
        member = set(self.items)
        return tuple(v for v in range(1, k + 1) if v not in member)


@dataclass(frozen=True)
class SparseIndicators:
    """Per-pair presence indicators, deterministic or Bernoulli-sampled."""

    k: int
    present: frozenset[tuple[int, int]]
    p_edge: float | None = None

    @classmethod
    def from_graph(cls, g: ComparisonGraph, p_edge: float | None = None) -> "SparseIndicators":
        return cls(k=g.k, present=g.edge_set(), p_edge=p_edge)

    @classmethod
    def bernoulli(cls, k: int, p_edge: float, rng: RngStream | int | None) -> "SparseIndicators":
        gen = as_stream(rng).generator()
        pairs = [
            (i, j)
            for i in range(1, k + 1)
            for j in range(i + 1, k + 1)
        ]
        mask = gen.random(len(pairs)) < p_edge
        return cls(
            k=k,
            present=frozenset(p for p, keep in zip(pairs, mask) if keep),
            p_edge=p_edge,
        )


def triad_count(split: LocalizedSplit, indicators: SparseIndicators) -> int:
    """Number of fully present triads inside the candidate block."""
    items = split.items
    index = {v: n for n, v in enumerate(items)}
    a = np.zeros((len(items), len(items)))
    for i, j in indicators.present:
        if i in index and j in index:
            a[index[i], index[j]] = 1.0
            a[index[j], index[i]] = 1.0
    return int(round(np.trace(a @ a @ a) / 6.0))


def _edge_subgraph(g: ComparisonGraph, rows: np.ndarray) -> ComparisonGraph:
    """Graph keeping only the given edge rows (sample order preserved)."""
    chunks = [g.flat_values[g.offsets[r] : g.offsets[r + 1]] for r in rows]
    lengths = np.array([c.shape[0] for c in chunks], dtype=np.int64)
    flat = np.concatenate(chunks) if chunks else np.zeros(0)
    offsets = np.concatenate([[0], np.cumsum(lengths)]) if chunks else np.zeros(1, dtype=np.int64)
    return ComparisonGraph(g.k, g.pairs[rows], flat, offsets)


@dataclass(frozen=True)
class _Blocks:
    """Shared decomposition of a graph into candidate / complement blocks."""

    u_rows: np.ndarray
    v_rows: np.ndarray
    mu_full: np.ndarray
    mu_u: np.ndarray
    u_labels: tuple[int, ...]
    mu_v: np.ndarray
    v_labels: tuple[int, ...]
    g_u: ComparisonGraph
    g_v: ComparisonGraph


def _split_blocks(g: ComparisonGraph, split: LocalizedSplit) -> _Blocks:
    complement = split.validate(g.k)
    member = np.zeros(g.k + 1, dtype=bool)
    member[list(split.items)] = True
    in_u = member[g.pairs[:, 0]] & member[g.pairs[:, 1]]
    in_v = ~member[g.pairs[:, 0]] & ~member[g.pairs[:, 1]]
    u_rows = np.nonzero(in_u)[0]
    v_rows = np.nonzero(in_v)[0]
    if u_rows.size == 0:
        raise EmptyBlock("no comparisons inside the candidate block")
    if v_rows.size == 0:
        raise EmptyBlock("no comparisons inside the complement block")
    mu_full = fit_merits(g)
    g_u, u_labels = g.induced(split.items)
    g_v, v_labels = g.induced(complement)
    if not g_u.is_connected or g_u.k < len(split.items):
        raise DisconnectedSubgraph("candidate block is disconnected")
    if not g_v.is_connected or g_v.k < len(complement):
        raise DisconnectedSubgraph("complement block is disconnected")
    return _Blocks(
        u_rows=u_rows,
        v_rows=v_rows,
        mu_full=mu_full,
        mu_u=fit_merits(g_u),
        u_labels=u_labels,
        mu_v=fit_merits(g_v),
        v_labels=v_labels,
        g_u=g_u,
        g_v=g_v,
    )


def _residual_pool(g_v: ComparisonGraph, mu_v: np.ndarray) -> np.ndarray:
    """Centered per-observation residuals from the complement-block fit."""
    fitted = merit_differences(mu_v, g_v.pairs)
    resid = g_v.flat_values - np.repeat(fitted, g_v.counts)
    return resid - resid.mean()


def _bootstrap_draws(
    pool: np.ndarray,
    fitted_u: np.ndarray,
    m: int,
    draws: int,
    stream: RngStream,
    threads: int,
) -> np.ndarray:
    """Statistics of synthetic candidate blocks: fitted differences plus
    resampled complement residuals, averaged per pair, squared, averaged."""
    n_pairs = fitted_u.shape[0]
    bounds = list(range(0, draws, BOOTSTRAP_CHUNK)) + [draws]

    def chunk(c: int) -> np.ndarray:
        size = bounds[c + 1] - bounds[c]
        gen = stream.substream(c).generator()
        errs = pool[gen.integers(0, pool.shape[0], size=(size, n_pairs, m))]
        synthetic = fitted_u[None, :] + errs.mean(axis=2)
        return np.mean((synthetic - fitted_u[None, :]) ** 2, axis=1)

    return np.concatenate(run_chunks(chunk, len(bounds) - 1, threads))


def bootstrap_pvalue(null_draws: np.ndarray, observed: float) -> float:
    """Resampling p-value: share of draws at or above the observed value."""
    return int(np.sum(null_draws >= observed)) / (null_draws.size + 1)


def localized_test(
    g: ComparisonGraph,
    split: LocalizedSplit,
    alpha: float = 0.05,
    mode: str = "bootstrap",
    draws: int = 499,
    rng: RngStream | int | None = None,
    threads: int = 1,
) -> TestReport:
    """Compare residual energy on the candidate block against the
    complement of a complete balanced graph.

    Bootstrap mode resamples centered residuals of the complement-block
    fit onto the full-graph fitted differences; the observed statistic is
    the candidate-block residual mean square around the same fitted
    differences. Closed-form mode standardizes the difference of
    block statistics (candidate block refit on its own subgraph) by the
    normal-theory null standard deviation and should only be used when
    the errors are declared normal.
    """
    m = _require_complete_equal(g)
    blocks = _split_blocks(g, split)
    stream = as_stream(rng)
    j_size = len(split.items)
    if mode == "bootstrap":
        pool = _residual_pool(blocks.g_v, blocks.mu_v)
        fitted_u = merit_differences(blocks.mu_full, g.pairs[blocks.u_rows])
        t_obs = float(np.mean((g.means[blocks.u_rows] - fitted_u) ** 2))
        t_b = _bootstrap_draws(pool, fitted_u, m, draws, stream, threads)
        p = bootstrap_pvalue(t_b, t_obs)
        return TestReport(
            statistic=t_obs,
            p_value=p,
            draws=draws,
            seed=stream.describe(),
            regime=f"localized-bootstrap[J={j_size}]",
            rank_r=None,
            eigenvalues=(),
            alpha=alpha,
            reject=p <= alpha,
            sigma2=None,
            method="bootstrap",
        )
    if mode == "closed-form":
        r_j = statistic_rmk(blocks.g_u)
        r_v = statistic_rmk(blocks.g_v)
        sigma2 = sigma2_pooled_mk(blocks.g_v) if m >= 2 else r_v
        z = (r_j - r_v) / math.sqrt(var_rmk_normal(j_size, m, sigma2, 0.0))
        p = float(_stats.norm.sf(z))
        return TestReport(
            statistic=z,
            p_value=p,
            draws=0,
            seed=stream.describe(),
            regime=f"localized-closed-form[J={j_size}]",
            rank_r=None,
            eigenvalues=(),
            alpha=alpha,
            reject=p <= alpha,
            sigma2=float(sigma2),
            method="closed-form-normal",
        )
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class SparseStatistics:
    """Ratio-of-sums block statistics on an indicator-masked graph."""

    r_u: float
    r_v: float
    psi2_hat: float
    u_edges: int
    v_edges: int
    u_triads: int
    warnings: tuple[str, ...] = field(default=())


def _sparse_blocks(
    g: ComparisonGraph, split: LocalizedSplit, indicators: SparseIndicators | None
) -> tuple[ComparisonGraph, _Blocks, SparseIndicators]:
    if indicators is None:
        indicators = SparseIndicators.from_graph(g)
    stored = g.edge_set()
    missing = indicators.present - stored
    if missing:
        raise EmptyBlock(f"{len(missing)} present indicators have no stored comparison")
    keep = np.array(
        [e for e, (i, j) in enumerate(g.pairs) if (int(i), int(j)) in indicators.present],
        dtype=np.int64,
    )
    if np.any(g.counts[keep] != 1):
        raise UnequalCounts("present edges must carry exactly one comparison")
    masked = _edge_subgraph(g, keep)
    return masked, _split_blocks(masked, split), indicators


def sparse_statistics(
    g: ComparisonGraph,
    split: LocalizedSplit,
    indicators: SparseIndicators | None = None,
) -> SparseStatistics:
    """Block residual statistics where only indicator-present pairs (each
    compared exactly once) enter; block merits are refit inside each block.

    The returned cyclic-energy estimate is the difference of the block
    statistics, since the complement block estimates the error variance.
    """
    masked, blocks, indicators = _sparse_blocks(g, split, indicators)
    resid_u = masked.means[blocks.u_rows] - merit_differences(
        blocks.mu_u, _relabel_pairs(masked.pairs[blocks.u_rows], blocks.u_labels)
    )
    resid_v = masked.means[blocks.v_rows] - merit_differences(
        blocks.mu_v, _relabel_pairs(masked.pairs[blocks.v_rows], blocks.v_labels)
    )
    r_u = float(np.mean(resid_u**2))
    r_v = float(np.mean(resid_v**2))
    triads = triad_count(split, indicators)
    warnings = ()
    if triads == 0:
        warnings = (
            "no-complete-triad: the candidate block contains no fully present triad, "
            "so cyclic structure there is invisible",
        )
    return SparseStatistics(
        r_u=r_u,
        r_v=r_v,
        psi2_hat=r_u - r_v,
        u_edges=int(blocks.u_rows.size),
        v_edges=int(blocks.v_rows.size),
        u_triads=triads,
        warnings=warnings,
    )


def _relabel_pairs(pairs: np.ndarray, labels: tuple[int, ...]) -> np.ndarray:
    relabel = {orig: new for new, orig in enumerate(labels, start=1)}
    out = np.array(
        [(relabel[int(i)], relabel[int(j)]) for i, j in pairs], dtype=np.int64
    ).reshape(-1, 2)
    return out


def sparse_psi2(
    cyclic: PreferenceProfile,
    split: LocalizedSplit,
    indicators: SparseIndicators,
) -> float:
    """Indicator-weighted cyclic energy of a known profile on the candidate
    block: mean of squared cyclic entries over present candidate pairs."""
    member = set(split.items)
    u_pairs = np.array(
        [(i, j) for (i, j) in sorted(indicators.present) if i in member and j in member],
        dtype=np.int64,
    ).reshape(-1, 2)
    if u_pairs.shape[0] == 0:
        raise EmptyBlock("no present pairs inside the candidate block")
    vals = cyclic.values[pair_indices(u_pairs, cyclic.k)]
    return float(np.mean(vals**2))


def sparse_connectivity_guide(j_size: int, c: float = 1.0, eps: float = 0.1) -> float:
    """Edge probability below which the candidate block is at risk of
    disconnection and triad starvation."""
    return c * math.log(j_size) ** (1.0 + eps) / j_size


def random_graph_test(
    g: ComparisonGraph,
    split: LocalizedSplit,
    p_edge: float | None = None,
    alpha: float = 0.05,
    draws: int = 499,
    rng: RngStream | int | None = None,
    indicators: SparseIndicators | None = None,
    threads: int = 1,
) -> TestReport:
    """Bootstrap-calibrated block comparison on an indicator-masked graph.

    Same resampling scheme as the localized bootstrap, with sums
    normalized by the number of present pairs in each block.
    """
    masked, blocks, indicators = _sparse_blocks(g, split, indicators)
    stats = sparse_statistics(g, split, indicators)
    stream = as_stream(rng)
    pool = _residual_pool(blocks.g_v, blocks.mu_v)
    fitted_u = merit_differences(blocks.mu_full, masked.pairs[blocks.u_rows])
    t_obs = float(np.mean((masked.means[blocks.u_rows] - fitted_u) ** 2))
    t_b = _bootstrap_draws(pool, fitted_u, 1, draws, stream, threads)
    p = bootstrap_pvalue(t_b, t_obs)
    warnings = list(stats.warnings)
    guide_p = p_edge if p_edge is not None else indicators.p_edge
    if guide_p is not None:
        guide = sparse_connectivity_guide(len(split.items))
        if guide_p < guide:
            warnings.append(
                f"sparse-edge-probability-below-guide: p={guide_p:g} < {guide:.4g}"
            )
    return TestReport(
        statistic=t_obs,
        p_value=p,
        draws=draws,
        seed=stream.describe(),
        regime=f"sparse-bootstrap[J={len(split.items)}]",
        rank_r=None,
        eigenvalues=(),
        alpha=alpha,
        reject=p <= alpha,
        sigma2=None,
        method="bootstrap",
        warnings=tuple(warnings),
    )


@dataclass(frozen=True)
class LargeKDetectability:
    """Support-size diagnostic for asymptotic detectability."""

    k: int
    j: int | None
    support: int
    gamma_max: float
    ratio: float
    norm_bound: float
    scaled_energy_bound: float
    classification: str
    ratio_threshold: float


def detectability_large(
    k: int,
    support: int,
    gamma_max: float,
    j: int | None = None,
    ratio_threshold: float = 0.05,
) -> LargeKDetectability:
    """Classify a cyclic configuration by its support-to-items ratio.

    With bounded coefficients, the scaled cyclic energy stays away from
    zero only if the minimal triad support grows like the item count, so
    the ratio (against the candidate-block size when localized) is the
    operative quantity; the threshold is a reporting convention, not a
    theorem.
    """
    denom = j if j is not None else k
    ratio = support / denom
    norm_bound = 3.0 * support * gamma_max**2
    scaled = denom * norm_bound / pair_count(denom)
    classification = "detectable" if ratio >= ratio_threshold else "undetectable"
    return LargeKDetectability(
        k=k,
        j=j,
        support=support,
        gamma_max=gamma_max,
        ratio=ratio,
        norm_bound=norm_bound,
        scaled_energy_bound=scaled,
        classification=classification,
        ratio_threshold=ratio_threshold,
    )
