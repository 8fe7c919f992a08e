"""Comparator tests: the classical cyclic-triad count, its cardinal
analogue, and the regression F-test benchmark."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats as _stats

from .errors import NoResidualDf, RankDeficientDesign, UnequalCounts
from .fixed import TestReport
from .graph import (
    ComparisonGraph,
    incidence_rows,
    triad_indices,
    triad_vector,
)
from .numerics import RngStream, as_stream, run_chunks
from .sampling import sample_flat

CARDINAL_Z = 1.96
CALIBRATION_CHUNK = 256


def _beat_matrix(g: ComparisonGraph) -> tuple[np.ndarray, np.ndarray]:
    """Directed beat matrix and presence mask from outcome signs.

    For the stored orientation i < j, i beats j when at least half the
    outcomes are positive; exact ties therefore count as "i beats j"
    (asymmetric by construction, documented behavior).
    """
    k = g.k
    beats = np.zeros((k, k))
    present = np.zeros((k, k), dtype=bool)
    wins = np.add.reduceat(
        (g.flat_values > 0).astype(float), g.offsets[:-1]
    ) if g.edge_count else np.zeros(0)
    z = wins >= g.counts / 2.0
    i = g.pairs[:, 0] - 1
    j = g.pairs[:, 1] - 1
    beats[i, j] = z
    beats[j, i] = 1.0 - z
    present[i, j] = True
    present[j, i] = True
    return beats, present


def kendall_smith(g: ComparisonGraph) -> int:
    """Number of cyclic triads among pairs with all three edges compared."""
    beats, present = _beat_matrix(g)
    m = beats * present
    # each cyclic triad appears as three rotations of one orientation
    return int(round(np.einsum("ij,jk,ki->", m, m, m) / 3.0))


def kendall_smith_cardinal(g: ComparisonGraph, sigma2_hat: float) -> int:
    """Number of triads whose cycle sum of mean outcomes fails a z-test.

    Requires a constant per-pair count; the per-triad statistic is
    sqrt(m) |mean cycle sum| / sqrt(3 sigma2_hat) against 1.96.
    """
    m = int(g.counts[0]) if g.edge_count else 0
    if g.edge_count and np.any(g.counts != m):
        raise UnequalCounts("cardinal triad test needs a constant per-pair count")
    if sigma2_hat <= 0:
        raise ValueError("sigma2_hat must be positive")
    k = g.k
    v = np.zeros((k, k))
    present = np.zeros((k, k), dtype=bool)
    i = g.pairs[:, 0] - 1
    j = g.pairs[:, 1] - 1
    means = g.means
    v[i, j] = means
    v[j, i] = -means
    present[i, j] = True
    present[j, i] = True
    ti, tj, tk = triad_indices(k)
    ok = present[ti, tj] & present[tj, tk] & present[ti, tk]
    cycle = v[ti, tj] + v[tj, tk] + v[tk, ti]
    z = np.sqrt(m) * np.abs(cycle) / math.sqrt(3.0 * sigma2_hat)
    return int(np.sum(ok & (z > CARDINAL_Z)))


def _null_count_statistic(
    g_template: ComparisonGraph,
    nu_edges: np.ndarray,
    sigma: float,
    statistic: str,
    gen: np.random.Generator,
) -> int:
    flat = sample_flat(nu_edges, g_template.counts, sigma, gen)
    sim = ComparisonGraph(
        g_template.k, g_template.pairs, flat, g_template.offsets
    )
    if statistic == "sign":
        return kendall_smith(sim)
    mask = sim.counts >= 2
    if not np.any(mask):
        raise UnequalCounts("cardinal calibration needs replicated pairs")
    ss = sim.sumsq[mask] - sim.sums[mask] ** 2 / sim.counts[mask]
    sigma2_hat = float(np.sum(ss) / np.sum(sim.counts[mask] - 1))
    return kendall_smith_cardinal(sim, sigma2_hat)


def calibrate_count_test(
    g_template: ComparisonGraph,
    mu_null: np.ndarray | None = None,
    sigma: float = 1.0,
    draws: int = 10_000,
    rng: RngStream | int | None = None,
    statistic: str = "sign",
    alpha: float = 0.05,
    threads: int = 1,
) -> int:
    """Smallest integer c with null P(T >= c) <= alpha by simulation.

    The null model keeps the template's comparison counts, sets the means
    to the differences of ``mu_null`` (all zeros by default), and draws
    normal errors with the given sigma.
    """
    if statistic not in ("sign", "cardinal"):
        raise ValueError("statistic must be 'sign' or 'cardinal'")
    stream = as_stream(rng)
    mu = np.zeros(g_template.k) if mu_null is None else np.asarray(mu_null, dtype=float)
    nu_edges = mu[g_template.pairs[:, 0] - 1] - mu[g_template.pairs[:, 1] - 1]
    bounds = list(range(0, draws, CALIBRATION_CHUNK)) + [draws]

    def chunk(c: int) -> np.ndarray:
        gen = stream.substream(c).generator()
        return np.array(
            [
                _null_count_statistic(g_template, nu_edges, sigma, statistic, gen)
                for _ in range(bounds[c + 1] - bounds[c])
            ],
            dtype=np.int64,
        )

    values = np.concatenate(run_chunks(chunk, len(bounds) - 1, threads))
    # P(T >= c) is a step function of the integer c; scan up from c = 0
    for c in range(0, int(values.max()) + 2):
        if np.sum(values >= c) / draws <= alpha:
            return c
    raise AssertionError("unreachable: tail probability must hit zero")


def f_test(
    g: ComparisonGraph,
    candidate_triads: list[tuple[int, int, int]],
    alpha: float = 0.05,
) -> TestReport:
    """Nested-model F-test of zero coefficients on the candidate triad
    profiles, with each edge row weighted by its comparison count and the
    within-pair spread entering both residual sums."""
    if not candidate_triads:
        raise RankDeficientDesign("no candidate triads supplied")
    q = len(candidate_triads)
    w = g.counts.astype(float)
    sw = np.sqrt(w)
    lex = g.lex_edge_indices()
    b = incidence_rows(g.pairs, g.k)
    c_cols = np.column_stack(
        [triad_vector(i, j, kk, g.k).values[lex] for (i, j, kk) in candidate_triads]
    )
    x0 = sw[:, None] * b
    x1 = sw[:, None] * np.hstack([b, c_cols])
    expected_rank = (g.k - 1) + q
    if np.linalg.matrix_rank(x1) != expected_rank:
        raise RankDeficientDesign(
            "candidate triad columns are linearly dependent with the merit design"
        )
    df1 = g.n_total - expected_rank
    if df1 < 1:
        raise NoResidualDf(f"residual degrees of freedom {df1} < 1")
    y = sw * g.means
    within = float(np.sum(g.sumsq - g.sums**2 / g.counts))
    rss0 = within + _weighted_rss(x0, y)
    rss1 = within + _weighted_rss(x1, y)
    f_stat = ((rss0 - rss1) / q) / (rss1 / df1)
    p = float(_stats.f.sf(f_stat, q, df1))
    return TestReport(
        statistic=float(f_stat),
        p_value=p,
        draws=0,
        seed="-",
        regime=f"f[q={q},df={df1}]",
        rank_r=None,
        eigenvalues=(),
        alpha=alpha,
        reject=p <= alpha,
        sigma2=None,
        method="f-reference",
    )


def _weighted_rss(x: np.ndarray, y: np.ndarray) -> float:
    coef, _, _, _ = np.linalg.lstsq(x, y, rcond=None)
    r = y - x @ coef
    return float(r @ r)
