"""Lack-of-fit tests for a fixed number of items.

The statistic is the weighted squared residual of the per-edge means
around the fitted merit differences, summed over a user-chosen edge
regime. Merits are always fitted on the full graph. Under linearity with
normal errors the statistic is distributed as a weighted sum of
independent chi-square(1) terms whose weights are the nonzero eigenvalues
of a residual-covariance matrix; calibration is by Monte Carlo draws from
that representation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DeltaNotCyclic, DisconnectedGraph, EmptyRegime, SigmaUnidentifiable
from .graph import (
    ComparisonGraph,
    FitResult,
    PreferenceProfile,
    decompose,
    incidence_rows,
    inconsistent_triads,
    lse_fit,
    merit_differences,
)
from .numerics import RngStream, SpectralForm, as_stream, run_chunks, sym_eig

NULL_CHUNK = 8192


@dataclass(frozen=True)
class Regime:
    """Which edges enter the residual sum.

    ``all`` uses every observed edge; ``threshold`` keeps edges with at
    least ``t`` comparisons; ``explicit`` names the edges directly.
    """

    kind: str
    threshold: int | None = None
    edges: tuple[tuple[int, int], ...] | None = None

    @staticmethod
    def all_edges() -> "Regime":
        return Regime(kind="all")

    @staticmethod
    def min_count(t: int) -> "Regime":
        if t < 1:
            raise ValueError("threshold must be at least 1")
        return Regime(kind="threshold", threshold=int(t))

    @staticmethod
    def explicit(edges) -> "Regime":
        canon = tuple(sorted((min(i, j), max(i, j)) for i, j in edges))
        return Regime(kind="explicit", edges=canon)

    def resolve(self, g: ComparisonGraph) -> np.ndarray:
        """Row indices into the graph's edge arrays; raises ``EmptyRegime``."""
        if self.kind == "all":
            sel = np.arange(g.edge_count)
        elif self.kind == "threshold":
            sel = np.nonzero(g.counts >= self.threshold)[0]
        elif self.kind == "explicit":
            wanted = set(self.edges or ())
            sel = np.array(
                [e for e, (i, j) in enumerate(g.pairs) if (int(i), int(j)) in wanted],
                dtype=np.int64,
            )
        else:
            raise ValueError(f"unknown regime kind {self.kind!r}")
        if sel.size == 0:
            raise EmptyRegime(f"regime {self.label()} selects no edges")
        return sel

    def label(self) -> str:
        if self.kind == "all":
            return "all"
        if self.kind == "threshold":
            return f"threshold:{self.threshold}"
        return f"explicit[{len(self.edges or ())}]"


@dataclass(frozen=True)
class TestReport:
    """Outcome of a calibrated test, carrying everything needed to
    reproduce it bit-exactly."""

    statistic: float
    p_value: float
    draws: int
    seed: str
    regime: str
    rank_r: int | None
    eigenvalues: tuple[float, ...]
    alpha: float
    reject: bool
    sigma2: float | None = None
    method: str = "monte-carlo"
    warnings: tuple[str, ...] = field(default=())


def statistic_r(g: ComparisonGraph, regime: Regime, fit: FitResult | None = None) -> float:
    """Weighted residual sum over the regime's edges, merits fitted on the
    full graph."""
    if fit is None:
        fit = lse_fit(g)
    sel = regime.resolve(g)
    resid = g.means - merit_differences(fit.mu_hat, g.pairs)
    w = g.counts.astype(float)
    return float(np.sum(w[sel] * resid[sel] ** 2))


def _q_block(g: ComparisonGraph, sel: np.ndarray) -> np.ndarray:
    """Rows ``sel`` of D_s^(1/2) (I - B (B'D B)^+ B'D) D^(+1/2), restricted
    to the observed-edge block (rows and columns outside the edge set are
    identically zero and never materialized)."""
    w = g.counts.astype(float)
    b = incidence_rows(g.pairs, g.k)
    n = (b * w[:, None]).T @ b
    form = sym_eig(n)
    expected = g.k - len(g.components())
    if form.rank != expected:
        raise AssertionError(
            f"Laplacian rank {form.rank} does not match graph structure ({expected})"
        )
    t = form.pinv_matrix() @ (b * w[:, None]).T
    proj = b[sel] @ t
    m = -proj
    m[np.arange(sel.size), sel] += 1.0
    return (np.sqrt(w[sel])[:, None] * m) / np.sqrt(w)[None, :]


def omega_matrix(g: ComparisonGraph, regime: Regime, sigma2: float) -> SpectralForm:
    """Spectral form of the null covariance block for the regime's edges.

    For the all-edges regime the block is sigma^2 times an orthogonal
    projector, so its rank must equal |E| - (K - 1); that identity is
    asserted on every call.
    """
    if not g.is_connected:
        raise DisconnectedGraph(g.components())
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    sel = regime.resolve(g)
    q = _q_block(g, sel)
    form = sym_eig(sigma2 * (q @ q.T))
    if regime.kind == "all":
        expected = g.edge_count - (g.k - 1)
        if form.rank != expected:
            raise AssertionError(
                f"all-edges residual rank {form.rank}, expected {expected}"
            )
    return form


def null_sample(
    form: SpectralForm,
    draws: int,
    rng: RngStream | int | None,
    threads: int = 1,
) -> np.ndarray:
    """Independent draws of the weighted chi-square mixture sum(lam_i Z_i^2).

    Draws are produced in fixed-size chunks, one RNG substream per chunk,
    so the result is identical for any thread count.
    """
    if draws < 1:
        raise ValueError("draws must be at least 1")
    stream = as_stream(rng)
    lam = form.nonzero_eigenvalues
    if lam.size == 0:
        return np.zeros(draws)
    bounds = list(range(0, draws, NULL_CHUNK)) + [draws]

    def chunk(c: int) -> np.ndarray:
        size = bounds[c + 1] - bounds[c]
        z = stream.substream(c).generator().standard_normal((size, lam.size))
        return (z * z) @ lam

    return np.concatenate(run_chunks(chunk, len(bounds) - 1, threads))


def noncentrality(
    g: ComparisonGraph,
    regime: Regime,
    delta: PreferenceProfile,
    sigma2: float,
) -> np.ndarray:
    """Noncentrality components aligned with the nonzero eigenvalues.

    Under the shift ``delta`` (a cyclic profile) the statistic is
    distributed as sum(lam_i (Z_i + phi_i)^2); phi projects the
    count-scaled shift onto the eigenvectors and divides by sqrt(lam).
    """
    lin, _ = decompose(delta)
    norm = np.sqrt(delta.norm2())
    if norm > 0 and np.sqrt(lin.norm2()) > 1e-8 * norm:
        raise DeltaNotCyclic(
            "shift has a linear component of relative size "
            f"{np.sqrt(lin.norm2()) / norm:.3g}"
        )
    form = omega_matrix(g, regime, sigma2)
    sel = regime.resolve(g)
    scaled = np.sqrt(g.counts[sel].astype(float)) * delta.values[g.lex_edge_indices()[sel]]
    lam = form.nonzero_eigenvalues
    return (form.eigenvectors[:, : form.rank].T @ scaled) / np.sqrt(lam)


def mc_pvalue(null_draws: np.ndarray, observed: float) -> float:
    """Add-one Monte Carlo p-value, ties counted as exceedances."""
    return (1 + int(np.sum(null_draws >= observed))) / (null_draws.size + 1)


def lof_test(
    g: ComparisonGraph,
    regime: Regime,
    alpha: float = 0.05,
    draws: int = 10_000,
    rng: RngStream | int | None = None,
    sigma2: float | None = None,
    threads: int = 1,
) -> TestReport:
    """Monte Carlo calibrated lack-of-fit test on the chosen regime.

    The error variance is the pooled within-edge estimate unless supplied;
    if no edge is replicated it must be supplied.
    """
    stream = as_stream(rng)
    fit = lse_fit(g)
    if sigma2 is None:
        sigma2 = fit.sigma2_hat
        if sigma2 is None:
            raise SigmaUnidentifiable(
                "no edge has two or more comparisons; supply sigma2 explicitly"
            )
        if sigma2 <= 0:
            sigma2 = np.finfo(float).tiny
    stat = statistic_r(g, regime, fit=fit)
    form = omega_matrix(g, regime, sigma2)
    nulls = null_sample(form, draws, stream, threads=threads)
    p = mc_pvalue(nulls, stat)
    warnings = ()
    if form.rank == 0:
        warnings = ("degenerate-rank: regime edges form a tree, statistic is 0 under the model",)
    return TestReport(
        statistic=stat,
        p_value=p,
        draws=draws,
        seed=stream.describe(),
        regime=regime.label(),
        rank_r=form.rank,
        eigenvalues=tuple(float(v) for v in form.nonzero_eigenvalues),
        alpha=alpha,
        reject=p <= alpha,
        sigma2=float(sigma2),
        method="monte-carlo",
        warnings=warnings,
    )


@dataclass(frozen=True)
class Detectability:
    """Structural diagnostic for a regime, optionally against a known shift."""

    regime: str
    edge_count: int
    is_forest: bool
    degenerate: bool
    supporting_triads: tuple[tuple[int, int, int], ...] | None
    powerless: bool | None


def detectability(
    g: ComparisonGraph,
    regime: Regime,
    delta: PreferenceProfile | None = None,
    tol: float = 1e-9,
) -> Detectability:
    """Flag regimes that cannot detect lack of fit.

    A forest regime makes the statistic degenerate; a given shift is
    detectable only if some triad with a nonzero cycle sum has all three
    edges inside the regime.
    """
    sel = regime.resolve(g)
    edges = {(int(i), int(j)) for i, j in g.pairs[sel]}
    parent = list(range(g.k + 1))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    acyclic = True
    for i, j in sorted(edges):
        ri, rj = find(i), find(j)
        if ri == rj:
            acyclic = False
            break
        parent[ri] = rj
    triads = None
    powerless: bool | None = None
    if delta is not None:
        triads = tuple(inconsistent_triads(delta, edges, tol))
        powerless = len(triads) == 0
    return Detectability(
        regime=regime.label(),
        edge_count=len(edges),
        is_forest=acyclic,
        degenerate=acyclic,
        supporting_triads=triads,
        powerless=powerless if delta is not None else (True if acyclic else None),
    )
