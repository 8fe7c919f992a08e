"""Season analytics: cyclic-team identification from win fractions,
cross-season overlap, persistence estimation, and season-ahead testing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyCandidateSet, InputError, NotComplete
from .graph import ComparisonGraph, pair_count, triad_indices
from .large import LocalizedSplit, localized_test
from .numerics import RngStream, as_stream, run_chunks

PREDICT_CHUNK = 64


@dataclass(frozen=True)
class SeasonPanel:
    """Seasons over one shared team index, with identified cyclic sets."""

    teams: tuple[str, ...]
    labels: tuple[str, ...]
    graphs: tuple[ComparisonGraph, ...]
    cyclic_sets: tuple[tuple[int, ...], ...]

    @classmethod
    def build(
        cls,
        teams: tuple[str, ...],
        labels: tuple[str, ...],
        graphs: tuple[ComparisonGraph, ...],
    ) -> "SeasonPanel":
        if len(labels) != len(graphs):
            raise InputError("one graph per season label required")
        for label, g in zip(labels, graphs):
            if g.k != len(teams):
                raise InputError(
                    f"season {label}: graph has {g.k} items, panel has {len(teams)} teams"
                )
        return cls(
            teams=teams,
            labels=labels,
            graphs=graphs,
            cyclic_sets=tuple(cyclic_teams(g) for g in graphs),
        )

    @property
    def seasons(self) -> int:
        return len(self.labels)


def win_fractions(g: ComparisonGraph) -> np.ndarray:
    """Empirical win fraction of i over j from outcome signs.

    Zero differentials count half a win to each side. Entries for pairs
    never compared are NaN.
    """
    k = g.k
    pi = np.full((k, k), np.nan)
    if g.edge_count:
        pos = np.add.reduceat((g.flat_values > 0).astype(float), g.offsets[:-1])
        ties = np.add.reduceat((g.flat_values == 0).astype(float), g.offsets[:-1])
        frac = (pos + 0.5 * ties) / g.counts
        i = g.pairs[:, 0] - 1
        j = g.pairs[:, 1] - 1
        pi[i, j] = frac
        pi[j, i] = 1.0 - frac
    return pi


def _cyclic_triad_mask(
    pi: np.ndarray, present: np.ndarray, ti: np.ndarray, tj: np.ndarray, tk: np.ndarray
) -> np.ndarray:
    p_ij = pi[ti, tj]
    p_jk = pi[tj, tk]
    p_ki = pi[tk, ti]
    observed = present[ti, tj] & present[tj, tk] & present[ti, tk]
    forward = (p_ij >= 0.5) & (p_jk >= 0.5) & (p_ki >= 0.5)
    backward = (p_ij <= 0.5) & (p_jk <= 0.5) & (p_ki <= 0.5)
    return observed & (forward | backward)


def cyclic_teams(g: ComparisonGraph) -> tuple[int, ...]:
    """Teams removed by the greedy cyclic-triad elimination, sorted.

    A triad is cyclic when its three win fractions all favor the cycle
    (ties count both ways); each step removes the team sitting in the most
    cyclic triads, lowest index on ties, until none remain. The returned
    set certifies acyclicity of the remainder but is not canonical.
    """
    k = g.k
    pi = win_fractions(g)
    present = np.zeros((k, k), dtype=bool)
    if g.edge_count:
        i = g.pairs[:, 0] - 1
        j = g.pairs[:, 1] - 1
        present[i, j] = True
        present[j, i] = True
    ti, tj, tk = triad_indices(k)
    cyc = _cyclic_triad_mask(pi, present, ti, tj, tk)
    alive = np.ones(k, dtype=bool)
    removed: list[int] = []
    active = cyc.copy()
    while True:
        active &= alive[ti] & alive[tj] & alive[tk]
        if not np.any(active):
            break
        participation = np.bincount(
            np.concatenate([ti[active], tj[active], tk[active]]), minlength=k
        )
        worst = int(np.argmax(participation))
        alive[worst] = False
        removed.append(worst + 1)
    return tuple(sorted(removed))


def jaccard(a, b) -> float:
    """Set overlap |a & b| / |a | b|; two empty sets count as identical."""
    sa, sb = set(a), set(b)
    union = sa | sb
    if not union:
        return 1.0
    return len(sa & sb) / len(union)


@dataclass(frozen=True)
class TransitionEstimate:
    """Pooled two-state transition frequencies across adjacent seasons.

    Rows with no observed departures are undefined and left as NaN rather
    than imputed."""

    matrix: np.ndarray
    counts: np.ndarray
    undefined_states: tuple[int, ...]


def membership_states(panel: SeasonPanel) -> np.ndarray:
    """0/1 state of each team per season (1 = in the cyclic set)."""
    states = np.zeros((len(panel.teams), panel.seasons), dtype=np.int64)
    for t, cyc in enumerate(panel.cyclic_sets):
        for team in cyc:
            states[team - 1, t] = 1
    return states


def markov_transitions(panel: SeasonPanel) -> TransitionEstimate:
    """Maximum-likelihood transition matrix of cyclic-set membership,
    pooled over all teams and adjacent season pairs."""
    if panel.seasons < 2:
        raise InputError("transition estimation needs at least two seasons")
    states = membership_states(panel)
    counts = np.zeros((2, 2), dtype=np.int64)
    for t in range(panel.seasons - 1):
        for team in range(states.shape[0]):
            counts[states[team, t], states[team, t + 1]] += 1
    matrix = np.full((2, 2), np.nan)
    undefined = []
    for k in range(2):
        total = counts[k].sum()
        if total > 0:
            matrix[k] = counts[k] / total
        else:
            undefined.append(k)
    return TransitionEstimate(
        matrix=matrix, counts=counts, undefined_states=tuple(undefined)
    )


@dataclass(frozen=True)
class PredictionResult:
    """Season-ahead rejection frequencies of the localized block test."""

    current_label: str
    future_label: str
    candidates: tuple[int, ...]
    alphas: tuple[float, ...]
    rejection_rates: tuple[float, ...]
    draws: int
    inner_draws: int
    seed: str


def predict_next_season(
    panel: SeasonPanel,
    t: int,
    alpha_levels: tuple[float, ...] = (0.05, 0.10),
    draws: int = 500,
    rng: RngStream | int | None = None,
    inner_draws: int = 499,
    threads: int = 1,
) -> PredictionResult:
    """Test whether season t's cyclic teams carry cyclic structure in t+1.

    Each of ``draws`` passes subsamples one game per pair from season
    t+1 into a complete single-comparison graph and runs the localized
    bootstrap test with season t's cyclic set as candidates; the result
    reports, per level, the fraction of passes that reject.
    """
    if not 0 <= t < panel.seasons - 1:
        raise InputError(f"season index {t} has no following season")
    candidates = panel.cyclic_sets[t]
    if not candidates:
        raise EmptyCandidateSet(f"season {panel.labels[t]} has no cyclic teams")
    split = LocalizedSplit.of(candidates)
    g = panel.graphs[t + 1]
    split.validate(g.k)
    if g.edge_count != pair_count(g.k):
        raise NotComplete(
            "season-ahead testing subsamples one game per pair and needs every "
            "pair to have played at least once"
        )
    stream = as_stream(rng)
    bounds = list(range(0, draws, PREDICT_CHUNK)) + [draws]

    def chunk(c: int) -> np.ndarray:
        out = np.zeros(bounds[c + 1] - bounds[c])
        for n, b in enumerate(range(bounds[c], bounds[c + 1])):
            sub_stream = stream.substream(b)
            gen = sub_stream.substream(0).generator()
            picks = g.offsets[:-1] + gen.integers(0, g.counts)
            single = ComparisonGraph(
                g.k,
                g.pairs,
                g.flat_values[picks],
                np.arange(g.edge_count + 1, dtype=np.int64),
            )
            report = localized_test(
                single,
                split,
                alpha=min(alpha_levels),
                mode="bootstrap",
                draws=inner_draws,
                rng=sub_stream.substream(1),
            )
            out[n] = report.p_value
        return out

    p_values = np.concatenate(run_chunks(chunk, len(bounds) - 1, threads))
    rates = tuple(float(np.mean(p_values <= a)) for a in alpha_levels)
    return PredictionResult(
        current_label=panel.labels[t],
        future_label=panel.labels[t + 1],
        candidates=candidates,
        alphas=tuple(alpha_levels),
        rejection_rates=rates,
        draws=draws,
        inner_draws=inner_draws,
        seed=stream.describe(),
    )
