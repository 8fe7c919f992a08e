"""Scenario generation and the power-study harness.

A scenario fixes the item count, a per-pair comparison-count scheme, the
true profile (merit differences plus gamma-weighted cyclic triads), the
error law, and a list of tests. ``power_study`` replays the scenario many
times and reports per-test rejection frequencies with binomial standard
errors. Everything is driven by substreams of one master seed, chunked in
a thread-count-independent way, so tables are bit-identical across runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .baselines import calibrate_count_test, f_test, kendall_smith, kendall_smith_cardinal
from .errors import ConfigError, RetriesExhausted, SigmaUnidentifiable
from .fixed import Regime
from .graph import (
    ComparisonGraph,
    PreferenceProfile,
    add_triads,
    edges_connected,
    fit_merits,
    incidence_rows,
    lex_pairs,
    merit_differences,
    pair_count,
    pooled_sigma2,
    triad_vector,
)
from .large import LocalizedSplit, localized_test, random_graph_test
from .numerics import RngStream, as_stream, run_chunks, sym_eig
from .sampling import NormalErrors, sample_flat

REP_CHUNK = 64
MAX_GRAPH_RETRIES = 100

# substream layout under the scenario master seed:
#   (0, rep)        data generation for replication `rep`
#   (1 + t, rep)    Monte Carlo / bootstrap draws of test slot `t` in `rep`
#   (9000 + t,)     one-off calibration of test slot `t`
_DATA_DOMAIN = 0
_TEST_DOMAIN_BASE = 1
_CAL_DOMAIN_BASE = 9000


@dataclass(frozen=True)
class FixedCounts:
    m: int

    deterministic = True

    def draw(self, k: int, gen: np.random.Generator) -> np.ndarray:
        return np.full(pair_count(k), self.m, dtype=np.int64)


@dataclass(frozen=True)
class BinomialCounts:
    m: int
    p: float

    @property
    def deterministic(self) -> bool:
        return self.p >= 1.0

    def draw(self, k: int, gen: np.random.Generator) -> np.ndarray:
        if self.deterministic:
            return np.full(pair_count(k), self.m, dtype=np.int64)
        return gen.binomial(self.m, self.p, size=pair_count(k)).astype(np.int64)


@dataclass(frozen=True)
class PathScheme:
    """Heavily compared path plus two shortcut edges, sparse noise elsewhere.

    Consecutive pairs and (1,3) get 20 comparisons, (2,4) gets 10, every
    other pair draws Binomial(5, 1/2)."""

    heavy: int = 20
    light: int = 10
    tail_m: int = 5
    tail_p: float = 0.5

    deterministic = False

    def draw(self, k: int, gen: np.random.Generator) -> np.ndarray:
        if k < 4:
            raise ConfigError("path scheme needs at least 4 items", field="counts")
        counts = gen.binomial(self.tail_m, self.tail_p, size=pair_count(k)).astype(np.int64)
        pairs = lex_pairs(k)
        consecutive = pairs[:, 1] - pairs[:, 0] == 1
        counts[consecutive] = self.heavy
        one_three = (pairs[:, 0] == 1) & (pairs[:, 1] == 3)
        counts[one_three] = self.heavy
        two_four = (pairs[:, 0] == 2) & (pairs[:, 1] == 4)
        counts[two_four] = self.light
        return counts


@dataclass(frozen=True)
class ErdosRenyi:
    p: float

    @property
    def deterministic(self) -> bool:
        return self.p >= 1.0

    def draw(self, k: int, gen: np.random.Generator) -> np.ndarray:
        if self.deterministic:
            return np.ones(pair_count(k), dtype=np.int64)
        return (gen.random(pair_count(k)) < self.p).astype(np.int64)


CountScheme = FixedCounts | BinomialCounts | PathScheme | ErdosRenyi


@dataclass(frozen=True)
class RFixedSpec:
    regime: Regime
    draws: int = 10_000
    label: str = ""

    def name(self) -> str:
        return self.label or f"r-fixed[{self.regime.label()}]"


@dataclass(frozen=True)
class CountTestSpec:
    cardinal: bool = False
    draws: int = 10_000
    label: str = ""

    def name(self) -> str:
        return self.label or ("ks-cardinal" if self.cardinal else "ks")


@dataclass(frozen=True)
class FTestSpec:
    candidates: tuple[tuple[int, int, int], ...]
    label: str = ""

    def name(self) -> str:
        return self.label or f"f[q={len(self.candidates)}]"


@dataclass(frozen=True)
class LocalizedSpec:
    items: tuple[int, ...]
    draws: int = 499
    mode: str = "bootstrap"
    label: str = ""

    def name(self) -> str:
        return self.label or f"localized[J={len(self.items)}]"


@dataclass(frozen=True)
class SparseSpec:
    items: tuple[int, ...]
    draws: int = 499
    label: str = ""

    def name(self) -> str:
        return self.label or f"sparse[J={len(self.items)}]"


TestSpec = RFixedSpec | CountTestSpec | FTestSpec | LocalizedSpec | SparseSpec


@dataclass(frozen=True)
class Scenario:
    k: int
    counts: CountScheme
    merits: np.ndarray
    cyclic: tuple[tuple[tuple[int, int, int], float], ...]
    errors: NormalErrors
    replications: int
    seed: int
    alpha: float = 0.05
    tests: tuple[TestSpec, ...] = field(default=())
    name: str = "scenario"

    def profile(self) -> PreferenceProfile:
        base = PreferenceProfile.from_merits(self.merits)
        if not self.cyclic:
            return base
        cyc = add_triads(self.k, list(self.cyclic))
        return PreferenceProfile(self.k, base.values + cyc.values)


def _block_requirements(scenario: Scenario) -> tuple[tuple[int, ...], ...]:
    blocks: list[tuple[int, ...]] = []
    for spec in scenario.tests:
        if isinstance(spec, (LocalizedSpec, SparseSpec)):
            u = tuple(sorted(spec.items))
            comp = tuple(v for v in range(1, scenario.k + 1) if v not in set(u))
            blocks.extend([u, comp])
    return tuple(blocks)


def _draw_graph(
    scenario: Scenario,
    profile: PreferenceProfile,
    gen: np.random.Generator,
    blocks: tuple[tuple[int, ...], ...],
) -> ComparisonGraph:
    pairs_all = lex_pairs(scenario.k)
    for _ in range(MAX_GRAPH_RETRIES):
        counts = scenario.counts.draw(scenario.k, gen)
        mask = counts > 0
        pairs = pairs_all[mask]
        if not edges_connected(pairs, None, scenario.k):
            continue
        if any(not edges_connected(pairs, b, scenario.k) for b in blocks):
            continue
        w = counts[mask]
        flat = sample_flat(profile.values[mask], w, scenario.errors.sigma, gen)
        offsets = np.concatenate([[0], np.cumsum(w)])
        return ComparisonGraph(scenario.k, pairs, flat, offsets)
    raise RetriesExhausted(
        f"no valid graph in {MAX_GRAPH_RETRIES} draws of the count scheme"
    )


def generate(scenario: Scenario, rng: RngStream | int | None) -> ComparisonGraph:
    """One synthetic comparison graph from the scenario's truth.

    Random count schemes are redrawn until the graph (and any candidate
    blocks named by the scenario's tests) is connected.
    """
    gen = as_stream(rng).generator()
    return _draw_graph(scenario, scenario.profile(), gen, _block_requirements(scenario))


class _RepData:
    """Per-replication graph with lazily shared fit quantities."""

    __slots__ = ("g", "_mu", "_sigma2")

    def __init__(self, g: ComparisonGraph):
        self.g = g
        self._mu = None
        self._sigma2 = None

    @property
    def mu(self) -> np.ndarray:
        if self._mu is None:
            self._mu = fit_merits(self.g)
        return self._mu

    @property
    def sigma2(self) -> float:
        if self._sigma2 is None:
            s = pooled_sigma2(self.g)
            if s is None:
                raise SigmaUnidentifiable(
                    "scenario produces no replicated pairs; the residual test "
                    "cannot estimate the error variance"
                )
            self._sigma2 = max(s, np.finfo(float).tiny)
        return self._sigma2


class _REvaluator:
    """Residual test on a regime, Monte Carlo calibrated.

    For a deterministic count scheme the unit-variance null spectrum and
    one shared set of null draws are precomputed; rejection then only
    compares the per-replication statistic against the scaled draws.
    Otherwise the spectrum is rebuilt per replication: the all-edges block
    is an orthogonal projector (all nonzero eigenvalues equal the error
    variance; identity asserted by ``omega_matrix`` and covered by the
    test suite), and thresholded blocks are small enough to
    eigendecompose directly.
    """

    def __init__(self, spec: RFixedSpec, scenario: Scenario, slot: int):
        self.spec = spec
        self.scenario = scenario
        self.slot = slot
        self._shared_null: np.ndarray | None = None

    def calibrate(self, stream: RngStream, threads: int) -> None:
        if not self.scenario.counts.deterministic:
            return
        counts = self.scenario.counts.draw(self.scenario.k, np.random.default_rng(0))
        mask = counts > 0
        pairs = lex_pairs(self.scenario.k)[mask]
        lam = _unit_null_eigenvalues(pairs, counts[mask], self.scenario.k, self.spec.regime)
        gen = stream.substream(_CAL_DOMAIN_BASE + self.slot).generator()
        if lam.size:
            z = gen.standard_normal((self.spec.draws, lam.size))
            draws = (z * z) @ lam
        else:
            draws = np.zeros(self.spec.draws)
        self._shared_null = np.sort(draws)

    def evaluate(self, rep: _RepData, rng: RngStream) -> bool:
        stat = _statistic_from_fit(rep.g, rep.mu, self.spec.regime)
        sigma2 = rep.sigma2
        if self._shared_null is not None:
            scaled = stat / sigma2
            exceed = self._shared_null.size - np.searchsorted(
                self._shared_null, scaled, side="left"
            )
            p = (1 + int(exceed)) / (self.spec.draws + 1)
            return p <= self.scenario.alpha
        lam = _unit_null_eigenvalues(
            rep.g.pairs, rep.g.counts, rep.g.k, self.spec.regime
        )
        gen = rng.generator()
        if lam.size == 0:
            draws = np.zeros(self.spec.draws)
        elif np.allclose(lam, 1.0):
            draws = gen.chisquare(lam.size, size=self.spec.draws)
        else:
            z = gen.standard_normal((self.spec.draws, lam.size))
            draws = (z * z) @ lam
        p = (1 + int(np.sum(sigma2 * draws >= stat))) / (self.spec.draws + 1)
        return p <= self.scenario.alpha


def _statistic_from_fit(g: ComparisonGraph, mu: np.ndarray, regime: Regime) -> float:
    sel = regime.resolve(g)
    resid = g.means - merit_differences(mu, g.pairs)
    w = g.counts.astype(float)
    return float(np.sum(w[sel] * resid[sel] ** 2))


def _unit_null_eigenvalues(
    pairs: np.ndarray, counts: np.ndarray, k: int, regime: Regime
) -> np.ndarray:
    """Nonzero eigenvalues of the null covariance block at unit variance.

    The all-edges block is an orthogonal projector of rank E - (K - 1),
    so its nonzero eigenvalues are all one. Other regimes build the
    restricted block explicitly.
    """
    if regime.kind == "all":
        r = pairs.shape[0] - (k - 1)
        return np.ones(max(r, 0))
    w = counts.astype(float)
    if regime.kind == "threshold":
        sel = np.nonzero(counts >= regime.threshold)[0]
    else:
        wanted = set(regime.edges or ())
        sel = np.array(
            [e for e, (i, j) in enumerate(pairs) if (int(i), int(j)) in wanted],
            dtype=np.int64,
        )
    if sel.size == 0:
        return np.zeros(0)
    b = incidence_rows(pairs, k)
    n = (b * w[:, None]).T @ b
    t = sym_eig(n).pinv_matrix() @ (b * w[:, None]).T
    m = -(b[sel] @ t)
    m[np.arange(sel.size), sel] += 1.0
    q = (np.sqrt(w[sel])[:, None] * m) / np.sqrt(w)[None, :]
    form = sym_eig(q @ q.T)
    return form.nonzero_eigenvalues


class _CountEvaluator:
    def __init__(self, spec: CountTestSpec, scenario: Scenario, slot: int):
        if not scenario.counts.deterministic:
            raise ConfigError(
                "count-test calibration shares one critical value across "
                "replications and therefore needs a deterministic count scheme",
                field="tests",
            )
        self.spec = spec
        self.scenario = scenario
        self.slot = slot
        self.critical: int | None = None

    def calibrate(self, stream: RngStream, threads: int) -> None:
        counts = self.scenario.counts.draw(self.scenario.k, np.random.default_rng(0))
        mask = counts > 0
        pairs = lex_pairs(self.scenario.k)[mask]
        w = counts[mask]
        offsets = np.concatenate([[0], np.cumsum(w)])
        template = ComparisonGraph(
            self.scenario.k, pairs, np.zeros(int(w.sum())), offsets
        )
        self.critical = calibrate_count_test(
            template,
            mu_null=None,
            sigma=self.scenario.errors.sigma,
            draws=self.spec.draws,
            rng=stream.substream(_CAL_DOMAIN_BASE + self.slot),
            statistic="cardinal" if self.spec.cardinal else "sign",
            alpha=self.scenario.alpha,
            threads=threads,
        )

    def evaluate(self, rep: _RepData, rng: RngStream) -> bool:
        if self.spec.cardinal:
            t = kendall_smith_cardinal(rep.g, rep.sigma2)
        else:
            t = kendall_smith(rep.g)
        return t >= self.critical


class _FEvaluator:
    def __init__(self, spec: FTestSpec, scenario: Scenario, slot: int):
        self.spec = spec
        self.scenario = scenario

    def calibrate(self, stream: RngStream, threads: int) -> None:
        pass

    def evaluate(self, rep: _RepData, rng: RngStream) -> bool:
        report = f_test(rep.g, list(self.spec.candidates), alpha=self.scenario.alpha)
        return report.reject


class _LocalizedEvaluator:
    def __init__(self, spec: LocalizedSpec, scenario: Scenario, slot: int):
        self.spec = spec
        self.scenario = scenario
        self.split = LocalizedSplit.of(spec.items)

    def calibrate(self, stream: RngStream, threads: int) -> None:
        pass

    def evaluate(self, rep: _RepData, rng: RngStream) -> bool:
        report = localized_test(
            rep.g,
            self.split,
            alpha=self.scenario.alpha,
            mode=self.spec.mode,
            draws=self.spec.draws,
            rng=rng,
        )
        return report.reject


class _SparseEvaluator:
    def __init__(self, spec: SparseSpec, scenario: Scenario, slot: int):
        self.spec = spec
        self.scenario = scenario
        self.split = LocalizedSplit.of(spec.items)
        self.p_edge = getattr(scenario.counts, "p", None)

    def calibrate(self, stream: RngStream, threads: int) -> None:
        pass

    def evaluate(self, rep: _RepData, rng: RngStream) -> bool:
        report = random_graph_test(
            rep.g,
            self.split,
            p_edge=self.p_edge,
            alpha=self.scenario.alpha,
            draws=self.spec.draws,
            rng=rng,
        )
        return report.reject


def _make_evaluator(spec: TestSpec, scenario: Scenario, slot: int):
    if isinstance(spec, RFixedSpec):
        return _REvaluator(spec, scenario, slot)
    if isinstance(spec, CountTestSpec):
        return _CountEvaluator(spec, scenario, slot)
    if isinstance(spec, FTestSpec):
        return _FEvaluator(spec, scenario, slot)
    if isinstance(spec, LocalizedSpec):
        return _LocalizedEvaluator(spec, scenario, slot)
    if isinstance(spec, SparseSpec):
        return _SparseEvaluator(spec, scenario, slot)
    raise ConfigError(f"unknown test spec {type(spec).__name__}", field="tests")


@dataclass(frozen=True)
class PowerRow:
    label: str
    rejections: int
    replications: int

    @property
    def estimate(self) -> float:
        return self.rejections / self.replications

    @property
    def std_error(self) -> float:
        p = self.estimate
        return math.sqrt(p * (1 - p) / self.replications)


@dataclass(frozen=True)
class PowerTable:
    name: str
    k: int
    alpha: float
    seed: int
    replications: int
    rows: tuple[PowerRow, ...]

    def to_tsv(self) -> str:
        lines = ["test\trejections\treplications\testimate\tstd_error"]
        for r in self.rows:
            lines.append(
                f"{r.label}\t{r.rejections}\t{r.replications}\t{r.estimate!r}\t{r.std_error!r}"
            )
        return "\n".join(lines) + "\n"


def power_study(scenario: Scenario, threads: int = 1) -> PowerTable:
    """Rejection frequency of every test in the scenario.

    Deterministic given the scenario seed: replication r draws its data
    from substream (0, r) and test slot t draws its calibration noise from
    substream (1 + t, r), so chunking and thread count cannot change any
    number in the table.
    """
    profile = scenario.profile()
    stream = RngStream(scenario.seed)
    evaluators = [
        _make_evaluator(spec, scenario, slot) for slot, spec in enumerate(scenario.tests)
    ]
    if not evaluators:
        raise ConfigError("scenario declares no tests", field="tests")
    for ev in evaluators:
        ev.calibrate(stream, threads)
    blocks = _block_requirements(scenario)
    reps = scenario.replications
    bounds = list(range(0, reps, REP_CHUNK)) + [reps]

    def chunk(c: int) -> np.ndarray:
        hits = np.zeros(len(evaluators), dtype=np.int64)
        for r in range(bounds[c], bounds[c + 1]):
            gen = stream.substream(_DATA_DOMAIN).substream(r).generator()
            rep = _RepData(_draw_graph(scenario, profile, gen, blocks))
            for t, ev in enumerate(evaluators):
                rng = stream.substream(_TEST_DOMAIN_BASE + t).substream(r)
                if ev.evaluate(rep, rng):
                    hits[t] += 1
        return hits

    totals = sum(run_chunks(chunk, len(bounds) - 1, threads))
    rows = tuple(
        PowerRow(label=spec.name(), rejections=int(totals[t]), replications=reps)
        for t, spec in enumerate(scenario.tests)
    )
    return PowerTable(
        name=scenario.name,
        k=scenario.k,
        alpha=scenario.alpha,
        seed=scenario.seed,
        replications=reps,
        rows=rows,
    )


def scenario_from_dict(raw: dict) -> Scenario:
    """Build and validate a scenario from parsed configuration data."""
    if not isinstance(raw, dict):
        raise ConfigError("scenario must be a mapping")
    known = {
        "name", "k", "counts", "merits", "cyclic", "errors",
        "replications", "seed", "alpha", "tests",
    }
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown field {key!r}", field=key)
    k = _require_int(raw, "k", minimum=2)
    replications = _require_int(raw, "replications", minimum=1)
    seed = _require_int(raw, "seed", minimum=None)
    alpha = float(raw.get("alpha", 0.05))
    if not 0 < alpha < 1:
        raise ConfigError("alpha must be in (0, 1)", field="alpha")
    counts = _parse_counts(raw.get("counts"))
    merits = _parse_merits(raw.get("merits", "zero"), k)
    cyclic = _parse_cyclic(raw.get("cyclic", []), k)
    errors = _parse_errors(raw.get("errors", {"law": "normal", "sigma": 1.0}))
    tests = _parse_tests(raw.get("tests"), k)
    return Scenario(
        k=k,
        counts=counts,
        merits=merits,
        cyclic=cyclic,
        errors=errors,
        replications=replications,
        seed=seed,
        alpha=alpha,
        tests=tests,
        name=str(raw.get("name", "scenario")),
    )


def _require_int(raw: dict, key: str, minimum: int | None) -> int:
    if key not in raw:
        raise ConfigError("required field missing", field=key)
    try:
        value = int(raw[key])
    except (TypeError, ValueError):
        raise ConfigError("must be an integer", field=key) from None
    if minimum is not None and value < minimum:
        raise ConfigError(f"must be at least {minimum}", field=key)
    return value


def _parse_counts(raw) -> CountScheme:
    if not isinstance(raw, dict) or "kind" not in raw:
        raise ConfigError("counts must be a mapping with a 'kind'", field="counts")
    kind = raw["kind"]
    if kind == "fixed":
        return FixedCounts(m=_require_int(raw, "m", minimum=1))
    if kind == "binomial":
        p = float(raw.get("p", 1.0))
        if not 0 < p <= 1:
            raise ConfigError("p must be in (0, 1]", field="counts.p")
        return BinomialCounts(m=_require_int(raw, "m", minimum=1), p=p)
    if kind == "path":
        return PathScheme()
    if kind == "erdos-renyi":
        p = float(raw.get("p", 0.5))
        if not 0 < p <= 1:
            raise ConfigError("p must be in (0, 1]", field="counts.p")
        return ErdosRenyi(p=p)
    raise ConfigError(f"unknown counts kind {kind!r}", field="counts.kind")


def _parse_merits(raw, k: int) -> np.ndarray:
    if raw == "zero" or raw is None:
        return np.zeros(k)
    arr = np.asarray(raw, dtype=float)
    if arr.shape != (k,):
        raise ConfigError(f"merits must be 'zero' or a list of {k} numbers", field="merits")
    return arr


def _parse_cyclic(raw, k: int) -> tuple[tuple[tuple[int, int, int], float], ...]:
    if raw is None:
        return ()
    terms = []
    for pos, item in enumerate(raw):
        fieldname = f"cyclic[{pos}]"
        if not isinstance(item, dict) or "triad" not in item:
            raise ConfigError("each cyclic term needs a 'triad'", field=fieldname)
        triad = tuple(int(x) for x in item["triad"])
        if len(triad) != 3:
            raise ConfigError("triad must have three items", field=fieldname)
        triad_vector(*triad, k)  # validates ordering and range
        gamma = float(item.get("gamma", 1.0))
        terms.append((triad, gamma))
    return tuple(terms)


def _parse_errors(raw) -> NormalErrors:
    if not isinstance(raw, dict):
        raise ConfigError("errors must be a mapping", field="errors")
    law = raw.get("law", "normal")
    if law != "normal":
        raise ConfigError(f"unsupported error law {law!r}", field="errors.law")
    sigma = float(raw.get("sigma", 1.0))
    if sigma < 0:
        raise ConfigError("sigma must be nonnegative", field="errors.sigma")
    return NormalErrors(sigma=sigma)


def _parse_regime(raw, fieldname: str) -> Regime:
    if raw in (None, "all"):
        return Regime.all_edges()
    if isinstance(raw, str) and raw.startswith("threshold:"):
        try:
            return Regime.min_count(int(raw.split(":", 1)[1]))
        except ValueError:
            raise ConfigError(f"bad regime {raw!r}", field=fieldname) from None
    raise ConfigError(f"bad regime {raw!r}", field=fieldname)


def _parse_tests(raw, k: int) -> tuple[TestSpec, ...]:
    if not raw:
        raise ConfigError("scenario needs at least one test", field="tests")
    specs: list[TestSpec] = []
    for pos, item in enumerate(raw):
        fieldname = f"tests[{pos}]"
        if not isinstance(item, dict) or "kind" not in item:
            raise ConfigError("each test needs a 'kind'", field=fieldname)
        kind = item["kind"]
        label = str(item.get("label", ""))
        if kind == "r-fixed":
            specs.append(
                RFixedSpec(
                    regime=_parse_regime(item.get("regime"), fieldname + ".regime"),
                    draws=int(item.get("draws", 10_000)),
                    label=label,
                )
            )
        elif kind in ("ks", "ks-cardinal"):
            specs.append(
                CountTestSpec(
                    cardinal=kind == "ks-cardinal",
                    draws=int(item.get("draws", 10_000)),
                    label=label,
                )
            )
        elif kind == "f":
            cands = item.get("candidates")
            if not cands:
                raise ConfigError("f test needs candidate triads", field=fieldname)
            triads = []
            for c in cands:
                triad = tuple(int(x) for x in c)
                triad_vector(*triad, k)
                triads.append(triad)
            specs.append(FTestSpec(candidates=tuple(triads), label=label))
        elif kind in ("localized", "sparse"):
            items = item.get("candidates")
            if not items:
                raise ConfigError(f"{kind} test needs candidate items", field=fieldname)
            u = tuple(int(x) for x in items)
            draws = int(item.get("bootstrap", 499))
            if kind == "localized":
                specs.append(
                    LocalizedSpec(
                        items=u,
                        draws=draws,
                        mode=str(item.get("mode", "bootstrap")),
                        label=label,
                    )
                )
            else:
                specs.append(SparseSpec(items=u, draws=draws, label=label))
        else:
            raise ConfigError(f"unknown test kind {kind!r}", field=fieldname)
    return tuple(specs)
