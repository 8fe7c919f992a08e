"""Command-line interface.

Commands: ``fit``, ``test {fixed,large,sparse,ks,f}``, ``simulate``,
``seasons``, ``export``. Every report embeds the seed and draw counts
needed to reproduce it bit-exactly; ``--threads`` only caps workers and
never changes output. Exit codes: 0 ok, 2 input error, 3 statistical
procedure error, 4 internal error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .baselines import calibrate_count_test, f_test, kendall_smith, kendall_smith_cardinal
from .errors import InputError, PcgfitError, SigmaUnidentifiable, StatError
from .fixed import Regime, TestReport, lof_test
from .graph import ComparisonGraph, lse_fit, pooled_sigma2
from .io import read_comparisons, read_scenario, read_season_panel, render_to, write_comparisons
from .large import LocalizedSplit, localized_test, random_graph_test
from .numerics import RngStream
from .report import Report
from .seasons import markov_transitions, jaccard, predict_next_season
from .simulate import power_study

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_STAT = 3
EXIT_INTERNAL = 4


def _parse_items(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise InputError(f"bad item list {text!r}: expected comma-separated integers") from None


def _parse_triads(text: str) -> list[tuple[int, int, int]]:
    triads = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        items = _parse_items(part)
        if len(items) != 3:
            raise InputError(f"bad triad {part!r}: expected i,j,k")
        triads.append((items[0], items[1], items[2]))
    if not triads:
        raise InputError("no triads supplied")
    return triads


def _parse_regime(text: str) -> Regime:
    if text == "all":
        return Regime.all_edges()
    if text.startswith("threshold:"):
        try:
            return Regime.min_count(int(text.split(":", 1)[1]))
        except ValueError:
            raise InputError(f"bad regime {text!r}") from None
    raise InputError(f"bad regime {text!r}: expected all or threshold:T")


def _test_report_to_report(kind: str, input_path: str, rep: TestReport) -> Report:
    out = Report(f"test-{kind}")
    out.scalar("version", __version__)
    out.scalar("input", input_path)
    out.scalar("method", rep.method)
    out.scalar("regime", rep.regime)
    out.scalar("statistic", rep.statistic)
    out.scalar("p_value", rep.p_value)
    out.scalar("alpha", rep.alpha)
    out.scalar("reject", rep.reject)
    out.scalar("draws", rep.draws)
    out.scalar("seed", rep.seed)
    out.scalar("sigma2", rep.sigma2)
    out.scalar("rank_r", rep.rank_r)
    for n, w in enumerate(rep.warnings):
        out.scalar(f"warning.{n + 1}", w)
    if rep.eigenvalues:
        out.table(
            "eigenvalues",
            ["index", "value"],
            [(n + 1, v) for n, v in enumerate(rep.eigenvalues)],
        )
    return out


def _cmd_fit(args) -> int:
    g = read_comparisons(args.input)
    fit = lse_fit(g)
    out = Report("fit")
    out.scalar("version", __version__)
    out.scalar("input", args.input)
    out.scalar("k", g.k)
    out.scalar("edges", g.edge_count)
    out.scalar("n_total", g.n_total)
    out.scalar("connected", g.is_connected)
    out.scalar("sigma2_hat", fit.sigma2_hat)
    out.scalar("m_bottleneck", fit.m_bottleneck)
    out.table(
        "merits",
        ["item", "mu_hat"],
        [(i + 1, float(fit.mu_hat[i])) for i in range(g.k)],
    )
    values, counts = np.unique(g.counts, return_counts=True)
    out.table(
        "edge_count_histogram",
        ["n_ij", "edges"],
        [(int(v), int(c)) for v, c in zip(values, counts)],
    )
    render_to(out.render(), args.out)
    return EXIT_OK


def _cmd_test(args) -> int:
    g = read_comparisons(args.input)
    kind = args.test_kind
    if kind == "fixed":
        rep = lof_test(
            g,
            _parse_regime(args.regime),
            alpha=args.alpha,
            draws=args.draws,
            rng=RngStream(args.seed),
            sigma2=args.sigma2,
            threads=args.threads,
        )
    elif kind == "large":
        if not args.candidates:
            raise InputError("test large needs --candidates")
        rep = localized_test(
            g,
            LocalizedSplit.of(_parse_items(args.candidates)),
            alpha=args.alpha,
            mode="closed-form" if args.closed_form else "bootstrap",
            draws=args.bootstrap,
            rng=RngStream(args.seed),
            threads=args.threads,
        )
    elif kind == "sparse":
        if not args.candidates:
            raise InputError("test sparse needs --candidates")
        rep = random_graph_test(
            g,
            LocalizedSplit.of(_parse_items(args.candidates)),
            p_edge=args.p_edge,
            alpha=args.alpha,
            draws=args.bootstrap,
            rng=RngStream(args.seed),
            threads=args.threads,
        )
    elif kind == "ks":
        sigma2 = args.sigma2 if args.sigma2 is not None else pooled_sigma2(g)
        if sigma2 is None:
            raise SigmaUnidentifiable(
                "no replicated pairs; supply --sigma2 for the count test"
            )
        stream = RngStream(args.seed)
        stat = (
            kendall_smith_cardinal(g, sigma2) if args.cardinal else kendall_smith(g)
        )
        critical = calibrate_count_test(
            g,
            mu_null=None,
            sigma=float(np.sqrt(sigma2)),
            draws=args.draws,
            rng=stream,
            statistic="cardinal" if args.cardinal else "sign",
            alpha=args.alpha,
            threads=args.threads,
        )
        rep = TestReport(
            statistic=float(stat),
            p_value=float("nan"),
            draws=args.draws,
            seed=stream.describe(),
            regime="ks-cardinal" if args.cardinal else "ks",
            rank_r=None,
            eigenvalues=(),
            alpha=args.alpha,
            reject=stat >= critical,
            sigma2=float(sigma2),
            method="mc-critical-value",
            warnings=(f"critical-value: {critical}",),
        )
    elif kind == "f":
        if not args.candidates:
            raise InputError("test f needs --candidates with triads like 1,2,3;1,2,4")
        rep = f_test(g, _parse_triads(args.candidates), alpha=args.alpha)
    else:  # pragma: no cover - argparse restricts choices
        raise InputError(f"unknown test kind {kind!r}")
    render_to(_test_report_to_report(kind, args.input, rep).render(), args.out)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    scenario = read_scenario(args.config)
    table = power_study(scenario, threads=args.threads)
    out = Report("simulate")
    out.scalar("version", __version__)
    out.scalar("config", args.config)
    out.scalar("scenario", table.name)
    out.scalar("k", table.k)
    out.scalar("alpha", table.alpha)
    out.scalar("seed", table.seed)
    out.scalar("replications", table.replications)
    out.table(
        "power",
        ["test", "rejections", "replications", "estimate", "std_error"],
        [
            (r.label, r.rejections, r.replications, r.estimate, r.std_error)
            for r in table.rows
        ],
    )
    render_to(out.render(), args.out)
    return EXIT_OK


def _cmd_seasons(args) -> int:
    panel = read_season_panel(args.input)
    alphas = tuple(float(a) for a in args.alphas.split(","))
    out = Report("seasons")
    out.scalar("version", __version__)
    out.scalar("input", args.input)
    out.scalar("teams", len(panel.teams))
    out.scalar("seasons", panel.seasons)
    out.scalar("seed", args.seed)
    out.scalar("bootstrap", args.bootstrap)
    out.scalar("inner_draws", args.inner_draws)
    out.table(
        "team_index",
        ["index", "team"],
        [(n + 1, t) for n, t in enumerate(panel.teams)],
    )
    out.table(
        "cyclic_teams",
        ["season", "count", "teams"],
        [
            (label, len(cyc), " ".join(panel.teams[i - 1] for i in cyc))
            for label, cyc in zip(panel.labels, panel.cyclic_sets)
        ],
    )
    out.table(
        "jaccard",
        ["season", *panel.labels],
        [
            (
                panel.labels[a],
                *[
                    jaccard(panel.cyclic_sets[a], panel.cyclic_sets[b])
                    for b in range(panel.seasons)
                ],
            )
            for a in range(panel.seasons)
        ],
    )
    if panel.seasons >= 2:
        est = markov_transitions(panel)
        out.table(
            "transitions",
            ["from_state", "to_compliant", "to_cyclic"],
            [
                (k, float(est.matrix[k, 0]), float(est.matrix[k, 1]))
                for k in range(2)
            ],
        )
        for k in est.undefined_states:
            out.scalar(f"warning.transitions.{k}", f"no observed departures from state {k}")
        stream = RngStream(args.seed)
        rows = []
        for t in range(panel.seasons - 1):
            if not panel.cyclic_sets[t] or len(panel.cyclic_sets[t]) >= len(panel.teams):
                rows.append((panel.labels[t], panel.labels[t + 1], "skipped", *
                             ["-" for _ in alphas]))
                continue
            result = predict_next_season(
                panel,
                t,
                alpha_levels=alphas,
                draws=args.bootstrap,
                rng=stream.substream(t),
                inner_draws=args.inner_draws,
                threads=args.threads,
            )
            rows.append(
                (
                    result.current_label,
                    result.future_label,
                    len(result.candidates),
                    *[float(r) for r in result.rejection_rates],
                )
            )
        out.table(
            "prediction",
            ["current", "future", "candidates", *[f"reject_at_{a}" for a in alphas]],
            rows,
        )
    render_to(out.render(), args.out)
    return EXIT_OK


def _cmd_export(args) -> int:
    g = read_comparisons(args.input)
    if args.out is None:
        write_comparisons(g, sys.stdout)
    else:
        write_comparisons(g, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcgfit",
        description="Lack-of-fit tests for cardinal pairwise comparison data.",
    )
    parser.add_argument("--version", action="version", version=f"pcgfit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("-o", "--out", default=None, help="write the report to this file")
        p.add_argument("--threads", type=int, default=1, help="cap worker threads (never changes results)")

    p_fit = sub.add_parser("fit", help="least-squares merit fit and graph summary")
    p_fit.add_argument("input", help="comparisons CSV (header i,j,y)")
    common(p_fit)
    p_fit.set_defaults(func=_cmd_fit)

    p_test = sub.add_parser("test", help="run a lack-of-fit test")
    test_sub = p_test.add_subparsers(dest="test_kind", required=True)
    for kind, helptext in [
        ("fixed", "weighted-residual test, Monte Carlo calibrated"),
        ("large", "localized block test on complete balanced data"),
        ("sparse", "indicator-masked block test for single comparisons"),
        ("ks", "cyclic-triad count test (sign or cardinal)"),
        ("f", "regression F-test against named candidate triads"),
    ]:
        p = test_sub.add_parser(kind, help=helptext)
        p.add_argument("input", help="comparisons CSV (header i,j,y)")
        p.add_argument("--alpha", type=float, default=0.05)
        p.add_argument("--seed", type=int, default=0)
        common(p)
        if kind == "fixed":
            p.add_argument("--regime", default="all", help="all or threshold:T")
            p.add_argument("--draws", type=int, default=10_000)
            p.add_argument("--sigma2", type=float, default=None)
        elif kind in ("large", "sparse"):
            p.add_argument("--candidates", default=None, help="comma-separated item list")
            p.add_argument("--bootstrap", type=int, default=499)
            if kind == "large":
                p.add_argument(
                    "--closed-form",
                    action="store_true",
                    help="use the normal-theory closed form instead of the bootstrap",
                )
            else:
                p.add_argument("--p-edge", type=float, default=None, dest="p_edge")
        elif kind == "ks":
            p.add_argument("--cardinal", action="store_true")
            p.add_argument("--draws", type=int, default=10_000)
            p.add_argument("--sigma2", type=float, default=None)
        elif kind == "f":
            p.add_argument(
                "--candidates", default=None, help="semicolon-separated triads: 1,2,3;1,2,4"
            )
        p.set_defaults(func=_cmd_test)

    p_sim = sub.add_parser("simulate", help="run a scenario power study")
    p_sim.add_argument("config", help="YAML scenario file")
    common(p_sim)
    p_sim.set_defaults(func=_cmd_simulate)

    p_sea = sub.add_parser("seasons", help="season analytics over game files")
    p_sea.add_argument("input", help="games CSV or a directory of season CSVs")
    p_sea.add_argument("--alphas", default="0.05,0.1")
    p_sea.add_argument("--seed", type=int, default=0)
    p_sea.add_argument("--bootstrap", type=int, default=500, help="outer subsample passes")
    p_sea.add_argument("--inner-draws", type=int, default=499, dest="inner_draws")
    common(p_sea)
    p_sea.set_defaults(func=_cmd_seasons)

    p_exp = sub.add_parser("export", help="rewrite a comparisons file in canonical form")
    p_exp.add_argument("input")
    common(p_exp)
    p_exp.set_defaults(func=_cmd_export)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"pcgfit: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except StatError as exc:
        print(f"pcgfit: {exc}", file=sys.stderr)
        return EXIT_STAT
    except PcgfitError as exc:
        print(f"pcgfit: {exc}", file=sys.stderr)
        return EXIT_STAT
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"pcgfit: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
