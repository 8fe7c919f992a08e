"""Lack-of-fit testing for cardinal pairwise comparison graphs.

The package models comparison data as a graph over items with a sample of
signed outcomes per compared pair, fits latent merits by Laplacian least
squares, splits preference profiles into linear and cyclic parts, and
tests the linear-transitivity hypothesis with residual statistics
calibrated by Monte Carlo or residual bootstrap, alongside classical
triad-count and F-test baselines, a simulation harness, and season
analytics for sports-style panels.
"""

__version__ = "0.1.0"

from .baselines import (
    calibrate_count_test,
    f_test,
    kendall_smith,
    kendall_smith_cardinal,
)
from .errors import (
    ConfigError,
    DeltaNotCyclic,
    DisconnectedGraph,
    DisconnectedSubgraph,
    EmptyBlock,
    EmptyCandidateSet,
    EmptyRegime,
    IndexOutOfRange,
    InputError,
    MTooSmall,
    NoResidualDf,
    NotComplete,
    NotPSD,
    NotSymmetric,
    ParseError,
    PcgfitError,
    RankDeficientDesign,
    RetriesExhausted,
    SigmaUnidentifiable,
    SplitInvalid,
    StatError,
    UnequalCounts,
)
from .fixed import (
    Detectability,
    Regime,
    TestReport,
    detectability,
    lof_test,
    mc_pvalue,
    noncentrality,
    null_sample,
    omega_matrix,
    statistic_r,
)
from .graph import (
    ComparisonGraph,
    FitResult,
    PreferenceProfile,
    TriadVector,
    add_triads,
    bottleneck_spanning_tree,
    decompose,
    incidence_matrix,
    inconsistent_triads,
    laplacian,
    lex_pairs,
    lse_fit,
    pair_count,
    pair_index,
    pooled_sigma2,
    psi_squared,
    triad_vector,
)
from .large import (
    LargeKDetectability,
    LocalizedSplit,
    SparseIndicators,
    SparseStatistics,
    detectability_large,
    localized_test,
    power_rmk,
    random_graph_test,
    sigma2_pooled_mk,
    sparse_psi2,
    sparse_statistics,
    statistic_rmk,
    triad_count,
    var_rmk_normal,
)
from .numerics import (
    RngStream,
    SpectralForm,
    pinv,
    psd_sqrt,
    quad_form,
    sym_eig,
)
from .sampling import NormalErrors
from .seasons import (
    PredictionResult,
    SeasonPanel,
    TransitionEstimate,
    cyclic_teams,
    jaccard,
    markov_transitions,
    predict_next_season,
    win_fractions,
)
from .simulate import (
    BinomialCounts,
    CountTestSpec,
    ErdosRenyi,
    FixedCounts,
    FTestSpec,
    LocalizedSpec,
    PathScheme,
    PowerRow,
    PowerTable,
    RFixedSpec,
    Scenario,
    SparseSpec,
    generate,
    power_study,
    scenario_from_dict,
)
