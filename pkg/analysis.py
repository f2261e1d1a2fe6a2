"""Post-run analytics: gaps against the RFC reference, parallel speedup and
efficiency, rank-based tests and the grouped validation report."""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

import schema
import sim
from errors import AnalysisError
from scenario import Scenario
from workers import TaskFailure, WorkerPool

logger = logging.getLogger(__name__)


# --------- Gaps ---------
def gap_energy(energy: float, e_rfc: float) -> float:
    """Positive means savings."""
    if e_rfc <= 0:
        raise AnalysisError("reference energy must be positive")
    return (e_rfc - energy) / e_rfc


def gap_pdr(pdr: float, pdr_rfc: float) -> float:
    """Positive means PDR loss; reports print it negated."""
    return (pdr_rfc - pdr) / 100.0


def display_gap_pdr(gap: float) -> float:
    return -100.0 * gap


# --------- Parallel performance ---------
def speedup(mean_t1: float, mean_tm: float) -> float:
    if mean_t1 <= 0 or mean_tm <= 0:
        raise AnalysisError("execution times must be positive")
    return mean_t1 / mean_tm


def efficiency(s_m: float, m: int) -> float:
    if m < 1:
        raise AnalysisError("worker count must be >= 1")
    return s_m / m


BENCH_COLUMNS = ["m", "mean_time_s", "speedup", "efficiency", "repetitions"]


@dataclass(frozen=True)
class BenchResult:
    worker_counts: Tuple[int, ...]
    mean_times: Tuple[float, ...]
    repetitions: Tuple[int, ...]

    @classmethod
    def from_timings(cls, timings: Mapping[int, Sequence[float]]) -> "BenchResult":
        if 1 not in timings:
            raise AnalysisError("timings need the sequential baseline (m = 1)")
        counts = tuple(sorted(timings))
        if any(not timings[m] for m in counts):
            raise AnalysisError("every worker count needs at least one timing")
        return cls(
            worker_counts=counts,
            mean_times=tuple(float(np.mean(timings[m])) for m in counts),
            repetitions=tuple(len(timings[m]) for m in counts),
        )

    @property
    def speedups(self) -> Tuple[float, ...]:
        t1 = self.mean_times[self.worker_counts.index(1)]
        return tuple(speedup(t1, tm) for tm in self.mean_times)

    @property
    def efficiencies(self) -> Tuple[float, ...]:
        return tuple(efficiency(s, m) for s, m in zip(self.speedups, self.worker_counts))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "m": self.worker_counts,
                "mean_time_s": self.mean_times,
                "speedup": self.speedups,
                "efficiency": self.efficiencies,
                "repetitions": self.repetitions,
            },
            columns=BENCH_COLUMNS,
        )


# --------- Rank tests ---------
@dataclass(frozen=True)
class RankTestResult:
    test: str
    statistic: float
    auxiliary: Dict[str, Any] = field(default_factory=dict)
    p_value: Optional[float] = None


def _tie_term(values: np.ndarray) -> float:
    _, counts = np.unique(values, return_counts=True)
    return float(np.sum(counts**3 - counts))


def friedman_ranks(matrix: Sequence[Sequence[float]]) -> RankTestResult:
    """Rows are subjects, columns treatments; rank 1 is the smallest value."""
    data = np.atleast_2d(np.asarray(matrix, dtype=float))
    n, k = data.shape
    if n < 1 or k < 2:
        raise AnalysisError("friedman needs >= 1 subject and >= 2 treatments")
    ranks = stats.rankdata(data, axis=1)
    rank_sums = ranks.sum(axis=0)
    correction = 1.0 - sum(_tie_term(row) for row in data) / (n * k * (k * k - 1))
    if correction <= 0:
        statistic, p_value = 0.0, 1.0
    else:
        statistic = (12.0 / (n * k * (k + 1)) * float(np.sum(rank_sums**2)) - 3.0 * n * (k + 1)) / correction
        statistic = max(statistic, 0.0)
        p_value = float(stats.chi2.sf(statistic, k - 1))
    return RankTestResult(
        test="friedman",
        statistic=statistic,
        auxiliary={"avg_ranks": (rank_sums / n).tolist()},
        p_value=p_value,
    )


def wilcoxon_signed_rank(a: Sequence[float], b: Sequence[float]) -> RankTestResult:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 1:
        raise AnalysisError("wilcoxon needs two paired samples of equal length >= 1")
    diffs = a - b
    diffs = diffs[diffs != 0]
    if not len(diffs):
        raise AnalysisError("no nonzero pairs")

    ranks = stats.rankdata(np.abs(diffs))
    positive = ranks[diffs > 0]
    w_plus = float(positive.sum())
    w_minus = float(ranks[diffs < 0].sum())
    n = len(diffs)
    variance = n * (n + 1) * (2 * n + 1) / 24.0 - _tie_term(np.abs(diffs)) / 48.0
    p_value = None
    if variance > 0:
        z = (w_plus - n * (n + 1) / 4.0) / math.sqrt(variance)
        p_value = float(2 * stats.norm.sf(abs(z)))
    return RankTestResult(
        test="wilcoxon_signed_rank",
        statistic=min(w_plus, w_minus),
        auxiliary={
            "w_plus": w_plus,
            "w_minus": w_minus,
            "n": n,
            "positive_ranks": len(positive),
            "mean_positive_rank": w_plus / len(positive) if len(positive) else 0.0,
            "sum_positive_ranks": w_plus,
        },
        p_value=p_value,
    )


def kruskal_wallis(groups: Sequence[Sequence[float]]) -> RankTestResult:
    samples = [np.asarray(g, dtype=float) for g in groups]
    if len(samples) < 2 or any(len(s) == 0 for s in samples):
        raise AnalysisError("kruskal-wallis needs >= 2 non-empty groups")
    pooled = np.concatenate(samples)
    if np.all(pooled == pooled[0]):
        raise AnalysisError("all pooled observations are identical")
    statistic, p_value = stats.kruskal(*samples)
    ranks = stats.rankdata(pooled)
    bounds = np.cumsum([0] + [len(s) for s in samples])
    mean_ranks = [float(ranks[lo:hi].mean()) for lo, hi in zip(bounds[:-1], bounds[1:])]
    return RankTestResult(
        test="kruskal_wallis",
        statistic=float(statistic),
        auxiliary={"mean_ranks": mean_ranks, "n": len(pooled)},
        p_value=float(p_value),
    )


def ks_normality(sample: Sequence[float]) -> RankTestResult:
    """D against a normal fitted with the sample mean and sd (ddof=1); no p-value."""
    data = np.asarray(sample, dtype=float)
    if len(data) < 2:
        raise AnalysisError("ks_normality needs >= 2 observations")
    if np.all(data == data[0]):
        raise AnalysisError("sample is constant")
    mean, sd = float(data.mean()), float(data.std(ddof=1))
    result = stats.kstest(data, "norm", args=(mean, sd))
    return RankTestResult(test="ks_normality", statistic=float(result.statistic), auxiliary={"mean": mean, "sd": sd})


# --------- Validation report ---------
REPORT_COLUMNS = [
    "e_sent_mj", "e_recv_mj", "e_total_mj", "e_total_per_vehicle_mj", "pdr", "e2ed_ms", "nrl", "hops",
]
HIGHER_IS_BETTER = {"pdr"}
OVERALL = "overall"
UNCLASSIFIED = "unclassified"


class _CellRunner:
    """Worker-side: one (config, scenario, seed) simulation."""

    def __init__(self, configs: Mapping[str, schema.OlsrConfig], scenarios: Sequence[Scenario], nic: sim.NicProfile):
        self.configs = dict(configs)
        self.scenarios = list(scenarios)
        self.nic = nic

    def __call__(self, task: Tuple[str, int, int]) -> schema.SimMetrics:
        config_id, scenario_index, seed = task
        return sim.run_simulation(self.scenarios[scenario_index], self.configs[config_id], self.nic, seed)


@dataclass
class ValidationReport:
    cells: pd.DataFrame
    sections: Dict[str, pd.DataFrame]
    best: Dict[str, Dict[str, str]]

    def to_frame(self) -> pd.DataFrame:
        frames = [table.reset_index().assign(section=name) for name, table in self.sections.items()]
        merged = pd.concat(frames, ignore_index=True)
        return merged[["section"] + [c for c in merged.columns if c != "section"]]

    def to_csv(self) -> str:
        return self.to_frame().to_csv(index=False, float_format="%.6f")

    def to_text(self) -> str:
        blocks = []
        for name, table in self.sections.items():
            shown = table.copy().astype(object)
            for column in table.columns:
                for config_id in table.index:
                    value = table.at[config_id, column]
                    text = "-" if pd.isna(value) else f"{value:.2f}"
                    if self.best[name].get(column) == config_id:
                        text += "*"
                    shown.at[config_id, column] = text
            blocks.append(f"[{name}]\n{shown.to_string()}")
        return "\n\n".join(blocks) + "\n"


def _section_table(cells: pd.DataFrame, config_ids: Sequence[str], reference: Optional[str]) -> pd.DataFrame:
    table = cells.groupby("config_id")[REPORT_COLUMNS].mean().reindex(list(config_ids))
    table.index.name = "config_id"
    if reference in table.index and table.at[reference, "e_total_mj"] > 0:
        e_ref = table.at[reference, "e_total_mj"]
        table["e_total_reduction_pct"] = 100.0 * (e_ref - table["e_total_mj"]) / e_ref
    return table


def _best_marks(table: pd.DataFrame) -> Dict[str, str]:
    marks = {}
    for column in REPORT_COLUMNS:
        values = table[column].dropna()
        if values.empty:
            continue
        marks[column] = values.idxmax() if column in HIGHER_IS_BETTER else values.idxmin()
    return marks


def validation_report(
    configs: Mapping[str, schema.OlsrConfig],
    scenarios: Sequence[Scenario],
    nic: sim.NicProfile = sim.DEFAULT_NIC,
    seeds: Sequence[int] = (0,),
    workers: int = 1,
    reference: Optional[str] = "rfc",
) -> ValidationReport:
    """Average every config over scenarios and seeds, per scenario class and overall."""
    if not configs or not scenarios or not seeds:
        raise AnalysisError("validation needs >= 1 config, scenario and seed")
    tasks = [
        (config_id, index, seed)
        for index in range(len(scenarios))
        for config_id in configs
        for seed in seeds
    ]
    with WorkerPool(_CellRunner(configs, scenarios, nic), workers) as pool:
        outcomes = pool.map(tasks)

    rows = []
    for (config_id, index, seed), outcome in zip(tasks, outcomes):
        scenario = scenarios[index]
        if isinstance(outcome, TaskFailure):
            logger.warning(f"validation cell {config_id}/{scenario.name}/{seed} failed: {outcome.error}")
            continue
        row = outcome.csv_row(scenario.name, config_id, seed)
        row["scenario_class"] = scenario.scenario_class or UNCLASSIFIED
        rows.append(row)
    cells = pd.DataFrame(rows, columns=schema.METRICS_CSV_COLUMNS + ["scenario_class"])
    cells[REPORT_COLUMNS] = cells[REPORT_COLUMNS].apply(pd.to_numeric, errors="coerce")

    sections: Dict[str, pd.DataFrame] = {}
    for scenario_class in sorted(cells["scenario_class"].unique()):
        sections[scenario_class] = _section_table(cells[cells["scenario_class"] == scenario_class], configs, reference)
    sections[OVERALL] = _section_table(cells, configs, reference)
    best = {name: _best_marks(table) for name, table in sections.items()}
    logger.info(f"validation: {len(rows)}/{len(tasks)} cells over {len(scenarios)} scenarios")
    return ValidationReport(cells=cells, sections=sections, best=best)
