import numpy as np
import pytest
from scipy import stats

import schema
from analysis import (
    BenchResult,
    display_gap_pdr,
    efficiency,
    friedman_ranks,
    gap_energy,
    gap_pdr,
    ks_normality,
    kruskal_wallis,
    speedup,
    validation_report,
    wilcoxon_signed_rank,
)
from conftest import make_static_scenario
from errors import AnalysisError
from olsr import energy_aware_default, rfc_default
from sim import run_simulation

RFC = rfc_default()


# --------- Gaps ---------
@pytest.mark.parametrize(
    "energy, expected",
    [(9104.19, 0.0), (6305.58, 0.3074), (6551.89, 0.2803), (6446.92, 0.2919)],
)
def test_gap_energy(energy, expected):
    assert gap_energy(energy, 9104.19) == pytest.approx(expected, abs=1e-4)


@pytest.mark.parametrize(
    "pdr, expected",
    [(87.12, 0.0), (75.14, 0.1198), (74.74, 0.1238), (75.20, 0.1192)],
)
def test_gap_pdr(pdr, expected):
    assert gap_pdr(pdr, 87.12) == pytest.approx(expected, abs=1e-4)


def test_pdr_gap_is_displayed_negated():
    assert display_gap_pdr(gap_pdr(75.14, 87.12)) == pytest.approx(-11.98, abs=1e-2)


def test_gap_energy_needs_positive_reference():
    with pytest.raises(AnalysisError):
        gap_energy(10.0, 0.0)


# --------- Parallel performance ---------
def test_speedup():
    assert speedup(7.0, 7.0) == 1.0
    assert speedup(2.0, 1.0) == 2.0
    assert speedup(64459.6, 11113.73) == pytest.approx(5.80, abs=0.01)


def test_speedup_rejects_nonpositive_times():
    with pytest.raises(AnalysisError):
        speedup(0.0, 1.0)


@pytest.mark.parametrize(
    "s_m, m, expected, tolerance",
    [(8, 8, 1.0, 1e-12), (19.10, 24, 0.7958, 5e-4), (11.81, 16, 0.738, 1e-3), (5.80, 8, 0.725, 1e-3)],
)
def test_efficiency(s_m, m, expected, tolerance):
    assert efficiency(s_m, m) == pytest.approx(expected, abs=tolerance)


def test_bench_result_table():
    result = BenchResult.from_timings({1: [10.0, 12.0], 4: [3.0, 3.0], 2: [6.0]})
    frame = result.to_frame()
    assert list(frame["m"]) == [1, 2, 4]
    assert list(frame["speedup"]) == pytest.approx([1.0, 11.0 / 6.0, 11.0 / 3.0])
    assert list(frame["efficiency"]) == pytest.approx([1.0, 11.0 / 12.0, 11.0 / 12.0])
    assert list(frame["repetitions"]) == [2, 1, 2]


def test_bench_result_needs_baseline():
    with pytest.raises(AnalysisError):
        BenchResult.from_timings({2: [1.0]})


# --------- Friedman ---------
def test_friedman_mirrored_subjects():
    result = friedman_ranks([[1, 2, 3], [3, 2, 1]])
    assert result.auxiliary["avg_ranks"] == [2.0, 2.0, 2.0]
    assert result.statistic == pytest.approx(0.0)


def test_friedman_dominant_treatment():
    result = friedman_ranks([[0.1, 0.5, 0.9], [0.2, 0.3, 0.4], [0.0, 1.0, 2.0]])
    assert result.auxiliary["avg_ranks"][0] == 1.0


def test_friedman_full_ties():
    result = friedman_ranks([[4, 4, 4, 4], [1, 1, 1, 1]])
    assert result.auxiliary["avg_ranks"] == [2.5, 2.5, 2.5, 2.5]
    assert result.statistic == 0.0


def test_friedman_agrees_with_scipy(rng):
    data = rng.normal(size=(10, 4))
    ours = friedman_ranks(data)
    reference = stats.friedmanchisquare(*data.T)
    assert ours.statistic == pytest.approx(reference.statistic)
    assert ours.p_value == pytest.approx(reference.pvalue)


def test_friedman_needs_two_treatments():
    with pytest.raises(AnalysisError):
        friedman_ranks([[1.0], [2.0]])


# --------- Wilcoxon ---------
def test_wilcoxon_hand_example():
    result = wilcoxon_signed_rank([1.0, 0.0, 3.0], [0.0, 2.0, 0.0])
    assert result.auxiliary["w_plus"] == 4.0
    assert result.auxiliary["w_minus"] == 2.0
    assert result.statistic == 2.0
    assert result.auxiliary["positive_ranks"] == 2
    assert result.auxiliary["mean_positive_rank"] == 2.0


def test_wilcoxon_all_positive():
    result = wilcoxon_signed_rank([2, 3, 4, 5, 6], [1, 1, 1, 1, 1])
    assert result.auxiliary["w_plus"] == 15.0
    assert result.auxiliary["w_minus"] == 0.0


def test_wilcoxon_identical_samples():
    with pytest.raises(AnalysisError, match="no nonzero pairs"):
        wilcoxon_signed_rank([1, 2, 3], [1, 2, 3])


# --------- Kruskal-Wallis ---------
def test_kruskal_wallis_separated_groups():
    result = kruskal_wallis([[1, 2], [3, 4]])
    assert result.statistic == pytest.approx(2.4)
    assert result.auxiliary["mean_ranks"] == [1.5, 3.5]


def test_kruskal_wallis_interleaved_groups():
    assert kruskal_wallis([[1, 3], [2, 4]]).statistic == pytest.approx(0.6)


def test_kruskal_wallis_no_shift():
    result = kruskal_wallis([[1, 4, 5, 8], [2, 3, 6, 7]])
    assert result.statistic < 0.1
    assert result.p_value > 0.7


def test_kruskal_wallis_identical_pool():
    with pytest.raises(AnalysisError):
        kruskal_wallis([[2, 2], [2, 2]])


# --------- KS normality ---------
def test_ks_two_point_sample():
    result = ks_normality([-1.0, 1.0])
    assert result.auxiliary["sd"] == pytest.approx(np.sqrt(2.0))
    assert result.statistic == pytest.approx(0.26025, abs=1e-4)
    assert result.p_value is None


def test_ks_on_normal_quantiles():
    n = 50
    sample = stats.norm.ppf((2 * np.arange(1, n + 1) - 1) / (2 * n))
    assert ks_normality(sample).statistic <= 1 / (2 * n) + 0.01


def test_ks_constant_sample():
    with pytest.raises(AnalysisError):
        ks_normality([3.0, 3.0])


# --------- Validation report ---------
@pytest.fixture
def report_scenarios():
    flow = schema.CbrFlow(source=0, destination=2, start=20.0, duration=10.0, rate=4.0)
    line = make_static_scenario(
        [(0.0, 0.0), (300.0, 0.0), (600.0, 0.0)], flows=[flow], duration=40.0, name="line", scenario_class="U1"
    )
    tight = make_static_scenario(
        [(0.0, 0.0), (100.0, 0.0), (200.0, 0.0)], flows=[flow], duration=40.0, name="tight", scenario_class="U2"
    )
    return [line, tight]


def test_single_cell_report_equals_simulation(two_node_scenario):
    report = validation_report({"rfc": RFC}, [two_node_scenario], seeds=(4,))
    expected = run_simulation(two_node_scenario, RFC, seed=4)
    overall = report.sections["overall"]
    assert list(overall.index) == ["rfc"]
    assert overall.at["rfc", "e_total_mj"] == pytest.approx(expected.e_total_mj)
    assert overall.at["rfc", "pdr"] == pytest.approx(expected.pdr)
    assert overall.at["rfc", "e_total_reduction_pct"] == pytest.approx(0.0)
    assert list(report.sections) == ["unclassified", "overall"]


def test_duplicate_configs_give_identical_rows(two_node_scenario):
    report = validation_report({"rfc": RFC, "copy": RFC}, [two_node_scenario], seeds=(1, 2))
    overall = report.sections["overall"]
    assert np.allclose(
        overall.loc["rfc"].to_numpy(dtype=float), overall.loc["copy"].to_numpy(dtype=float), equal_nan=True
    )


def test_report_sections_follow_scenario_classes(report_scenarios):
    report = validation_report(
        {"rfc": RFC, "energy-aware": energy_aware_default()}, report_scenarios, seeds=(0, 1)
    )
    assert list(report.sections) == ["U1", "U2", "overall"]
    assert len(report.cells) == 2 * 2 * 2
    assert report.cells["scenario_class"].value_counts().to_dict() == {"U1": 4, "U2": 4}
    overall = report.sections["overall"]
    assert overall.index.name == "config_id"
    assert overall.at["energy-aware", "e_total_mj"] < overall.at["rfc", "e_total_mj"]
    assert report.best["overall"]["e_total_mj"] == "energy-aware"

    text = report.to_text()
    assert "[U1]" in text and "[overall]" in text and "*" in text
    csv_text = report.to_csv()
    assert csv_text.splitlines()[0].startswith("section,config_id,")


def test_report_runs_on_worker_pool(report_scenarios):
    sequential = validation_report({"rfc": RFC}, report_scenarios, seeds=(3,))
    parallel = validation_report({"rfc": RFC}, report_scenarios, seeds=(3,), workers=2)
    assert sequential.to_csv() == parallel.to_csv()


def test_report_needs_inputs(two_node_scenario):
    with pytest.raises(AnalysisError):
        validation_report({}, [two_node_scenario])


@pytest.mark.slow
def test_energy_aware_beats_rfc_on_every_u2_scenario():
    from scenario import generate_validation_suite

    suite = generate_validation_suite(10, seed=21, flow_params=schema.FlowTemplate(), classes=("U2",))
    assert all(20 <= s.node_count <= 40 and s.scenario_class == "U2" for s in suite)
    report = validation_report({"rfc": RFC, "energy-aware": energy_aware_default()}, suite, workers=4)
    cells = report.cells.pivot(index="scenario_id", columns="config_id", values=["e_total_mj", "nrl"])
    assert len(cells) == 10
    assert (cells[("e_total_mj", "energy-aware")] < cells[("e_total_mj", "rfc")]).all()
    assert (cells[("nrl", "energy-aware")] < cells[("nrl", "rfc")]).all()
