import pytest

from sceneforge.analysis import (
    ExperimentRow,
    ExperimentTable,
    aggregate_success,
    export_report,
    fit_sim_real,
    load_table_csv,
    scaling_trend_holds,
)
from sceneforge.cli import fixture_path
from sceneforge.episodes import EpisodeRecord
from sceneforge.errors import PreconditionError
from sceneforge.evaluation import Verdict

from .oracles import ols_normal_equations


@pytest.fixture(scope="module")
def table1():
    return load_table_csv(fixture_path("table1.csv"))


def record(status, task="task", setup="default", env="sim"):
    return EpisodeRecord(
        episode_id="e", instruction="i", status=status,
        result=Verdict(status == "success", [], 1.0 if status == "success" else 0.0, ""),
        metadata={"task": task, "setup": setup, "env": env},
    )


def grouping(r):
    return (r.metadata["task"], r.metadata["setup"], r.metadata["env"])


def test_fixture_loads_32_rows(table1):
    assert len(table1.rows) == 32
    assert table1.tasks == ["Select Color", "Recognize Size", "Grasp Targets",
                            "Organize Objects"]
    assert len(table1.setups) == 4
    assert len(table1.matched_pairs()) == 16


def test_rates_validated():
    with pytest.raises(PreconditionError):
        ExperimentRow("t", "s", "sim", 1.2)
    with pytest.raises(PreconditionError):
        ExperimentRow("t", "s", "virtual", 0.5)
    with pytest.raises(PreconditionError):
        ExperimentTable([ExperimentRow("t", "s", "sim", 0.5),
                         ExperimentRow("t", "s", "sim", 0.6)])


def test_aggregate_success_basic_arithmetic():
    records = [record("success")] * 7 + [record("timeout")] * 3
    table, errors = aggregate_success(records, grouping)
    assert table.rows[0].success_rate == pytest.approx(0.7)
    assert table.rows[0].trials == 10
    assert errors == {}


def test_aggregate_excludes_policy_errors():
    records = [record("success")] * 5 + [record("timeout")] * 3 + \
        [record("policy_error")] * 2
    table, errors = aggregate_success(records, grouping)
    assert table.rows[0].trials == 8
    assert table.rows[0].success_rate == pytest.approx(5 / 8)
    assert errors == {"task / default / sim": 2}


def test_aggregate_rejects_empty():
    with pytest.raises(PreconditionError):
        aggregate_success([], grouping)


def test_fit_matches_normal_equations_oracle(table1):
    primary, reverse = fit_sim_real(table1)
    pairs = table1.matched_pairs()
    real = [p[2] for p in pairs]
    sim = [p[3] for p in pairs]
    slope, intercept, r_squared = ols_normal_equations(real, sim)
    assert primary.convention == "sim_on_real"
    assert primary.slope == pytest.approx(slope, rel=1e-12)
    assert primary.intercept == pytest.approx(intercept, rel=1e-12)
    assert primary.r_squared == pytest.approx(r_squared, rel=1e-12)
    r_slope, r_int, r_r2 = ols_normal_equations(sim, real)
    assert reverse.slope == pytest.approx(r_slope, rel=1e-12)
    assert reverse.r_squared == pytest.approx(r_r2, rel=1e-12)


def test_fixture_fit_reproduces_published_statistics(table1):
    primary, reverse = fit_sim_real(table1)
    assert primary.slope == pytest.approx(1.045, abs=0.005)
    assert primary.r_squared == pytest.approx(0.924, abs=0.005)
    assert primary.n_points == 16
    # R squared is convention-invariant; the slope is not.
    assert reverse.r_squared == pytest.approx(primary.r_squared, abs=1e-12)
    assert reverse.slope != pytest.approx(primary.slope, abs=0.01)


def test_perfectly_correlated_table():
    rows = []
    for i, rate in enumerate([0.1, 0.4, 0.6, 0.9]):
        rows.append(ExperimentRow("t", f"s{i}", "sim", rate))
        rows.append(ExperimentRow("t", f"s{i}", "real", rate))
    primary, reverse = fit_sim_real(ExperimentTable(rows))
    assert primary.slope == pytest.approx(1.0, abs=1e-12)
    assert primary.intercept == pytest.approx(0.0, abs=1e-12)
    assert primary.r_squared == pytest.approx(1.0, abs=1e-12)


def test_fit_requires_two_matched_pairs():
    table = ExperimentTable([ExperimentRow("t", "s", "sim", 0.5),
                             ExperimentRow("t", "s", "real", 0.6)])
    with pytest.raises(PreconditionError, match="matched"):
        fit_sim_real(table)


def test_scaling_trend_on_fixture(table1):
    assert scaling_trend_holds(table1, "1500 eps sim")
    assert not scaling_trend_holds(table1, "200 eps real")


def test_export_report_heatmaps_and_stability(table1, tmp_path):
    fits = fit_sim_real(table1)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    summary = export_report(table1, fits, out_a)
    export_report(table1, fits, out_b)
    for name in ("table.csv", "scatter.csv", "heatmap_sim.csv", "heatmap_real.csv",
                 "summary.txt", "summary.json"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
    heatmap = (out_a / "heatmap_sim.csv").read_text().strip().splitlines()
    assert len(heatmap) == 5  # header + 4 tasks
    assert len(heatmap[1].split(",")) == 5  # task + 4 setups
    for task in table1.tasks:
        row = next(ln for ln in heatmap[1:] if ln.startswith(task))
        values = row.split(",")[1:]
        for setup, value in zip(table1.setups, values):
            assert float(value) == table1.rate(task, setup, "sim")
    assert summary["fit"]["slope"] == pytest.approx(1.0446, abs=5e-4)


def test_export_report_without_fit(table1, tmp_path):
    export_report(table1, None, tmp_path)
    text = (tmp_path / "summary.txt").read_text()
    assert "fit [" not in text


def test_csv_roundtrip_with_comments(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("# comment line\ntask,setup,env,success_rate\nA,s1,sim,0.5\nA,s1,real,0.25\n")
    table = load_table_csv(path)
    assert len(table.rows) == 2
    assert table.rate("A", "s1", "real") == 0.25
