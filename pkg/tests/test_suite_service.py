import os

import pytest

from cli_runner import RunConfig
from services import suite_service
from services.suite_service import ROW_COLUMNS, SuiteResult, run_suite
from services.utils import read_report_body


@pytest.fixture
def config(tmp_path):
    return RunConfig(grid=512, seed=11, out_dir=str(tmp_path / "reports"), peetre_grid=4096, trials=3)


def test_check_and_verdict_rows():
    result = SuiteResult("demo", ROW_COLUMNS)
    assert result.check("ftc", "I", 1, 0, 0.0, 1e-9, 1e-9, 1e-7)
    assert not result.check("ftc", "J", 1, 1, 0.0, 1e-3, 1e-3, 1e-7)
    assert not result.verdict("locality", "G", "nonlocal", "local")
    assert [r[-1] for r in result.rows] == ["pass", "fail", "fail"]
    assert result.failures == ["ftc:J:1:1", "locality:G:"]
    assert not result.passed


def test_unknown_suite(config):
    with pytest.raises(ValueError, match="Unknown suite"):
        run_suite("bogus", config)


def test_zoo_suite_writes_csv(config):
    payload = run_suite("zoo", config)
    assert payload["passed"]
    assert payload["row_count"] == 10
    body = read_report_body(payload["csv_filename"])
    assert body[0] == suite_service.ZOO_COLUMNS
    assert [r[0] for r in body[1:-1]] == ["F2", "F3", "G", "H", "I", "J", "K", "L_quartic", "unbounded_order", "F_nl"]
    assert body[-1] == ["# summary 10 functionals"]
    with open(payload["csv_filename"], encoding="utf-8") as fh:
        head = [next(fh).strip() for _ in range(4)]
    assert head[0] == "# command=zoo"
    assert head[2:] == ["# grid=512", "# seed=11"]


def test_reports_are_reproducible(config, tmp_path):
    first = read_report_body(run_suite("counterexample", config)["csv_filename"])
    config.out_dir = str(tmp_path / "again")
    second = read_report_body(run_suite("counterexample", config)["csv_filename"])
    assert first == second


def test_counterexample_suite_passes(config):
    payload = run_suite("counterexample", config)
    assert payload["passed"], payload["failures"]
    assert payload["summary"].startswith("F_nl(1) = ")
    assert "additivity at 1 fail" in payload["summary"]


def test_counterexample_exponent_three(config):
    config.counterexample_n = 3
    assert run_suite("counterexample", config)["passed"]


def test_dry_run_writes_nothing(config):
    config.dry_run = True
    config.pdf = True
    payload = run_suite("zoo", config)
    assert payload["csv_filename"] is None
    assert payload["pdf_filename"] is None
    assert not os.path.exists(config.out_dir)


def test_pdf_rendering(config):
    config.pdf = True
    payload = run_suite("zoo", config)
    with open(payload["pdf_filename"], "rb") as fh:
        assert fh.read(4) == b"%PDF"


def test_tight_tolerance_fails_identities(config):
    config.grid = 256
    config.tolerances["ftc"] = 1e-30
    payload = run_suite("identities", config, write_csv_file=False)
    assert not payload["passed"]
    assert any(f.startswith("ftc:") for f in payload["failures"])
    assert payload["csv_filename"] is None


# ─── End-to-end suites ────────────────────────────────────────────────────────

def test_locality_suite_classifies_the_zoo(config):
    config.grid = 2048
    payload = run_suite("locality", config)
    assert payload["passed"], payload["failures"]
    assert payload["summary"].startswith("10 functionals, 0 misclassified")
    body = read_report_body(payload["csv_filename"])
    skipped = [r for r in body if r[0] == "agreement" and r[1] == "F_nl"]
    assert len(skipped) == 3
    assert all(r[-1] == "skipped" and r[ROW_COLUMNS.index("observed")] for r in skipped)


def test_derivatives_suite_passes(config):
    payload = run_suite("derivatives", config, write_csv_file=False)
    assert payload["passed"], payload["failures"]


def test_peetre_suite_passes(config):
    config.grid = 2048
    config.peetre_grid = 16384
    payload = run_suite("peetre", config)
    assert payload["passed"], payload["failures"]
    assert os.path.exists(os.path.join(config.out_dir, "peetre_ratios.csv"))
    assert os.path.exists(os.path.join(config.out_dir, "jet_witness_phi1.csv"))


def test_skip_rows_do_not_fail():
    result = SuiteResult("demo", ROW_COLUMNS)
    result.skip("agreement", "F_nl", "not applicable", trial=0)
    assert result.rows[0][-1] == "skipped"
    assert result.rows[0][ROW_COLUMNS.index("observed")] == "not applicable"
    assert result.passed
