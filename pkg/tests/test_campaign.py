import json
import sys
from pathlib import Path

import pytest

from critlab.campaign import (
    CampaignCell,
    CampaignConfig,
    CampaignReport,
    ConfigError,
    DEFAULT_CONFIG,
    cell_text,
    format_pct,
    load_config,
    render_report,
    report_from_raw,
    run_campaign,
    write_outputs,
)

EXTERNAL = f"{sys.executable} {Path(__file__).parent / 'external_pilot.py'}"


def small_config(**overrides):
    raw = json.loads(json.dumps(DEFAULT_CONFIG))
    raw["scenario_types"] = ["merge_yield"]
    raw["autopilots"] = [
        {"name": "reference", "variant": "reference"},
        {
            "name": "irrational",
            "variant": "irrational",
            "fail_region": [[29.0, 35.0], [16.0, 24.0]],
        },
    ]
    raw["initial_states"] = [[20.0, 5.0]]
    raw["grid"] = {**raw["grid"], "n_a": 8, "n_f": 8}
    raw["partition"] = {"speeds": [10.0, 5.0], "x_f_cap": None, "steps": 50}
    raw.update(overrides)
    return CampaignConfig(raw=raw)


class TestConfig:
    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError):
            small_config(typo_key=1)

    def test_unknown_nested_key(self):
        with pytest.raises(ConfigError):
            small_config(grid={"n_a": 8, "n_f": 8, "oops": 3})

    def test_empty_lists_rejected(self):
        with pytest.raises(ConfigError):
            small_config(scenario_types=[])
        with pytest.raises(ConfigError):
            small_config(autopilots=[])

    def test_unwinnable_initial_state_rejected(self):
        # braking_distance(14) = 24.5 > 10: every case would be unwinnable
        with pytest.raises(ConfigError):
            small_config(initial_states=[[10.0, 14.0]])

    def test_unknown_scenario_type(self):
        with pytest.raises(ConfigError):
            small_config(scenario_types=["roundabout"])

    def test_bad_json_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{nope")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_default_config_loads(self):
        config = load_config(None)
        assert len(config.raw["autopilots"]) == 8


class TestCellText:
    def test_reference_result_matrix_fixture(self):
        # hand-written cell reproducing a published-style result entry
        cell = CampaignCell(
            autopilot="modular_a",
            scenario_type="merge_yield",
            counts={"TF": 8, "IO": 127, "pass": 865},
            n_cells=1000,
            m_states=4,
        )
        assert cell_text(cell) == "TF (0.80%) IO (12.7%)"

    def test_high_frequency_fixture(self):
        cell = CampaignCell(
            autopilot="x", scenario_type="intersection_yield",
            counts={"TF": 286}, n_cells=400, m_states=2,
        )
        assert cell_text(cell) == "TF (71.5%)"

    def test_overall_failure_fixture(self):
        cell = CampaignCell(
            autopilot="x", scenario_type="lane_change",
            counts={"TF": 100}, n_cells=400, of_counts={"OF-PD": 2}, m_states=4,
        )
        assert cell_text(cell) == "OF-PD (2/4)"

    def test_clean_cell(self):
        cell = CampaignCell(
            autopilot="x", scenario_type="merge_yield",
            counts={"pass": 400}, n_cells=400, m_states=1,
        )
        assert cell_text(cell) == "pass"

    def test_protocol_error_cell(self):
        cell = CampaignCell(autopilot="x", scenario_type="merge_yield", protocol_error=True)
        assert cell_text(cell) == "protocol-error"

    def test_pct_formatting(self):
        assert format_pct(0.008) == "0.80"
        assert format_pct(0.127) == "12.7"
        assert format_pct(0.0099) == "0.99"
        assert format_pct(0.01) == "1.0"


class TestRendering:
    def _empty_report(self):
        return CampaignReport(
            scenario_types=[], autopilot_names=[], cells={},
            determinacy=[], coverage=[], meta={"seed": 0, "dt": 0.1},
        )

    def test_empty_report_headers_only(self):
        text = render_report(self._empty_report(), "csv")
        assert text.splitlines() == ["scenario_type"]

    def test_one_cell_report(self):
        cell = CampaignCell(
            autopilot="reference", scenario_type="merge_yield",
            counts={"pass": 4}, n_cells=4, m_states=1,
        )
        report = CampaignReport(
            scenario_types=["merge_yield"], autopilot_names=["reference"],
            cells={("merge_yield", "reference"): cell},
            determinacy=[], coverage=[], meta={"seed": 0, "dt": 0.1},
        )
        lines = render_report(report, "csv").splitlines()
        assert lines == ["scenario_type,reference", "merge_yield,pass"]
        md = render_report(report, "markdown")
        assert "| merge_yield | pass |" in md

    def test_unknown_format_rejected(self):
        with pytest.raises(ValueError):
            render_report(self._empty_report(), "yaml")


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("campaign")
    config = small_config()
    report = run_campaign(config, out_dir=out)
    return config, report, out


class TestRunCampaign:
    def test_matrix_shape(self, small_run):
        _, report, _ = small_run
        assert report.scenario_types == ["merge_yield"]
        assert report.autopilot_names == ["reference", "irrational"]
        assert set(report.cells) == {
            ("merge_yield", "reference"), ("merge_yield", "irrational"),
        }

    def test_reference_cell_clean(self, small_run):
        _, report, _ = small_run
        cell = report.cells[("merge_yield", "reference")]
        assert cell.counts.get("IS", 0) == 0
        assert cell.counts.get("IO", 0) == 0
        assert not cell.of_counts

    def test_irrational_cell_dirty(self, small_run):
        _, report, _ = small_run
        cell = report.cells[("merge_yield", "irrational")]
        assert cell.counts.get("IS", 0) > 0

    def test_raw_files_persisted(self, small_run):
        _, _, out = small_run
        raw = sorted((out / "raw").glob("*/*/*.json"))
        assert len(raw) == 2  # one grid per (autopilot, scenario, state)
        data = json.loads(raw[0].read_text())
        assert set(data["of"]) == {"kind"}
        assert len(data["grid"]) == 64

    def test_report_regenerated_from_raw(self, small_run):
        _, report, out = small_run
        rebuilt = report_from_raw(out / "raw")
        for key, cell in report.cells.items():
            other = rebuilt.cells[key]
            assert cell_text(other) == cell_text(cell)

    def test_zone_bookkeeping(self, small_run):
        _, report, _ = small_run
        cell = report.cells[("merge_yield", "reference")]
        assert set(cell.zone_counts) >= {"safe_progress", "cautious_only", "irrelevant"}
        assert sum(cell.zone_counts.values()) == cell.n_cells
        assert cell.zone_counts.get("non_nominal", 0) == 0

    def test_determinacy_and_coverage_sections(self, small_run):
        _, report, _ = small_run
        assert any(r["maneuver"] == "braking" for r in report.determinacy)
        assert any(r["maneuver"] == "progress" for r in report.determinacy)
        ref_rows = [r for r in report.determinacy if r["autopilot"] == "reference"]
        assert all(r.get("determinate") for r in ref_rows if r.get("status") == "ok")
        assert report.coverage and 0.0 < report.coverage[0]["ratio"] <= 1.0

    def test_byte_determinism(self, small_run, tmp_path):
        config, report, _ = small_run
        report2 = run_campaign(small_config(), out_dir=tmp_path)
        for fmt in ("markdown", "csv", "json"):
            assert render_report(report, fmt) == render_report(report2, fmt)

    def test_write_outputs(self, small_run, tmp_path):
        _, report, _ = small_run
        paths = write_outputs(report, tmp_path / "out")
        assert paths["csv"].read_text().startswith("scenario_type,")
        assert paths["markdown"].read_text().startswith("# Campaign report")
        json.loads(paths["json"].read_text())


class TestGoldenFile:
    def test_reference_campaign_matches_frozen_summary(self):
        """First verified run froze this file; later changes must reproduce it."""
        raw = json.loads(json.dumps(DEFAULT_CONFIG))
        raw["autopilots"] = [{"name": "reference", "variant": "reference"}]
        raw["initial_states"] = [[20.0, 5.0], [30.0, 10.0]]
        raw["grid"] = {**raw["grid"], "n_a": 10, "n_f": 10}
        raw["partition"] = {"speeds": [10.0, 5.0], "x_f_cap": None, "steps": 50}
        report = run_campaign(CampaignConfig(raw=raw))
        golden = Path(__file__).parent / "data" / "golden_reference_summary.csv"
        assert render_report(report, "csv") == golden.read_text()


class TestExternalInCampaign:
    def test_protocol_error_marks_cell_and_continues(self, tmp_path):
        config = small_config(
            autopilots=[
                {"name": "reference", "variant": "reference"},
                {"name": "broken", "command": EXTERNAL + " garbage"},
            ]
        )
        report = run_campaign(config, out_dir=tmp_path)
        assert report.cells[("merge_yield", "broken")].protocol_error
        assert cell_text(report.cells[("merge_yield", "broken")]) == "protocol-error"
        assert not report.cells[("merge_yield", "reference")].protocol_error

    def test_external_pilot_runs_a_campaign_cell(self, tmp_path):
        config = small_config(
            autopilots=[{"name": "ext_cautious", "command": EXTERNAL + " cautious"}],
            grid={"n_a": 4, "n_f": 4},
        )
        report = run_campaign(config, out_dir=tmp_path)
        cell = report.cells[("merge_yield", "ext_cautious")]
        assert not cell.protocol_error
        assert cell.n_cells == 16


class TestWorkers:
    def test_parallel_matches_serial(self):
        serial = run_campaign(small_config(workers=1))
        parallel = run_campaign(small_config(workers=2))
        assert render_report(serial, "csv") == render_report(parallel, "csv")
        a, b = serial.to_dict(), parallel.to_dict()
        a.pop("meta"), b.pop("meta")  # meta echoes the differing worker count
        assert a == b
