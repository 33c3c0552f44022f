"""Tests for the figure-rendering package against shipped static fixtures."""

import csv
import hashlib
import json
import logging
from pathlib import Path

import pytest

from elastic_mkv_plots import FIGURE_KINDS, SchemaError, load_run, render_figures
from elastic_mkv_plots.cli import main as cli_main

FIXTURES = Path(__file__).parent / "fixtures"


def _dir_digest(directory: Path) -> dict:
    return {
        p.name: hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(directory.iterdir())
    }


def _read_csv(path: Path) -> list[list[str]]:
    with open(path, newline="") as f:
        return list(csv.reader(f))


# ---------------------------------------------------------------- load_run


def test_load_run_full_fixture():
    run = load_run(FIXTURES / "full_run" / "run.json")
    assert set(run.losses) == {"kappa_1", "kappa_10"}
    assert run.losses["kappa_1"]["t"][0] == 0.0
    assert len(run.distances) == 1
    assert run.distances[0]["param_a"] == "kappa_1"
    assert len(run.jumps) == 2
    assert set(run.densities) == {"pde", "particle"}


def test_load_run_missing_manifest(tmp_path):
    with pytest.raises(SchemaError, match="not found"):
        load_run(tmp_path / "run.json")


def test_load_run_invalid_json(tmp_path):
    (tmp_path / "run.json").write_text("{not json")
    with pytest.raises(SchemaError, match="valid JSON"):
        load_run(tmp_path / "run.json")


def test_load_run_missing_inventory(tmp_path):
    (tmp_path / "run.json").write_text('{"valid": true}')
    with pytest.raises(SchemaError, match="inventory"):
        load_run(tmp_path / "run.json")


def test_load_run_inventoried_file_missing(tmp_path):
    (tmp_path / "run.json").write_text(
        '{"inventory": [{"file": "loss_a.csv"}]}'
    )
    with pytest.raises(SchemaError, match="missing on disk"):
        load_run(tmp_path / "run.json")


def test_load_run_wrong_header():
    with pytest.raises(SchemaError, match="expected header"):
        load_run(FIXTURES / "corrupted" / "run.json")


def test_load_run_non_numeric_field(tmp_path):
    (tmp_path / "loss_a.csv").write_text("t,lambda\n0,zero\n")
    (tmp_path / "run.json").write_text('{"inventory": [{"file": "loss_a.csv"}]}')
    with pytest.raises(SchemaError, match="not numeric"):
        load_run(tmp_path / "run.json")


# ---------------------------------------------------------- render_figures


def test_full_run_renders_all_four_kinds(tmp_path):
    rendered, notices = render_figures(FIXTURES / "full_run" / "run.json", tmp_path)
    assert [spec.kind for spec in rendered] == list(FIGURE_KINDS)
    assert notices == []
    for spec in rendered:
        assert spec.output.exists() and spec.output.stat().st_size > 0
        assert spec.sidecar.exists()


def test_sidecar_series_match_input_csvs(tmp_path):
    render_figures(FIXTURES / "full_run" / "run.json", tmp_path)

    loss = json.loads((tmp_path / "loss_family.json").read_text())
    for tag in ("kappa_1", "kappa_10"):
        rows = _read_csv(FIXTURES / "full_run" / f"loss_{tag}.csv")[1:]
        assert loss["series"][tag]["t"] == [float(r[0]) for r in rows]
        assert loss["series"][tag]["lambda"] == [float(r[1]) for r in rows]

    dist = json.loads((tmp_path / "distance_decay.json").read_text())
    rows = _read_csv(FIXTURES / "full_run" / "distances.csv")[1:]
    assert dist["series"]["pairs"] == [f"{r[0]}|{r[1]}" for r in rows]
    assert dist["series"]["levy"] == [float(r[2]) for r in rows]
    assert dist["series"]["sup"] == [float(r[3]) for r in rows]

    jump = json.loads((tmp_path / "jump_zoom.json").read_text())
    assert jump["series"]["jump_time"] == 0.75
    assert jump["series"]["jump_size"] == 0.26  # largest row of jumps.csv
    # the zoom window keeps only nodes near the jump
    assert jump["series"]["kappa_1"]["t"] == [0.75]

    dens = json.loads((tmp_path / "density_overlay.json").read_text())
    for source in ("pde", "particle"):
        rows = _read_csv(FIXTURES / "full_run" / f"density_{source}.csv")[1:]
        assert dens["series"][source]["x"] == [float(r[1]) for r in rows]
        assert dens["series"][source]["v"] == [float(r[2]) for r in rows]


def test_rerender_sidecars_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    render_figures(FIXTURES / "full_run" / "run.json", a)
    render_figures(FIXTURES / "full_run" / "run.json", b)
    for kind in FIGURE_KINDS:
        assert (a / f"{kind}.json").read_bytes() == (b / f"{kind}.json").read_bytes()


def test_loss_only_manifest_renders_loss_family_and_jump_zoom(tmp_path):
    rendered, notices = render_figures(FIXTURES / "loss_only" / "run.json", tmp_path)
    assert [spec.kind for spec in rendered] == ["loss_family", "jump_zoom"]
    assert notices == []
    # without jumps.csv the zoom centres on the largest loss increment
    jump = json.loads((tmp_path / "jump_zoom.json").read_text())
    assert jump["series"]["jump_time"] == 0.75
    assert jump["series"]["jump_size"] == pytest.approx(0.26)


def test_empty_jumps_table_skips_jump_zoom_with_notice(tmp_path, caplog):
    with caplog.at_level(logging.INFO):
        rendered, notices = render_figures(
            FIXTURES / "empty_jumps" / "run.json", tmp_path
        )
    assert [spec.kind for spec in rendered] == ["loss_family"]
    assert notices == ["jump_zoom skipped: jumps.csv has no rows"]
    assert not (tmp_path / "jump_zoom.json").exists()


def test_kinds_filter(tmp_path):
    rendered, _ = render_figures(
        FIXTURES / "full_run" / "run.json", tmp_path, kinds=["distance_decay"]
    )
    assert [spec.kind for spec in rendered] == ["distance_decay"]
    assert not (tmp_path / "loss_family.json").exists()


def test_svg_format(tmp_path):
    rendered, _ = render_figures(
        FIXTURES / "full_run" / "run.json", tmp_path, fmt="svg", kinds=["loss_family"]
    )
    assert rendered[0].output.suffix == ".svg"
    assert rendered[0].output.read_bytes().startswith(b"<?xml")


def test_bad_format_rejected(tmp_path):
    with pytest.raises(ValueError, match="format"):
        render_figures(FIXTURES / "full_run" / "run.json", tmp_path, fmt="pdf")


def test_inputs_not_mutated(tmp_path):
    before = _dir_digest(FIXTURES / "full_run")
    render_figures(FIXTURES / "full_run" / "run.json", tmp_path)
    assert _dir_digest(FIXTURES / "full_run") == before


# ------------------------------------------------------------------- CLI


def test_cli_renders_and_exits_zero(tmp_path):
    rc = cli_main(
        ["--manifest", str(FIXTURES / "full_run" / "run.json"), "--out", str(tmp_path)]
    )
    assert rc == 0
    for kind in FIGURE_KINDS:
        assert (tmp_path / f"{kind}.png").exists()


def test_cli_corrupted_schema_exits_nonzero(tmp_path):
    rc = cli_main(
        ["--manifest", str(FIXTURES / "corrupted" / "run.json"), "--out", str(tmp_path)]
    )
    assert rc != 0
    assert not any(tmp_path.iterdir())


def test_cli_empty_jumps_logs_notice(tmp_path, caplog):
    with caplog.at_level(logging.INFO, logger="elastic_mkv_plots"):
        rc = cli_main(
            [
                "--manifest",
                str(FIXTURES / "empty_jumps" / "run.json"),
                "--out",
                str(tmp_path),
            ]
        )
    assert rc == 0
    assert any("jump_zoom skipped" in rec.message for rec in caplog.records)
