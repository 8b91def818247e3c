import json

import numpy as np
import pytest

from lcpms.cli import (
    FIGURE_HEADER,
    RESULTS_HEADER,
    ConfigError,
    emit_figure_data,
    emit_results,
    main,
    parse_config,
)
from lcpms.core_types import IntervalUnion
from lcpms.simulation import CellError, DGPFamily, PointRecord, ResultRow

TINY = {
    "bank": "nw5",
    "n": [40],
    "sigma": [0.1],
    "localizer_bw": [0.3],
    "grid": [0.1, 0.9, 0.1],
    "n_reps": 2,
    "n_test": 8,
    "master_seed": 5,
}


def _cfg_file(tmp_path, overrides=None, name="cfg.json"):
    body = dict(TINY)
    if overrides:
        body.update(overrides)
    p = tmp_path / name
    p.write_text(json.dumps(body))
    return str(p)


# --- parse_config ------------------------------------------------------------

def test_parse_minimal_defaults():
    cfg = parse_config('{"bank": "nw5"}')
    assert cfg.alpha == 0.1
    assert cfg.grid.size == 99
    assert cfg.kernel == "gaussian"
    assert cfg.n == (500,) and cfg.sigma == (0.1,) and cfg.localizer_bw == (0.3,)
    assert cfg.n_reps == 100 and cfg.n_test == 200 and cfg.master_seed == 1
    assert cfg.dgp is DGPFamily.SINE_CUBED  # inferred from the bank
    assert cfg.n_train is None and cfg.out is None


def test_parse_parametric_bank_infers_dgp():
    cfg = parse_config('{"bank": "parametric10"}')
    assert cfg.dgp is DGPFamily.PIECEWISE_SINE


def test_parse_table2_matrix():
    cfg = parse_config(
        '{"bank": "nw5", "n": [200, 500, 1000, 2000], "sigma": [0.1, 0.3],'
        ' "localizer_bw": [0.3]}'
    )
    assert len(cfg.n) * len(cfg.sigma) * len(cfg.localizer_bw) == 8


def test_parse_errors_name_the_field():
    with pytest.raises(ConfigError, match="alpha"):
        parse_config('{"bank": "nw5", "alpha": 1.5}')
    with pytest.raises(ConfigError, match="bank"):
        parse_config('{}')
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config('{"bank": "nw5", "bogus": 1}')
    with pytest.raises(ConfigError, match="custom"):
        parse_config('{"bank": "custom"}')
    with pytest.raises(ConfigError, match="grid"):
        parse_config('{"bank": "nw5", "grid": [0.1, 0.9, 0]}')
    with pytest.raises(ConfigError, match="sigma"):
        parse_config('{"bank": "nw5", "sigma": [0]}')
    with pytest.raises(ConfigError, match="mode"):
        parse_config('{"bank": "nw5", "mode": "plot"}')
    with pytest.raises(ConfigError, match="JSON"):
        parse_config("not json")
    with pytest.raises(ConfigError, match="n_reps"):
        parse_config('{"bank": "nw5", "n_reps": true}')


def test_parse_grid_dict_form():
    cfg = parse_config('{"bank": "nw5", "grid": {"min": 0.2, "max": 0.8, "step": 0.2}}')
    assert np.allclose(cfg.grid.values, [0.2, 0.4, 0.6, 0.8])


# --- emitters ------------------------------------------------------------------

def _row():
    return ResultRow(500, 0.1, 0.3, 0.9245, 1.3265, 0.9052, 1, 20)


def test_emit_results_roundtrip(tmp_path):
    path = tmp_path / "rows.csv"
    emit_results([_row()], str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == RESULTS_HEADER
    fields = lines[1].split(",")
    assert fields[:3] == ["500", "0.1", "0.3"]
    assert fields[3] == "0.9245" and fields[4] == "1.3265" and fields[5] == "0.9052"
    assert fields[6] == "1" and fields[7] == "20"
    # re-parsed values identical at the emitted precision
    assert float(fields[3]) == round(_row().ensemble_len, 4)


def test_emit_results_rejects_empty(tmp_path):
    with pytest.raises(ValueError):
        emit_results([], str(tmp_path / "x.csv"))


def _record(union, x=1.5):
    return PointRecord(
        x=x, true_mean=0.25, union=union, gamma_lo=0.05, gamma_hi=0.35,
        selected_hi=2, modal_selected=2, covered=True, length=union.measure,
    )


def test_emit_figure_single_part(tmp_path):
    path = tmp_path / "fig.csv"
    emit_figure_data([_record(IntervalUnion(((0.1, 0.9),)))], str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == FIGURE_HEADER
    assert lines[1] == "1.5000,0.2500,0.1000:0.9000,2,0.0500,0.3500"


def test_emit_figure_disjoint_parts(tmp_path):
    path = tmp_path / "fig.csv"
    emit_figure_data([_record(IntervalUnion(((0.0, 1.0), (2.0, 3.5))))], str(path))
    body = path.read_text().splitlines()[1]
    assert "0.0000:1.0000|2.0000:3.5000" in body


# --- end-to-end commands ----------------------------------------------------------

def test_table_command_writes_csv(tmp_path):
    out = tmp_path / "t.csv"
    rc = main(["table", "--config", _cfg_file(tmp_path), "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == RESULTS_HEADER
    assert len(lines) == 2


def test_table_byte_identical_reruns(tmp_path):
    cfg = _cfg_file(tmp_path)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["table", "--config", cfg, "--out", str(a)]) == 0
    assert main(["table", "--config", cfg, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_naive_flag_matches_engine(tmp_path):
    cfg = _cfg_file(tmp_path, {"n": [14], "n_test": 4, "n_reps": 1})
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["table", "--config", cfg, "--out", str(a)]) == 0
    assert main(["table", "--config", cfg, "--out", str(b), "--naive"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_figure_command_emits_points(tmp_path):
    out = tmp_path / "f.csv"
    rc = main(["figure", "--config", _cfg_file(tmp_path), "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == FIGURE_HEADER
    assert len(lines) == 1 + TINY["n_test"]
    assert main(["figure", "--config", _cfg_file(tmp_path), "--out", str(out)]) == 0


def test_figure_requires_single_cell(tmp_path):
    cfg = _cfg_file(tmp_path, {"n": [30, 40]})
    rc = main(["figure", "--config", cfg, "--out", str(tmp_path / "f.csv")])
    assert rc == 2


def test_predict_prints_json(tmp_path, capsys):
    rc = main(["predict", "--config", _cfg_file(tmp_path), "--x", "1.2"])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["x"] == 1.2
    assert payload["union"] and payload["trace"]
    assert 0.0 < payload["gamma_lo"] <= payload["gamma_hi"] < 1.0


def test_exit_code_config_error(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"bank": "nw5", "alpha": 7}')
    assert main(["table", "--config", str(p), "--out", str(tmp_path / "o.csv")]) == 2


def test_exit_code_mode_mismatch(tmp_path):
    cfg = _cfg_file(tmp_path, {"mode": "table"})
    assert main(["figure", "--config", cfg, "--out", str(tmp_path / "f.csv")]) == 2


def test_exit_code_cell_failure(tmp_path, monkeypatch):
    def boom(cfg):
        raise CellError("cell (n=40, sigma=0.1, localizer_bw=0.3) failed: test")

    monkeypatch.setattr("lcpms.cli.run_table", boom)
    assert main(["table", "--config", _cfg_file(tmp_path), "--out", str(tmp_path / "o.csv")]) == 3


def test_exit_code_io_error(tmp_path):
    out = str(tmp_path / "missing_dir" / "o.csv")
    assert main(["table", "--config", _cfg_file(tmp_path), "--out", out]) == 4


def test_out_path_from_config(tmp_path):
    out = tmp_path / "from_cfg.csv"
    cfg = _cfg_file(tmp_path, {"out": str(out)})
    assert main(["table", "--config", cfg]) == 0
    assert out.exists()


def test_missing_out_is_config_error(tmp_path):
    assert main(["table", "--config", _cfg_file(tmp_path)]) == 2


def test_argparse_usage_error_returns_its_code():
    assert main([]) != 0
    assert main(["table"]) != 0  # --config required
