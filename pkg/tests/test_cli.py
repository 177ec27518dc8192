import csv
import json

import pytest

from cransched.cli import COLUMNS, build_parser, main, parse_config
from cransched.engine import ExperimentConfig
from cransched.errors import ConfigError

FAST = ["--drops", "2", "--frames", "60", "--warmup", "5", "--quiet"]


def rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_empty_config_gives_defaults(tmp_path):
    f = tmp_path / "c.json"
    f.write_text("{}")
    args = build_parser().parse_args(["sweep-gamma", "--config", str(f)])
    cfg = parse_config(args, "sweep-gamma")
    p = cfg.params
    assert p.n_cells == 3 and p.cell_radius == 2.0 and p.users_per_cell == 5
    assert p.rrh_positions == ((-2.0, 0.0), (0.0, 2.0), (2.0, 0.0))
    assert p.target_delay == 25 and cfg.sweep_param == "interference_threshold"
    sfr = parse_config(build_parser().parse_args(["compare-sfr"]), "compare-sfr")
    assert sfr.params.target_delay == 40 and sfr.sweep_values == (0.6, 0.9, 1.2)


def test_flag_overrides_file(tmp_path):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"interference_threshold": 0.2, "n_drops": 7}))
    args = build_parser().parse_args(["sweep-alpha", "--config", str(f), "--gamma", "0.6"])
    cfg = parse_config(args, "sweep-alpha")
    assert cfg.params.interference_threshold == 0.6 and cfg.n_drops == 7
    assert cfg.arrival_mode == "edge" and cfg.params.arrival_intensity == 1.5


def test_config_path_form(tmp_path):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"sweep_param": "rho", "sweep_values": [0.5]}))
    assert parse_config(str(f)).sweep_values == (0.5,)


@pytest.mark.parametrize("content, needle", [
    (None, "not found"),
    ("{oops", "malformed"),
    ("[1, 2]", "JSON object"),
    ('{"gamma_typo": 1}', "unknown configuration keys"),
    ('{"interference_threshold": 1.5}', "interference_threshold"),
])
def test_config_errors_exit_2(tmp_path, capsys, content, needle):
    f = tmp_path / "c.json"
    if content is not None:
        f.write_text(content)
    assert main(["sweep-gamma", "--config", str(f), "--quiet"]) == 2
    assert needle in capsys.readouterr().err


def test_gamma_out_of_range_flag(capsys):
    assert main(["sweep-gamma", "--gamma", "1.5", "--quiet"]) == 2
    assert "[0, 1]" in capsys.readouterr().err


def test_generic_sweep_needs_values(capsys):
    assert main(["sweep", "--param", "rho", "--quiet"]) == 2


def test_unwritable_output_exit_3(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["sweep-gamma", "--values", "0.5", "--out", str(blocker / "sub")] + FAST) == 3


def test_gamma_sweep_csv_and_determinism(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        assert main(["sweep-gamma", "--values", "0,0.5,1", "--seed", "3", "--out", str(out)]
                    + FAST) == 0
    data = rows(out1 / "gamma_sweep.csv")
    assert data[0] == COLUMNS
    assert [r[0] for r in data[1:]] == ["0", "0.5", "1"]
    assert all(r[-2:] == ["2", "60"] for r in data[1:])
    assert (out1 / "gamma_sweep.csv").read_bytes() == (out2 / "gamma_sweep.csv").read_bytes()
    for r in data[1:]:
        for cell in r[1:7]:
            # at most nine significant digits
            digits = cell.lstrip("-").replace(".", "").split("e")[0].lstrip("0")
            assert len(digits) <= 9


def test_config_echo_roundtrips(tmp_path):
    assert main(["sweep-alpha", "--values", "0,2", "--out", str(tmp_path)] + FAST) == 0
    echo = json.loads((tmp_path / "alpha_sweep.config.json").read_text())
    cfg = ExperimentConfig.from_flat(echo)
    assert cfg.to_flat() == echo
    assert cfg.arrival_mode == "edge" and cfg.sweep_values == (0.0, 2.0)
    assert parse_config(str(tmp_path / "alpha_sweep.config.json"), "sweep") == cfg


def test_compare_sfr_has_both_schedulers(tmp_path):
    assert main(["compare-sfr", "--values", "0.6,1.2", "--out", str(tmp_path)] + FAST) == 0
    data = rows(tmp_path / "sfr_comparison.csv")
    assert data[0] == ["scheduler_kind"] + COLUMNS
    assert [(r[0], r[1]) for r in data[1:]] == [
        ("proposed", "0.6"), ("proposed", "1.2"), ("sfr", "0.6"), ("sfr", "1.2")]


def test_generic_sweep(tmp_path):
    assert main(["sweep", "--param", "channels", "--values", "3,5", "--out", str(tmp_path)]
                + FAST) == 0
    assert len(rows(tmp_path / "sweep.csv")) == 3


def test_parse_config_without_sweep_raises():
    with pytest.raises(ConfigError):
        parse_config(None, "sweep")
