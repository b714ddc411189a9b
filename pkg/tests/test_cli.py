import csv
import json
from pathlib import Path

import numpy as np
import pytest

from capskin.cli import main
from capskin.config import default_config, load_config, parse_config
from capskin.daq.frame import iter_frame_log
from capskin.errors import ConfigError

REFERENCE = Path(__file__).resolve().parents[1] / "configs" / "reference.toml"


def _toml(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_reference_config_loads():
    cfg = load_config(REFERENCE)
    assert cfg.topology.total_taxel_count == 56
    assert cfg.channel.sample_rate == 200.0
    assert len(cfg.contacts) == 1
    assert "link_3" in cfg.poses


def test_default_config_matches_reference_topology():
    assert default_config().topology.address_table() == load_config(REFERENCE).topology.address_table()


@pytest.mark.parametrize("text,where", [
    ("bogus = 1\n", "<root>"),
    ("[channel]\nsample_rte = 200\n", "channel"),
    ("[channel]\nsample_rate = 50\n", "channel"),
    ("[channel]\nshielding = 'foil'\n", "channel.shielding"),
    ("[taxel]\nthickness = 'thin'\n", "taxel.thickness"),
    ("[coefficients]\naxial = [1.0]\n", "coefficients.axial"),
    ("[units]\nlength = 'in'\n", "units.length"),
    ("[[contacts]]\nlink_id = 'nope'\ncenter = [0, 0]\nradius = 1\nforce = 1\nduration = 1\n",
     "contacts[0].link_id"),
])
def test_config_errors_name_the_field(tmp_path, text, where):
    with pytest.raises(ConfigError) as info:
        load_config(_toml(tmp_path, text))
    assert where in str(info.value)


def test_config_syntax_error_reports_line(tmp_path):
    with pytest.raises(ConfigError, match="line 2"):
        load_config(_toml(tmp_path, "seed = 1\nseed2 = \n"))


def test_topology_collision_in_config():
    doc = {"topology": {"sections": [
        {"link_id": "a", "rows": 2, "cols": 2},
        {"link_id": "b", "rows": 2, "cols": 2, "first_index": 2},
    ]}}
    with pytest.raises(ConfigError, match="taxel index 2"):
        parse_config(doc)


def test_dynamics_switch_makes_channel_ideal():
    cfg = parse_config({"channel": {"dynamics": False}})
    assert cfg.channel.noise_sigma == 0 and cfg.channel.loop_gap_fraction == 0
    assert not cfg.channel.quantize and cfg.channel.gain_decay_per_1000 == 0


def test_cli_topology(tmp_path):
    assert main(["topology", "--config", str(REFERENCE), "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader((tmp_path / "addresses.csv").open()))
    assert len(rows) == 56
    assert len({(r["mux"], r["cdc"], r["channel"]) for r in rows}) == 56
    row = next(r for r in rows if r["index"] == "30")
    assert (row["mux"], row["cdc"], row["channel"]) == ("1", "0", "2")
    topo = json.loads((tmp_path / "topology.json").read_text())
    assert topo["total_taxel_count"] == 56


def test_cli_topology_collision_exit_code(tmp_path, capsys):
    p = _toml(tmp_path, """
[[topology.sections]]
link_id = "a"
rows = 2
cols = 2
[[topology.sections]]
link_id = "b"
rows = 2
cols = 2
first_index = 1
""")
    assert main(["topology", "--config", str(p), "--out", str(tmp_path)]) == 2
    assert "taxel index 1" in capsys.readouterr().err


def test_cli_simulate_count_and_determinism(tmp_path):
    args = ["simulate", "--config", str(REFERENCE), "--duration", "2", "--rate", "100", "--seed", "3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "frames.bin").read_bytes()
    assert a == (tmp_path / "b" / "frames.bin").read_bytes()
    assert len(list(iter_frame_log(a))) == 200
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["frame_count"] == 200 and len(summary["delta_c_pF"]) == 56
    pressed = {t["index"]: t["max"] for t in summary["delta_c_pF"]}
    assert max(pressed, key=pressed.get) in range(19)


def test_cli_simulate_seed_changes_output(tmp_path):
    for seed in ("1", "2"):
        main(["simulate", "--duration", "0.1", "--seed", seed, "--out", str(tmp_path / seed)])
    assert (tmp_path / "1" / "frames.bin").read_bytes() != (tmp_path / "2" / "frames.bin").read_bytes()


def test_cli_simulate_without_contacts_is_noise_only(tmp_path):
    p = _toml(tmp_path, "seed = 4\n")
    assert main(["simulate", "--config", str(p), "--duration", "1", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    sigma = 0.032 * 5 / 6
    extremes = [max(abs(t["min"]), abs(t["max"])) for t in summary["delta_c_pF"]]
    assert max(extremes) <= 6 * sigma


def test_cli_bad_config_exit_code(tmp_path, capsys):
    p = _toml(tmp_path, "[channel]\nsample_rate = 1000\n")
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path)]) == 2
    assert "channel" in capsys.readouterr().err


def test_cli_missing_config_exit_code(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "none.toml")]) == 2


def test_cli_calibrate_round_trip(tmp_path):
    csv_path, out = tmp_path / "cycles.csv", tmp_path / "curve.json"
    assert main(["cycles", "--out", str(csv_path), "--cycles", "10"]) == 0
    assert main(["calibrate", str(csv_path), "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    c, f = d["knots"]["capacitance_pF"], d["knots"]["force_N"]
    assert np.interp(0.0, c, f) == pytest.approx(0.0, abs=1.1)
    assert np.interp(5.0, c, f) == pytest.approx(55.0, abs=1.1)
    assert set(d["residual"]) == {"rms_N", "max_N"}


def test_cli_calibrate_bad_cell(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("t,c,f\n0,0,0\n0.005,x,1\n")
    assert main(["calibrate", str(p), "--out", str(tmp_path / "o.json")]) == 3
    assert "line 3" in capsys.readouterr().err


def test_cli_calibrate_failure_is_data_error(tmp_path):
    p = tmp_path / "flat.csv"
    rows = ["t,c,f"] + [f"{k * 0.005},0.0,{10 - abs(k - 10)}" for k in range(21)]
    p.write_text("\n".join(rows) + "\n")
    assert main(["calibrate", str(p), "--out", str(tmp_path / "o.json")]) == 3


def test_cli_characterize(tmp_path):
    args = ["characterize", "--noise-samples", "20000", "--long-csv"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "report.json").read_text()
    assert a == (tmp_path / "b" / "report.json").read_text()
    report = json.loads(a)
    assert report["relative_error_mean"] <= 0.01
    assert 0 <= report["noise_reduction"] <= 1
    assert (tmp_path / "a" / "report.csv").exists()
    assert (tmp_path / "a" / "series_long.csv").exists()


def test_cli_characterize_ideal(tmp_path):
    p = _toml(tmp_path, "[channel]\ndynamics = false\n")
    assert main(["characterize", "--config", str(p), "--noise-samples", "1000", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["relative_error_mean"] < 0.001


def test_cli_stream_bad_bind():
    assert main(["stream", "--bind", "localhost", "--duration", "0.1"]) == 2


def test_cli_stream_runs(capsys):
    assert main(["stream", "--bind", "127.0.0.1:0", "--rate", "100", "--duration", "0.5"]) == 0
    out = capsys.readouterr().out
    assert "streaming on 127.0.0.1" in out and "published" in out
