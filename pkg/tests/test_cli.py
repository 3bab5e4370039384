import csv
import json
import subprocess
import sys

import pytest

from dcsched.cli import main
from dcsched.config import PRESET_DIR, load_spec, parse_spec, preset_names
from dcsched.errors import ConfigError
from dcsched.experiment import OUTPUT_ENV, RESULT_COLUMNS, SUMMARY_COLUMNS

SMALL = """
[cluster]
servers = 12
racks = 3

[pool]
size = 30
seed = 2

[experiment]
loads = [0.5, 0.8]
replications = 2
horizon = 1500
"""


def write(tmp_path, text, name="spec.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_run_writes_csvs_and_figures(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", write(tmp_path, SMALL), "-o", str(out)]) == 0
    res = rows(out / "results.csv")
    assert tuple(res[0]) == RESULT_COLUMNS
    assert len(res) == 1 + 6 * 2 * 2
    summ = rows(out / "summary.csv")
    assert tuple(summ[0]) == SUMMARY_COLUMNS
    assert len(summ) == 1 + 6 * 2
    for name in ("fig_mean_completion_time.csv", "fig_mean_completion_time.svg",
                 "fig_mean_completion_time_high.csv", "fig_mean_completion_time_high.svg"):
        assert (out / name).stat().st_size > 0
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["baseline_definitions_local_to_this_tool"] == ["fcfs", "jsq_priority"]
    assert "wrote" in capsys.readouterr().out


def test_golden_header():
    assert RESULT_COLUMNS == ("policy", "rho", "seed", "mean_completion_time", "ci_half_width",
                              "frac_local", "frac_rack", "frac_remote", "route_cost_per_task",
                              "sched_cost_per_decision", "stability_ratio")


def test_summary_is_mean_of_replications(tmp_path):
    out = tmp_path / "out"
    main(["run", write(tmp_path, SMALL), "-o", str(out), "--no-plots"])
    with open(out / "results.csv") as fh:
        res = list(csv.DictReader(fh))
    with open(out / "summary.csv") as fh:
        summ = list(csv.DictReader(fh))
    for s in summ:
        reps = [float(r["mean_completion_time"]) for r in res
                if r["policy"] == s["policy"] and r["rho"] == s["rho"]]
        assert len(reps) == int(s["replications"]) == 2
        assert float(s["mean_completion_time"]) == sum(reps) / len(reps)


def test_end_to_end_byte_identical(tmp_path):
    spec = write(tmp_path, SMALL)
    a, b = tmp_path / "a", tmp_path / "b"
    main(["run", spec, "-o", str(a)])
    main(["run", spec, "-o", str(b), "-j", "2"])
    for f in sorted(p.name for p in a.iterdir()):
        assert (a / f).read_bytes() == (b / f).read_bytes(), f


def test_empty_load_grid_gives_header_only(tmp_path):
    out = tmp_path / "out"
    spec = write(tmp_path, SMALL.replace("loads = [0.5, 0.8]", "loads = []"))
    assert main(["run", spec, "-o", str(out)]) == 0
    assert rows(out / "results.csv") == [list(RESULT_COLUMNS)]
    assert rows(out / "summary.csv") == [list(SUMMARY_COLUMNS)]


def test_desk_grid_row_count(tmp_path):
    # the bundled desk preset with a short horizon
    text = (PRESET_DIR / "desk.toml").read_text().replace("horizon = 50000", "horizon = 300")
    assert "horizon = 300" in text
    out = tmp_path / "out"
    assert main(["run", write(tmp_path, text), "-o", str(out), "--no-plots"]) == 0
    assert len(rows(out / "results.csv")) == 1 + 6 * 4 * 5


def test_full_scale_pod_cost_column(tmp_path):
    text = """
[cluster]
servers = 500
racks = 10
[pool]
size = 200
seed = 3
margin = 160.0
[policies]
names = ["bp_pod", "bp"]
[experiment]
loads = [0.5]
replications = 1
horizon = 3000
"""
    out = tmp_path / "out"
    assert main(["run", write(tmp_path, text), "-o", str(out), "--no-plots"]) == 0
    with open(out / "results.csv") as fh:
        got = {r["policy"]: float(r["route_cost_per_task"]) for r in csv.DictReader(fh)}
    assert got == {"bp_pod": 11.0, "bp": 500.0}
    assert got["bp_pod"] / 500 == pytest.approx(0.022)


def test_output_env_override(tmp_path, monkeypatch):
    target = tmp_path / "from_env"
    monkeypatch.setenv(OUTPUT_ENV, str(target))
    spec = write(tmp_path, SMALL.replace("replications = 2", "replications = 1")
                 .replace("loads = [0.5, 0.8]", "loads = [0.5]"))
    assert main(["run", spec, "--no-plots"]) == 0
    assert (target / "results.csv").exists()
    explicit = tmp_path / "explicit"
    assert main(["run", spec, "--no-plots", "-o", str(explicit)]) == 0
    assert (explicit / "results.csv").exists()


@pytest.mark.parametrize("text,code", [
    ("[cluster]\nservers = 12\nracks = 3\nbogus = 1\n", 2),
    ("[experiment]\nloads = [1.2]\n", 2),
    ("[policies]\nnames = [\"random\"]\n", 2),
    ("[cluster]\nservers = 10\nracks = 3\n", 2),
    ("[service]\nfamily = \"geometric\"\n[rates]\nalpha = 1.5\nbeta = 0.5\ngamma = 0.25\n", 2),
    ("[cluster]\nservers = 500\nracks = 10\n[pool]\nsize = 201\n", 3),
    ("[cluster]\nservers = 12\nracks = 3\n[pool]\nsize = 10\n"
     "[experiment]\nloads = [0.5]\nreplications = 1\nhorizon = 10\n", 4),
])
def test_exit_codes(tmp_path, text, code, capsys):
    assert main(["run", write(tmp_path, text), "-o", str(tmp_path / "o")]) == code
    err = capsys.readouterr().err
    assert err.startswith("error:")
    if code == 3:
        assert "hint" in err


def test_missing_spec_and_bad_toml(tmp_path):
    assert main(["capacity", str(tmp_path / "nope.toml")]) == 2
    assert main(["capacity", write(tmp_path, "[cluster\n")]) == 2
    assert main(["capacity", "preset:nope"]) == 2


def test_capacity_report_examples(tmp_path, capsys):
    one = "[cluster]\nservers = 3\nracks = 1\n[[pool.types]]\nlocals = [1, 2, 3]\nrate = {}\n"
    assert main(["capacity", write(tmp_path, one.format(1.0), "a.toml")]) == 0
    out = capsys.readouterr().out
    assert "rho* = 3\n" in out
    assert "inside the capacity region" in out
    assert out.count("load 0.333333333") == 3
    main(["capacity", write(tmp_path, one.format(2.0), "b.toml")])
    assert "rho* = 1.5\n" in capsys.readouterr().out
    main(["capacity", write(tmp_path, one.format(4.0), "c.toml")])
    out = capsys.readouterr().out
    assert "rho* = 0.75\n" in out and "outside capacity region" in out


def test_capacity_size_limit(tmp_path):
    text = "[cluster]\nservers = 500\nracks = 10\n[pool]\nsize = 250\n"
    assert main(["capacity", write(tmp_path, text)]) == 3


def test_plot_single_point_and_determinism(tmp_path):
    summ = tmp_path / "summary.csv"
    summ.write_text(",".join(SUMMARY_COLUMNS) + "\n"
                    "bp,0.5,1,2.5,0.1,0.9,0.1,0.0,50.0,1.0,1.0\n")
    assert main(["plot", str(summ), "-o", str(tmp_path / "p1")]) == 0
    data = rows(tmp_path / "p1" / "fig_mean_completion_time.csv")
    assert data == [["policy", "rho", "mean_completion_time", "ci_half_width"],
                    ["bp", "0.5", "2.5", "0.1"]]
    assert not (tmp_path / "p1" / "fig_mean_completion_time_high.csv").exists()
    main(["plot", str(summ), "-o", str(tmp_path / "p2")])
    for f in ("fig_mean_completion_time.csv", "fig_mean_completion_time.svg"):
        assert (tmp_path / "p1" / f).read_bytes() == (tmp_path / "p2" / f).read_bytes()
    svg = (tmp_path / "p1" / "fig_mean_completion_time.svg").read_text()
    assert svg.startswith("<?xml") and "<svg" in svg


def test_plot_six_series(tmp_path):
    out = tmp_path / "out"
    main(["run", write(tmp_path, SMALL), "-o", str(out), "--no-plots"])
    main(["plot", str(out / "summary.csv")])
    data = rows(out / "fig_mean_completion_time.csv")[1:]
    assert len({r[0] for r in data}) == 6
    assert len(data) == 12


def test_presets_parse():
    names = preset_names()
    assert {"desk", "full_exponential", "full_lognormal", "hotspot"} <= set(names)
    for n in names:
        spec = load_spec(f"preset:{n}")
        assert spec.loads and spec.seeds
    full = load_spec("preset:full_lognormal")
    assert (full.topology.servers, full.topology.racks) == (500, 10)
    assert full.service == "lognormal"
    assert (full.pods["bp_pod"].n_rack, full.pods["bp_pod"].n_remote) == (2, 6)
    assert (full.pods["jsq_mw_pod"].n_rack, full.pods["jsq_mw_pod"].n_remote) == (6, 6)


def test_parse_spec_validation():
    spec = parse_spec({})
    assert spec.seeds == (1, 2, 3, 4, 5)
    assert parse_spec({"experiment": {"seeds": [7, 9], "replications": 2}}).seeds == (7, 9)
    with pytest.raises(ConfigError):
        parse_spec({"experiment": {"seeds": [7], "replications": 2}})
    with pytest.raises(ConfigError):
        parse_spec({"pool": {"types": [{"locals": [1, 1, 2]}]}})
    with pytest.raises(ConfigError):
        parse_spec({"policies": {"bp_pod": {"n_rack": -1}}})
    with pytest.raises(ConfigError):
        parse_spec({"experiment": {"horizon": "long"}})


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "dcsched", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "capacity" in proc.stdout and "goldens" in proc.stdout
