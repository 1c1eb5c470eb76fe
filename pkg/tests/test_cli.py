import json
import os

import pytest

from anisospec import cli
from anisospec.config import ConfigError, ExperimentConfig, config_hash, default_config

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

SMALL = {"ulam": {"N": [8, 16], "samples": 16}, "spectrum": {"k": 4},
         "correlations": {"n_max": 5, "grid": 64, "replicas": 2},
         "projector": {"theta": [0.0], "n_terms": 50}}


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(p)


def files(d):
    out = {}
    for root, _, names in os.walk(d):
        for n in names:
            if not n.startswith("timings-"):
                p = os.path.join(root, n)
                with open(p, "rb") as f:
                    out[os.path.relpath(p, d)] = f.read()
    return out


def test_default_config_valid_and_hashed():
    a, b = ExperimentConfig.load(), ExperimentConfig.load()
    assert a.hash == b.hash and len(a.hash) == 16
    assert ExperimentConfig.load(seed_override=5).hash != a.hash
    assert config_hash(default_config()) == a.hash


@pytest.mark.parametrize("over, msg", [
    ({"delta0": 0.2}, "delta0"),
    ({"norms": {"varpi": 1.5}}, "varpi"),
    ({"ulam": {"N": [48]}}, "power of 2"),
    ({"ulam": {"samples": 10}}, "perfect square"),
    ({"ulam": {"method": "exact-polygon"}}, "affine"),
    ({"spectrum": {"k": 40}}, "k"),
    ({"projector": {"n_terms": 20000}}, "n_terms"),
    ({"map": {"matrix": [[1, 1], [0, 1]]}}, "trace"),
    ({"map": {"eps": 0.0}}, "missing key"),
])
def test_config_errors(tmp_path, over, msg):
    with pytest.raises(ConfigError, match=msg):
        ExperimentConfig.load(write(tmp_path, "c.json", over))


def test_exit_code_on_bad_config(tmp_path, capsys):
    out = str(tmp_path / "o")
    assert cli.main(["verify-cone", "--config", os.path.join(ROOT, "configs", "bad_trace.json"),
                     "--out", out]) == 1
    assert "trace" in capsys.readouterr().err
    assert cli.main(["verify-cone", "--config", write(tmp_path, "b.json", "{not json"), "--out", out]) == 1
    assert cli.main(["verify-cone", "--seed-override", "-1", "--out", out]) == 1
    assert not os.path.exists(out)


def test_verify_cone_outputs(tmp_path):
    out = str(tmp_path / "o")
    assert cli.main(["verify-cone", "--out", out, "--quiet", "--no-plots"]) == 0
    rep = json.load(open(os.path.join(out, "verify-cone", "report.json")))
    assert rep["passed"] and rep["config_hash"] == ExperimentConfig.load().hash
    summ = json.load(open(os.path.join(out, "summary-verify-cone.json")))
    assert summ["config_hash"] == rep["config_hash"]
    tim = json.load(open(os.path.join(out, "timings-verify-cone.json")))
    assert "verify-cone" in tim["seconds"]


def test_hyperbolicity_and_holonomy(tmp_path):
    out = str(tmp_path / "o")
    for sub in ("hyperbolicity", "holonomy"):
        assert cli.main([sub, "--out", out, "--quiet"]) == 0
        assert os.path.exists(os.path.join(out, sub, "report.json"))


def test_ulam_spectrum_deterministic_across_threads(tmp_path):
    cfg = write(tmp_path, "small.json", SMALL)
    runs = []
    for threads in (1, 3):
        out = str(tmp_path / f"t{threads}")
        for sub in ("ulam", "spectrum", "correlations"):
            assert cli.main([sub, "--config", cfg, "--out", out, "--threads", str(threads),
                             "--quiet"]) in (0, 2)
        runs.append(files(out))
    assert runs[0].keys() == runs[1].keys()
    assert any(k.endswith(".png") for k in runs[0])
    for k in runs[0]:
        assert runs[0][k] == runs[1][k], k
    rows = open(os.path.join(str(tmp_path / "t1"), "ulam", "ulam.csv")).read().splitlines()
    assert rows[0].startswith("N,") and len(rows) == 3


def test_linear_config_exact_spectrum(tmp_path):
    cfg = write(tmp_path, "c0.json", {"map": {"matrix": [[2, 1], [1, 1]], "eps": 0.0},
                                      "ulam": {"N": [8, 16], "method": "exact-polygon"},
                                      "spectrum": {"k": 4}})
    out = str(tmp_path / "o")
    assert cli.main(["spectrum", "--config", cfg, "--out", out, "--quiet", "--no-plots"]) == 0
    rep = json.load(open(os.path.join(out, "spectrum", "report.json")))
    assert all(c["pass"] for c in rep["checks"])


def test_help_lists_csv_schemas(capsys):
    with pytest.raises(SystemExit):
        cli.main(["--help"])
    text = capsys.readouterr().out
    assert "eigenvalues.csv" in text and "all" in text
