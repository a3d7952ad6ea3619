import csv
import json
import math
from pathlib import Path

import pytest

from oscbm.cli import list_builtins, main, run
from oscbm.config import parse_config
from oscbm.errors import ConfigInvalid

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SIGMA2_H1 = """\
experiment:
  kind: sigma2
model:
  kind: exponential
  rate: 1.0
phi:
  kind: H1
target:
  sigma2: 2.0
"""

BRIDGE_SMALL = """\
experiment:
  kind: verify-corrector
model:
  kind: exponential
phi:
  kind: H1
corrector:
  f: {kind: constant, value: 0}
  b: 1
  a_star: 1
  epsilon: [0.02]
mc:
  n: 400
  seed: 4
out:
  samples: true
"""


def write(tmp_path, text, name="c.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_sigma2_run_exit_zero(tmp_path, capsys):
    code = run(write(tmp_path, SIGMA2_H1), out=tmp_path / "o", quiet=True, env={})
    assert code == 0
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    s = rep["theoretical"]["sigma2"]
    assert abs(s["value"] - 2.0) <= s["error_budget"] + 1e-8
    assert rep["seeds"] == {"master_seed": 0}


def test_bridge_targets_csv(tmp_path):
    code = run(write(tmp_path, BRIDGE_SMALL), out=tmp_path / "o", quiet=True, env={})
    assert code in (0, 1)
    rows = list(csv.DictReader(open(tmp_path / "o" / "targets.csv")))
    mu2 = json.loads((tmp_path / "o" / "report.json").read_text())["theoretical"]["mu2"]["value"]
    assert len(rows) == 65
    for r in rows:
        x = float(r["x"])
        assert float(r["target"]) == pytest.approx(mu2 * x * (1 - x), abs=1e-12)
    samples = list(csv.reader(open(tmp_path / "o" / "samples.csv")))
    assert samples[0] == ["replication", "observable", "value", "admissible"]
    assert len(samples) == 1 + 400 * 3
    per_rep = list(csv.reader(open(tmp_path / "o" / "corrector_samples.csv")))
    assert per_rep[0] == ["replication", "epsilon", "x", "u_eps", "u_bar",
                          "rescaled_corrector", "admissible"]


def test_missing_n_exit_two(tmp_path, capsys):
    text = BRIDGE_SMALL.replace("  n: 400\n", "")
    assert run(write(tmp_path, text), out=tmp_path / "o", env={}) == 2
    err = capsys.readouterr().err
    assert "mc.n" in err and "missing" in err


def test_invalid_value_reports_line(tmp_path):
    text = SIGMA2_H1.replace("rate: 1.0", "rate: -1.0")
    with pytest.raises(ConfigInvalid) as exc:
        parse_config(text)
    assert exc.value.field == "model.rate" and exc.value.line == 5
    assert "line 5" in str(exc.value)


def test_yaml_syntax_error_line(tmp_path, capsys):
    assert run(write(tmp_path, "experiment:\n  kind: [sigma2\n"), env={}) == 2
    assert "line" in capsys.readouterr().err


def test_unknown_field_and_kind():
    with pytest.raises(ConfigInvalid) as exc:
        parse_config(SIGMA2_H1 + "bogus: 1\n")
    assert exc.value.field == "bogus"
    with pytest.raises(ConfigInvalid) as exc:
        parse_config(SIGMA2_H1.replace("kind: H1", "kind: H9"))
    assert exc.value.field == "phi.kind"


def test_failed_verdict_exit_one(tmp_path):
    text = SIGMA2_H1.replace("sigma2: 2.0", "sigma2: 2.5")
    assert run(write(tmp_path, text), out=tmp_path / "o", quiet=True, env={}) == 1


def test_non_centered_functional_is_validation_error(tmp_path):
    text = SIGMA2_H1.replace("kind: H1", "kind: polynomial\n  coeffs: [0, 0, 1]")
    assert run(write(tmp_path, text), env={}) == 2


def test_seed_precedence(tmp_path):
    cfg = parse_config(SIGMA2_H1, env_seed="77")
    assert cfg.seed == 77
    with_seed = SIGMA2_H1 + "mc:\n  seed: 5\n"
    assert parse_config(with_seed, env_seed="77").seed == 5
    assert parse_config(with_seed, seed_override=9, env_seed="77").seed == 9


def test_config_echo_round_trip(tmp_path):
    p = write(tmp_path, BRIDGE_SMALL)
    run(p, out=tmp_path / "o", quiet=True, env={})
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    canonical = json.loads(json.dumps(parse_config(BRIDGE_SMALL).data))
    assert rep["config_echo"] == canonical


def test_reports_byte_identical(tmp_path):
    p = write(tmp_path, BRIDGE_SMALL)
    run(p, out=tmp_path / "a", quiet=True, env={})
    run(p, out=tmp_path / "b", quiet=True, env={})
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()


def test_list_builtins():
    text = list_builtins()
    assert "abs_centered (rank 2)" in text
    assert "exponential" in text and "gaussian" in text
    assert text == list_builtins()


def test_main_flags(tmp_path, capsys, monkeypatch):
    assert main(["--list-builtins"]) == 0
    assert "sign (rank 1)" in capsys.readouterr().out
    assert main([]) == 2
    monkeypatch.setenv("BM_SEED", "123")
    p = write(tmp_path, SIGMA2_H1)
    assert main(["--config", str(p), "--out", str(tmp_path / "o"), "--quiet"]) == 0
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["seeds"]["master_seed"] == 123
    assert main(["--config", str(p), "--out", str(tmp_path / "o"), "--seed", "8", "--quiet"]) == 0
    assert json.loads((tmp_path / "o" / "report.json").read_text())["seeds"]["master_seed"] == 8


def test_sample_field_dump(tmp_path):
    text = (CONFIGS / "sample_field.yaml").read_text().replace("n: 2000", "n: 200")
    assert run(write(tmp_path, text), out=tmp_path / "o", quiet=True, env={}) in (0, 1)
    from oscbm.gaussian_field import read_field
    f = read_field(tmp_path / "o" / "field.bin")
    assert f.values.size == 1024 and f.grid.spacing == 0.125


def test_table_model_from_config(tmp_path):
    (tmp_path / "rho.csv").write_text("x,rho\n0,1\n1,0.4\n3,0\n")
    text = SIGMA2_H1.replace("kind: exponential\n  rate: 1.0",
                             "kind: table\n  path: rho.csv\n  decay_m: 1").replace(
        "target:\n  sigma2: 2.0\n", "")
    p = write(tmp_path, text)
    assert run(p, out=tmp_path / "o", quiet=True, env={}) == 0
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["theoretical"]["sigma2"]["value"] == pytest.approx(2 * (0.7 + 0.4), abs=1e-9)


def test_table_without_decay_declaration_rejected(tmp_path):
    (tmp_path / "rho.csv").write_text("x,rho\n0,1\n1,0\n")
    text = SIGMA2_H1.replace("kind: exponential\n  rate: 1.0", "kind: table\n  path: rho.csv")
    assert run(write(tmp_path, text), out=tmp_path / "o", quiet=True, env={}) == 2


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.yaml")))
def test_shipped_configs_validate(name):
    cfg = parse_config((CONFIGS / name).read_text(), base_dir=CONFIGS)
    assert cfg.kind
