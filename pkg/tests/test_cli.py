import io
import json

import numpy as np
import pytest

from gdscope import cli
from gdscope import experiments as X
from gdscope.acceptance import CriterionResult
from gdscope.errors import ConfigError

QUAD_CFG = """\
[experiment]
name = unit-quad

[cost]
kind = quadratic
p_diag = 40, 2

[init]
theta0 = 1, 1

[optimizer]
eta = 2/41
max_iter = 800

[output]
path = unit-quad.csv
"""


@pytest.fixture
def quad_cfg(tmp_path):
    path = tmp_path / "unit-quad.cfg"
    path.write_text(QUAD_CFG)
    return path


def test_run_writes_schema_and_header(quad_cfg, tmp_path, capsys):
    rc = cli.main(["run", str(quad_cfg), "--outdir", str(tmp_path)])
    assert rc == 0
    out = (tmp_path / "unit-quad.csv").read_text().splitlines()
    comments = [l for l in out if l.startswith("#")]
    rows = [l for l in out if not l.startswith("#")]
    assert rows[0] == "iter,loss,grad_norm,rp,dir,sharpness,identity_residual,tau_dir_mean,tau_dir_std"
    # resolved config and seed are embedded in the header
    assert any("optimizer.eta = 2/41" in c for c in comments)
    assert any("cost.p_diag = 40, 2" in c for c in comments)
    # undefined metrics serialize as empty fields, never NaN text
    first = rows[1].split(",")
    assert len(first) == 9
    assert first[5] == "" and first[6] == ""
    assert "nan" not in out[-1].lower()
    summary = json.loads((tmp_path / "unit-quad.csv.summary.json").read_text())
    assert summary["outcome"] == "converged"
    assert "seed" in summary and "runtime_s" in summary


def test_run_unknown_preset_is_usage_error(tmp_path, capsys):
    rc = cli.main(["run", "no-such-preset", "--outdir", str(tmp_path)])
    assert rc == 2
    assert "unknown preset" in capsys.readouterr().err


def test_missing_eta_names_the_field(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[experiment]\nname = x\n\n[cost]\nkind = quadratic\np_diag = 1\n")
    with pytest.raises(ConfigError, match="optimizer.eta"):
        X.parse_spec(bad)
    assert cli.main(["run", str(bad), "--outdir", str(tmp_path)]) == 2


def test_parse_error_carries_line_number(tmp_path):
    bad = tmp_path / "syntax.cfg"
    bad.write_text("[experiment]\nname = x\nthis line has no equals sign\n")
    with pytest.raises(ConfigError, match="line"):
        X.parse_spec(bad)


def test_unknown_keys_are_rejected(tmp_path):
    bad = tmp_path / "extra.cfg"
    bad.write_text(QUAD_CFG + "\n[metrics]\nbogus_flag = true\n")
    with pytest.raises(ConfigError, match="bogus_flag"):
        X.parse_spec(bad)


def test_cifar_path_validated_at_load(tmp_path):
    cfg = tmp_path / "cifar.cfg"
    cfg.write_text("""\
[experiment]
name = c

[cost]
kind = mlp

[dataset]
source = cifar10
path = /definitely/not/here.bin

[optimizer]
eta = 0.1
""")
    spec = X.parse_spec(cfg)
    with pytest.raises(ConfigError, match="dataset.path"):
        X.build_cost(spec)


def test_sweep_orders_and_labels(quad_cfg, tmp_path, capsys):
    rc = cli.main(["sweep", str(quad_cfg), "--eta", "2/39", "2/40", "2/41",
                   "--outdir", str(tmp_path)])
    assert rc == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l.strip()]
    body = lines[1:]
    assert len(body) == 3
    assert "diverged" in body[0]
    assert "bounded-oscillation" in body[1]
    assert "converged" in body[2]


def test_sweep_agrees_with_divergence_oracle(quad_cfg):
    from gdscope import quadratic_divergence_oracle

    spec = X.parse_spec(quad_cfg)
    etas = [2 / 39, 2 / 40, 2 / 41, 0.01, 0.2]
    summaries = X.sweep_spec(spec, etas, outdir="/tmp/gdscope-test-sweep")
    assert [s.eta for s in summaries] == etas
    P = np.diag([40.0, 2.0])
    for s in summaries:
        assert quadratic_divergence_oracle(P, s.eta) == (s.outcome == "diverged")


def test_sweep_empty_eta_is_usage_error(quad_cfg, tmp_path):
    assert cli.main(["sweep", str(quad_cfg), "--outdir", str(tmp_path)]) == 2
    with pytest.raises(ConfigError):
        X.sweep_spec(X.parse_spec(quad_cfg), [], outdir=str(tmp_path))


def test_list_presets_names(capsys):
    assert cli.main(["list-presets"]) == 0
    out = capsys.readouterr().out
    for name in ("quad-sweep", "flat-quad", "single-neuron-tanh", "mlp-gd-stable",
                 "mlp-gd-unstable", "tau-grid", "sgd-relu"):
        assert name in out


def test_preset_specs_all_parse():
    for name in X.preset_names():
        spec = X.load_preset(name)
        assert spec.name == name
        assert spec.etas


def test_check_exit_codes(monkeypatch, capsys):
    from gdscope import acceptance

    fake_pass = [CriterionResult("a", "1", "1", True), CriterionResult("b", "2", "2", True)]
    monkeypatch.setattr(acceptance, "check_all", lambda corrupt_quadrature=False: fake_pass)
    assert cli.main(["check"]) == 0
    out = capsys.readouterr().out
    assert "criterion=a" in out and "pass=true" in out

    fake_fail = [CriterionResult("rp-dir-identity", "x", "y", False)]
    monkeypatch.setattr(acceptance, "check_all", lambda corrupt_quadrature=False: fake_fail)
    assert cli.main(["check"]) == 1
    assert "pass=false" in capsys.readouterr().out


def test_corrupt_quadrature_flag_reaches_criteria(monkeypatch, capsys):
    from gdscope import acceptance

    seen = {}

    def spy(corrupt_quadrature=False):
        seen["flag"] = corrupt_quadrature
        return [CriterionResult("rp-dir-identity", "m", "b", not corrupt_quadrature)]

    monkeypatch.setattr(acceptance, "check_all", spy)
    assert cli.main(["check", "--corrupt-quadrature"]) == 1
    assert seen["flag"] is True
    assert "rp-dir-identity" in capsys.readouterr().out


def test_resolved_seed_embedded_in_header(quad_cfg, tmp_path):
    cli.main(["run", str(quad_cfg), "--outdir", str(tmp_path)])
    header = (tmp_path / "unit-quad.csv").read_text()
    assert "# resolved.optimizer.seed = 0" in header
    assert "# resolved.metric_cadence = 1" in header


def test_fd_surrogate_sharpness_flagged_in_header(tmp_path):
    cfg = tmp_path / "relu-sharp.cfg"
    cfg.write_text("""\
[experiment]
name = relu-sharp

[cost]
kind = mlp
hidden = 4
activation = relu

[dataset]
source = synthetic
n = 16
d = 3
classes = 2
seed = 1

[init]
seed = 0

[optimizer]
eta = 0.1
max_iter = 2

[metrics]
sharpness = true

[output]
path = relu-sharp.csv
""")
    rc = cli.main(["run", str(cfg), "--outdir", str(tmp_path)])
    assert rc == 0
    text = (tmp_path / "relu-sharp.csv").read_text()
    assert "finite-difference surrogate" in text
    # sharpness column populated
    rows = [l for l in text.splitlines() if not l.startswith("#")]
    assert rows[1].split(",")[5] != ""


def test_outdir_env_var(monkeypatch):
    monkeypatch.setenv("GDSCOPE_OUTDIR", "/tmp/gdscope-envdir")
    parser = cli.build_parser()
    args = parser.parse_args(["run", "quad-sweep"])
    assert args.outdir == "/tmp/gdscope-envdir"


def test_parse_number_fractions():
    assert X.parse_number("2/39", where="t") == 2 / 39
    assert X.parse_number("0.05", where="t") == 0.05
    with pytest.raises(ConfigError, match="t:"):
        X.parse_number("abc", where="t")


def test_load_preset_from_stream_matches_name():
    spec = X.parse_spec(io.StringIO(QUAD_CFG), name_hint="inline")
    assert spec.name == "unit-quad"
    assert spec.etas == [2 / 41]
