import json

import pytest
from hypothesis import given, strategies as st

from dissent_sim import cli
from dissent_sim.model_core import DomainError


def _run(capsys, *args):
    code = cli.main(list(args))
    out = capsys.readouterr()
    return code, out.out, out.err


def _rows(text):
    lines = [l for l in text.splitlines() if l and not l.startswith("#")]
    header = lines[0].split(",")
    return [dict(zip(header, l.split(","))) for l in lines[1:]]


def test_steady_probe_only(capsys):
    code, out, _ = _run(capsys, "steady", "--z", "2", "--d", "30", "--probe-only")
    assert code == 0
    assert out.startswith("# program: dissent_sim")
    row = _rows(out)[0]
    assert float(row["xi_inf"]) == pytest.approx(0.8333, abs=1e-4)


def test_steady_zero_depth(capsys):
    _, out, _ = _run(capsys, "steady", "--z", "2", "--d", "0")
    row = _rows(out)[0]
    assert float(row["xi_inf"]) == pytest.approx(1.0 / float(row["p2_inf"]), rel=1e-11)


def test_steady_unsqueezed_is_not_entangled(capsys):
    _, out, _ = _run(capsys, "steady", "--z", "1", "--d", "30", "--probe-only")
    assert float(_rows(out)[0]["xi_inf"]) >= 1.0


def test_steady_from_detuning(capsys):
    _, out, _ = _run(capsys, "steady", "--delta", "4", "--omega", "1")
    assert float(_rows(out)[0]["z"]) == pytest.approx(2.0)


def test_twelve_significant_digits(capsys):
    _, out, _ = _run(capsys, "steady", "--z", "2")
    assert _rows(out)[0]["xi_inf"] == "0.833288482239"


def test_domain_error_exit_code(capsys):
    code, _, err = _run(capsys, "steady", "--z", "0.5")
    assert code == 2 and "z must be >= 1" in err
    code, _, err = _run(capsys, "oracle", "--n", "6")
    assert code == 2
    code, _, _ = _run(capsys, "steady", "--z", "2", "--delta", "1", "--omega", "1")
    assert code == 2


def test_usage_error_exit_code(capsys):
    code, _, _ = _run(capsys, "figure", "fig9")
    assert code == 2
    code, _, _ = _run(capsys, "steady", "--bogus", "1")
    assert code == 2


def test_convergence_error_exit_code(capsys, monkeypatch):
    from dissent_sim.model_core import ConvergenceError

    def boom(cfg):
        raise ConvergenceError("synthetic")

    monkeypatch.setattr(cli, "cmd_steady", boom)
    code, _, err = _run(capsys, "steady", "--z", "2")
    assert code == 3 and "synthetic" in err


def test_oracle_table(capsys):
    code, out, _ = _run(capsys, "oracle", "--n", "1", "--d", "0")
    assert code == 0
    row = _rows(out)[0]
    assert float(row["xi_oracle"]) == pytest.approx(float(row["xi_formula"]), rel=1e-8)


def test_rates_table(capsys):
    _, out, _ = _run(capsys, "rates", "--kl", "50,100")
    rows = _rows(out)
    assert 0.95 <= float(rows[0]["ratio_to_asymptote"]) <= 1.05
    assert abs(float(rows[1]["imag_part"])) < abs(float(rows[0]["imag_part"]))


def test_rates_out_of_regime_flag(capsys):
    _, out, _ = _run(capsys, "rates", "--kl", "5", "--r-over-l", "100")
    assert _rows(out)[0]["out_of_regime"] == "1"


def test_json_output(capsys):
    _, out, _ = _run(capsys, "sweep", "--z", "1:3:3", "--format", "json")
    doc = json.loads(out)
    assert doc["provenance"]["program"].startswith("dissent_sim")
    t = doc["tables"][0]
    assert [r[0] for r in t["rows"]] == [1.0, 2.0, 3.0]


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nz = 3\nd = 0  # product state\n", encoding="utf-8")
    _, out, _ = _run(capsys, "steady", "--config", str(cfg))
    row = _rows(out)[0]
    assert float(row["z"]) == 3.0 and float(row["d"]) == 0.0
    _, out, _ = _run(capsys, "steady", "--config", str(cfg), "--z", "2")
    assert float(_rows(out)[0]["z"]) == 2.0


def test_config_unknown_key_lists_valid_keys(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("zz = 3\n", encoding="utf-8")
    code, _, err = _run(capsys, "steady", "--config", str(cfg))
    assert code == 2 and "valid keys" in err and "gamma_d_add" in err


def test_out_file_written(tmp_path, capsys):
    target = tmp_path / "o.csv"
    code, out, _ = _run(capsys, "steady", "--out", str(target))
    assert code == 0 and out == ""
    assert "--out" not in target.read_text(encoding="utf-8")


def test_thread_env_validation(monkeypatch):
    monkeypatch.setenv("DISSENT_SIM_THREADS", "0")
    with pytest.raises(DomainError):
        cli.thread_count()
    monkeypatch.setenv("DISSENT_SIM_THREADS", "3")
    assert cli.thread_count() == 3


@given(st.lists(st.integers(-1000, 1000), max_size=30), st.integers(1, 6))
def test_ordered_map_keeps_input_order(items, threads):
    import os

    old = os.environ.get("DISSENT_SIM_THREADS")
    os.environ["DISSENT_SIM_THREADS"] = str(threads)
    try:
        assert cli.ordered_map(lambda v: v * v, items) == [v * v for v in items]
    finally:
        if old is None:
            del os.environ["DISSENT_SIM_THREADS"]
        else:
            os.environ["DISSENT_SIM_THREADS"] = old


def test_value_parsing():
    assert cli.parse_values("1:2:3", "z") == [1.0, 1.5, 2.0]
    assert cli.parse_values("1, 4", "z") == [1.0, 4.0]
    with pytest.raises(DomainError):
        cli.parse_values("1:2", "z")
    with pytest.raises(DomainError):
        cli.parse_values("a", "z")


def test_cesium_command(capsys):
    _, out, _ = _run(capsys, "cesium")
    vals = {r["quantity"]: float(r["value"]) for r in _rows(out)}
    assert vals["z_y_blue_700"] == pytest.approx(2.357, abs=1e-3)
    assert vals["z_x_red_700"] == pytest.approx(2.419, abs=1e-3)


def test_multilevel_command(capsys):
    code, out, _ = _run(capsys, "multilevel", "--t-end", "100")
    rows = _rows(out)
    assert code == 0 and float(rows[0]["xi_exp"]) == pytest.approx(1.0)
    total = [float(r["n_up"]) + float(r["n_down"]) + float(r["n_h"]) for r in rows]
    assert max(abs(t - 1.0) for t in total) < 1e-10


def test_time_evolution_command(capsys):
    _, out, _ = _run(capsys, "time-evolution", "--t-end", "0.2", "--n", "1000")
    rows = _rows(out)
    assert len(rows) == 201 and float(rows[0]["xi_moments"]) == pytest.approx(1.0)


def test_figure_fig3_columns(capsys):
    _, out, _ = _run(capsys, "figure", "fig3")
    rows = _rows(out)
    assert list(rows[0]) == ["z"] + [f"xi_gamma_d_add_{a}" for a in (0, 2, 5, 10, 20)]
    assert float(rows[0]["z"]) == 1.0 and float(rows[-1]["z"]) == 10.0


def test_figure_fig4_has_inset(capsys):
    _, out, _ = _run(capsys, "figure", "fig4")
    assert "# table: fig4_inset" in out
    assert "p2_inf_x_5" in out
