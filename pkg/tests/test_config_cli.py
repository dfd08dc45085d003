import pytest

from smpfem import cli
from smpfem.coil import Program
from smpfem.config import ConfigError, comparable, defaults, echo, parse_config, parse_value


@pytest.fixture
def ini(tmp_path):
    def make(text, name="case.ini"):
        p = tmp_path / name
        p.write_text(text)
        return p
    return make


def test_empty_file_gives_sec_defaults(ini):
    cfg = parse_config(ini(""))
    m = cfg["mechanics"]
    assert cfg["scenario"]["name"] == "sec" and cfg["scenario"]["mode"] == "imposed"
    assert (m["E_r"], m["E_g"], m["theta_t"], m["w"], m["delta_theta"]) == (0.9e6, 771e6, 350.0, 0.2, 30.0)
    assert cfg["solver"]["dt"] * 200 == pytest.approx(cfg["solver"]["t_end"])


def test_cvs_defaults(ini):
    cfg = parse_config(ini(""), scenario="cvs")
    assert (cfg["mechanics"]["theta_t"], cfg["mechanics"]["delta_theta"], cfg["mechanics"]["w"]) == (344.0, 5.0, 0.375)
    assert cfg["coil"]["f"] == 1000.0 and cfg["em"]["sigma0"] == 1e4
    assert cfg["scenario"]["mode"] == "coupled"
    assert cfg["mesh"]["outer_radius"] == 1.5e-3 and cfg["mesh"]["thickness"] == 0.25e-3 and cfg["mesh"]["length"] == 20e-3


def test_scenario_from_file_and_overrides(ini):
    cfg = parse_config(ini("[scenario]\nname = cvs\n[solver]\ndt = 1e-4\n"), overrides={("scenario", "mode"): "imposed"})
    assert cfg["scenario"]["name"] == "cvs" and cfg["solver"]["dt"] == 1e-4 and cfg["scenario"]["mode"] == "imposed"


def test_programs_parse(ini):
    cfg = parse_config(ini("[schedule]\nu_top = 0:0, 1:2e-4\n"))
    assert cfg["schedule"]["u_top"](0.5) == pytest.approx(1e-4)
    with pytest.raises(ValueError, match="t:value"):
        parse_value("p", "0:0, 1")


@pytest.mark.parametrize("text,line,needle", [
    ("[mechanics]\nE_r = 1e6\nE_g = 7.7.1e8\n", 3, "E_g"),
    ("\n[solver]\nnewton_max = 2.5\n", 3, "newton_max"),
    ("[mechanics]\nE_rr = 1\n", 2, "E_rr"),
    ("[output]\nvtk = maybe\n", 2, "vtk"),
    ("[nonsense]\nx = 1\n", 1, "nonsense"),
])
def test_errors_name_line_and_key(ini, text, line, needle):
    p = ini(text)
    with pytest.raises(ConfigError) as exc:
        parse_config(p)
    assert f"{p}:{line}:" in str(exc.value) and needle in str(exc.value)


@pytest.mark.parametrize("text,needle", [
    ("[scenario]\nmode = hybrid\n", "mode"),
    ("[mesh]\ngenerator = gmsh\n", "file"),
    ("[mesh]\ngenerator = gmsh\nfile = /nope.msh\n", "not found"),
    ("[scenario]\nem_body_force = true\n", "period_averaged_source"),
    ("[schedule]\nsupport = glued\n", "support"),
])
def test_semantic_errors(ini, text, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config(ini(text))


def test_missing_file():
    with pytest.raises(ConfigError, match="not found"):
        parse_config("/does/not/exist.ini")


@pytest.mark.parametrize("scenario", ["sec", "cvs"])
def test_echo_round_trip(ini, scenario):
    cfg = parse_config(ini("[thermal]\nalpha_kappa = 1.25e-3\n"), scenario=scenario)
    back = parse_config(ini(echo(cfg), "echo.ini"))
    assert comparable(back) == comparable(cfg)


def test_defaults_are_independent_copies():
    a = defaults("sec")
    a["mechanics"]["E_r"] = 1.0
    assert defaults("sec")["mechanics"]["E_r"] == 0.9e6
    assert isinstance(defaults("cvs")["coil"]["I0"], Program)
    with pytest.raises(ConfigError):
        defaults("xyz")


def test_validate_only_reports(ini, capsys):
    assert cli.main([str(ini("")), "--scenario", "cvs", "--validate-only"]) == 0
    out = capsys.readouterr().out
    assert "skin depth 0.03558" in out and "T_c 0.004556" in out and "320 elements" in out


def test_exit_codes(ini, tmp_path, capsys):
    assert cli.main([str(ini("[mechanics]\nE_r = x\n")), "--validate-only"]) == 2
    assert cli.main([str(tmp_path / "missing.ini")]) == 2
    assert cli.main([str(ini("")), "--dt", "-1", "--validate-only"]) == 2
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert cli.main([str(ini("[solver]\nt_end = 0.04\ndt = 0.02\n")), "--out", str(blocker / "sub")]) == 4
    bad = ini("[solver]\nt_end = 1.0\ndt = 1.0\nnewton_max = 1\nmax_cuts = 0\nnewton_tol = 1e-14\nnewton_atol = 1e-30\n"
              "[schedule]\nu_top = 0:0, 1:5e-4\n")
    assert cli.main([str(bad), "--out", str(tmp_path / "x")]) == 3
    assert "solver aborted" in capsys.readouterr().err


def test_output_dir_precedence(ini, tmp_path, monkeypatch):
    cfg_file = ini("[solver]\nt_end = 0.04\n[output]\nvtk = false\n")
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert cli.main([str(cfg_file)]) == 0
    assert (tmp_path / "env" / "sec_timeseries.csv").is_file()
    assert cli.main([str(cfg_file), "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "config.ini").is_file()
    monkeypatch.delenv(cli.OUT_ENV)
    assert cli.main([str(cfg_file)]) == 0
    assert (tmp_path / "out" / "solver_log.jsonl").is_file()


def test_cli_dt_and_mode_overrides(ini, tmp_path):
    assert cli.main([str(ini("[solver]\nt_end = 0.1\n[output]\nvtk = false\n")), "--dt", "0.05", "--out", str(tmp_path / "o")]) == 0
    text = (tmp_path / "o" / "config.ini").read_text()
    assert "dt = 0.05" in text and "mode = imposed" in text


@pytest.mark.parametrize("name", ["sec", "cvs"])
def test_shipped_configs_parse(name):
    from pathlib import Path

    cfg = parse_config(Path(__file__).parent.parent / "configs" / f"{name}.ini")
    assert comparable({k: v for k, v in cfg.items() if k != "output"}) == comparable(
        {k: v for k, v in defaults(name).items() if k != "output"})
