from __future__ import annotations

import subprocess
import sys
import warnings

import numpy as np
import pytest

from mfstackelberg.cli import SCHEMAS, build_parser, main
from mfstackelberg.config import ConfigError, ExperimentConfig, parse_float_list, parse_int_list
from mfstackelberg.problem import desired_control

COARSE = "objective = paper\nn_xi = 100\nn_t = 25\nrel_tol = 1e-3\n"

HEADERS = {
    "control.csv": "t,v_initial,v_star",
    "convergence.csv": "iter,objective,step_size,rel_change,wall_ms",
    "w.csv": "t,xi,value",
    "g.csv": "t,xi,value",
    "phi1_grad.csv": "t,xi,value",
    "phi2.csv": "t,xi,value",
    "consistency.csv": "sample_id,xi0,max_residual",
    "density_gap.csv": "t,l1_gap",
    "particles.csv": "t,sample_id,xi,psi",
    "gradcheck.csv": "t_index,adjoint_d,fd_d,rel_err",
    "sweep.csv": "beta,gamma,n_xi,iterations,final_objective,wall_ms",
    "error.csv": "n_xi,l2_err_vs_finest",
}


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def read(path):
    """Header and numeric body of a CSV artifact."""
    lines = path.read_text(encoding="utf-8").splitlines()
    body = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2) if len(lines) > 1 else np.empty((0, 0))
    return lines[0], body


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


class TestConfig:
    def test_defaults_build_paper_spec(self):
        spec = ExperimentConfig.defaults().spec()
        assert (spec.n_xi, spec.n_t, spec.cfl, spec.rel_tol) == (500, 100, 0.95, 2e-5)

    def test_parse_values_and_comments(self):
        cfg = ExperimentConfig.parse("objective = paper  # preset\n\n# full line\nbeta = 0.5\nn_xi=250\n")
        spec = cfg.spec()
        assert spec.beta == 0.5 and spec.n_xi == 250 and spec.rel_tol == pytest.approx(4e-5)

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown key 'colour'"):
            ExperimentConfig.parse("objective = paper\ncolour = red\n")

    def test_missing_required_key_named(self):
        with pytest.raises(ConfigError, match="missing required key 'objective'"):
            ExperimentConfig.parse("beta = 1\n")

    @pytest.mark.parametrize(
        "line, fragment",
        [("n_xi = many", "n_xi"), ("objective = other", "objective must be"), ("g0 = gaussian", "g0 must"),
         ("v0 = cubic", "v0 must"), ("sweep.n_xi = 1,x", "sweep.n_xi"), ("just text", "expected")],
    )
    def test_bad_values(self, line, fragment):
        text = line + "\n" if line.startswith("objective") else "objective = paper\n" + line + "\n"
        with pytest.raises(ConfigError, match=fragment):
            ExperimentConfig.parse(text)

    @pytest.mark.parametrize("v0, expected", [("t", lambda t: t), ("sin", desired_control), ("0.25", lambda t: 0 * t + 0.25)])
    def test_control_descriptors(self, v0, expected):
        spec = ExperimentConfig.parse(f"objective = paper\nv0 = {v0}\n").spec()
        np.testing.assert_allclose(spec.v0(spec.times), expected(spec.times))

    def test_density_descriptors(self):
        spec = ExperimentConfig.parse("objective = paper\ng0 = indicator 0 1\n").spec()
        g = spec.initial_density()
        assert np.all(g[spec.centers() > 1.0] == 0) and np.sum(g) * spec.dxi == pytest.approx(1.0)
        uni = ExperimentConfig.parse("objective = paper\ng0 = uniform\n").spec().initial_density()
        np.testing.assert_allclose(uni, 0.5)

    def test_roundtrip(self):
        cfg = ExperimentConfig.parse("objective = decoupled_leader\nbeta = 3\nsweep.n_xi = 10,20\n")
        again = ExperimentConfig.parse(cfg.to_text())
        assert again.values == cfg.values

    def test_with_maps_double_underscore(self):
        cfg = ExperimentConfig.defaults().with_(particles__seed=9)
        assert cfg.get("particles.seed") == 9
        with pytest.raises(ConfigError):
            cfg.with_(nonsense=1)

    def test_list_parsers(self):
        assert parse_float_list("0.1, 1,10") == [0.1, 1.0, 10.0]
        assert parse_int_list("125,250") == [125, 250]
        assert parse_int_list("") == []


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def test_help_documents_schemas(capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["solve", "--help"])
    text = capsys.readouterr().out
    for header in HEADERS.values():
        assert header in text
    assert all(h in SCHEMAS for h in HEADERS.values())


class TestSolve:
    def test_writes_artifacts(self, tmp_path):
        out = tmp_path / "o"
        assert main(["solve", "--config", write_cfg(tmp_path, COARSE), "--out", str(out)]) == 0
        files = {p.name for p in out.iterdir()}
        assert files == {"control.csv", "convergence.csv", "w.csv", "g.csv", "phi1_grad.csv", "phi2.csv"}
        for name in files:
            raw = (out / name).read_bytes()
            assert b"\r" not in raw and raw.endswith(b"\n")
            header, body = read(out / name)
            assert header == HEADERS[name]
            assert np.isfinite(body).all()
        _, g = read(out / "g.csv")
        assert g.shape == (25 * 100, 3)
        _, conv = read(out / "convergence.csv")
        assert 1 <= conv.shape[0] <= 100
        assert np.all(np.diff(conv[:, 1]) <= 0)

    def test_decoupled_leader_gives_zero_phi2(self, tmp_path):
        cfg = write_cfg(tmp_path, COARSE.replace("paper", "decoupled_leader"))
        assert main(["solve", "--config", cfg, "--out", str(tmp_path)]) == 0
        _, phi2 = read(tmp_path / "phi2.csv")
        assert not phi2[:, 2].any()

    def test_rerun_is_bytewise_identical(self, tmp_path):
        cfg = write_cfg(tmp_path, COARSE)
        main(["solve", "--config", cfg, "--out", str(tmp_path / "a")])
        main(["solve", "--config", cfg, "--out", str(tmp_path / "b")])
        for name in ("control.csv", "w.csv", "g.csv", "phi1_grad.csv", "phi2.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        _, a = read(tmp_path / "a" / "convergence.csv")
        _, b = read(tmp_path / "b" / "convergence.csv")
        np.testing.assert_array_equal(a[:, :4], b[:, :4])

    def test_output_dir_key(self, tmp_path):
        target = tmp_path / "from_cfg"
        cfg = write_cfg(tmp_path, COARSE + f"output_dir = {target}\nmax_iter = 1\n")
        assert main(["solve", "--config", cfg]) == 0
        assert (target / "control.csv").exists()


@pytest.mark.parametrize(
    "extra, code",
    [("gamma = -1\n", 1), ("armijo.sigma_init = 50\narmijo.max_backtracks = 0\n", 2), ("gamma = 1e-300\n", 3)],
    ids=["config", "line_search", "solver"],
)
def test_exit_codes(tmp_path, capsys, extra, code):
    cfg = write_cfg(tmp_path, COARSE + extra)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert main(["solve", "--config", cfg, "--out", str(tmp_path)]) == code
    assert capsys.readouterr().err.strip()


def test_unreadable_config_is_config_error(tmp_path, capsys):
    assert main(["solve", "--config", str(tmp_path / "missing.cfg")]) == 1
    assert "config error" in capsys.readouterr().err


class TestParticles:
    def test_zero_particles_gives_headers_only(self, tmp_path):
        cfg = write_cfg(tmp_path, COARSE + "max_iter = 1\nparticles.n = 0\nparticles.samples = 0\n")
        assert main(["particles", "--config", cfg, "--out", str(tmp_path)]) == 0
        for name in ("consistency.csv", "density_gap.csv", "particles.csv"):
            assert (tmp_path / name).read_text() == HEADERS[name] + "\n"

    def test_duplicates_and_control_file(self, tmp_path):
        cfg = write_cfg(tmp_path, COARSE + "particles.n = 500\nparticles.xi0 = 0.8, 1.3, 0.8\n")
        assert main(["solve", "--config", cfg, "--out", str(tmp_path)]) == 0
        ctrl = tmp_path / "control.csv"
        assert main(["particles", "--config", cfg, "--out", str(tmp_path / "p"), "--control", str(ctrl)]) == 0
        _, cons = read(tmp_path / "p" / "consistency.csv")
        assert cons.shape == (3, 3)
        np.testing.assert_array_equal(cons[0, 1:], cons[2, 1:])
        _, parts = read(tmp_path / "p" / "particles.csv")
        assert parts.shape == (25 * 3, 4)
        _, gap = read(tmp_path / "p" / "density_gap.csv")
        assert gap.shape == (25, 2)

    def test_seed_flag_changes_samples(self, tmp_path):
        cfg = write_cfg(tmp_path, COARSE + "max_iter = 1\nparticles.n = 0\nparticles.samples = 4\n")
        main(["particles", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "1"])
        main(["particles", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "2"])
        main(["particles", "--config", cfg, "--out", str(tmp_path / "c"), "--seed", "1"])
        a, b, c = ((tmp_path / d / "consistency.csv").read_bytes() for d in "abc")
        assert a == c and a != b


class TestGradcheck:
    def test_zero_probes(self, tmp_path):
        cfg = write_cfg(tmp_path, COARSE + "gradcheck.probes = 0\n")
        assert main(["gradcheck", "--config", cfg, "--out", str(tmp_path)]) == 0
        assert (tmp_path / "gradcheck.csv").read_text() == HEADERS["gradcheck.csv"] + "\n"

    def test_decoupled_matches_closed_form(self, tmp_path):
        cfg = write_cfg(tmp_path, COARSE.replace("paper", "decoupled_leader") + "gradcheck.probes = 6\n")
        assert main(["gradcheck", "--config", cfg, "--out", str(tmp_path)]) == 0
        _, rows = read(tmp_path / "gradcheck.csv")
        t = np.linspace(0, 1, 25)[rows[:, 0].astype(int)]
        # beta = 1, v = t:  d = v_d - 2 v
        np.testing.assert_allclose(rows[:, 1], desired_control(t) - 2 * t, rtol=0, atol=1e-12)
        assert np.all(rows[:, 3] < 1e-6)

    def test_default_preset_coarse(self, tmp_path):
        assert main(["gradcheck", "--config", write_cfg(tmp_path, COARSE), "--out", str(tmp_path)]) == 0
        _, rows = read(tmp_path / "gradcheck.csv")
        assert rows.shape == (10, 4) and np.median(rows[:, 3]) < 0.05


class TestSweep:
    def test_single_point(self, tmp_path):
        cfg = write_cfg(tmp_path, COARSE + "max_iter = 2\n")
        assert main(["sweep", "--config", cfg, "--out", str(tmp_path)]) == 0
        header, rows = read(tmp_path / "sweep.csv")
        assert header == HEADERS["sweep.csv"] and rows.shape == (1, 6)
        assert not (tmp_path / "error.csv").exists()

    def test_grid_sweep_in_parallel_keeps_order(self, tmp_path):
        cfg = write_cfg(tmp_path, COARSE + "max_iter = 3\n")
        args = ["sweep", "--config", cfg, "--n-xi", "40,20,80", "--jobs", "3", "--out", str(tmp_path / "par")]
        assert main(args) == 0
        _, par = read(tmp_path / "par" / "sweep.csv")
        np.testing.assert_array_equal(par[:, 2], [40, 20, 80])
        _, err = read(tmp_path / "par" / "error.csv")
        np.testing.assert_array_equal(err[:, 0], [20, 40])
        args[-3:] = ["1", "--out", str(tmp_path / "seq")]
        assert main(args) == 0
        _, seq = read(tmp_path / "seq" / "sweep.csv")
        np.testing.assert_array_equal(par[:, :5], seq[:, :5])

    def test_beta_gamma_product(self, tmp_path):
        cfg = write_cfg(tmp_path, COARSE + "max_iter = 1\n")
        assert main(["sweep", "--config", cfg, "--beta", "0.5,2", "--gamma", "1,3", "--out", str(tmp_path)]) == 0
        _, rows = read(tmp_path / "sweep.csv")
        np.testing.assert_array_equal(rows[:, :2], [[0.5, 1], [0.5, 3], [2, 1], [2, 3]])

    def test_time_grid_sweep(self, tmp_path):
        cfg = write_cfg(tmp_path, COARSE + "max_iter = 2\n")
        assert main(["sweep", "--config", cfg, "--n-t", "10,20,40", "--out", str(tmp_path)]) == 0
        assert read(tmp_path / "sweep_nt.csv")[0] == "n_t,iterations,final_objective,wall_ms"
        header, err = read(tmp_path / "error_nt.csv")
        assert header == "n_t,l2_err_vs_finest" and err.shape == (2, 2)

    def test_bad_list_is_config_error(self, tmp_path):
        assert main(["sweep", "--n-xi", "10,abc", "--out", str(tmp_path)]) == 1


def test_module_entry_point(tmp_path):
    cfg = write_cfg(tmp_path, COARSE + "max_iter = 1\n")
    proc = subprocess.run([sys.executable, "-m", "mfstackelberg", "solve", "--config", cfg, "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "control.csv").exists()
