import json
import sys
import warnings
from pathlib import Path

import numpy as np
import pytest

from mhdgn import cli, harness
from mhdgn.io import read_mgn1

sys.path.insert(0, str(Path(__file__).parent / "golden"))
import make_golden  # noqa: E402

GOLDEN = Path(__file__).parent / "golden"

RUN_1D = """
[run]
model = gn1d
name = hump
t_end = 0.5
output_every = 0.25
format = both
[params]
mu = 0.1
eps = 0.2
beta = 0.3
[grid]
nx = 64
[bathymetry]
kind = gaussian
[initial]
kind = hump
"""


class TestConfig:
    def test_defaults(self):
        cfg = harness.parse_config("[run]\nmodel = gn1d\n")
        assert cfg.get("scheme", "limiter") == "tvb"
        assert cfg.get("grid", "nx") == 64

    @pytest.mark.parametrize("text,needle", [
        ("[run]\nmodel = gn1d\nt_ned = 1\n", "run.t_ned"),
        ("[run]\nmodel = gn1d\n[params]\nmu = abc\n", "params.mu"),
        ("[run]\nmodel = gn3d\n", "run.model"),
        ("[run]\nmodel = gn1d\n[grid]\nnx = 0\n", "grid.nx"),
        ("[run]\nmodel = gn1d\nt_end = -1\n", "run.t_end"),
        ("[run]\nname = x\n", "run.model"),
        ("[run]\nmodel = gn1d\n[solver]\nx = 1\n", "solver"),
    ])
    def test_errors_name_the_key(self, text, needle):
        with pytest.raises(harness.ConfigError, match=needle.replace(".", r"\.")):
            harness.parse_config(text)

    def test_negative_param(self):
        cfg = harness.parse_config("[run]\nmodel = gn1d\n[params]\nmu = -1\n")
        with pytest.raises(harness.ConfigError):
            cfg.params()

    def test_lists(self):
        cfg = harness.parse_config("[run]\nmodel = gn1d\n[converge]\nresolutions = 16, 32 64\n")
        assert cfg.get("converge", "resolutions") == [16, 32, 64]

    def test_seeded_random_fields(self):
        g = harness.Grid2D(16, 16)
        a = harness.smooth_random_field(np.random.Generator(np.random.PCG64(3)), g)
        b = harness.smooth_random_field(np.random.Generator(np.random.PCG64(3)), g)
        np.testing.assert_array_equal(a, b)
        assert np.max(np.abs(a)) == pytest.approx(1.0)


class TestDrivers:
    def test_slope(self):
        assert harness.fit_slope([1, 2, 4], [1, 4, 16]) == pytest.approx(2.0)

    def test_convergence_driver(self):
        out = harness.convergence_driver(lambda n: {"e": n ** -2.0}, [8, 16, 32])
        assert out["orders"]["e"] == pytest.approx(2.0)

    @pytest.mark.parametrize("res", [[8, 16], [8, 16, 24], [8, 8, 16]])
    def test_convergence_rejects_resolutions(self, res):
        with pytest.raises(ValueError):
            harness.convergence_driver(lambda n: {"e": 1.0 / n}, res)

    def test_non_monotone_warns(self):
        with pytest.warns(harness.NonMonotoneErrors):
            harness.convergence_driver(lambda n: {"e": 1.0 if n == 16 else 0.5}, [8, 16, 32])

    def test_mu_sweep_statuses(self):
        mus = [1e-2, 3e-3, 1e-3, 3e-4]
        out = harness.mu_sweep_driver(lambda mu: {"a": mu**2, "b": mu, "c": 0.0, "d": 1e-16 * mu**0.3}, mus)
        assert out["status"] == {"a": "pass", "b": "fail", "c": "N/A", "d": "floor"}

    def test_mu_sweep_needs_range(self):
        with pytest.raises(ValueError):
            harness.mu_sweep_driver(lambda mu: {"a": mu}, [1e-2, 9e-3, 8e-3, 7e-3])

    def test_advection_study_second_order(self):
        out = harness.convergence_driver(harness.advection_errors, [32, 64, 128])
        assert out["orders"]["R"] > 1.9


class TestRun:
    def test_run_writes_outputs(self, tmp_path):
        cfg = harness.parse_config(RUN_1D)
        summary = harness.run_simulation(cfg)
        out = Path(harness.output_dir("hump"))
        assert (out / "summary.json").exists()
        assert json.loads((out / "summary.json").read_text())["steps"] == summary["steps"]
        assert len(list(out.glob("snap_*.mgn1"))) == 3
        assert len(list(out.glob("snap_*.csv"))) == 3
        assert summary["mass_drift"] < 1e-12
        lines = (out / "diagnostics.csv").read_text().splitlines()
        assert lines[0].startswith("t,mass,energy")

    def test_rest_residual_2d(self):
        cfg = harness.parse_config("""
[run]
model = gn2d
t_end = 0.2
format = none
[params]
mu = 0.05
beta = 0.3
[grid]
nx = 16
ny = 16
[bathymetry]
kind = gaussian
""")
        assert harness.run_simulation(cfg)["rest_residual"] == 0.0

    def test_swmhd2d_magnetic(self):
        cfg = harness.parse_config("""
[run]
model = swmhd2d
t_end = 0.2
format = none
seed = 7
[grid]
nx = 16
ny = 16
[initial]
kind = random
magnetic = 0.2
""")
        assert harness.run_simulation(cfg)["constraint_norm_max"] < 1e-12


class TestCLI:
    def _write(self, tmp_path, text, name="c.ini"):
        p = tmp_path / name
        p.write_text(text)
        return str(p)

    def test_run_and_dump(self, tmp_path, capsys):
        assert cli.main(["run", self._write(tmp_path, RUN_1D)]) == 0
        snap = Path(harness.output_dir("hump")) / "snap_0001.mgn1"
        capsys.readouterr()
        assert cli.main(["snapshot-dump", str(snap)]) == 0
        assert "t = 0.25" in capsys.readouterr().out

    def test_config_error_exit_2(self, tmp_path, capsys):
        assert cli.main(["run", self._write(tmp_path, "[run]\nmodel = gn1d\nbogus = 1\n")]) == 2
        assert "run.bogus" in capsys.readouterr().err

    def test_missing_file_exit_2(self, tmp_path):
        assert cli.main(["run", str(tmp_path / "nope.ini")]) == 2

    def test_solver_error_exit_1(self, tmp_path):
        text = "[run]\nmodel = gn1d\nformat = none\n[params]\neps = 20\n[initial]\nkind = hump\namplitude = -1\n"
        assert cli.main(["run", self._write(tmp_path, text)]) == 1

    def test_converge(self, tmp_path, capsys):
        text = "[run]\nmodel = gn1d\n[converge]\nscenario = advection\nresolutions = 32 64 128\n"
        assert cli.main(["converge", self._write(tmp_path, text)]) == 0
        assert json.loads(capsys.readouterr().out)["orders"]["R"] > 1.9

    def test_musweep(self, tmp_path, capsys):
        text = "[run]\nmodel = residual-sweep\n[grid]\nnx = 64\nny = 4\nnsigma = 16\n[musweep]\nscenario = zero\n"
        assert cli.main(["musweep", self._write(tmp_path, text)]) == 0
        out = json.loads(capsys.readouterr().out)
        assert set(out["status"].values()) == {"N/A"}


class TestGolden:
    @pytest.mark.parametrize("mu", [0.0, 0.1])
    def test_solitary_hump(self, mu):
        ref, t = read_mgn1(GOLDEN / f"hump_mu{mu:g}.mgn1")
        s = make_golden.hump(mu)
        assert s.t == t
        np.testing.assert_allclose(s.xi, ref["xi"], atol=1e-10)
        np.testing.assert_allclose(s.u_bar, ref["u"], atol=1e-10)

    def test_dispersion_changes_the_hump(self):
        a, _ = read_mgn1(GOLDEN / "hump_mu0.mgn1")
        b, _ = read_mgn1(GOLDEN / "hump_mu0.1.mgn1")
        assert np.max(np.abs(a["xi"] - b["xi"])) > 1e-2
        # dispersion lowers the leading crest
        assert b["xi"].max() < a["xi"].max()
