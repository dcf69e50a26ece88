"""Scenario runner: configs, exit codes, artifacts, sweeps."""

import json
import os

import numpy as np
import pytest

import orliczmin as om
from orliczmin.cli import main
from orliczmin.presets import make_scenario, run_check_scenario


def write(path, text):
    with open(path, "w") as f:
        f.write(text)


def radial_toml(out_dir, h=0.0625, extra=""):
    return f"""
out_dir = "{out_dir}"

[scenario]
preset = "radial-oracle"
h = {h}
r = 0.125

[solver]
grad_tolerance = 1e-11
energy_rel_tolerance = 1e-30
{extra}
"""


class TestConfig:
    def test_missing_file(self, tmp_path):
        assert main(["solve", str(tmp_path / "nope.toml")]) == 2

    def test_unknown_preset(self, tmp_path):
        p = tmp_path / "c.toml"
        write(p, '[scenario]\npreset = "nope"\n')
        assert main(["check", str(p)]) == 2

    def test_unknown_solver_key(self, tmp_path):
        p = tmp_path / "c.toml"
        write(p, '[scenario]\npreset = "radial-oracle"\n[solver]\nbogus = 1\n')
        assert main(["check", str(p)]) == 2

    def test_json_config_accepted(self, tmp_path):
        p = tmp_path / "c.json"
        cfg = {"scenario": {"preset": "radial-oracle", "h": 0.125}, "out_dir": str(tmp_path / "o")}
        write(p, json.dumps(cfg))
        assert main(["check", str(p)]) == 0


class TestCheck:
    def test_radial_trivial_certificates(self, tmp_path):
        p = tmp_path / "c.toml"
        write(p, radial_toml(str(tmp_path / "out"), h=0.125))
        assert main(["check", str(p)]) == 0
        report = json.load(open(tmp_path / "out" / "radial-oracle-h0.125-check.json"))
        env = report["envelope"]
        assert env["p"] == 4.0 and env["q"] == 4.0
        assert env["L_p"] == 1.0 and env["L_q"] == 1.0
        assert env["beta_a0"] == 1.0 and env["beta_a1"] == 1.0
        assert "config_hash" in report

    def test_double_phase_passes(self, tmp_path):
        p = tmp_path / "c.toml"
        write(
            p,
            f'out_dir = "{tmp_path / "out"}"\n[scenario]\npreset = "double-phase-corollary"\nh = 0.125\n',
        )
        assert main(["check", str(p)]) == 0
        report = json.load(open(tmp_path / "out" / "double-phase-corollary-h0.125-check.json"))
        assert all(entry["ok"] for entry in report["a1"])

    def test_a1_failure_witness_emitted(self):
        # strongly violated exponent relation: the certificate degenerates
        from orliczmin.conditions import BallRegion, check_a1

        phi = om.DoublePhasePhi(2.0, 8.0, om.SpatialField.from_rule("radial"))
        res = check_a1(phi, BallRegion((0.0, 0.0), 2.0**-34), K=2.0)
        assert not res.ok and res.witness is not None


class TestSolveVerify:
    def test_pipeline_artifacts_and_exit_codes(self, tmp_path):
        cfgp = tmp_path / "c.toml"
        out = tmp_path / "out"
        write(cfgp, radial_toml(str(out)))
        assert main(["solve", str(cfgp)]) == 0
        field = out / "radial-oracle-h0.0625-field.csv"
        report = json.loads((out / "radial-oracle-h0.0625-solve.json").read_text())
        assert field.exists() and report["converged"]
        assert "config_hash" in report
        first = field.read_text().splitlines()[0]
        assert first.startswith("# config_hash=")
        # verification passes on the computed minimizer
        assert main(["verify", str(cfgp), str(field)]) == 0
        vrep = json.loads((out / "radial-oracle-h0.0625-verify.json").read_text())
        assert vrep["passed"]
        assert vrep["caccioppoli"]["lhs"] <= vrep["caccioppoli"]["rhs"]

    def test_field_mesh_mismatch_is_config_error(self, tmp_path):
        cfgp = tmp_path / "c.toml"
        out = tmp_path / "out"
        write(cfgp, radial_toml(str(out)))
        assert main(["solve", str(cfgp)]) == 0
        other = tmp_path / "other.toml"
        write(other, radial_toml(str(out), h=0.125))
        rc = main(["verify", str(other), str(out / "radial-oracle-h0.0625-field.csv")])
        assert rc == 2

    def test_nonconvergence_exit_three_with_artifacts(self, tmp_path):
        cfgp = tmp_path / "c.toml"
        out = tmp_path / "out"
        write(
            cfgp,
            radial_toml(str(out), extra="max_iterations = 2\n"),
        )
        assert main(["solve", str(cfgp)]) == 3
        assert (out / "radial-oracle-h0.0625-field.csv").exists()
        assert (out / "radial-oracle-h0.0625-solve.json").exists()

    def test_constant_field_verification_trivial_pass(self):
        from orliczmin.cli import run_verify_requests

        cfg = make_scenario("radial-oracle", h=1 / 16)
        cfg.boundary = {"rule": "constant", "value": 2.0}
        env, _ = run_check_scenario(cfg)
        dom = cfg.build_domain()
        phi = cfg.build_phi()
        f = cfg.build_boundary(dom)
        u, _ = om.solve(om.DirichletProblem(dom, phi, f, envelope=env))
        rep = run_verify_requests(cfg, dom, phi, u, env)
        assert rep.passed
        assert rep.harnack_quotient == 1.0
        assert rep.bloch_integral == 0.0
        assert rep.caccioppoli.lhs == 0.0
        assert rep.residual_min == 0.0

    def test_constant_boundary_gives_zero_energy(self):
        cfg = make_scenario("radial-oracle", h=1 / 8)
        cfg.boundary = {"rule": "constant", "value": 2.0}
        env, _ = run_check_scenario(cfg)
        dom = cfg.build_domain()
        f = cfg.build_boundary(dom)
        u, rep = om.solve(om.DirichletProblem(dom, cfg.build_phi(), f, envelope=env))
        assert rep.final_energy == 0.0
        assert np.array_equal(u.values, f.values)

    def test_custom_scenario_config(self, tmp_path):
        cfgp = tmp_path / "c.toml"
        out = tmp_path / "out"
        write(
            cfgp,
            f"""
out_dir = "{out}"

[scenario]
name = "custom-square"
h = 0.0625
p = 4.0
q = 4.0

[scenario.mesh]
shape = "square"
size = 1.0

[scenario.phi]
variant = "power"
p = 4.0

[scenario.boundary]
rule = "affine"
a0 = 1.0
ax = 2.0
""",
        )
        assert main(["check", str(cfgp)]) == 0
        assert main(["solve", str(cfgp)]) == 0
        report = json.loads((out / "custom-square-h0.0625-solve.json").read_text())
        # affine data on an x-independent energy: the interpolant wins
        assert report["final_energy"] == pytest.approx(2.0**4, rel=1e-12)

    def test_varexp_verify_reports_exponent_ratio(self, tmp_path):
        cfgp = tmp_path / "c.toml"
        out = tmp_path / "out"
        write(
            cfgp,
            f"""
out_dir = "{out}"

[scenario]
preset = "var-exp-example"
h = 0.125
r = 0.125
""",
        )
        assert main(["solve", str(cfgp)]) == 0
        field = out / "var-exp-example-h0.125-field.csv"
        main(["verify", str(cfgp), str(field)])
        vrep = json.loads((out / "var-exp-example-h0.125-verify.json").read_text())
        entry = vrep["extras"]["harnack"][0]
        r = entry["r"]
        expect = (1 + np.log(2) + np.log(1 / r)) / (np.log(2) + np.log(1 / r))
        assert entry["exponent_ratio"] == pytest.approx(expect, rel=1e-12)
        assert entry["shift"] == r

    def test_flag_overrides(self, tmp_path):
        cfgp = tmp_path / "c.toml"
        out = tmp_path / "o2"
        write(cfgp, radial_toml(str(tmp_path / "ignored"), h=0.0625))
        assert main(["check", str(cfgp), "--h", "0.125", "--out-dir", str(out)]) == 0
        assert (out / "radial-oracle-h0.125-check.json").exists()


class TestSweep:
    def _sweep_cfg(self, out_dir):
        return f"""
out_dir = "{out_dir}"

[sweep]
presets = ["radial-oracle"]
h = [0.125]
r = [0.125, 0.0625]
"""

    def test_rows_and_determinism(self, tmp_path):
        c1 = tmp_path / "s1.toml"
        write(c1, self._sweep_cfg(str(tmp_path / "a")))
        c2 = tmp_path / "s2.toml"
        write(c2, self._sweep_cfg(str(tmp_path / "b")))
        assert main(["sweep", str(c1)]) == 0
        assert main(["sweep", str(c2)]) == 0
        a = (tmp_path / "a" / "sweep.csv").read_bytes()
        b = (tmp_path / "b" / "sweep.csv").read_bytes()
        assert a == b
        lines = a.decode().splitlines()
        assert lines[0].startswith("# config_hash=")
        assert lines[1].startswith("scenario,h,r,lambda_max")
        assert len(lines) == 2 + 2  # hash, header, two rows

    def test_resume_skips_existing(self, tmp_path):
        c = tmp_path / "s.toml"
        write(c, self._sweep_cfg(str(tmp_path / "a")))
        assert main(["sweep", str(c)]) == 0
        first = (tmp_path / "a" / "sweep.csv").read_bytes()
        t0 = os.path.getmtime(tmp_path / "a" / "sweep.csv")
        assert main(["sweep", str(c)]) == 0
        assert (tmp_path / "a" / "sweep.csv").read_bytes() == first
        # timings sidecar shows zero new computations
        timings = (tmp_path / "a" / "sweep_timings.csv").read_text().splitlines()
        assert len(timings) == 1  # header only on the resumed run

    def test_lambda_max_sweep_energies_non_increasing(self, tmp_path):
        # deeper truncation schedules cannot increase the reached energy
        c = tmp_path / "s.toml"
        write(
            c,
            f"""
out_dir = "{tmp_path / "a"}"

[sweep]
presets = ["var-exp-example"]
h = [0.125]
r = [0.125]
lambda_max = [16.0, 256.0, 4096.0]
""",
        )
        assert main(["sweep", str(c)]) == 0
        rows = (tmp_path / "a" / "sweep.csv").read_text().splitlines()[2:]
        assert len(rows) == 3
        energies = [float(r.split(",")[7]) for r in rows]
        assert all(e2 <= e1 * (1 + 1e-9) for e1, e2 in zip(energies, energies[1:]))

    def test_failed_row_is_recorded(self, tmp_path):
        c = tmp_path / "s.toml"
        write(
            c,
            f'out_dir = "{tmp_path / "a"}"\n[sweep]\npresets = ["radial-oracle"]\nh = [0.125]\nr = [-1.0]\n',
        )
        assert main(["sweep", str(c)]) == 0
        rows = (tmp_path / "a" / "sweep.csv").read_text().splitlines()[2:]
        assert len(rows) == 1
        assert rows[0].split(",")[-1] != ""
