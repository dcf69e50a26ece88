"""Shared fixtures: the expensive preset solves are done once per session."""

import numpy as np
import pytest

import orliczmin as om
from orliczmin.presets import make_scenario, run_check_scenario


class PresetRun:
    def __init__(self, cfg, env, domain, phi, f, u, report):
        self.cfg = cfg
        self.env = env
        self.domain = domain
        self.phi = phi
        self.f = f
        self.u = u
        self.report = report


def _run_preset(name, h, solver=None, schedule_overrides=None, keep_stage_fields=False):
    cfg = make_scenario(name, h=h)
    if solver:
        cfg.solver = {**cfg.solver, **solver}
    env, _ = run_check_scenario(cfg)
    assert env is not None, f"condition check failed for {name}"
    domain = cfg.build_domain()
    phi = cfg.build_phi()
    f = cfg.build_boundary(domain)
    problem = om.DirichletProblem(domain, phi, f, envelope=env)
    if cfg.schedule is not None:
        sched = cfg.build_schedule()
        if schedule_overrides:
            for k, v in schedule_overrides.items():
                setattr(sched, k, v)
        u, rep = om.solve_nondoubling(
            problem, sched, trunc_p=cfg.trunc_p, keep_stage_fields=keep_stage_fields
        )
    else:
        u, rep = om.solve(problem, cfg.build_solver_config())
    return PresetRun(cfg, env, domain, phi, f, u, rep)


TIGHT = {"grad_tolerance": 1e-12, "energy_rel_tolerance": 1e-30, "max_iterations": 60000}


@pytest.fixture(scope="session")
def radial_64():
    return _run_preset("radial-oracle", h=1 / 64, solver=TIGHT)


@pytest.fixture(scope="session")
def radial_128():
    return _run_preset(
        "radial-oracle",
        h=1 / 128,
        solver={"grad_tolerance": 1e-9, "energy_rel_tolerance": 1e-30, "max_iterations": 60000},
    )


@pytest.fixture(scope="session")
def varexp_32():
    return _run_preset(
        "var-exp-example",
        h=1 / 32,
        solver={"grad_tolerance": 1e-10, "energy_rel_tolerance": 1e-30},
        keep_stage_fields=True,
    )


@pytest.fixture(scope="session")
def varexp_64():
    return _run_preset(
        "var-exp-example",
        h=1 / 64,
        solver={"grad_tolerance": 1e-10, "energy_rel_tolerance": 1e-30},
        keep_stage_fields=True,
    )


@pytest.fixture(scope="session")
def doublephase_32():
    return _run_preset("double-phase-corollary", h=1 / 32, solver=TIGHT)


@pytest.fixture(scope="session")
def doublephase_64():
    return _run_preset("double-phase-corollary", h=1 / 64, solver=TIGHT)


def sup_err_vs_radial(run):
    exact = np.hypot(*run.domain.vertices.T) ** (2.0 / 3.0)
    return float(np.max(np.abs(run.u.values - exact)) / np.max(np.abs(exact)))
