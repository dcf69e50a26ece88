"""Named scenarios binding meshes, growth functions and verification plans.

Three presets cover the library's model cases:

* ``radial-oracle``     quartic power growth on an annulus with the radial
                        boundary data whose exact minimizer is r**(2/3);
* ``var-exp-example``   variable exponent 4*log(e/|x|) on the unit disk
                        (unbounded upper growth at the origin), solved by the
                        lambda-continuation scheme;
* ``double-phase-corollary``  t**3 + |x| t**3.5 on the unit disk, where the
                        exponent gap q/p = 7/6 stays below 1 + alpha/n = 3/2.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .conditions import (
    BallRegion,
    GrowthEnvelope,
    PointsRegion,
    ShapeRegion,
    caccioppoli_constant,
    check_a0,
    check_a1,
    check_growth,
)
from .mesh import build_from_descriptor
from .phi import SpatialField, phi_from_json
from .solve import ContinuationSchedule, SolverConfig
from .spaces import ScalarField

__all__ = ["ScenarioConfig", "PRESET_NAMES", "make_scenario", "run_check_scenario"]

PRESET_NAMES = ("radial-oracle", "var-exp-example", "double-phase-corollary")


@dataclass
class ScenarioConfig:
    name: str
    mesh: dict
    h: float
    phi: dict
    boundary: dict
    solver: dict = dc_field(default_factory=dict)
    schedule: Optional[dict] = None  # presence selects the continuation path
    trunc_p: Optional[float] = None
    p: float = 2.0
    q: Optional[float] = None  # None: certify a sampled upper exponent
    shift: object = 0.0  # "r" or a number; Harnack/Bloch shift convention
    verify: list = dc_field(default_factory=list)
    check_balls: list = dc_field(default_factory=list)
    out_dir: str = "out"

    def to_dict(self):
        return {
            "name": self.name,
            "mesh": self.mesh,
            "h": self.h,
            "phi": self.phi,
            "boundary": self.boundary,
            "solver": self.solver,
            "schedule": self.schedule,
            "trunc_p": self.trunc_p,
            "p": self.p,
            "q": self.q,
            "shift": self.shift,
            "verify": self.verify,
            "check_balls": self.check_balls,
            "out_dir": self.out_dir,
        }

    # --- realized objects -------------------------------------------------

    def build_domain(self):
        return build_from_descriptor({**self.mesh, "h": self.h})

    def build_phi(self):
        return phi_from_json(self.phi)

    def build_boundary(self, domain):
        rule = SpatialField.from_json(self.boundary)
        return ScalarField.from_rule(domain, rule)

    def build_solver_config(self):
        return SolverConfig(**self.solver)

    def build_schedule(self):
        if self.schedule is None:
            return None
        sc = dict(self.schedule)
        if "lambdas" in sc:
            lambdas = tuple(float(x) for x in sc["lambdas"])
        else:
            lam_max = float(sc.get("lambda_max", 2.0**30))
            lambdas, lam = [], 1.0
            while lam <= lam_max * (1 + 1e-12):
                lambdas.append(lam)
                lam *= 2.0
            lambdas = tuple(lambdas)
        cfg = SolverConfig(**{**{"grad_tolerance": 1e-10}, **self.solver})
        return ContinuationSchedule(
            lambdas=lambdas, stop_sup_diff=sc.get("stop_sup_diff"), config=cfg
        )

    def shift_value(self, r):
        return r if self.shift == "r" else float(self.shift)

    def rng_seed(self, *parts):
        key = "|".join([self.name, f"{self.h:.12e}", *map(str, parts)])
        return zlib.crc32(key.encode())


def make_scenario(name, h=1.0 / 64, r=0.125, lambda_max=None, overrides=None):
    """Instantiate a preset (or raise for unknown names)."""
    if name == "radial-oracle":
        cfg = ScenarioConfig(
            name=name,
            mesh={"shape": "annulus", "center": [0.0, 0.0], "r_in": 0.25, "r_out": 1.0},
            h=h,
            phi={"variant": "power", "p": 4.0, "scale": 1.0},
            boundary={"rule": "radial", "coef": 1.0, "power": 2.0 / 3.0, "offset": 0.0},
            solver={"grad_tolerance": 1e-10},
            schedule=None,
            p=4.0,
            q=4.0,
            shift="r",
            verify=_default_requests(center=(0.6, 0.0), r=r, cacc_R=0.25, osc_r=r / 2),
            check_balls=[{"center": [0.6, 0.0], "radius": 0.25}],
        )
    elif name == "var-exp-example":
        cfg = ScenarioConfig(
            name=name,
            mesh={"shape": "disk", "center": [0.0, 0.0], "radius": 1.0},
            h=h,
            phi={
                "variant": "variable-exponent",
                "p_field": {"rule": "log-exponent", "scale": 2.0, "n": 2.0},
                "scale": 1.0,
            },
            boundary={"rule": "affine", "a0": 2.0, "ax": 1.0, "ay": 0.0},
            solver={"grad_tolerance": 1e-10},
            schedule={"lambda_max": lambda_max or 2.0**30},
            trunc_p=4.0,
            p=4.0,
            q=None,
            shift="r",
            verify=_default_requests(center=(0.0, 0.0), r=r, cacc_R=None, osc_r=r),
            check_balls=[{"center": [0.0, 0.0], "radius": r} for r in (0.125, 0.25)],
        )
    elif name == "double-phase-corollary":
        cfg = ScenarioConfig(
            name=name,
            mesh={"shape": "disk", "center": [0.0, 0.0], "radius": 1.0},
            h=h,
            phi={
                "variant": "double-phase",
                "p": 3.0,
                "q": 3.5,
                "a_field": {"rule": "radial", "coef": 1.0, "power": 1.0, "offset": 0.0},
                "scale": 1.0,
            },
            boundary={"rule": "affine", "a0": 2.0, "ax": 1.0, "ay": 0.0},
            solver={"grad_tolerance": 1e-10},
            schedule=None,
            p=3.0,
            q=3.5,
            shift=0.0,
            verify=_default_requests(center=(0.0, 0.0), r=r, cacc_R=0.3, cacc_center=(0.3, 0.0), osc_r=r),
            check_balls=[{"center": [0.0, 0.0], "radius": r} for r in (0.125, 0.25)],
        )
    else:
        raise KeyError(f"unknown preset {name!r}; known: {PRESET_NAMES}")
    if lambda_max is not None and cfg.schedule is not None:
        cfg.schedule = {"lambda_max": float(lambda_max)}
    for k, v in (overrides or {}).items():
        if not hasattr(cfg, k):
            raise KeyError(f"unknown scenario field {k!r}")
        setattr(cfg, k, v)
    return cfg


def custom_scenario(spec):
    """Free-form scenario from explicit mesh/phi/boundary descriptors."""
    spec = dict(spec)
    mesh = dict(spec["mesh"])
    h = float(spec.get("h", mesh.pop("h", 1.0 / 64)))
    if "shape" not in mesh:
        raise KeyError("scenario.mesh needs a shape")
    if mesh["shape"] == "square":
        lo = np.asarray(mesh.get("lo", (0.0, 0.0)), dtype=float)
        size = float(mesh.get("size", 1.0))
        ball = {"center": (lo + size / 2).tolist(), "radius": size / 4}
    elif mesh["shape"] == "disk":
        ball = {"center": list(mesh.get("center", (0.0, 0.0))), "radius": mesh["radius"] / 2}
    else:
        mid = 0.5 * (mesh["r_in"] + mesh["r_out"])
        ball = {
            "center": [mid, 0.0],
            "radius": 0.25 * (mesh["r_out"] - mesh["r_in"]),
        }
    return ScenarioConfig(
        name=spec.get("name", "custom"),
        mesh=mesh,
        h=h,
        phi=dict(spec["phi"]),
        boundary=dict(spec["boundary"]),
        solver=dict(spec.get("solver", {})),
        schedule=spec.get("schedule"),
        trunc_p=spec.get("trunc_p"),
        p=float(spec.get("p", 2.0)),
        q=spec.get("q"),
        shift=spec.get("shift", 0.0),
        verify=list(spec.get("verify", [])),
        check_balls=list(spec.get("check_balls", [ball])),
        out_dir=spec.get("out_dir", "out"),
    )


def _default_requests(center, r, cacc_R, osc_r, cacc_center=None):
    reqs = [
        {"op": "harnack", "center": list(center), "r": r},
        {"op": "bloch", "center": list(center), "r": 0.25, "exponent": 2.0},
        {"op": "oscillation", "center": list(center), "r": osc_r, "p": 2.0},
        {
            "op": "monotonicity",
            "subdomains": [
                {"type": "ball", "center": list(center), "r": 2 * r},
            ],
        },
        {"op": "residual", "n_tests": 100},
    ]
    if cacc_R is not None:
        reqs.append(
            {
                "op": "caccioppoli",
                "center": list(cacc_center or center),
                "R": cacc_R,
                "sigma": 0.5,
                "ell": 1.0,
            }
        )
    return reqs


def run_check_scenario(cfg, n_region=256):
    """Certify the scenario's growth/normalization conditions.

    Returns (envelope-or-None, report dict).  The upper exponent for
    scenarios with unbounded growth is the sampled maximum of the exponent
    field over the region (an honest sampled certificate, not a proof).
    """
    phi = cfg.build_phi()
    region = ShapeRegion(cfg.mesh, n=n_region)
    pts = region.points()
    p = cfg.p
    if cfg.q is not None:
        q = cfg.q
    else:
        exp_field = SpatialField.from_json(cfg.phi["p_field"])
        q = float(np.max(exp_field(pts)))
    growth = check_growth(phi, PointsRegion(pts), p, q)
    a0 = check_a0(phi, PointsRegion(pts))
    report = {"p": p, "q": q, "growth": growth.to_json(), "a0": a0.to_json(), "a1": []}
    if not (growth.ok and a0.ok):
        return None, report
    K = caccioppoli_constant(
        p=p, q=q, L_p=growth.L_p, L_q=growth.L_q, s=q, ell=1.0, sigma=0.5, p1=p
    )
    report["K"] = K
    beta_a1 = 1.0
    ok = True
    for ball in cfg.check_balls:
        res = check_a1(phi, BallRegion(ball["center"], ball["radius"]), K=max(K, 1.0))
        report["a1"].append({**ball, **res.to_json()})
        ok &= res.ok
        if res.ok and res.beta is not None:
            beta_a1 = min(beta_a1, res.beta)
    if not ok:
        return None, report
    env = GrowthEnvelope(
        p=p,
        q=q,
        L_p=growth.L_p,
        L_q=growth.L_q,
        beta_a0=a0.beta,
        beta_a1=beta_a1,
        region=region.describe(),
    )
    report["envelope"] = env.to_json()
    return env, report
