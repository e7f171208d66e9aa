"""Exit criteria for the whole package, runnable from pytest or ``georay validate``."""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .frames import ScalarField, derivative_vector, frame_from_matrix, metric_from_frame, random_rotation, rotate_frame
from .geodesic import ALPHA_FORM, CHRISTOFFEL, FORMS, compare_traces, convergence_study, trace
from .metric import builtin_metric
from .snell import snell_experiment
from .wavefront import (
    alpha_max,
    equal_increment_check,
    gradient_alignment_check,
    huygens_tangency_check,
    pair_turning_rate,
    trace_fan,
)

SEED = 20240611

LENS = {"amplitude": 0.5, "width": 1.0}


@dataclass
class Criterion:
    number: int
    name: str
    passed: bool = False
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number}. {self.name} ({self.seconds:.1f} s)"


def _timed(number: int, name: str, fn: Callable[[dict], bool]) -> Criterion:
    c = Criterion(number, name)
    t0 = time.perf_counter()
    c.passed = bool(fn(c.details))
    c.seconds = time.perf_counter() - t0
    return c


def analytic_oracles() -> Criterion:
    def run(d):
        sphere = builtin_metric("sphere")
        tr = trace(sphere, [math.pi / 2, 0.0], [0.0, 1.0], CHRISTOFFEL, 1e-3, max_S=math.pi)
        d["sphere_phi_error"] = abs(tr.x[-1, 1] - math.pi) + abs(tr.x[-1, 0] - math.pi / 2)
        hp = builtin_metric("poincare_half_plane")
        tr = trace(hp, [0.0, 1.0], [1.0, 0.0], CHRISTOFFEL, 1e-3, max_S=2.0)
        d["halfplane_circle_deviation"] = float(np.abs(np.hypot(tr.x[:, 0], tr.x[:, 1]) - 1).max())
        d["halfplane_S_end"] = float(tr.S[-1])
        return (d["sphere_phi_error"] <= 1e-6 and d["halfplane_circle_deviation"] <= 1e-5
                and abs(d["halfplane_S_end"] - 2.0) < 1e-12)

    return _timed(1, "Christoffel traces match closed-form geodesics", run)


ISOTROPIC_COMPARE = {
    "poincare_half_plane": ({}, [0.0, 1.0], [1.0, 0.0]),
    "isotropic_index": (LENS, [-1.5, 0.3], [1.0, 0.0]),
}


def formulations_agree() -> Criterion:
    def run(d):
        ok = True
        for name, (params, x0, u0) in ISOTROPIC_COMPARE.items():
            m = builtin_metric(name, params)
            a = trace(m, x0, u0, ALPHA_FORM, 1e-3, max_S=2.0)
            b = trace(m, x0, u0, CHRISTOFFEL, 1e-3, max_S=2.0)
            rep = compare_traces(a, b, S_max=2.0)
            d[name] = rep.as_dict()
            ok &= rep.max_distance <= 1e-5 and rep.max_angle <= 1e-4 and rep.S_hi >= 2.0 - 1e-12
        study = convergence_study(builtin_metric("poincare_half_plane"), [0.0, 1.0], [1.0, 0.0],
                                  [4e-3, 2e-3, 1e-3], max_S=2.0)
        orders = [r.order for r in study.rows[1:]]
        d["convergence_orders"] = orders
        d["convergence_verdict"] = study.verdict
        ok &= all(o is not None and o >= 3.5 for o in orders)
        return ok

    return _timed(2, "alpha form equals Christoffel form on isotropic metrics", run)


def snell_law() -> Criterion:
    def run(d):
        ok = True
        for form in FORMS:
            res, _ = snell_experiment(1.0, 1.5, 30.0, width=0.01, h=1e-4, form=form)
            d[form] = res.as_dict()
            ok &= res.error_deg <= 0.1
        d["expected_deg"] = math.degrees(math.asin(math.sin(math.radians(30)) / 1.5))
        return ok

    return _timed(3, "Snell refraction 1.0 -> 1.5 at 30 deg under both forms", run)


def pair_convergence_rate() -> Criterion:
    def run(d):
        hp = builtin_metric("poincare_half_plane")
        big = pair_turning_rate(hp, [0.0, 1.0], [1.0, 0.0], 1e-3, 1e-3)
        small = pair_turning_rate(hp, [0.0, 1.0], [1.0, 0.0], 5e-4, 5e-4)
        d.update(estimate=big.estimate, error=big.error, error_half=small.error,
                 ratio=small.error / big.error)
        return abs(big.estimate - 1.0) <= 2e-3 and small.error <= 0.6 * big.error

    return _timed(4, "pair turning rate converges to alpha'/alpha", run)


def random_spd(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Symmetric positive definite matrix with eigenvalues in [0.1, 10]."""
    q = random_rotation(dim, rng)
    return (q * rng.uniform(0.1, 10.0, dim)) @ q.T


def differential_coordinates(n_metrics: int = 100, n_rotations: int = 100, seed: int = SEED) -> Criterion:
    def run(d):
        rng = np.random.default_rng(seed)
        worst = dict(metric_roundtrip=0.0, displacement_roundtrip=0.0, gradient_square_rel=0.0,
                     dual_identity=0.0)
        for _ in range(n_metrics):
            dim = int(rng.integers(2, 6))
            rho = random_spd(dim, rng)
            fr = frame_from_matrix(rho)
            worst["metric_roundtrip"] = max(worst["metric_roundtrip"],
                                            float(np.abs(metric_from_frame(fr.A) - rho).max()))
            dx = rng.standard_normal(dim)
            worst["displacement_roundtrip"] = max(worst["displacement_roundtrip"],
                                                  float(np.abs(fr.to_x(fr.to_y(dx)) - dx).max()))
            worst["dual_identity"] = max(worst["dual_identity"],
                                         float(np.abs(fr.A_star.T @ rho @ fr.A_star - np.eye(dim)).max()))
            grad = rng.standard_normal(dim)
            f = ScalarField(lambda x, g=grad: float(g @ x), lambda x, g=grad: g)
            base = derivative_vector(f, fr)
            g0 = float(base @ base)
            for _ in range(n_rotations):
                v = derivative_vector(f, rotate_frame(fr, random_rotation(dim, rng)))
                worst["gradient_square_rel"] = max(worst["gradient_square_rel"], abs(v @ v - g0) / g0)
        d.update(worst)
        return (worst["metric_roundtrip"] <= 1e-10 and worst["displacement_roundtrip"] <= 1e-12
                and worst["gradient_square_rel"] <= 1e-10 and worst["dual_identity"] <= 1e-10)

    return _timed(5, "differential-coordinate identities over random metrics", run)


# (params, source, increment window, wavefront S for Huygens and alignment checks)
WAVEFRONT_SCENARIOS = {
    "euclidean": ({"dim": 2}, [0.0, 0.0], (0.25, 0.75), 0.5),
    "poincare_half_plane": ({}, [0.0, 1.0], (0.2, 0.8), 0.5),
    "isotropic_index": (LENS, [-3.0, 0.0], (0.5, 1.5), 1.0),
}
HUYGENS_DS = 0.02


def wavefront_properties(counts=(64, 128, 256), h: float = 1e-3) -> Criterion:
    def run(d):
        ok = True
        t0 = time.perf_counter()
        for name, (params, x0, (Sa, Sb), S) in WAVEFRONT_SCENARIOS.items():
            m = builtin_metric(name, params)
            max_S = max(Sb, S + HUYGENS_DS) + 0.05
            entry = d.setdefault(name, {})
            angles = []
            for c in counts:
                fan = trace_fan(m, x0, c, ALPHA_FORM, h, max_S=max_S)
                if c == counts[0]:
                    dev = equal_increment_check(fan, Sa, Sb)
                    bound = 4 * alpha_max(fan) * h
                    rep = huygens_tangency_check(fan, S, S + HUYGENS_DS)
                    entry.update(increment_deviation=dev, increment_bound=bound, huygens=rep.as_dict())
                    ok &= dev <= bound and rep.passed
                if name != "euclidean":
                    angles.append(gradient_alignment_check(fan, S))
            if angles:
                ratios = [b / a for a, b in zip(angles, angles[1:])]
                entry.update(alignment_angles=angles, alignment_ratios=ratios)
                ok &= all(r <= 0.7 for r in ratios)
        d["seconds"] = time.perf_counter() - t0
        return ok and d["seconds"] <= 120.0

    return _timed(6, "wavefront increments, Huygens tangency and gradient alignment", run)


SPHERE_EXPERIMENT = ([math.pi / 3, 0.0], [0.6, 0.8], [4e-3, 2e-3, 1e-3], 2.0)


def anisotropic_experiment() -> Criterion:
    def run(d):
        sphere = builtin_metric("sphere")
        x0, u0, steps, max_S = SPHERE_EXPERIMENT
        first = convergence_study(sphere, x0, u0, steps, max_S)
        second = convergence_study(sphere, x0, u0, steps, max_S)
        d["table"] = first.as_dict()
        d["verdict"] = first.verdict
        complete = len(first.rows) == len(steps) and first.verdict in ("exact", "converging", "plateau")
        return complete and first.as_dict() == second.as_dict()

    return _timed(7, "anisotropic sphere experiment runs deterministically", run)


DETERMINISM_SCENARIO = """\
metric = "poincare_half_plane"
start = [0.0, 1.0]
direction = [1.0, 0.0]
formulation = "both"
h = 0.002
max_S = 0.8
fan_count = 64
levels = [0.25, 0.5, 0.75]
huygens = [0.5, 0.52]
increment = [0.2, 0.7]
"""


def determinism() -> Criterion:
    from .cli import run as cli_run

    def outputs(workdir: Path, threads: int) -> dict:
        # same paths every time: reports echo argv
        workdir.mkdir()
        cfg = workdir / "scenario.toml"
        # threads go in the file so the echoed argv is the same for every run
        cfg.write_text(DETERMINISM_SCENARIO + f"threads = {threads}\n")
        files = {}
        for cmd in ("trace", "compare", "fan", "wavefront"):
            stem = workdir / cmd
            argv = [cmd, "--config", str(cfg), "--csv", f"{stem}.csv", "--report", f"{stem}.json"]
            if cmd in ("fan", "wavefront"):
                argv += ["--svg", f"{stem}.svg", "--formulation", "alpha_form"]
            code = cli_run(argv)
            if code != 0:
                raise RuntimeError(f"{cmd} exited with {code}")
        for p in sorted(workdir.iterdir()):
            if p.name != "scenario.toml":
                files[p.name] = p.read_bytes()
            p.unlink()
        workdir.rmdir()
        return files

    def run(d):
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            a = outputs(tmp / "run", 1)
            b = outputs(tmp / "run", 1)
            c = outputs(tmp / "run", 4)
        d["files"] = sorted(a)
        d["identical_runs"] = a == b
        d["identical_threads"] = a == c
        return bool(a) and a == b and a == c

    return _timed(8, "outputs byte-identical across runs and thread counts", run)


CRITERIA = {
    1: analytic_oracles,
    2: formulations_agree,
    3: snell_law,
    4: pair_convergence_rate,
    5: differential_coordinates,
    6: wavefront_properties,
    7: anisotropic_experiment,
    8: determinism,
}


def run_all(only=None, echo: Callable[[str], None] = print) -> list[Criterion]:
    results = []
    for number, fn in CRITERIA.items():
        if only and number not in only:
            continue
        try:
            c = fn()
        except Exception as exc:  # a crash is a failed criterion, reported with its cause
            c = Criterion(number, fn.__name__, False, {"error": f"{type(exc).__name__}: {exc}"})
        echo(c.line())
        results.append(c)
    return results
