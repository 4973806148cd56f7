"""Runners behind ``salemlab run``: one function per experiment kind.

A runner takes an :class:`ExperimentConfig` and returns an :class:`Outcome`
holding one JSON-ready line per trial (in trial order), aggregated checks
and soft warnings.  Trials go through a thread pool sized by
``SALEMLAB_THREADS``; results are collected by trial index, so the output
does not depend on the pool size.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import rng
from .calibration import load_calibration
from .concentration import branch_continuity, monte_carlo_tail, small_summation_grid
from .config import ExperimentConfig
from .errors import DomainError
from .grid import AtomicMeasure, TorusGrid, dft
from .regularity import ModulusPsi, b_rho_blocks, energy_spectral
from .restriction import (RestrictionInstance, annulus_multiplier_check, comb_measure, estimate_Ap,
                          multiplier_sweep, restriction_check)
from .sampler import SampleConfig, fourier_threshold, floor_power, run_trials, worker_count
from .transference import (approximation_step, build_F_m, support_cover, trig_polynomial,
                           verify_Fm_properties)


@dataclass
class Check:
    name: str
    tag: str
    hard: bool
    trials: int
    passed: int
    observed: float
    threshold: float
    ok: bool

    def row(self):
        return {"check": self.name, "tag": self.tag, "hard": int(self.hard), "trials": self.trials,
                "passed": self.passed, "observed": self.observed, "threshold": self.threshold,
                "ok": int(self.ok)}


@dataclass
class Outcome:
    lines: list
    checks: list
    warnings: list = field(default_factory=list)
    manifest_extra: dict = field(default_factory=dict)

    @property
    def hard_ok(self):
        return all(c.ok for c in self.checks if c.hard)

    @property
    def soft_ok(self):
        return all(c.ok for c in self.checks if not c.hard) and not self.warnings

    @property
    def exit_code(self):
        if not self.hard_ok:
            return 1
        return 0 if self.soft_ok else 2


def _clean(x):
    """JSON-stable scalars and containers."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, Fraction):
        return float(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    return x


def _ordered_map(fn, count):
    n = worker_count()
    if n == 1:
        return [fn(t) for t in range(count)]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, range(count)))


def _collect(name, tag, hard, pairs, lower_is_better=True):
    """Aggregate ``(observed, threshold, ok)`` triples into one check."""
    pairs = list(pairs)
    obs = [p[0] for p in pairs]
    worst = max(obs) if lower_is_better else min(obs)
    thr = pairs[obs.index(worst)][1]
    passed = sum(bool(p[2]) for p in pairs)
    return Check(name, tag, hard, len(pairs), passed, float(worst), float(thr), passed == len(pairs))


def _random_measure(N, d, atoms, seed):
    pts = rng.uniform_integers(seed, atoms, N ** d)
    return AtomicMeasure.from_points(TorusGrid(d, N), np.stack(np.unravel_index(pts, (N,) * d), axis=1))


# sample-certify

def _events(p):
    out = []
    for name in p["events"]:
        if name == "fourier_decay":
            out.append({"event": name})
        elif name in ("cube_fixed", "cube_log", "point_mass"):
            for ell in p["ells"]:
                ev = {"event": name, "ell": ell}
                if name == "cube_fixed":
                    ev["epsilon"] = p["epsilon"]
                out.append(ev)
        elif name == "uniformity":
            out.append({"event": name, "ell": p["ell_max"], "kappa": p["kappa"]})
        elif name == "point_masses":
            out.append({"event": name})
        else:
            raise DomainError(f"unknown event {name!r}")
    return out


def run_sample_certify(cfg: ExperimentConfig) -> Outcome:
    p = cfg.params
    grid = TorusGrid(p["d"], p["N"])
    sc = SampleConfig(grid, p["beta"], cfg.seed, cfg.trials, p["h"], p["ell_max"], p["atoms"] or None)
    agg = run_trials(sc, _events(p))
    by_trial = {}
    for r in agg.reports:
        by_trial.setdefault(r.trial, []).append(r.to_dict())
    lines = [{"trial": t, "seed": rep[0]["seed"], "reports": rep} for t, rep in sorted(by_trial.items())]
    checks = [Check(name, s["tag"], True, s["trials"], s["passed"], float(s["worst_observed"]),
                    float(s["threshold"]), bool(s["hard_ok"])) for name, s in agg.events.items()]
    extra = {"witness": agg.witness, "calibration": load_calibration()["constants"], "atoms": sc.P}
    return Outcome([_clean(x) for x in lines], checks, agg.warnings, _clean(extra))


# transfer

def run_transfer(cfg: ExperimentConfig) -> Outcome:
    p = cfg.params
    m, k = p["m"], p["k"]
    N, per = m ** k, 2 * p["m"] + 1
    P = floor_power(N, p["beta"])
    R = 2 * N * per * p["R_factor"]
    psi = ModulusPsi()

    def trial(t):
        seed = rng.trial_seed(cfg.seed, t)
        atoms = rng.uniform_integers(seed, P, N).reshape(-1, 1)
        mu = AtomicMeasure.from_points(TorusGrid(1, N), atoms)
        Fc = build_F_m(mu, m, k, R, p["alpha"], p["beta"], p["n_max"])
        cover = support_cover(Fc, atoms)
        props = verify_Fm_properties(Fc, p["alpha"], p["beta"], psi, p["eta"], p["n_max"], p["cube_sides"])
        return {"trial": t, "seed": seed, "mean": Fc.F.mean, "support": cover, "properties": props}

    lines = _ordered_map(trial, cfg.trials)
    checks = [
        _collect("mean", "fm-mean", True, ((abs(x["mean"] - 1), 1e-12, abs(x["mean"] - 1) <= 1e-12) for x in lines)),
        _collect("support_cover", "fm-support", True,
                 ((float(not x["support"]["covered"]), 0.0, x["support"]["covered"]) for x in lines)),
        _collect("rectangles", "fm-rectangle-bound", True,
                 ((x["properties"]["rectangles"]["observed"], 1 + p["eta"], x["properties"]["rectangles"]["passed"])
                  for x in lines)),
        _collect("fourier_decay", "fm-fourier-decay", False,
                 ((x["properties"]["fourier_decay"]["observed"], p["eta"], x["properties"]["fourier_decay"]["passed"])
                  for x in lines)),
        _collect("small_cubes", "fm-small-cubes", False,
                 ((x["properties"]["small_cubes"]["observed"], 1.0, x["properties"]["small_cubes"]["passed"])
                  for x in lines)),
    ]
    hold = [(h["observed"], p["eta"], h["passed"]) for x in lines for h in x["properties"]["holder"].values()]
    if hold:
        checks.append(_collect("holder", "fm-holder", False, hold))
    warnings = sorted({w for x in lines for w in x["properties"]["warnings"]})
    return Outcome([_clean(x) for x in lines], checks, warnings, {"atoms": P, "R": R})


# approx-step

def run_approx_step(cfg: ExperimentConfig) -> Outcome:
    p = cfg.params
    psi = ModulusPsi()
    k = p["k"]

    def trial(t):
        seed = rng.trial_seed(cfg.seed, t)
        rows = []
        for m in p["ms"]:
            N, per = m ** k, 2 * m + 1
            P = floor_power(N, p["beta"])
            mu = AtomicMeasure.from_points(TorusGrid(1, N), rng.uniform_integers(seed, P, N).reshape(-1, 1))
            R = 2 * N * per * p["R_factor"]
            Fc = build_F_m(mu, m, k, R)
            g = trig_polynomial({(0,): 1.0, (1,): p["amplitude"] / 2}, R)
            mc = approximation_step(g, Fc, psi, p["alpha"], p["n_max"], p["net_spacing"], degree=1)
            rows.append({"m": m, "R": R, **mc.to_dict()})
        return {"trial": t, "seed": seed, "components": rows}

    lines = [_clean(x) for x in _ordered_map(trial, cfg.trials)]

    def finite(row):
        vals = [row["hausdorff"], row["zero_coefficient"], row["fourier"], *row["holder"].values()]
        return all(isinstance(v, float) and math.isfinite(v) for v in vals)

    checks = [_collect("finite_components", "approximation-metric", True,
                       ((0.0 if finite(r) else 1.0, 0.0, finite(r)) for x in lines for r in x["components"]))]
    means = [float(np.mean([x["components"][i]["fourier"] for x in lines])) for i in range(len(p["ms"]))]
    steps = [b - a for a, b in zip(means, means[1:])]
    mono = all(s < 0 for s in steps)
    checks.append(Check("fourier_decreasing", "approximation-trend", False, 1, int(mono),
                        max(steps) if steps else 0.0, 0.0, mono))
    return Outcome(lines, checks, [], {"mean_fourier": means})


# restrict

def run_restrict(cfg: ExperimentConfig) -> Outcome:
    p = cfg.params
    N, d = p["N"], p["d"]

    def trial(t):
        seed = rng.trial_seed(cfg.seed, t)
        mu = _random_measure(N, d, p["atoms"], seed)
        gen = np.random.default_rng(np.random.SeedSequence([cfg.seed, t]))
        rows = []
        for _ in range(p["instances"]):
            g = gen.standard_normal((N,) * d) + 1j * gen.standard_normal((N,) * d)
            for n in p["orders"]:
                lhs, rhs, ratio = restriction_check(RestrictionInstance(mu, g, n))
                rows.append({"n": n, "lhs": lhs, "rhs": rhs, "ratio": ratio})
        ap = [estimate_Ap(mu, q, seed=t).to_dict() for q in p["ap_exponents"]]
        return {"trial": t, "seed": seed, "instances": rows, "A_p": ap}

    lines = [_clean(x) for x in _ordered_map(trial, cfg.trials)]
    checks = [_collect("restriction_ratio", "restriction-inequality", True,
                       ((r["ratio"], 1 + 1e-9, r["ratio"] <= 1 + 1e-9) for x in lines for r in x["instances"]))]
    ap = [(a["lower"] / a["upper"], 1 + 1e-9, a["lower"] <= a["upper"] * (1 + 1e-9)) for x in lines for a in x["A_p"]]
    if ap:
        checks.append(_collect("A_p_bracket", "restriction-constant", True, ap))
    return Outcome(lines, checks)


# multiplier

def run_multiplier(cfg: ExperimentConfig) -> Outcome:
    p = cfg.params
    N = p["N"]

    def trial(t):
        seed = rng.trial_seed(cfg.seed, t)
        mu = _random_measure(N, 1, p["atoms"], seed)
        rows = multiplier_sweep(mu, p["lam"], p["alpha"], p["Ws"], p["qs"], p["chi"], p["half_width"])
        ann = []
        if p["annulus_radii"]:
            W = p["annulus_W"] or 8 * N
            gen = np.random.default_rng(np.random.SeedSequence([cfg.seed, t]))
            fs = gen.standard_normal((p["annulus_functions"], W)) + 1j * gen.standard_normal((p["annulus_functions"], W))
            for r in p["annulus_radii"]:
                rep = annulus_multiplier_check(mu, r, p["annulus_p"], p["annulus_q"], fs, W, decomposition=True)
                ann.append(rep.to_dict())
        return {"trial": t, "seed": seed, "sweep": [{"W": W, "q": q, "norm": v} for W, q, v in rows],
                "annulus": ann}

    lines = [_clean(x) for x in _ordered_map(trial, cfg.trials)]
    checks = [_collect("kernel_finite", "multiplier-kernel", True,
                       ((0.0, 0.0, isinstance(r["norm"], float)) for x in lines for r in x["sweep"]))]
    ann = [a for x in lines for a in x["annulus"]]
    if ann:
        checks.append(_collect("annulus_decomposition", "annulus-decomposition", True,
                               ((a["decomposition_error"], 1e-9, a["decomposition_error"] <= 1e-9) for a in ann)))
        checks.append(_collect("annulus_derivatives", "annulus-cutoff", True,
                               ((a["derivative_residual"], 1e-6, a["derivative_residual"] <= 1e-6) for a in ann)))
    return Outcome(lines, checks)


# energy

def run_energy(cfg: ExperimentConfig) -> Outcome:
    p = cfg.params
    N = p["N"]
    rhos = p["rhos"] or [2 ** j for j in range(3, int(math.log2(N / 4)) + 1)]
    P = floor_power(N, p["beta"])
    comb = comb_measure(N, P)
    comb_blocks = b_rho_blocks(comb, p["alpha"], rhos)

    def trial(t):
        seed = rng.trial_seed(cfg.seed, t)
        sigma = _random_measure(N, 1, P, seed)
        en = energy_spectral(sigma.normalized(), p["gamma"])
        spec = np.abs(dft(sigma).coeffs) / P
        half = np.maximum(spec[1:N // 2 + 1], spec[::-1][:N // 2])
        decay_max = float(half.max())
        return {"trial": t, "seed": seed, "energy": en.to_dict(),
                "blocks": b_rho_blocks(sigma.normalized(), p["alpha"], rhos), "decay_max": decay_max}

    lines = [_clean(x) for x in _ordered_map(trial, cfg.trials)]
    thr = fourier_threshold(N, 1, 1, P)
    checks = [_collect("fourier_decay", "fourier-decay-discrete", False,
                       ((x["decay_max"], thr, x["decay_max"] <= thr) for x in lines))]
    return Outcome(lines, checks, [], _clean({"rhos": rhos, "comb_blocks": comb_blocks, "atoms": P}))


# concentration

def run_concentration(cfg: ExperimentConfig) -> Outcome:
    p = cfg.params
    rep = monte_carlo_tail(p["distribution"], p["ts"], cfg.trials, p["m"], cfg.seed, p["N"], p["u"], p["h"],
                           chunk=p["chunk"])
    grid = small_summation_grid(p["summation_m_max"])
    cont = branch_continuity(Fraction(repr(p["A"])), Fraction(repr(p["delta"])))
    lines = [_clean({"t": r.t, **r.as_dict()}) for r in rep.rows]
    checks = [
        _collect("tail_bound", "bernstein", True, ((r.ci_high, r.bound, r.passed) for r in rep.rows)),
        Check("small_summation", "small-summation", True, grid["checked"], grid["checked"] - len(grid["failures"]),
              float(len(grid["failures"])), 0.0, grid["pass"]),
        Check("branch_continuity", "hoeffding", True, 1, int(cont["equal"]),
              float(cont["small"][1] - cont["large"][1]), 0.0, cont["equal"]),
    ]
    if rep.extra:
        checks.append(Check("character_threshold", "fourier-decay-discrete", True, cfg.trials,
                            cfg.trials - rep.extra["exceedances"], rep.extra["frequency"], 1e-3, rep.extra["pass"]))
    return Outcome(lines, checks, [], _clean({"character": rep.extra}))


RUNNERS = {
    "sample-certify": run_sample_certify,
    "transfer": run_transfer,
    "approx-step": run_approx_step,
    "restrict": run_restrict,
    "multiplier": run_multiplier,
    "energy": run_energy,
    "concentration": run_concentration,
}


def run_experiment(cfg: ExperimentConfig) -> Outcome:
    return RUNNERS[cfg.kind](cfg)
