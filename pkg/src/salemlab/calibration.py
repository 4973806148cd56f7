"""Calibration constants for the certifiers whose constants are only existential.

The shipped values in ``data/calibration.json`` come from
:func:`pilot_calibration`: for each constant the largest observed ratio
``statistic / (threshold without constant)`` over pilot trials at three
prime sizes, times a safety multiplier, rounded up to one decimal.
``C_cal`` is pinned; its pilot ratio is stored for reference.
"""

from __future__ import annotations

import hashlib
import json
import math
from importlib import resources

import numpy as np

from .grid import TorusGrid, conv_power
from .sampler import SampleConfig, certify_point_masses, sample_points

CALIBRATION_VERSION = 1
PILOT_NS = (251, 509, 1009)
PILOT_TRIALS = 50
PILOT_SEED = 7
PILOT_BETA = 0.5
MULTIPLIER = 1.5
PINNED_C_CAL = 20.0


def calibration_text() -> str:
    return resources.files("salemlab").joinpath("data/calibration.json").read_text(encoding="utf-8")


def calibration_hash() -> str:
    return hashlib.sha256(calibration_text().encode("utf-8")).hexdigest()


def load_calibration() -> dict:
    return json.loads(calibration_text())


def _round_up(x: float) -> float:
    return math.ceil(10 * x - 1e-9) / 10


def _pilot_m(N: int) -> int:
    # m = floor((N log N)^(1/2)), the top of the singleton-mass range for ell = 2
    return int(math.floor(math.sqrt(N * math.log(N))))


def pilot_ratios(Ns=PILOT_NS, trials=PILOT_TRIALS, seed=PILOT_SEED, beta=PILOT_BETA) -> dict:
    """Largest constant-free ratio for each calibrated constant, per ``N``."""
    out = {"M0": {}, "C1": {}, "C2": {}, "C3": {}, "C_cal": {}}
    for N in Ns:
        grid = TorusGrid(1, N)
        logN = math.log(N)
        cfg_pm = SampleConfig(grid, beta, seed, trials, 1, 3)
        cfg_dense = SampleConfig(grid, beta, seed, trials, 1, 3, P=_pilot_m(N))
        worst = dict.fromkeys(out, 0.0)
        for t in range(trials):
            for rep in certify_point_masses(sample_points(cfg_pm, t), beta, 3, 1.0, 1.0, 1.0):
                key = {"i": "C1", "ii": "C2", "iii": "C3"}[rep.event.split("_")[2]]
                worst[key] = max(worst[key], rep.observed / rep.threshold)
            sigma = sample_points(cfg_dense, t)
            worst["M0"] = max(worst["M0"], int(conv_power(sigma, 2).mass.max()) / logN)
            third = conv_power(sigma, 3)
            m = cfg_dense.P
            mean = m ** 3 / N
            dev = float(np.abs(third.mass - mean).max()) / math.sqrt(mean)
            worst["C_cal"] = max(worst["C_cal"], dev / logN ** 1.5)
        for k in out:
            out[k][N] = worst[k]
    return out


def pilot_calibration(Ns=PILOT_NS, trials=PILOT_TRIALS, seed=PILOT_SEED, beta=PILOT_BETA) -> dict:
    """Recompute the calibration document."""
    ratios = pilot_ratios(Ns, trials, seed, beta)
    constants, derivation = {}, {}
    for key, per_N in ratios.items():
        top = max(per_N.values())
        value = PINNED_C_CAL if key == "C_cal" else _round_up(MULTIPLIER * top)
        constants[key] = value
        derivation[key] = {
            "max_ratio": round(top, 6),
            "per_N": {str(N): round(v, 6) for N, v in per_N.items()},
            "rule": "pinned" if key == "C_cal" else "ceil1(multiplier * max_ratio)",
        }
    return {
        "version": CALIBRATION_VERSION,
        "pilot": {"Ns": list(Ns), "trials": trials, "seed": seed, "beta": beta, "multiplier": MULTIPLIER,
                  "dense_atoms": "floor((N log N)^(1/2))"},
        "constants": constants,
        "derivation": derivation,
    }
