"""Plot data from completed runs: a tidy CSV plus a PNG preview.

Every functional yields rows ``(functional, series, x, y)``; the PNG draws
one line per series.  Rendering uses the non-interactive Agg backend.
"""

from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from pathlib import Path

import numpy as np

from .grid import AtomicMeasure, TorusGrid, dft
from .sampler import fourier_threshold

PLOT_HEADER = ("functional", "series", "x", "y")
AXES = {
    "decay": ("|r|", "|mu^(r)|"),
    "blocks": ("rho", "B_rho"),
    "holder": ("m", "component"),
    "multiplier": ("W", "||K||_q"),
}
FUNCTIONALS = tuple(AXES)


class MissingRunData(Exception):
    pass


def read_run(run_dir):
    run_dir = Path(run_dir)
    try:
        manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
        lines = [json.loads(x) for x in (run_dir / "events.jsonl").read_text(encoding="utf-8").splitlines() if x]
    except (OSError, json.JSONDecodeError) as exc:
        raise MissingRunData(f"cannot read run data in {run_dir}: {exc}") from None
    return manifest, lines


def _need(manifest, kind, functional):
    if manifest["config"]["kind"] != kind:
        raise MissingRunData(f"functional {functional!r} needs a {kind!r} run, found {manifest['config']['kind']!r}")


def _decay(manifest, lines):
    _need(manifest, "sample-certify", "decay")
    witness = manifest.get("witness")
    if not witness:
        raise MissingRunData("run has no witness trial")
    p = manifest["config"]["params"]
    N, d = p["N"], p["d"]
    atoms = np.asarray(witness["atoms"], dtype=np.int64).reshape(-1, d)
    sigma = AtomicMeasure.from_points(TorusGrid(d, N), atoms)
    s = dft(sigma)
    mag = np.abs(s.coeffs) / len(atoms)
    radius = np.rint(s.norms()).astype(int)
    best = defaultdict(float)
    for r, v in zip(radius.ravel(), mag.ravel()):
        if r > 0:
            best[int(r)] = max(best[int(r)], float(v))
    thr = fourier_threshold(N, d, p["h"], len(atoms))
    rows = [("decay", "abs_coefficient", r, best[r]) for r in sorted(best)]
    rows += [("decay", "threshold", r, thr) for r in sorted(best)]
    return rows


def _blocks(manifest, lines):
    _need(manifest, "energy", "blocks")
    rhos = manifest["rhos"]
    mean = np.mean([[v for _, v in x["blocks"]] for x in lines], axis=0)
    rows = [("blocks", "random_mean", rho, float(v)) for rho, v in zip(rhos, mean)]
    rows += [("blocks", "comb", rho, float(v)) for rho, v in manifest["comb_blocks"]]
    return rows


def _holder(manifest, lines):
    _need(manifest, "approx-step", "holder")
    ms = manifest["config"]["params"]["ms"]
    rows = []
    for i, m in enumerate(ms):
        comps = [x["components"][i] for x in lines]
        rows.append(("holder", "fourier", m, float(np.mean([c["fourier"] for c in comps]))))
        for n in comps[0]["holder"]:
            rows.append(("holder", f"holder_n{n}", m, float(np.mean([c["holder"][n] for c in comps]))))
    return sorted(rows, key=lambda r: (r[1], r[2]))


def _multiplier(manifest, lines):
    _need(manifest, "multiplier", "multiplier")
    acc = defaultdict(list)
    for x in lines:
        for r in x["sweep"]:
            acc[(r["q"], r["W"])].append(r["norm"])
    return [("multiplier", f"q={q:g}", W, float(np.mean(v))) for (q, W), v in sorted(acc.items())]


_BUILDERS = {"decay": _decay, "blocks": _blocks, "holder": _holder, "multiplier": _multiplier}


def plot_rows(run_dir, functional):
    if functional not in _BUILDERS:
        raise ValueError(f"unknown functional {functional!r}; expected one of {FUNCTIONALS}")
    manifest, lines = read_run(run_dir)
    if not lines:
        raise MissingRunData("events.jsonl is empty")
    return _BUILDERS[functional](manifest, lines)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PLOT_HEADER)
    for f, s, x, y in rows:
        w.writerow((f, s, repr(x) if isinstance(x, float) else x, repr(float(y))))
    return buf.getvalue()


def render_png(rows, functional, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series = defaultdict(list)
    for _, s, x, y in rows:
        series[s].append((x, y))
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, pts in series.items():
        xs, ys = zip(*pts)
        ax.plot(xs, ys, marker="o", ms=3, label=label)
    xl, yl = AXES[functional]
    ax.set_xlabel(xl)
    ax.set_ylabel(yl)
    if all(y > 0 for _, _, _, y in rows):
        ax.set_yscale("log")
    if functional in ("blocks", "multiplier"):
        ax.set_xscale("log", base=2)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


def emit_plotdata(run_dir, functional):
    """Write ``plot-<functional>.csv`` and ``.png`` into the run directory; returns both paths."""
    rows = plot_rows(run_dir, functional)
    run_dir = Path(run_dir)
    csv_path = run_dir / f"plot-{functional}.csv"
    png_path = run_dir / f"plot-{functional}.png"
    csv_path.write_text(rows_to_csv(rows), encoding="utf-8")
    render_png(rows, functional, png_path)
    return csv_path, png_path
