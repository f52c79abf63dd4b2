"""Figure emission: data files, a standalone matplotlib script and its SVG.

Layouts
-------
fig1
    ``kappa/N^2`` against ``t/tau`` (left) and ``t/tau_tilde`` (right), one
    curve per ``U``.
fig2
    ``kappa/N^2`` against ``t/tau``, one curve per ``N``, with a ``sqrt(t)``
    guide line.
fig3
    ``kappa`` against ``t``, one curve per ``T``, fitted power laws overlaid.
fig4
    ``alpha`` against ``T``, one line per ``omega_c``.

Steady-state values appear as dotted horizontal markers in fig1 to fig3.
"""

from __future__ import annotations

import csv
import math
import runpy
from pathlib import Path

from .runner import load_record, record_curve

__all__ = ["PlotError", "emit_plots", "FIGURES"]

FIGURES = ("fig1", "fig2", "fig3", "fig4")


class PlotError(ValueError):
    """Records do not cover the requested layout."""


_SCRIPT = '''"""Regenerate {fig} from the adjacent data files."""
import csv
import sys
from collections import OrderedDict
from pathlib import Path

import matplotlib

if __name__ == "__main__" and "matplotlib.pyplot" not in sys.modules:
    matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = Path(__file__).resolve().parent
LAYOUT = {layout!r}


def read(name):
    with open(HERE / name, newline="") as fh:
        return list(csv.DictReader(fh))


def series(rows):
    out = OrderedDict()
    for r in rows:
        out.setdefault((r["panel"], r["series"]), ([], []))
        out[(r["panel"], r["series"])][0].append(float(r["x"]))
        out[(r["panel"], r["series"])][1].append(float(r["y"]))
    return out


def main():
    data = series(read("{fig}_data.csv"))
    fits = read("{fig}_fits.csv")
    panels = LAYOUT["panels"]
    fig, axes = plt.subplots(1, len(panels), figsize=(5.2 * len(panels), 4.0), squeeze=False)
    axes = dict(zip(panels, axes[0]))
    colors = {{}}
    for (panel, name), (x, y) in data.items():
        ax = axes[panel]
        style = "o-" if LAYOUT["markers"] else "-"
        line, = ax.plot(x, y, style, ms=3, label=name, color=colors.get(name))
        colors[name] = line.get_color()
    for f in fits:
        ax = axes[f["panel"]]
        c = colors.get(f["series"], "k")
        if f["kind"] == "fit" and f["t_lo"]:
            lo, hi, a, b = (float(f[k]) for k in ("t_lo", "t_hi", "alpha", "intercept"))
            ax.plot([lo, hi], [10 ** b * lo ** a, 10 ** b * hi ** a], "-.", color=c, lw=1)
        elif f["kind"] == "guide":
            lo, hi, a, b = (float(f[k]) for k in ("t_lo", "t_hi", "alpha", "intercept"))
            ax.plot([lo, hi], [10 ** b * lo ** a, 10 ** b * hi ** a], "k--", lw=1, label=f["series"])
        elif f["kind"] == "steady" and f["value"]:
            ax.axhline(float(f["value"]), ls=":", color=c, lw=1)
    for panel, ax in axes.items():
        ax.set_xscale(LAYOUT["xscale"])
        ax.set_yscale(LAYOUT["yscale"])
        ax.set_xlabel(LAYOUT["xlabel"][panel])
        ax.set_ylabel(LAYOUT["ylabel"])
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(HERE / "{fig}.svg")
    plt.close(fig)


if __name__ == "__main__":
    main()
'''

_LAYOUTS = {
    "fig1": {"panels": ["tau", "tau_tilde"], "xscale": "log", "yscale": "log", "markers": False,
             "xlabel": {"tau": "t / tau", "tau_tilde": "t / tau_tilde"}, "ylabel": "kappa / N^2"},
    "fig2": {"panels": ["tau"], "xscale": "log", "yscale": "log", "markers": False,
             "xlabel": {"tau": "t / tau"}, "ylabel": "kappa / N^2"},
    "fig3": {"panels": ["raw"], "xscale": "log", "yscale": "log", "markers": False,
             "xlabel": {"raw": "t J"}, "ylabel": "kappa"},
    "fig4": {"panels": ["alpha"], "xscale": "log", "yscale": "linear", "markers": True,
             "xlabel": {"alpha": "T / J"}, "ylabel": "alpha"},
}


def _param(rec, key):
    cfg = rec["config"]
    if key in ("N", "U", "J"):
        return cfg["system"][key]
    bath = cfg.get("bath") or {}
    v = bath.get(key)
    return float(v) if v is not None else None


def _need(records, key, fig):
    vals = sorted({_param(r, key) for r in records if _param(r, key) is not None})
    if len(vals) < 2:
        raise PlotError(f"{fig} needs at least two distinct {key} values, got {vals or 'none'}")
    return vals


def _fit(rec):
    return rec["results"].get("fit") or {}


def emit_plots(records, figure, output_dir, render=True) -> dict:
    """Write ``<figure>_data.csv``, ``<figure>_fits.csv``, ``<figure>.py`` and ``<figure>.svg``.

    ``records`` are JSON record paths or already loaded record dicts.
    """
    if figure not in FIGURES:
        raise PlotError(f"unknown figure {figure!r}; choose from {', '.join(FIGURES)}")
    loaded = []
    for r in records:
        if isinstance(r, (str, Path)):
            try:
                r = load_record(r)
            except (OSError, ValueError, KeyError) as exc:
                raise PlotError(f"cannot load record {r}: {exc}") from None
        loaded.append(r)
    records = loaded
    if not records:
        raise PlotError("no records given")
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = []
    fits = []
    if figure == "fig4":
        _need(records, "T", figure)
        for wc in sorted({_param(r, "omega_c") for r in records}):
            rows = sorted((r for r in records if _param(r, "omega_c") == wc), key=lambda r: _param(r, "T"))
            for r in rows:
                data.append(("alpha", f"omega_c={wc:g}", _param(r, "T"), _fit(r).get("alpha", 0.0)))
    else:
        key = {"fig1": "U", "fig2": "N", "fig3": "T"}[figure]
        _need(records, key, figure)
        missing = [r.get("config", {}).get("name") for r in records if "trajectory" not in r]
        if missing:
            raise PlotError(f"records without trajectory data: {missing}")
        for r in sorted(records, key=lambda r: _param(r, key)):
            name = f"{key}={_param(r, key):g}"
            for panel in _LAYOUTS[figure]["panels"]:
                x, y = record_curve(r, panel)
                if panel == "raw":
                    y = r["trajectory"]["kappa"]
                scale = 1.0
                if panel != "raw":
                    t = r["trajectory"]["t"]
                    scale = t[0] / x[0] if x[0] > 0 and math.isfinite(x[0]) else math.nan
                for xi, yi in zip(x, y):
                    if xi > 0 and yi > 0 and math.isfinite(xi):
                        data.append((panel, name, xi, yi))
                f = _fit(r)
                if f.get("accepted") and f.get("window") and math.isfinite(scale):
                    lo, hi = f["window"]
                    icpt = f["intercept"]
                    if panel != "raw":
                        # kappa/N^2 = 10^b t^a  ->  in rescaled time x = t / s
                        icpt = icpt + f["alpha"] * math.log10(scale) - 2 * math.log10(_param(r, "N"))
                        lo, hi = lo / scale, hi / scale
                    fits.append((panel, name, "fit", lo, hi, f["alpha"], icpt, ""))
                ss = r["results"].get("steady_kappa_over_N2")
                if ss is not None:
                    val = ss * _param(r, "N") ** 2 if panel == "raw" else ss
                    fits.append((panel, name, "steady", "", "", "", "", val))
        if figure == "fig2":
            pts = [(x, y) for p, _, x, y in data if p == "tau"]
            f0 = [f for f in fits if f[2] == "fit"]
            if f0:
                lo, hi = f0[0][3], f0[0][4]
                mid = math.sqrt(lo * hi)
                y_mid = 10 ** f0[0][6] * mid ** f0[0][5]
            else:
                lo, hi = pts[0][0], pts[-1][0]
                mid, y_mid = lo, pts[0][1]
            fits.append(("tau", "t^1/2", "guide", lo, hi, 0.5, math.log10(y_mid) - 0.5 * math.log10(mid), ""))
    paths = {}
    p = out / f"{figure}_data.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["panel", "series", "x", "y"])
        for panel, name, x, y in data:
            w.writerow([panel, name, "%.17g" % x, "%.17g" % y])
    paths["data"] = str(p)
    p = out / f"{figure}_fits.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["panel", "series", "kind", "t_lo", "t_hi", "alpha", "intercept", "value"])
        for row in fits:
            w.writerow([("%.17g" % v) if isinstance(v, float) else v for v in row])
    paths["fits"] = str(p)
    script = out / f"{figure}.py"
    script.write_text(_SCRIPT.format(fig=figure, layout=_LAYOUTS[figure]))
    paths["script"] = str(script)
    if render:
        import matplotlib

        matplotlib.use("Agg")
        runpy.run_path(str(script), run_name="__main__")
        paths["svg"] = str(out / f"{figure}.svg")
    return paths
