"""Static figures for the CLI reports (matplotlib, non-interactive backend).

SVG output is made reproducible by fixing the hash salt and dropping the
creation date, so reruns give structurally identical files.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "svg.hashsalt": "sisr",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
    "figure.dpi": 100,
}


def _save(fig, path) -> Path:
    path = Path(path)
    fmt = path.suffix.lstrip(".") or "svg"
    meta = {"Date": None} if fmt == "svg" else {}
    fig.savefig(path, format=fmt, metadata=meta, bbox_inches="tight")
    plt.close(fig)
    return path


def _figure(nrows=1, ncols=1, width=6.0, height=3.6):
    with plt.rc_context(STYLE):
        return plt.subplots(nrows, ncols, figsize=(width, height), squeeze=False)


def time_series(path, t, v, w, spikes=None, title=""):
    with plt.rc_context(STYLE):
        fig, ax = _figure(2, 1, height=4.2)
        ax[0, 0].plot(t, v, color="tab:blue")
        if spikes is not None and len(spikes):
            ax[0, 0].plot(spikes, np.full(len(spikes), 0.4), "|", color="k", ms=6)
        ax[0, 0].set_ylabel("v")
        ax[1, 0].plot(t, w, color="tab:green")
        ax[1, 0].set_ylabel("w")
        ax[1, 0].set_xlabel("t")
        if title:
            ax[0, 0].set_title(title)
        return _save(fig, path)


def landscape(path, w, dU_left, dU_right, target=None, profiles=()):
    """Barrier heights against w, plus optional potential profiles ``(label, v, U)``."""
    with plt.rc_context(STYLE):
        fig, ax = _figure(1, 2, width=8.0)
        a0, a1 = ax[0, 0], ax[0, 1]
        a0.plot(w, dU_left, label="left well")
        a0.plot(w, dU_right, label="right well")
        if target is not None:
            a0.axhline(target, color="k", ls="--", lw=0.8, label="matching level")
        a0.set_xlabel("w")
        a0.set_ylabel("barrier height")
        a0.legend(frameon=False)
        for label, v, U in profiles:
            a1.plot(v, U, label=label)
        a1.set_xlabel("v")
        a1.set_ylabel("U(v, w)")
        if profiles:
            a1.legend(frameon=False)
        return _save(fig, path)


def cv_curves(path, curves, xlabel="noise intensity", logx=True):
    """``curves`` is a list of ``(label, sigma, cv)``; NaN points leave gaps."""
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        a = ax[0, 0]
        for label, s, cv in curves:
            a.plot(s, cv, "o-", ms=3, label=label)
        if logx:
            a.set_xscale("log")
        a.set_xlabel(xlabel)
        a.set_ylabel("CV")
        a.legend(frameon=False, fontsize=7)
        return _save(fig, path)


def heatmap(path, a_grid, eps_grid, values, label="min CV"):
    with plt.rc_context(STYLE):
        fig, ax = _figure(width=5.0, height=4.0)
        a = ax[0, 0]
        m = a.imshow(np.asarray(values, dtype=float), origin="lower", aspect="auto", cmap="viridis")
        a.set_xticks(range(len(eps_grid)), [f"{e:.3g}" for e in eps_grid])
        a.set_yticks(range(len(a_grid)), [f"{x:.3g}" for x in a_grid])
        a.set_xlabel("eps")
        a.set_ylabel("a")
        a.grid(False)
        fig.colorbar(m, ax=a, label=label)
        return _save(fig, path)


def training_curves(path, curves):
    """``curves`` maps a label to ``(epochs, train_nrmse, test_nrmse)``."""
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        a = ax[0, 0]
        for label, (ep, tr, te) in curves.items():
            line, = a.plot(ep, te, label=f"{label} (test)")
            a.plot(ep, tr, ls=":", color=line.get_color())
        a.set_yscale("log")
        a.set_xlabel("epoch")
        a.set_ylabel("NRMSE")
        a.legend(frameon=False, fontsize=7)
        return _save(fig, path)
