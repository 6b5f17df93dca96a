"""Command-line entry point: ``sisr <command> [options]``.

Every command resolves a :class:`config.Config` (defaults, ``--config`` file,
``--set`` overrides, then dedicated flags), writes its outputs into ``--out``
together with ``config.ini`` and ``manifest.json``, and can be replayed with
``sisr rerun <manifest.json>``.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from . import output as io
from .config import Config, config_from_dict, load_config
from .errors import ConfigError, SisrError
from .fhn_model import ModelParams, State, classify_regime
from .potential import barriers, matching_target, nullcline_extrema, nullcline_roots, potential, solve_escape_points

COMMANDS = ("regime", "landscape", "simulate", "sweep", "train", "ablate", "eval", "predict-cv")

# flag -> (section, key)
FLAG_KEYS = {
    "a": ("model", "a"), "b": ("model", "b"), "c": ("model", "c"),
    "eps": ("model", "eps"), "sigma": ("model", "sigma"),
    "seed": ("run", "seed"), "threads": ("run", "threads"),
}


class Run:
    """Output directory bookkeeping for one command."""

    def __init__(self, command: str, cfg: Config, out: Path, svg: bool):
        self.command = command
        self.cfg = cfg
        self.out = out
        self.svg = svg
        self.files: list[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.out / name

    def csv(self, name, rows, columns):
        io.write_csv(rows, columns, self.path(name))

    def json(self, name, obj):
        io.write_json(obj, self.path(name))

    def figure(self, name, fn, *args, **kw):
        if self.svg:
            fn(self.path(name), *args, **kw)

    @property
    def seed(self) -> int:
        return self.cfg["run"]["seed"]

    @property
    def threads(self) -> int:
        return max(1, self.cfg["run"]["threads"])

    def model(self) -> ModelParams:
        return ModelParams(**self.cfg["model"])


# -- commands ------------------------------------------------------------------------


def cmd_regime(run: Run) -> dict:
    rep = classify_regime(run.model())
    d = rep.to_dict()
    run.json("regime.json", d)
    return {"excitable": rep.excitable, "discriminant": rep.discriminant}


def cmd_landscape(run: Run) -> dict:
    p = run.model()
    opts = run.cfg["landscape"]
    ext = nullcline_extrema(p.a)
    ws = np.linspace(ext.w_min, ext.w_max, opts["w_points"])
    sigma = p.sigma if p.sigma > 0 else 0.0
    rows = []
    for w in ws:
        r = nullcline_roots(float(w), p.a)
        b = barriers(float(w), p.a, sigma)
        rows.append([w, r.v_left, r.v_saddle, r.v_right, b.dU_left, b.dU_right, b.tau_left, b.tau_right])
    run.csv("barriers.csv", rows,
            ["w", "v_left", "v_saddle", "v_right", "dU_left", "dU_right", "tau_left", "tau_right"])

    v = np.linspace(-0.5, 1.5, opts["v_points"])
    prof_rows, profiles = [], []
    for w in opts["profiles"]:
        U = potential(v, w, p.a)
        prof_rows += [[w, vi, ui] for vi, ui in zip(v, U)]
        profiles.append((f"w = {w:g}", v, U))
    run.csv("profiles.csv", prof_rows, ["w", "v", "U"])

    summary = {"a": p.a, "fold": asdict(ext), "matching_target": None, "escape_points": None}
    if sigma > 0:
        summary["matching_target"] = matching_target(sigma, p.eps)
        try:
            summary["escape_points"] = asdict(solve_escape_points(p.a, sigma, p.eps))
        except SisrError as exc:
            summary["escape_points_error"] = str(exc)
    if opts["mc_samples"] > 0:
        from .sde import frozen_w_escape_time

        if sigma <= 0:
            raise ConfigError("Monte-Carlo escape times need sigma > 0")
        mean, se = frozen_w_escape_time(
            opts["mc_w"], p.a, sigma, dt=opts["mc_dt"], seed=run.seed, n_samples=opts["mc_samples"],
            start=opts["mc_start"], max_steps=opts["mc_max_steps"], workers=run.threads,
        )
        b = barriers(opts["mc_w"], p.a, sigma)
        summary["monte_carlo"] = {
            "w": opts["mc_w"], "start": opts["mc_start"], "n_samples": opts["mc_samples"],
            "mean_escape_time": mean, "stderr": se,
            "kramers": b.tau_left if opts["mc_start"] == "left" else b.tau_right,
        }
    run.json("landscape.json", summary)
    from . import plotting

    dl = [r[4] for r in rows]
    dr = [r[5] for r in rows]
    run.figure("landscape.svg", plotting.landscape, ws, dl, dr, summary["matching_target"], profiles)
    return {"w_min": ext.w_min, "w_max": ext.w_max}


def cmd_simulate(run: Run) -> dict:
    from .sde import integrate
    from .spikes import detect_spikes, isi_cv

    p = run.model()
    o = run.cfg["simulate"]
    tr = integrate(p, State(o["v0"], o["w0"]), o["dt"], o["steps"], seed=run.seed)
    t = tr.t
    run.csv("trajectory.csv", zip(t, tr.v, tr.w, tr.noise), ["t", "v", "w", "xi"])
    spikes = detect_spikes(tr)
    st = isi_cv(spikes)
    run.csv("spikes.csv", ([s] for s in spikes), ["spike_time"])
    summary = {"n_spikes": st.n_spikes, "cv": st.cv, "final_state": [tr.v[-1], tr.w[-1]], "t_end": t[-1]}
    run.json("simulate.json", summary)
    from . import plotting

    run.figure("trajectory.svg", plotting.time_series, t, tr.v, tr.w, spikes)
    return {"n_spikes": st.n_spikes, "cv": st.cv}


def cmd_sweep(run: Run) -> dict:
    from .spikes import CV_GRID_COLUMNS, cv_curve, cv_min_grid

    p = run.model()
    o = run.cfg["sweep"]
    a_grid = o["a_grid"] or [p.a]
    eps_grid = o["eps_grid"] or [p.eps]
    sig = o["sigma_grid"]
    kw = dict(min_spikes=o["min_spikes"], seed=run.seed, dt=o["dt"])
    if len(a_grid) == 1 and len(eps_grid) == 1:
        curves = [[cv_curve(p.replace(a=a_grid[0], eps=eps_grid[0]), sig, o["horizon"],
                            max_horizon_factor=o["max_horizon_factor"], workers=run.threads, **kw)]]
        grid = None
    else:
        grid = cv_min_grid(a_grid, eps_grid, sig, o["horizon"], p_base=p, workers=run.threads, **kw)
        curves = grid.curves
    rows, plot = [], []
    for i, a in enumerate(a_grid):
        for j, e in enumerate(eps_grid):
            c = curves[i][j]
            rows += [[a, e, *r] for r in c.rows()]
            plot.append((f"a={a:g}, eps={e:g}", c.sigma_grid, c.cv_values))
    run.csv("cv_curve.csv", rows, ["a", "eps", "sigma", "cv", "n_spikes", "status", "horizon"])
    summary = {"cells": []}
    for i, a in enumerate(a_grid):
        for j, e in enumerate(eps_grid):
            c = curves[i][j]
            summary["cells"].append({"a": a, "eps": e, "cv_min": c.cv_min, "argmin_sigma": c.argmin_sigma,
                                     "interior_minimum": c.has_interior_minimum()})
    if grid is not None:
        run.csv("cv_min_grid.csv", grid.rows(), CV_GRID_COLUMNS)
    run.json("sweep.json", summary)
    from . import plotting

    run.figure("cv_curve.svg", plotting.cv_curves, plot)
    if grid is not None:
        run.figure("cv_min_grid.svg", plotting.heatmap, a_grid, eps_grid, grid.cv_min)
    return {"cells": len(summary["cells"])}


def _dataset(run: Run):
    from .sde import Dataset, make_dataset

    o = run.cfg["data"]
    p = run.model()
    if o["dataset"]:
        ds = Dataset.load(o["dataset"])
        if ds.params != p:
            raise ConfigError(f"dataset {o['dataset']} was generated with {ds.params}, config has {p}")
        return ds
    ds = make_dataset(p, State(o["v0"], o["w0"]), o["dt"], o["n_points"], run.seed, o["split_fraction"], o["burn_in"])
    ds.save(run.path("dataset.npz"))
    return ds


def _train_config(run: Run, dt: float):
    from .pinn import LossWeights, TrainConfig

    o = dict(run.cfg["train"])
    weights = LossWeights(*(o.pop(f"lambda_{k}") for k in ("data", "ic", "phy1", "phy2")))
    o["loss_mask"] = tuple(o["loss_mask"])
    o["hidden"] = tuple(o["hidden"])
    return TrainConfig(dt=dt, seed=run.seed, weights=weights, **o)


def _curve_rows(report_or_curve):
    return [[e["epoch"], e["train_nrmse"], e["test_nrmse"]] for e in report_or_curve]


def _report_dict(rep) -> dict:
    d = rep.to_dict()
    d.pop("wall_time", None)  # timing lives in the manifest
    return d


def cmd_train(run: Run) -> dict:
    from .nn import save_checkpoint
    from .pinn import COMPONENTS, train

    ds = _dataset(run)
    p = ds.params
    cfg = _train_config(run, ds.dt)
    net, rep = train(cfg, ds, p)
    save_checkpoint(run.path("checkpoint.bin"), net, rep.best_epoch,
                    {"train_nrmse": rep.best_train_nrmse, "test_nrmse": rep.best_test_nrmse},
                    {"model": p.to_dict(), "dt": ds.dt, "ic": [ds.ic.v, ds.ic.w], "n_points": len(ds),
                     "train": cfg.to_dict()})
    run.json("train_report.json", _report_dict(rep))
    run.csv("nrmse_curve.csv", _curve_rows(rep.eval_history), ["epoch", "train_nrmse", "test_nrmse"])
    cols = ["epoch", "total", *COMPONENTS, *(f"lambda_{k}" for k in COMPONENTS), "n_escape_events"]
    rows = [[h["epoch"], h["total"], *(h.get(k) for k in COMPONENTS), *(h["weights"][k] for k in COMPONENTS),
             h["n_escape_events"]] for h in rep.loss_history]
    run.csv("loss_history.csv", rows, cols)
    from . import plotting

    ep, tr, te = zip(*_curve_rows(rep.eval_history))
    run.figure("nrmse.svg", plotting.training_curves, {"+".join(cfg.loss_mask): (ep, tr, te)})
    return {"best_epoch": rep.best_epoch, "test_nrmse": rep.best_test_nrmse, "wall_time": rep.wall_time}


def cmd_ablate(run: Run) -> dict:
    from .nn import save_checkpoint
    from .pinn import run_ablation

    ds = _dataset(run)
    cfg = _train_config(run, ds.dt)
    rows, nets = run_ablation(cfg, ds, ds.params, workers=run.threads)
    table, curves, plot = [], [], {}
    for r in rows:
        name = r["variant"]
        table.append([name, "+".join(r["mask"]), r.get("train_nrmse"), r.get("test_nrmse"),
                      r.get("best_epoch"), r.get("error", "")])
        if "curve" in r:
            curves += [[name, *c] for c in _curve_rows(r["curve"])]
            plot[name] = tuple(zip(*_curve_rows(r["curve"])))
        if name in nets:
            save_checkpoint(run.path(f"checkpoint_{name.replace('+', '_')}.bin"), nets[name], r["best_epoch"],
                            {"train_nrmse": r["train_nrmse"], "test_nrmse": r["test_nrmse"]},
                            {"model": ds.params.to_dict(), "dt": ds.dt, "ic": [ds.ic.v, ds.ic.w],
                             "n_points": len(ds)})
    run.csv("ablation.csv", table, ["variant", "mask", "train_nrmse", "test_nrmse", "best_epoch", "error"])
    run.csv("ablation_curves.csv", curves, ["variant", "epoch", "train_nrmse", "test_nrmse"])
    run.json("ablation.json", [{k: v for k, v in r.items() if k != "wall_time"} for r in rows])
    from . import plotting

    run.figure("ablation.svg", plotting.training_curves, plot)
    return {r["variant"]: r.get("test_nrmse") for r in rows}


def _load_net(path: str):
    from .nn import load_checkpoint

    if not path:
        raise ConfigError("a checkpoint path is required (--checkpoint or [eval]/[predict] checkpoint)")
    if not Path(path).is_file():
        raise ConfigError(f"checkpoint not found: {path}")
    return load_checkpoint(path)


def _checkpoint_model(header: dict, fallback: ModelParams) -> ModelParams:
    extra = header.get("extra") or {}
    return ModelParams(**extra["model"]) if "model" in extra else fallback


def cmd_eval(run: Run) -> dict:
    from .pinn import evaluate
    from .surrogate import rollout

    o = run.cfg["eval"]
    net, header = _load_net(o["checkpoint"])
    p = _checkpoint_model(header, run.model())
    extra = header.get("extra") or {}
    dt = extra.get("dt", run.cfg["data"]["dt"])
    ic = extra.get("ic", [0.0, 0.0])
    init = State(ic[0] if o["v0"] is None else o["v0"], ic[1] if o["w0"] is None else o["w0"])
    sigma = p.sigma if o["sigma"] is None else o["sigma"]
    steps = o["steps"] or int(round(o["horizon_factor"] * extra.get("n_points", 20_000)))
    r = rollout(net, init, sigma, dt, steps, seed=run.seed)
    run.csv("rollout.csv", zip(r.t, r.v, r.w), ["t", "v", "w"])
    st = r.stats
    summary = {
        "sigma": sigma, "dt": dt, "steps": steps, "steps_completed": r.steps_completed,
        "bounded": r.bounded, "n_spikes": st.n_spikes if st else 0, "cv": st.cv if st else math.nan,
        "v_range": [float(np.nanmin(r.v)), float(np.nanmax(r.v))],
        "w_range": [float(np.nanmin(r.w)), float(np.nanmax(r.w))],
    }
    if run.cfg["data"]["dataset"]:
        from .sde import Dataset

        tr, te = evaluate(net, Dataset.load(run.cfg["data"]["dataset"]))
        summary["teacher_forced"] = {"train_nrmse": tr, "test_nrmse": te}
    run.json("eval.json", summary)
    from . import plotting

    run.figure("rollout.svg", plotting.time_series, r.t, r.v, r.w, st.spike_times if st else None)
    return {"bounded": r.bounded, "n_spikes": summary["n_spikes"]}


def cmd_predict_cv(run: Run) -> dict:
    from .spikes import CV_CURVE_COLUMNS, cv_curve
    from .surrogate import compare_curves, predicted_cv_curve

    o = run.cfg["predict"]
    net, header = _load_net(o["checkpoint"])
    p = _checkpoint_model(header, run.model())
    dt = (header.get("extra") or {}).get("dt", run.cfg["data"]["dt"])
    grid = o["sigma_grid"]
    sim = cv_curve(p, grid, o["horizon"], min_spikes=o["min_spikes"], seed=run.seed, dt=dt,
                   max_horizon_factor=1.0, workers=run.threads)
    pred = predicted_cv_curve(net, grid, o["horizon"], seed=run.seed, dt=dt, params=p.to_dict(),
                              min_spikes=o["min_spikes"])
    run.csv("cv_simulated.csv", sim.rows(), CV_CURVE_COLUMNS)
    run.csv("cv_predicted.csv", pred.rows(), CV_CURVE_COLUMNS)
    cmp = compare_curves(sim, pred)
    run.json("comparison.json", {"model": p.to_dict(), **cmp.to_dict()})
    from . import plotting

    run.figure("cv_comparison.svg", plotting.cv_curves,
               [("simulation", sim.sigma_grid, sim.cv_values), ("surrogate", pred.sigma_grid, pred.cv_values)])
    return {"max_abs_diff": cmp.max_abs_diff, "argmin_shift": cmp.argmin_shift}


HANDLERS = {
    "regime": cmd_regime, "landscape": cmd_landscape, "simulate": cmd_simulate, "sweep": cmd_sweep,
    "train": cmd_train, "ablate": cmd_ablate, "eval": cmd_eval, "predict-cv": cmd_predict_cv,
}


# -- argument handling ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--config", help="INI file with [run]/[model]/... sections")
    g.add_argument("--seed", type=int, help="master seed (default 42)")
    g.add_argument("--out", default="out", help="output directory (default ./out)")
    g.add_argument("--threads", type=int, help="worker threads for sweeps, ablations and Monte Carlo")
    g.add_argument("--svg", action="store_true", help="also render SVG figures")
    g.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one config value (repeatable)")
    m = common.add_argument_group("model parameters")
    for name in ("a", "b", "c", "eps", "sigma"):
        m.add_argument(f"--{name}", type=float)

    ap = argparse.ArgumentParser(prog="sisr", description="SISR simulation, theory and surrogate toolkit")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    helps = {
        "regime": "fixed points and excitability of the model",
        "landscape": "barrier heights, escape times and potential profiles",
        "simulate": "Euler-Maruyama trajectory and its spikes",
        "sweep": "CV against noise intensity (optionally over an (a, eps) grid)",
        "train": "train the one-step surrogate",
        "ablate": "train the four loss-mask variants",
        "eval": "open-loop rollout of a checkpoint",
        "predict-cv": "surrogate CV curve against direct simulation",
    }
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common], help=helps[name])
        if name in ("eval", "predict-cv"):
            sp.add_argument("--checkpoint")
        if name in ("train", "ablate", "eval"):
            sp.add_argument("--dataset", help="existing dataset .npz instead of simulating one")
    rr = sub.add_parser("rerun", help="replay a command from its manifest.json")
    rr.add_argument("manifest")
    rr.add_argument("--out", required=True)
    rr.add_argument("--svg", action="store_true")
    return ap


def resolve_config(args) -> Config:
    cfg = load_config(args.config) if args.config else Config()
    for item in args.set:
        cfg.set_text(item)
    for flag, (section, key) in FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            cfg.set(section, key, value, origin=f"--{flag}")
    if getattr(args, "checkpoint", None):
        section = "predict" if args.command == "predict-cv" else "eval"
        cfg.set(section, "checkpoint", args.checkpoint, origin="--checkpoint")
    if getattr(args, "dataset", None):
        cfg.set("data", "dataset", args.dataset, origin="--dataset")
    return cfg


def execute(command: str, cfg: Config, out: Path, svg: bool = False) -> dict:
    run = Run(command, cfg, out, svg)
    t0 = time.perf_counter()
    result = HANDLERS[command](run)
    run.path("config.ini").write_text(cfg.to_ini(), encoding="utf-8")
    wall = time.perf_counter() - t0
    manifest = {
        "command": command,
        "config": cfg.to_dict(),
        "seed": run.seed,
        "version": __version__,
        "outputs": {name: io.sha256(out / name) for name in run.files},
        "summary": result,
        "wall_time": wall,
    }
    io.write_json(manifest, out / "manifest.json")
    return manifest


def rerun(manifest_path, out: Path, svg: bool = False) -> dict:
    path = Path(manifest_path)
    if not path.is_file():
        raise ConfigError(f"manifest not found: {path}")
    try:
        m = json.loads(path.read_text(encoding="utf-8"))
        command, values = m["command"], m["config"]
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{path}: not a run manifest ({exc})") from None
    if command not in HANDLERS:
        raise ConfigError(f"{path}: unknown command {command!r}")
    return execute(command, config_from_dict(values, str(path)), out, svg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "rerun":
            manifest = rerun(args.manifest, Path(args.out), args.svg)
        else:
            manifest = execute(args.command, resolve_config(args), Path(args.out), args.svg)
    except ConfigError as exc:
        _fail("config", exc)
        return 2
    except (SisrError, ValueError, OSError, KeyError) as exc:
        _fail(type(exc).__name__, exc)
        return 1
    print(json.dumps({"command": manifest["command"], "out": str(Path(args.out)),
                      **io.jsonable(manifest["summary"])}, sort_keys=True))
    return 0


def _fail(kind: str, exc: BaseException) -> None:
    msg = " ".join(str(exc).split())
    print(f"sisr: error[{kind}]: {msg}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
