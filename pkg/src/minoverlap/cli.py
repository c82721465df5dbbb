"""Command-line interface.

Exit codes: 0 success, 1 bad input or usage, 2 infeasible instance,
3 numerical failure, 4 time budget exceeded.
"""
from __future__ import annotations

import argparse
import multiprocessing as mp
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import experiments, formats
from .chromosim import ChromoScenario, run_batch, scenario
from .ellipack import HomologConfig, PackingProblem, TrustRegionConfig, init_state, pack_ellipsoids
from .errors import (IndeterminateValueError, InfeasibleContainmentError, InvalidInputError, IterationError,
                     MeasurementError, MinOverlapError, NumericalError)
from .geometry import BoxContainer, center_set
from .spherepack import SpherePackProblem, multistart

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_NUMERICAL, EXIT_BUDGET = 0, 1, 2, 3, 4
WORKERS_ENV = "MINOVERLAP_WORKERS"
REPRO_IDS = ("fig1", "fig2", "fig4", "fig5", "table3-sign", "table5-sign")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise InvalidInputError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


# ----------------------------------------------------------------------
def _trivial_sphere_result(inst: dict, radii, container, seed, wall) -> dict:
    d = inst["dimension"]
    body = {"center": np.asarray(container.center, dtype=float), "shape": radii[0] * np.eye(d), "radius": float(radii[0])}
    doc = {"instance_digest": formats.digest(inst), "kind": "spheres", "objective": 0.0, "max_overlap": 0.0,
           "termination": "no_overlap", "bodies": [body], "overlaps": [], "history": [], "wall_clock": wall}
    if seed is not None:
        doc["seed"] = seed
    return formats.validate(formats._plain(doc), "result")


def cmd_pack_spheres(args) -> int:
    inst = formats.load(args.instance, "instance")
    if inst["kind"] != "spheres":
        raise InvalidInputError("pack-spheres needs an instance of kind 'spheres'")
    radii = formats.radii_from(inst)
    container = formats.container_from(inst)
    opts = inst.get("options", {})
    seed = args.seed if args.seed is not None else inst.get("seed", 0)
    starts = args.starts if args.starts is not None else opts.get("starts", 1)
    t0 = time.perf_counter()
    if radii.size == 1:
        center_set(float(radii[0]), container)  # raises when it cannot fit
        doc = _trivial_sphere_result(inst, radii, container, seed, None)
        prob = None
    else:
        prob = SpherePackProblem(radii, container, inst.get("objective", "LInf"), step_bound=opts.get("step_bound"),
                                 coincident_policy=opts.get("coincident_policy", "ZeroVector"))
        kw = {k: opts[k] for k in ("max_iter", "h_decrease_tol") if k in opts}
        results = multistart(prob, starts, seed, workers=args.workers or default_workers(), **kw)
        doc = experiments.sphere_result(inst, results, prob, seed, None)
    if not args.no_timing:
        doc["wall_clock"] = time.perf_counter() - t0
    formats.write(args.out, doc)
    if args.svg:
        if inst["dimension"] != 2:
            raise InvalidInputError("--svg needs a two-dimensional instance")
        centers = np.array([b["center"] for b in doc["bodies"]])
        hot = []
        if prob is not None:
            i, j = prob.pairs
            hot = [(a, b) for a, b, v in zip(i, j, doc["overlaps"]) if v > 0]
        Path(args.svg).write_text(formats.render_svg(centers, radii, container, hot))
    _log(f"objective {doc['objective']:.10g} ({doc['termination']}) -> {args.out}")
    return EXIT_OK


def _tr_config(opts: dict, max_iter: int | None) -> TrustRegionConfig:
    keys = ("eta1", "eta2", "c1", "c2", "phi1", "phi2", "rho0", "rho_max", "tol1", "tol2", "max_iter")
    kw = {k: opts[k] for k in keys if k in opts}
    if "radius_ratios" in opts:
        kw["radius_ratios"] = tuple(opts["radius_ratios"])
    if max_iter is not None:
        kw["max_iter"] = max_iter
    return TrustRegionConfig(**kw)


def _homolog(doc: dict | None, penalty, lam) -> HomologConfig | None:
    if doc is None and penalty is None:
        return None
    if doc is None:
        raise InvalidInputError("--penalty needs homolog pairs in the instance or via --homolog")
    return HomologConfig(tuple(map(tuple, doc["pairs"])),
                         penalty if penalty is not None else doc.get("penalty", 100.0),
                         lam if lam is not None else doc.get("lambda", 1.25))


def cmd_pack_ellipsoids(args) -> int:
    inst = formats.load(args.instance, "instance")
    container = formats.container_from(inst)
    if isinstance(container, BoxContainer):
        raise InvalidInputError("ellipsoid packing needs an ellipsoidal container")
    specs = formats.specs_from(inst)
    hom_doc = inst.get("homolog")
    if args.homolog:
        hom_doc = formats.load(args.homolog, "homolog")
    seed = args.seed if args.seed is not None else inst.get("seed", 0)
    cfg = _tr_config(inst.get("options", {}), args.max_iter)
    t0 = time.perf_counter()
    history_rows: list[dict] = []
    if len(specs) == 1:
        init = init_state(specs, container, seed=seed)
        doc = {"instance_digest": formats.digest(inst), "kind": "ellipsoids", "objective": 0.0, "max_overlap": 0.0,
               "termination": "no_overlap", "seed": seed, "overlaps": [], "history": [],
               "bodies": [{"center": init.centers[0], "shape": init.S[0], "multiplier": float(init.lam[0])}],
               "wall_clock": None if args.no_timing else time.perf_counter() - t0}
        formats.write(args.out, formats.validate(formats._plain(doc), "result"))
        return EXIT_OK
    problem = PackingProblem(specs, container, _homolog(hom_doc, args.penalty, args.lam))
    init = init_state(specs, container, seed=seed)
    res = pack_ellipsoids(problem, init, cfg, callback=history_rows.append)
    doc = experiments.ellipsoid_result(inst, res, seed, None if args.no_timing else time.perf_counter() - t0)
    formats.write(args.out, doc)
    hist_path = Path(args.history) if args.history else Path(args.out).with_suffix(".history.jsonl")
    if hist_path.suffix == ".csv":
        hist_path.write_text(formats.rows_csv(history_rows))
    else:
        hist_path.write_text("".join(formats.dumps(r, indent=None) + "\n" for r in history_rows))
    _log(f"max overlap {doc['max_overlap']:.10g} ({doc['termination']}) -> {args.out}")
    return EXIT_OK


def _load_scenario(arg: str, overrides: dict) -> ChromoScenario:
    p = Path(arg)
    if p.suffix == ".json" or p.exists():
        doc = formats.load(p, "scenario")
        doc = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()}
        doc.update(overrides)
        return ChromoScenario(**doc)
    return scenario(arg, **overrides)


def cmd_chromo(args) -> int:
    over = {k: v for k, v in (("trials", args.trials), ("seed", args.seed), ("penalty", args.penalty),
                              ("lambda_factor", args.lam)) if v is not None}
    scn = _load_scenario(args.scenario, over)
    cfg = TrustRegionConfig(max_iter=args.max_iter) if args.max_iter is not None else TrustRegionConfig()
    out = Path(args.out)
    (out / "trials").mkdir(parents=True, exist_ok=True)

    def save(r):
        formats.write(out / "trials" / f"trial_{r.index:04d}.json", r.to_dict())
        _log(f"trial {r.index}: objective {r.objective:.6g} ({r.reason}){' ' + r.error if r.error else ''}")

    stats, _ = run_batch(scn, cfg, args.workers or default_workers(), save)
    formats.write(out / "scenario.json", {k: list(v) if isinstance(v, tuple) else v
                                          for k, v in scn.__dict__.items()})
    formats.write(out / "stats.json", stats.to_dict())
    _log(f"slope {stats.slope:.6g}, kept {stats.kept}/{stats.trials} -> {out}")
    return EXIT_OK


# ----------------------------------------------------------------------
def _repro_job(fig: str, workers: int, seed: int, timing: bool):
    if fig == "fig1":
        return experiments.five_circles(seed=seed, timing=timing)
    if fig == "fig2":
        return experiments.hex_emergence(seed=seed, timing=timing)
    if fig == "fig4":
        return experiments.fcc_trend(seed=seed)
    if fig == "fig5":
        return experiments.curved_hex(seed=seed)
    variant = "penalty" if fig == "table5-sign" else "plain"
    return experiments.chromo_trends(seed=seed, workers=workers, variants=(variant,))


def _repro_child(conn, fig, workers, seed, timing):
    try:
        conn.send(("ok", _repro_job(fig, workers, seed, timing)))
    except MinOverlapError as exc:
        conn.send(("error", f"{type(exc).__name__}: {exc}"))
    conn.close()


def cmd_repro(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    budget = args.budget * 60.0 if args.budget is not None else None
    parent, child = mp.Pipe(duplex=False)
    proc = mp.Process(target=_repro_child, args=(child, args.id, args.workers or default_workers(), args.seed,
                                                 not args.no_timing))
    t0 = time.perf_counter()
    proc.start()
    child.close()
    got = parent.poll(budget)
    if not got:
        proc.terminate()
        proc.join()
        rep = {"name": args.id, "passed": False, "budget_exceeded": True, "budget_seconds": budget,
               "elapsed": time.perf_counter() - t0}
        formats.write(out / f"{args.id}_report.json", rep)
        _log(f"{args.id}: budget of {args.budget} min exceeded")
        return EXIT_BUDGET
    kind, payload = parent.recv()
    proc.join()
    if kind == "error":
        raise IterationError(payload)
    check = payload
    for name, text in check.documents.items():
        (out / name).write_text(text)
    formats.write(out / f"{args.id}_report.json", check.report())
    print(check.line())
    return EXIT_OK


# ----------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="minoverlap", description="Minimum-overlap packing of spheres and ellipsoids.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("pack-spheres", help="pack equal or unequal spheres from an instance file")
    s.add_argument("instance")
    s.add_argument("--out", required=True)
    s.add_argument("--svg")
    s.add_argument("--starts", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--no-timing", action="store_true", help="write null wall_clock for byte-identical reruns")
    s.set_defaults(func=cmd_pack_spheres)

    e = sub.add_parser("pack-ellipsoids", help="pack ellipsoids with the trust-region method")
    e.add_argument("instance")
    e.add_argument("--out", required=True)
    e.add_argument("--seed", type=int)
    e.add_argument("--history", help="history log path (.csv or .jsonl)")
    e.add_argument("--homolog", help="JSON file with pairs, penalty and lambda")
    e.add_argument("--penalty", type=float)
    e.add_argument("--lambda", dest="lam", type=float)
    e.add_argument("--max-iter", type=int)
    e.add_argument("--no-timing", action="store_true")
    e.set_defaults(func=cmd_pack_ellipsoids)

    c = sub.add_parser("chromo", help="run a batch of chromosome-territory trials")
    c.add_argument("--scenario", required=True, help="scenario name such as medium-ellipsoidal, or a JSON file")
    c.add_argument("--trials", type=int)
    c.add_argument("--penalty", type=float)
    c.add_argument("--lambda", dest="lam", type=float)
    c.add_argument("--out", required=True)
    c.add_argument("--seed", type=int)
    c.add_argument("--workers", type=int)
    c.add_argument("--max-iter", type=int)
    c.set_defaults(func=cmd_chromo)

    r = sub.add_parser("repro", help="rerun a figure or table check and write a report")
    r.add_argument("id", choices=REPRO_IDS)
    r.add_argument("--out", required=True)
    r.add_argument("--budget", type=float, help="minutes")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--workers", type=int)
    r.add_argument("--no-timing", action="store_true")
    r.set_defaults(func=cmd_repro)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        _log(f"error: {exc}")
        return EXIT_INPUT
    except InfeasibleContainmentError as exc:
        _log(f"infeasible: {exc}")
        return EXIT_INFEASIBLE
    except (IterationError, MeasurementError, NumericalError, IndeterminateValueError) as exc:
        _log(f"numerical failure: {exc}")
        return EXIT_NUMERICAL
    except (InvalidInputError, ValueError, OSError) as exc:
        _log(f"error: {exc}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
