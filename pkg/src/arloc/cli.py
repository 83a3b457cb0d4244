"""Command-line driver: generate, cluster, localize, simulate, evaluate, serve."""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .db import (
    RpDatabase,
    load_db,
    load_trials,
    query_from_dict,
    save_db,
    save_trials,
)
from .errors import DatabaseFormatError
from .fingerprints import ClusterConfig, build_subareas
from .pipeline import Method, evaluate, localize
from .pose import PoseConfig
from .synth import SynthConfig, gen_environment, gen_trials
from .vision import MatchConfig


def _require_subareas(db: RpDatabase) -> None:
    if not db.map.subareas:
        raise ValueError("database has no subareas; run build-db first")


def cmd_gen(args) -> int:
    cfg = SynthConfig(
        seed=args.seed,
        num_aps=args.num_aps,
        rss_noise_sigma=args.rss_noise,
        num_objects=args.num_objects,
        landmarks_per_object=args.landmarks_per_object,
        fingerprints_per_rp=args.fingerprints_per_rp,
        images_per_rp=args.images_per_rp,
    )
    pose_cfg = PoseConfig(max_observe_distance=args.max_observe_distance)
    indoor_map = gen_environment(args.width, args.depth, args.interval, cfg, pose_cfg)
    db = RpDatabase(map=indoor_map, cluster_cfg=ClusterConfig(seed=args.seed),
                    match_cfg=MatchConfig(), pose_cfg=pose_cfg, synth_cfg=cfg)
    save_db(db, args.out)
    print(f"wrote {args.out}: {len(indoor_map.rps)} RPs, "
          f"{sum(len(rp.images) for rp in indoor_map.rps)} stored views")
    return 0


def cmd_build_db(args) -> int:
    db = load_db(args.input)
    cfg = ClusterConfig(k=args.k, seed=args.seed, max_iterations=args.max_iterations)
    db.map.subareas = build_subareas(db.map, cfg)
    db.cluster_cfg = cfg
    save_db(db, args.out)
    sizes = [len(sa.member_rp_ids) for sa in db.map.subareas]
    print(f"wrote {args.out}: {len(sizes)} subareas with sizes {sizes}")
    return 0


def cmd_localize(args) -> int:
    db = load_db(args.db)
    method = Method(args.method)
    if method is not Method.WIFI_ONLY:
        _require_subareas(db)
    query = query_from_dict(json.loads(Path(args.query).read_text()))
    result = localize(query, db.map, db.cluster_cfg, db.match_cfg, method)
    print(json.dumps({
        "rp_id": result.rp_id,
        "subarea_id": result.subarea_id,
        "position": [float(v) for v in result.position],
        "method": result.method.value,
        "fallback": result.fallback,
        "ranked": [
            {"rp_id": e.rp_id, "image_index": e.image_index,
             "similarity": e.similarity, "dr": e.dr}
            for e in result.ranked
        ],
    }, sort_keys=True))
    return 0


def cmd_simulate(args) -> int:
    db = load_db(args.db)
    devices = [d for d in args.devices.split(",") if d]
    trials = gen_trials(db.map, db.synth_cfg, args.trials, devices,
                        pose_cfg=db.pose_cfg, trial_seed=args.seed)
    save_trials(trials, args.seed, devices, args.out)
    print(f"wrote {args.out}: {len(trials)} trials over {len(devices)} devices")
    return 0


def _report_dict(report, methods):
    rows = {}
    for name in methods:
        m = report.methods[name]
        rows[name] = {
            "matching_rate": m.matching_rate,
            "avg_error_m": m.avg_error_m,
            "n_trials": m.n_trials,
            "seed": report.seed,
            "per_device": {
                dev: {"matching_rate": d.matching_rate, "avg_error_m": d.avg_error_m,
                      "n_trials": d.n_trials}
                for dev, d in m.per_device.items()
            },
        }
    return {"n_trials": report.n_trials, "seed": report.seed, "methods": rows}


def cmd_evaluate(args) -> int:
    db = load_db(args.db)
    _require_subareas(db)
    trials, seed = load_trials(args.trials)
    if args.methods == "all":
        methods = [m.value for m in Method]
    else:
        methods = [Method(m).value for m in args.methods.split(",") if m]
    report = evaluate(trials, db.map, db.cluster_cfg, db.match_cfg, methods, seed=seed)
    doc = _report_dict(report, methods)
    Path(args.report).write_text(json.dumps(doc, sort_keys=True))

    print(f"{'method':<14}{'matching_rate':>15}{'avg_error_m':>14}")
    for name in methods:
        m = report.methods[name]
        print(f"{name:<14}{m.matching_rate:>15.4f}{m.avg_error_m:>14.4f}")
    print(f"report written to {args.report}")
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    db = load_db(args.db)
    _require_subareas(db)
    serve(db, port=args.port, host=args.host)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arloc",
                                     description="Indoor localization and AR-display toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="synthesize a surveyed environment")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--width", type=float, default=4.0)
    p.add_argument("--depth", type=float, default=2.0)
    p.add_argument("--interval", type=float, default=0.5)
    p.add_argument("--num-aps", type=int, default=16)
    p.add_argument("--rss-noise", type=float, default=3.0)
    p.add_argument("--num-objects", type=int, default=6)
    p.add_argument("--landmarks-per-object", type=int, default=60)
    p.add_argument("--fingerprints-per-rp", type=int, default=50)
    p.add_argument("--images-per-rp", type=int, default=50)
    p.add_argument("--max-observe-distance", type=float, default=10.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("build-db", help="cluster fingerprints into subareas")
    p.add_argument("--input", required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iterations", type=int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_db)

    p = sub.add_parser("localize", help="localize one query file against a database")
    p.add_argument("--db", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--method", default="combined_dr",
                   choices=[m.value for m in Method])
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("simulate", help="generate a seeded trial set")
    p.add_argument("--db", required=True)
    p.add_argument("--trials", type=int, default=300)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--devices", default="phone-a,phone-b,phone-c")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="score localization methods on a trial set")
    p.add_argument("--db", required=True)
    p.add_argument("--trials", required=True)
    p.add_argument("--methods", default="all")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="run the localization HTTP service")
    p.add_argument("--db", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except (DatabaseFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
