"""RP-database persistence and the JSON wire helpers shared by CLI and service.

The database file is a single JSON document:

    {format_version, map: {width, depth, interval,
        rps: [{id, position: [x,y,z], fingerprints: [{ap: rss, ...}],
               images: [{heading, keypoints: [{px, py, sigma, descriptor}]}]}],
        subareas: [{id, centroid, member_rp_ids}],
        objects: [{id, label, position}]},
     build_config: {cluster, match, pose, synth}}

Loading validates the schema and map invariants and never leaves partial
state; an unsupported format_version is reported with both version numbers.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatabaseFormatError, DatabaseVersionError
from .fingerprints import ClusterConfig, Fingerprint
from .mapmodel import IndoorMap, ReferencePoint, Subarea, VirtualObject
from .pipeline import Query
from .pose import PoseConfig
from .synth import SynthConfig
from .vision import Keypoint, KeypointSet, MatchConfig

FORMAT_VERSION = 1


@dataclass(eq=False)
class RpDatabase:
    map: IndoorMap
    cluster_cfg: ClusterConfig
    match_cfg: MatchConfig
    pose_cfg: PoseConfig
    synth_cfg: SynthConfig
    format_version: int = FORMAT_VERSION


def keypoints_to_list(ks: KeypointSet) -> list[dict]:
    return [
        {"px": k.px, "py": k.py, "sigma": k.sigma, "descriptor": list(map(float, k.descriptor))}
        for k in ks.keypoints
    ]


def keypoints_from_list(items, rp_id=None, heading=None) -> KeypointSet:
    kps = [
        Keypoint(px=float(d["px"]), py=float(d["py"]), sigma=float(d["sigma"]),
                 descriptor=np.asarray(d["descriptor"], dtype=float))
        for d in items
    ]
    return KeypointSet(keypoints=kps, source_rp_id=rp_id, source_heading=heading)


def query_to_dict(query: Query) -> dict:
    return {
        "fingerprint": dict(query.fingerprint.readings),
        "keypoints": keypoints_to_list(query.keypoints),
        "heading": query.heading,
        "device_id": query.device_id,
    }


def query_from_dict(d: dict) -> Query:
    return Query(
        fingerprint=Fingerprint(readings={str(k): float(v) for k, v in d["fingerprint"].items()}),
        keypoints=keypoints_from_list(d.get("keypoints", [])),
        heading=float(d.get("heading", 0.0)),
        device_id=str(d.get("device_id", "")),
    )


def db_to_dict(db: RpDatabase) -> dict:
    m = db.map
    return {
        "format_version": db.format_version,
        "map": {
            "width": m.width,
            "depth": m.depth,
            "interval": m.interval,
            "rps": [
                {
                    "id": rp.id,
                    "position": [float(v) for v in rp.position],
                    "fingerprints": [dict(fp.readings) for fp in rp.fingerprints],
                    "images": [
                        {"heading": rp.viewpoint_headings[i], "keypoints": keypoints_to_list(img)}
                        for i, img in enumerate(rp.images)
                    ],
                }
                for rp in sorted(m.rps, key=lambda rp: rp.id)
            ],
            "subareas": [
                {
                    "id": sa.id,
                    "centroid": dict(sa.centroid.readings),
                    "member_rp_ids": list(sa.member_rp_ids),
                }
                for sa in sorted(m.subareas, key=lambda s: s.id)
            ],
            "objects": [
                {"id": o.id, "label": o.label, "position": [float(v) for v in o.position]}
                for o in m.objects
            ],
        },
        "build_config": {
            "cluster": dataclasses.asdict(db.cluster_cfg),
            "match": dataclasses.asdict(db.match_cfg),
            "pose": dataclasses.asdict(db.pose_cfg),
            "synth": dataclasses.asdict(db.synth_cfg),
        },
    }


def save_db(db: RpDatabase, path) -> None:
    Path(path).write_text(json.dumps(db_to_dict(db), sort_keys=True))


def _cfg(cls, payload: dict):
    try:
        return cls(**payload)
    except TypeError as exc:
        raise DatabaseFormatError(f"bad {cls.__name__} section: {exc}") from None
    except ValueError as exc:
        raise DatabaseFormatError(f"bad {cls.__name__} section: {exc}") from None


def db_from_dict(doc: dict) -> RpDatabase:
    if not isinstance(doc, dict):
        raise DatabaseFormatError("database document must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise DatabaseVersionError(
            f"file format_version {version!r} is not supported (this build reads {FORMAT_VERSION})"
        )
    try:
        m = doc["map"]
        rps = []
        for r in m["rps"]:
            images = []
            headings = []
            for img in r["images"]:
                headings.append(float(img["heading"]))
                images.append(keypoints_from_list(img["keypoints"], rp_id=int(r["id"]),
                                                  heading=float(img["heading"])))
            rps.append(ReferencePoint(
                id=int(r["id"]),
                position=np.asarray(r["position"], dtype=float),
                fingerprints=[Fingerprint(readings={str(k): float(v) for k, v in fp.items()})
                              for fp in r["fingerprints"]],
                images=images,
                viewpoint_headings=headings,
            ))
        subareas = [
            Subarea(id=int(s["id"]),
                    centroid=Fingerprint(readings={str(k): float(v) for k, v in s["centroid"].items()}),
                    member_rp_ids=[int(i) for i in s["member_rp_ids"]])
            for s in m["subareas"]
        ]
        objects = [
            VirtualObject(id=int(o["id"]), label=str(o["label"]),
                          position=np.asarray(o["position"], dtype=float))
            for o in m["objects"]
        ]
        indoor_map = IndoorMap(
            width=float(m["width"]), depth=float(m["depth"]), interval=float(m["interval"]),
            rps=rps, subareas=subareas, objects=objects,
        )
        cfg = doc["build_config"]
        db = RpDatabase(
            map=indoor_map,
            cluster_cfg=_cfg(ClusterConfig, cfg["cluster"]),
            match_cfg=_cfg(MatchConfig, cfg["match"]),
            pose_cfg=_cfg(PoseConfig, cfg["pose"]),
            synth_cfg=_cfg(SynthConfig, cfg["synth"]),
            format_version=int(version),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DatabaseFormatError):
            raise
        raise DatabaseFormatError(f"malformed database document: {exc!r}") from None
    try:
        indoor_map.validate()
    except ValueError as exc:
        raise DatabaseFormatError(f"database violates map invariants: {exc}") from None
    return db


def load_db(path) -> RpDatabase:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatabaseFormatError(f"not valid JSON: {exc}") from None
    return db_from_dict(doc)


def save_trials(trials, seed: int, devices: list[str], path) -> None:
    doc = {
        "seed": seed,
        "devices": list(devices),
        "n_trials": len(trials),
        "trials": [
            {"true_rp_id": true_id, "query": query_to_dict(q)} for q, true_id in trials
        ],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_trials(path):
    try:
        doc = json.loads(Path(path).read_text())
        trials = [(query_from_dict(t["query"]), int(t["true_rp_id"])) for t in doc["trials"]]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DatabaseFormatError(f"malformed trials file: {exc!r}") from None
    return trials, doc.get("seed")
