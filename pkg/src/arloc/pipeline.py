"""Two-stage positioning pipeline and the four comparison methods.

Methods:
  wifi_only    - cosine match of the query fingerprint against per-RP medoids
  image_only   - keypoint retrieval over every stored image, top similarity
  combined     - subarea gate from Wi-Fi, then retrieval inside the subarea
  combined_dr  - like combined, but the final pick uses distance-ratio
                 compensation among the top-m similar images

A ``Localizer`` precomputes per-RP medoid vectors so repeated queries against
one map are cheap; the module-level ``localize`` wraps a throwaway instance.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DegenerateFingerprintError
from .fingerprints import ClusterConfig, Fingerprint, medoid, shifted_vector
from .mapmodel import IndoorMap
from .vision import (
    ImageMatch,
    KeypointSet,
    MatchConfig,
    RankedImage,
    _accept_from_dists,
    rank_entries,
    select_rp,
)


class Method(str, Enum):
    WIFI_ONLY = "wifi_only"
    IMAGE_ONLY = "image_only"
    COMBINED = "combined"
    COMBINED_DR = "combined_dr"


@dataclass(eq=False)
class Query:
    """One online observation: fingerprint plus camera keypoints."""

    fingerprint: Fingerprint
    keypoints: KeypointSet
    heading: float = 0.0
    device_id: str = ""

    def __post_init__(self):
        if not 0 <= self.heading < 360:
            raise ValueError(f"heading must be in [0, 360), got {self.heading}")


@dataclass(eq=False)
class LocalizationResult:
    rp_id: int
    subarea_id: int | None
    position: np.ndarray
    method: Method
    ranked: list[RankedImage] = field(default_factory=list)
    fallback: bool = False


class Localizer:
    """Shared read-only state for localizing queries against one map."""

    def __init__(self, indoor_map: IndoorMap, cluster_cfg: ClusterConfig,
                 match_cfg: MatchConfig):
        self.map = indoor_map
        self.cluster_cfg = cluster_cfg
        self.match_cfg = match_cfg
        self.rps = sorted(indoor_map.rps, key=lambda rp: rp.id)
        if not self.rps:
            raise ValueError("map has no reference points")
        self.subareas = sorted(indoor_map.subareas, key=lambda s: s.id)

        floor = cluster_cfg.rss_floor
        ap_ids: set[str] = set()
        for rp in self.rps:
            for fp in rp.fingerprints:
                ap_ids.update(fp.readings)
        for sa in self.subareas:
            ap_ids.update(sa.centroid.readings)
        self.ap_ids = sorted(ap_ids)
        self._ap_set = ap_ids

        self._medoid_unit = None
        if all(rp.fingerprints for rp in self.rps):
            meds = [rp.fingerprints[medoid(rp.fingerprints, floor)] for rp in self.rps]
            self._medoid_unit = self._unit_rows(meds, floor)
        self._centroid_unit = None
        if self.subareas:
            self._centroid_unit = self._unit_rows([s.centroid for s in self.subareas], floor)
        self._members = {
            sa.id: [rp for rp in self.rps if rp.id in set(sa.member_rp_ids)]
            for sa in self.subareas
        }
        # per-RP concatenated descriptor blobs let one cdist call cover all of
        # an RP's stored images during a scan
        self._blobs = {}
        for rp in self.rps:
            mats = [img.descriptor_matrix() for img in rp.images]
            slices = []
            start = 0
            for idx, mat in enumerate(mats):
                slices.append((idx, start, start + mat.shape[0]))
                start += mat.shape[0]
            nonempty = [m for m in mats if m.shape[0]]
            blob = np.concatenate(nonempty) if nonempty else np.zeros((0, 0))
            self._blobs[rp.id] = (blob, slices)

    def _unit_rows(self, fps, floor) -> np.ndarray:
        m = np.stack([shifted_vector(fp, self.ap_ids, floor) for fp in fps])
        norms = np.linalg.norm(m, axis=1)
        if np.any(norms == 0.0):
            raise DegenerateFingerprintError("stored fingerprint has no signal above the floor")
        return m / norms[:, None]

    def _query_cosines(self, fp: Fingerprint, unit: np.ndarray) -> np.ndarray:
        """Cosine of fp against unit rows; exact even when fp carries unseen APs."""
        floor = self.cluster_cfg.rss_floor
        v = shifted_vector(fp, self.ap_ids, floor)
        extra = sum(
            max(rss - floor, 0.0) ** 2
            for ap, rss in fp.readings.items()
            if ap not in self._ap_set
        )
        norm = float(np.sqrt(v @ v + extra))
        if norm == 0.0:
            raise DegenerateFingerprintError("query fingerprint has no signal above the floor")
        return unit @ v / norm

    def wifi_rp_id(self, fp: Fingerprint) -> int:
        if self._medoid_unit is None:
            raise ValueError("map RPs have no fingerprints; cannot run the Wi-Fi stage")
        return self.rps[int(np.argmax(self._query_cosines(fp, self._medoid_unit)))].id

    def locate_subarea_id(self, fp: Fingerprint) -> int:
        if self._centroid_unit is None:
            raise ValueError("map has no subareas; run clustering first")
        return self.subareas[int(np.argmax(self._query_cosines(fp, self._centroid_unit)))].id

    def _scan(self, query: KeypointSet, rps) -> list[ImageMatch]:
        """Batched equivalent of vision.scan_images over the cached blobs."""
        qdesc = query.descriptor_matrix()
        entries = []
        if qdesc.shape[0] == 0:
            return entries
        for rp in sorted(rps, key=lambda r: r.id):
            blob, slices = self._blobs[rp.id]
            if blob.shape[0] == 0:
                continue
            if blob.shape[1] != qdesc.shape[1]:
                raise ValueError(
                    f"descriptor length mismatch: query {qdesc.shape[1]} vs candidate {blob.shape[1]}"
                )
            d_all = cdist(qdesc, blob)
            for idx, start, end in slices:
                if end == start:
                    continue
                qi, ci, _ = _accept_from_dists(d_all[:, start:end], self.match_cfg)
                if qi.size:
                    entries.append(ImageMatch(rp.id, idx, int(qi.size), qi, ci,
                                              rp.images[idx]))
        return entries

    def _result(self, rp_id: int, subarea_id, method: Method, ranked, fallback=False):
        rp = self.map.rp_by_id(rp_id)
        return LocalizationResult(
            rp_id=rp_id, subarea_id=subarea_id, position=rp.position.copy(),
            method=method, ranked=ranked, fallback=fallback,
        )

    def _pick(self, query: Query, method: Method, subarea_id, entries) -> LocalizationResult:
        ranked = rank_entries(query.keypoints, entries, self.match_cfg)
        if not ranked:
            return self._result(self.wifi_rp_id(query.fingerprint), subarea_id,
                                method, ranked, fallback=True)
        if method is Method.COMBINED_DR:
            rp_id = select_rp(ranked, self.match_cfg)
        else:
            rp_id = ranked[0].rp_id
        return self._result(rp_id, subarea_id, method, ranked)

    def localize(self, query: Query, method: Method) -> LocalizationResult:
        method = Method(method)
        if method is Method.WIFI_ONLY:
            return self._result(self.wifi_rp_id(query.fingerprint), None, method, [])
        if method is Method.IMAGE_ONLY:
            subarea_id = None
            candidates = self.rps
        else:
            subarea_id = self.locate_subarea_id(query.fingerprint)
            candidates = self._members[subarea_id]
        return self._pick(query, method, subarea_id, self._scan(query.keypoints, candidates))

    def localize_all(self, query: Query) -> dict[Method, LocalizationResult]:
        """All four methods from one global image scan; equals per-method localize."""
        wifi_id = self.wifi_rp_id(query.fingerprint)
        subarea_id = self.locate_subarea_id(query.fingerprint)
        entries = self._scan(query.keypoints, self.rps)
        member_ids = {rp.id for rp in self._members[subarea_id]}
        sub_entries = [e for e in entries if e.rp_id in member_ids]
        return {
            Method.WIFI_ONLY: self._result(wifi_id, None, Method.WIFI_ONLY, []),
            Method.IMAGE_ONLY: self._pick(query, Method.IMAGE_ONLY, None, entries),
            Method.COMBINED: self._pick(query, Method.COMBINED, subarea_id, sub_entries),
            Method.COMBINED_DR: self._pick(query, Method.COMBINED_DR, subarea_id, sub_entries),
        }


def localize(query: Query, indoor_map: IndoorMap, cluster_cfg: ClusterConfig,
             match_cfg: MatchConfig, method: Method) -> LocalizationResult:
    return Localizer(indoor_map, cluster_cfg, match_cfg).localize(query, method)


@dataclass
class MethodMetrics:
    matching_rate: float
    avg_error_m: float
    n_trials: int
    per_device: dict[str, "MethodMetrics"] = field(default_factory=dict)


@dataclass
class MetricsReport:
    methods: dict[str, MethodMetrics]
    n_trials: int
    seed: int | None = None


def _metrics(hits: list[bool], errors: list[float]) -> tuple[float, float]:
    n = len(hits)
    return (sum(hits) / n, float(np.mean(errors))) if n else (0.0, 0.0)


def evaluate(trials, indoor_map: IndoorMap, cluster_cfg: ClusterConfig,
             match_cfg: MatchConfig, methods=None, seed: int | None = None) -> MetricsReport:
    """Matching rate and mean distance error per method, with per-device breakdown."""
    if not trials:
        raise ValueError("trials must be non-empty")
    methods = [Method(m) for m in (methods or list(Method))]
    loc = Localizer(indoor_map, cluster_cfg, match_cfg)
    positions = {rp.id: rp.position for rp in loc.rps}
    for _, true_id in trials:
        if true_id not in positions:
            raise ValueError(f"trial references unknown RP {true_id}")

    all_results = [loc.localize_all(query) for query, _ in trials]
    report = MetricsReport(methods={}, n_trials=len(trials), seed=seed)
    for method in methods:
        hits, errors = [], []
        by_device: dict[str, tuple[list, list]] = {}
        for (query, true_id), results in zip(trials, all_results):
            result = results[method]
            hit = result.rp_id == true_id
            err = float(np.linalg.norm(result.position - positions[true_id]))
            hits.append(hit)
            errors.append(err)
            dev = by_device.setdefault(query.device_id, ([], []))
            dev[0].append(hit)
            dev[1].append(err)
        rate, avg = _metrics(hits, errors)
        per_device = {}
        for device in sorted(by_device):
            d_rate, d_avg = _metrics(*by_device[device])
            per_device[device] = MethodMetrics(
                matching_rate=d_rate, avg_error_m=d_avg, n_trials=len(by_device[device][0])
            )
        report.methods[method.value] = MethodMetrics(
            matching_rate=rate, avg_error_m=avg, n_trials=len(trials), per_device=per_device
        )
    return report
