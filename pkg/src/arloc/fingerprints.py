"""Wi-Fi fingerprints: alignment, cosine similarity, medoids, and subarea clustering.

Fingerprints over differing AP sets are made comparable by projecting onto the
union of AP identifiers, filling missing APs with an RSS floor, and shifting
every reading to (rss - floor) clamped at zero. Cosine similarity on these
non-negative vectors stays in [0, 1].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFingerprintError
from .mapmodel import IndoorMap, Subarea

DEFAULT_RSS_FLOOR = -100.0


@dataclass(frozen=True)
class Fingerprint:
    """RSS readings in dBm keyed by an opaque access-point identifier."""

    readings: dict[str, float]

    def __post_init__(self):
        if not self.readings:
            raise ValueError("fingerprint needs at least one reading")
        for ap, rss in self.readings.items():
            if not math.isfinite(rss):
                raise ValueError(f"non-finite RSS {rss!r} for AP {ap!r}")
            if rss > 0:
                raise ValueError(f"RSS must be <= 0 dBm, got {rss} for AP {ap!r}")


@dataclass
class ClusterConfig:
    k: int = 3
    rss_floor: float = DEFAULT_RSS_FLOOR
    max_iterations: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.rss_floor >= 0:
            raise ValueError(f"rss_floor must be negative, got {self.rss_floor}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


def shifted_vector(fp: Fingerprint, ap_ids, floor: float) -> np.ndarray:
    """Project ``fp`` onto ``ap_ids``: missing APs read as the floor, entries are max(rss - floor, 0)."""
    return np.array([max(fp.readings.get(ap, floor) - floor, 0.0) for ap in ap_ids])


def align(a: Fingerprint, b: Fingerprint, floor: float = DEFAULT_RSS_FLOOR):
    """Shifted vectors of ``a`` and ``b`` over the sorted union of their AP identifiers."""
    if floor >= 0:
        raise ValueError(f"floor must be negative, got {floor}")
    ap_ids = sorted(set(a.readings) | set(b.readings))
    return shifted_vector(a, ap_ids, floor), shifted_vector(b, ap_ids, floor)


def cosine_similarity(a: Fingerprint, b: Fingerprint, floor: float = DEFAULT_RSS_FLOOR) -> float:
    va, vb = align(a, b, floor)
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise DegenerateFingerprintError("fingerprint has no signal above the RSS floor")
    return min(1.0, float(va @ vb) / (na * nb))


def _distance_matrix(fps, floor: float) -> np.ndarray:
    """Pairwise cosine distances (1 - similarity) over the union AP universe."""
    ap_ids = sorted(set().union(*(fp.readings for fp in fps)))
    m = np.stack([shifted_vector(fp, ap_ids, floor) for fp in fps])
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms == 0.0):
        idx = int(np.flatnonzero(norms == 0.0)[0])
        raise DegenerateFingerprintError(f"fingerprint {idx} has no signal above the RSS floor")
    unit = m / norms[:, None]
    dist = 1.0 - np.clip(unit @ unit.T, 0.0, 1.0)
    np.fill_diagonal(dist, 0.0)
    return dist


def medoid(fps, floor: float = DEFAULT_RSS_FLOOR) -> int:
    """Index of the fingerprint minimizing summed cosine distance to all others.

    Ties break to the lowest index.
    """
    fps = list(fps)
    if not fps:
        raise ValueError("medoid of an empty fingerprint list")
    if len(fps) == 1:
        return 0
    dist = _distance_matrix(fps, floor)
    return int(np.argmin(dist.sum(axis=1)))


@dataclass
class KMedoidsResult:
    medoid_indices: list[int]
    labels: np.ndarray
    objective_history: list[float]


def kmedoids(dist: np.ndarray, k: int, seed: int, max_iterations: int = 50) -> KMedoidsResult:
    """K-medoids by alternating assignment and per-cluster medoid update.

    Initialization is seeded: the first medoid is drawn from the RNG, the rest
    greedily maximize the distance to the already-chosen medoids. Iteration
    stops at an assignment fixpoint or after ``max_iterations``. Deterministic
    for a fixed (dist, k, seed); the objective (summed within-cluster distance
    to the medoid) never increases between recorded iterations.
    """
    n = len(dist)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in 1..{n}, got {k}")
    rng = np.random.default_rng(seed)
    medoids = [int(rng.integers(n))]
    while len(medoids) < k:
        dmin = dist[:, medoids].min(axis=1)
        dmin[medoids] = -np.inf
        medoids.append(int(np.argmax(dmin)))

    med = np.array(medoids)
    labels = np.argmin(dist[:, med], axis=1)
    history = [float(dist[np.arange(n), med[labels]].sum())]
    for _ in range(max_iterations):
        for c in range(k):
            members = np.flatnonzero(labels == c)
            if members.size:
                med[c] = int(members[np.argmin(dist[np.ix_(members, members)].sum(axis=1))])
        new_labels = np.argmin(dist[:, med], axis=1)
        history.append(float(dist[np.arange(n), med[new_labels]].sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return KMedoidsResult(medoid_indices=[int(i) for i in med], labels=labels, objective_history=history)


def build_subareas(indoor_map: IndoorMap, cfg: ClusterConfig) -> list[Subarea]:
    """Two-step clustering of the map's fingerprints into K subareas.

    Step 1 picks each RP's medoid fingerprint as its representative; step 2
    runs K-medoids over those representatives with cosine distance. Each
    subarea stores its cluster medoid as the centroid plus the member RP ids.
    Subarea ids are assigned 0..k-1 in order of the medoid's RP id.
    """
    rps = sorted(indoor_map.rps, key=lambda rp: rp.id)
    if cfg.k > len(rps):
        raise ValueError(f"k={cfg.k} exceeds the {len(rps)} available RPs")
    for rp in rps:
        if not rp.fingerprints:
            raise ValueError(f"RP {rp.id} has no fingerprints")
    reps = [rp.fingerprints[medoid(rp.fingerprints, cfg.rss_floor)] for rp in rps]
    result = kmedoids(_distance_matrix(reps, cfg.rss_floor), cfg.k, cfg.seed, cfg.max_iterations)

    clusters = []
    for c, med_idx in enumerate(result.medoid_indices):
        member_ids = sorted(rps[i].id for i in np.flatnonzero(result.labels == c))
        clusters.append((rps[med_idx].id, reps[med_idx], member_ids))
    clusters.sort(key=lambda t: t[0])
    return [
        Subarea(id=i, centroid=centroid, member_rp_ids=members)
        for i, (_, centroid, members) in enumerate(clusters)
    ]


def locate_subarea(fp: Fingerprint, subareas, floor: float = DEFAULT_RSS_FLOOR) -> Subarea:
    """Subarea whose centroid is most cosine-similar to ``fp``; ties to the lowest id."""
    subareas = sorted(subareas, key=lambda s: s.id)
    if not subareas:
        raise ValueError("no subareas to locate against")
    return max(subareas, key=lambda s: cosine_similarity(fp, s.centroid, floor))
