"""Keypoint matching, image ranking, and distance-ratio compensation.

The distance ratio DR of a candidate image relative to a query image is the
mean over ordered pairs of matched keypoints of (candidate pairwise pixel
distance) / (query pairwise pixel distance). DR > 1 means the candidate was
shot closer to the scene than the query. Among the top-m most similar images,
the one with DR nearest 1 in log space (argmin |ln DR|) is selected, which
treats half and double shooting distance symmetrically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from scipy.spatial.distance import cdist

from .errors import (
    DegenerateGeometryError,
    InsufficientMatchesError,
    NoCandidateError,
)

if TYPE_CHECKING:
    from .mapmodel import ReferencePoint


@dataclass(eq=False)
class Keypoint:
    px: float
    py: float
    sigma: float
    descriptor: np.ndarray

    def __post_init__(self):
        self.descriptor = np.asarray(self.descriptor, dtype=float)
        if self.sigma <= 0:
            raise ValueError(f"keypoint scale must be positive, got {self.sigma}")


@dataclass(eq=False)
class KeypointSet:
    """Keypoints of one image; may be empty. Treated as immutable once built."""

    keypoints: list[Keypoint] = field(default_factory=list)
    source_rp_id: int | None = None
    source_heading: float | None = None

    def __post_init__(self):
        lengths = {len(k.descriptor) for k in self.keypoints}
        if len(lengths) > 1:
            raise ValueError(f"descriptor lengths differ within one set: {sorted(lengths)}")
        self._desc: np.ndarray | None = None
        self._pix: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.keypoints)

    def descriptor_matrix(self) -> np.ndarray:
        if self._desc is None:
            if self.keypoints:
                self._desc = np.stack([k.descriptor for k in self.keypoints])
            else:
                self._desc = np.zeros((0, 0))
        return self._desc

    def pixel_matrix(self) -> np.ndarray:
        if self._pix is None:
            self._pix = np.array([[k.px, k.py] for k in self.keypoints], dtype=float).reshape(-1, 2)
        return self._pix


@dataclass
class MatchConfig:
    n_pairs: int = 10
    top_m: int = 5
    ratio_threshold: float = 0.75
    min_matches: int = 4
    epsilon: float = 1e-9

    def __post_init__(self):
        if self.n_pairs <= 1:
            raise ValueError(f"n_pairs must be > 1, got {self.n_pairs}")
        if self.top_m < 1:
            raise ValueError(f"top_m must be >= 1, got {self.top_m}")
        if not 0 < self.ratio_threshold < 1:
            raise ValueError(f"ratio_threshold must be in (0, 1), got {self.ratio_threshold}")
        if self.min_matches < 1:
            raise ValueError("min_matches must be >= 1")


@dataclass(eq=False)
class MatchPair:
    query_point: Keypoint
    candidate_point: Keypoint
    descriptor_distance: float


@dataclass
class RankedImage:
    """One row of a retrieval ranking; dr is None when too few matches exist."""

    rp_id: int
    image_index: int
    similarity: int
    dr: float | None


_EMPTY_MATCH = (np.zeros(0, dtype=int), np.zeros(0, dtype=int), np.zeros(0))


def _accept_from_dists(d: np.ndarray, cfg: MatchConfig):
    """Ratio-tested one-to-one matches from a query x candidate distance matrix.

    For each query descriptor the nearest candidate is proposed; the proposal
    survives the ratio test d1 < threshold * d2 (unconditionally when the
    candidate holds a single keypoint), then candidates are deduplicated
    greedily by ascending distance. Output is ascending by distance.
    """
    if d.shape[1] == 1:
        nearest = np.zeros(d.shape[0], dtype=int)
        ndist = d[:, 0]
        accept = np.ones(d.shape[0], dtype=bool)
    else:
        order2 = np.argsort(d, axis=1, kind="stable")[:, :2]
        nearest = order2[:, 0]
        ndist = np.take_along_axis(d, order2, axis=1)
        accept = ndist[:, 0] < cfg.ratio_threshold * ndist[:, 1]
        ndist = ndist[:, 0]
    qi = np.flatnonzero(accept)
    if qi.size == 0:
        return _EMPTY_MATCH
    ci = nearest[qi]
    dist = ndist[qi]
    order = np.lexsort((qi, dist))
    qi, ci, dist = qi[order], ci[order], dist[order]
    _, first = np.unique(ci, return_index=True)
    keep = np.zeros(len(ci), dtype=bool)
    keep[first] = True
    return qi[keep], ci[keep], dist[keep]


def _match_arrays(qdesc: np.ndarray, cdesc: np.ndarray, cfg: MatchConfig):
    """Accepted one-to-one matches as (query_idx, cand_idx, distance) arrays."""
    if qdesc.shape[0] == 0 or cdesc.shape[0] == 0:
        return _EMPTY_MATCH
    if qdesc.shape[1] != cdesc.shape[1]:
        raise ValueError(
            f"descriptor length mismatch: query {qdesc.shape[1]} vs candidate {cdesc.shape[1]}"
        )
    return _accept_from_dists(cdist(qdesc, cdesc), cfg)


def match_keypoints(query: KeypointSet, candidate: KeypointSet, cfg: MatchConfig) -> list[MatchPair]:
    qi, ci, dist = _match_arrays(query.descriptor_matrix(), candidate.descriptor_matrix(), cfg)
    return [
        MatchPair(query.keypoints[q], candidate.keypoints[c], float(s))
        for q, c, s in zip(qi, ci, dist)
    ]


def image_similarity(query: KeypointSet, candidate: KeypointSet, cfg: MatchConfig) -> int:
    """Number of accepted match pairs between the two keypoint sets."""
    qi, _, _ = _match_arrays(query.descriptor_matrix(), candidate.descriptor_matrix(), cfg)
    return int(qi.size)


def _dr_from_points(qpix: np.ndarray, cpix: np.ndarray, cfg: MatchConfig) -> float:
    """Distance ratio from matched pixel coordinates, ascending-by-distance order assumed."""
    need = max(2, cfg.min_matches)
    if len(qpix) < need:
        raise InsufficientMatchesError(f"{len(qpix)} accepted matches, need at least {need}")
    n = min(cfg.n_pairs, len(qpix))
    a = qpix[:n]
    b = cpix[:n]
    da = np.linalg.norm(a[:, None, :] - a[None, :, :], axis=2)
    db = np.linalg.norm(b[:, None, :] - b[None, :, :], axis=2)
    mask = ~np.eye(n, dtype=bool) & (da >= cfg.epsilon)
    if not mask.any():
        raise DegenerateGeometryError("all query keypoint pairs are coincident")
    return float((db[mask] / da[mask]).mean())


def distance_ratio(query: KeypointSet, candidate: KeypointSet, cfg: MatchConfig) -> float:
    """Mean pairwise-pixel-distance ratio of candidate over query on the best matches.

    Uses the n_pairs accepted matches with the smallest descriptor distance
    (all of them when fewer are available). Ordered pairs whose query-side
    distance falls below epsilon are skipped and the normalization reduced.
    """
    qi, ci, _ = _match_arrays(query.descriptor_matrix(), candidate.descriptor_matrix(), cfg)
    return _dr_from_points(query.pixel_matrix()[qi], candidate.pixel_matrix()[ci], cfg)


def distance_ratio_of_matches(matches: list[MatchPair], cfg: MatchConfig) -> float:
    """Distance ratio computed from pre-matched pairs (ascending by descriptor distance)."""
    qpix = np.array([[m.query_point.px, m.query_point.py] for m in matches]).reshape(-1, 2)
    cpix = np.array([[m.candidate_point.px, m.candidate_point.py] for m in matches]).reshape(-1, 2)
    return _dr_from_points(qpix, cpix, cfg)


@dataclass(eq=False)
class ImageMatch:
    """Match result of one stored image against a query (pre-ranking)."""

    rp_id: int
    image_index: int
    similarity: int
    query_idx: np.ndarray
    cand_idx: np.ndarray
    image: KeypointSet


def scan_images(query: KeypointSet, rps: list["ReferencePoint"], cfg: MatchConfig) -> list[ImageMatch]:
    """Match the query against every stored image; images with zero matches are dropped."""
    qdesc = query.descriptor_matrix()
    entries = []
    if qdesc.shape[0] == 0:
        return entries
    for rp in sorted(rps, key=lambda r: r.id):
        for idx, img in enumerate(rp.images):
            qi, ci, _ = _match_arrays(qdesc, img.descriptor_matrix(), cfg)
            if qi.size:
                entries.append(ImageMatch(rp.id, idx, int(qi.size), qi, ci, img))
    return entries


def rank_entries(query: KeypointSet, entries: list[ImageMatch], cfg: MatchConfig) -> list[RankedImage]:
    """Top-m scan entries by match count, each annotated with its distance ratio.

    Ties order by lower rp id, then lower image index. DR is None where fewer
    than min_matches pairs exist or the geometry degenerates.
    """
    qpix = query.pixel_matrix()
    ordered = sorted(entries, key=lambda e: (-e.similarity, e.rp_id, e.image_index))
    ranked = []
    for e in ordered[: cfg.top_m]:
        try:
            dr = _dr_from_points(qpix[e.query_idx], e.image.pixel_matrix()[e.cand_idx], cfg)
        except (InsufficientMatchesError, DegenerateGeometryError):
            dr = None
        ranked.append(RankedImage(rp_id=e.rp_id, image_index=e.image_index,
                                  similarity=e.similarity, dr=dr))
    return ranked


def rank_images(query: KeypointSet, subarea_rps: list["ReferencePoint"], cfg: MatchConfig) -> list[RankedImage]:
    """Top-m stored images of the given RPs by match count, with distance ratios."""
    if not subarea_rps:
        raise ValueError("subarea_rps must be non-empty")
    return rank_entries(query, scan_images(query, subarea_rps, cfg), cfg)


def select_rp(ranked: list[RankedImage], cfg: MatchConfig) -> int:
    """RP whose image has DR closest to 1 in log space among the ranked entries.

    Entries without a usable DR are ignored unless none has one, in which case
    the highest-similarity entry wins. Ties break to the lower rp id.
    """
    if not ranked:
        raise NoCandidateError("empty ranking")
    valid = [e for e in ranked if e.dr is not None and e.dr > 0]
    if valid:
        best = min(valid, key=lambda e: (abs(math.log(e.dr)), e.rp_id))
    else:
        best = min(ranked, key=lambda e: (-e.similarity, e.rp_id))
    return best.rp_id
