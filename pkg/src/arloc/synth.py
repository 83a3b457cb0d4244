"""Deterministic synthetic environment and sensor-observation generator.

Stands in for physical survey work: access points emit RSS under a
log-distance path-loss model with Gaussian shadowing, and visual landmarks on
walls and exhibit objects project through a pinhole camera into keypoint sets.
Everything is a pure function of (config, seed): fixed sub-streams are derived
for world placement, per-RP survey data, and per-trial observations, so
databases and trial sets replay bit-identically.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fingerprints import Fingerprint
from .mapmodel import IndoorMap, VirtualObject, make_grid_map
from .pipeline import Query
from .pose import EyePose, PoseConfig, build_frustum, eye_pose_at, is_visible, to_local
from .vision import Keypoint, KeypointSet

FRAME_WIDTH = 800
FRAME_HEIGHT = 600
DESCRIPTOR_DIM = 16
# landmark appearance repeats across the room the way real venues do: wall
# decoration is one panel design tiled around the whole perimeter, and exhibit
# booths come in identical pairs placed in opposite room halves, so distant
# views can look alike while nearby landmarks stay distinguishable. A minimum
# pairwise separation keeps every landmark distinct at matching noise levels.
SIGNATURE_VARIATION = 0.3
MIN_SIGNATURE_SEPARATION = 0.8
POOL_BASE_SEPARATION = 4.0
WALL_PATTERN_PERIOD = 2.0
AP_HEIGHT = 0.8
OBJECT_HEIGHT = 1.0
WALL_SIDES = 4
# landmarks sit in a band around eye height so they stay inside the narrow
# vertical FOV even at short range
LANDMARK_Y_RANGE = (1.45, 1.75)
WALL_LANDMARK_FACTOR = 3
# physical walls stand off from the walkable RP rectangle, so even RPs on the
# grid edge keep the facing wall inside their view frustum
WALL_MARGIN = 0.6
# each landmark is detectable only from a band of viewing distances: outside
# it the feature's apparent scale leaves the detector's pyramid. The band
# start is drawn uniformly from DETECT_NEAR_RANGE and spans DETECT_BAND_FACTOR.
DETECT_NEAR_RANGE = (0.25, 1.4)
DETECT_BAND_FACTOR = 2.2

# seed-stream tags
_WORLD_STREAM = 0
_SURVEY_STREAM = 1
_TRIAL_STREAM = 2


@dataclass
class SynthConfig:
    seed: int = 42
    num_aps: int = 16
    tx_power_p0: float = -40.0
    path_loss_gamma: float = 2.5
    rss_noise_sigma: float = 3.0
    num_objects: int = 6
    landmarks_per_object: int = 60
    camera_range: float = 3.0
    landmark_dropout: float = 0.12
    keypoint_jitter_px: float = 1.0
    descriptor_noise: float = 0.05
    headings_per_rp: int = 8
    fingerprints_per_rp: int = 50
    images_per_rp: int = 50
    survey_heading_jitter_deg: float = 6.0
    survey_position_jitter: float = 0.07
    trial_jitter_cells: float = 0.5
    unique_appearance: bool = False
    device_rss_offsets: dict[str, float] = field(
        default_factory=lambda: {"phone-a": 0.0, "phone-b": 2.5, "phone-c": -2.0}
    )

    def __post_init__(self):
        for name in ("num_aps", "num_objects", "landmarks_per_object", "headings_per_rp",
                     "fingerprints_per_rp", "images_per_rp"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("rss_noise_sigma", "keypoint_jitter_px", "descriptor_noise",
                     "trial_jitter_cells", "survey_heading_jitter_deg",
                     "survey_position_jitter"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.camera_range <= 0:
            raise ValueError("camera_range must be positive")
        if not 0 <= self.landmark_dropout < 1:
            raise ValueError("landmark_dropout must be in [0, 1)")


@dataclass(eq=False)
class Landmark:
    id: int
    world_position: np.ndarray
    signature: np.ndarray
    detect_near: float = 0.0
    detect_far: float = float("inf")


@dataclass(eq=False)
class AccessPoint:
    id: str
    position: np.ndarray


@dataclass(eq=False)
class SynthWorld:
    aps: list[AccessPoint]
    landmarks: list[Landmark]
    objects: list[VirtualObject]


def path_loss_rss(distance: float, p0: float, gamma: float) -> float:
    """Noise-free RSS at ``distance`` meters under the log-distance model."""
    return p0 - 10.0 * gamma * np.log10(max(distance, 0.1))


def _min_separated(rng: np.random.Generator, count: int, separation: float) -> np.ndarray:
    vecs = rng.normal(size=(count, DESCRIPTOR_DIM))
    for i in range(1, count):
        while np.linalg.norm(vecs[:i] - vecs[i], axis=1).min() < separation:
            vecs[i] = rng.normal(size=DESCRIPTOR_DIM)
    return vecs


def _signatures(rng: np.random.Generator, base_pool: np.ndarray, base_idx: list[int]) -> np.ndarray:
    """Per-landmark descriptors: pool base plus variation, min separation enforced."""
    sigs = np.empty((len(base_idx), DESCRIPTOR_DIM))
    for i, b in enumerate(base_idx):
        sigs[i] = base_pool[b] + rng.normal(0.0, SIGNATURE_VARIATION, size=DESCRIPTOR_DIM)
        while i and np.linalg.norm(sigs[:i] - sigs[i], axis=1).min() < MIN_SIGNATURE_SEPARATION:
            sigs[i] = base_pool[b] + rng.normal(0.0, SIGNATURE_VARIATION, size=DESCRIPTOR_DIM)
    return sigs


def synth_world(width: float, depth: float, cfg: SynthConfig) -> SynthWorld:
    """Place APs, exhibit objects, and visual landmarks; deterministic in cfg.seed."""
    rng = np.random.default_rng([cfg.seed, _WORLD_STREAM])
    hx, hz = width / 2, depth / 2

    # APs mount on the walls, spread around the perimeter: wall-mounted
    # transmitters give much stronger spatial RSS gradients across the room
    # than mid-room placement would
    wx, wz = hx + WALL_MARGIN, hz + WALL_MARGIN
    perimeter = 4 * (wx + wz)
    aps = []
    for i in range(cfg.num_aps):
        s = (i + rng.uniform(0.1, 0.9)) / cfg.num_aps * perimeter
        if s < 2 * wx:
            pos = np.array([s - wx, AP_HEIGHT, wz])
        elif s < 2 * wx + 2 * wz:
            pos = np.array([wx, AP_HEIGHT, (s - 2 * wx) - wz])
        elif s < 4 * wx + 2 * wz:
            pos = np.array([(s - 2 * wx - 2 * wz) - wx, AP_HEIGHT, -wz])
        else:
            pos = np.array([-wx, AP_HEIGHT, (s - 4 * wx - 2 * wz) - wz])
        aps.append(AccessPoint(id=f"AP{i:02d}", position=pos))

    # exhibit booths come in identical pairs: the same installation (fitting
    # layout, prints, physical feature scales) built twice, the second copy a
    # whole wall-pattern period away at the same depth, so booth and backdrop
    # repeat together and the far twin is the main source of look-alike views
    n_groups = (cfg.num_objects + 1) // 2
    objects = []
    pair_shift = WALL_PATTERN_PERIOD * max(1, round(hx / WALL_PATTERN_PERIOD))
    for i in range(cfg.num_objects):
        group = i % n_groups
        if i < n_groups:
            pos = np.array([rng.uniform(-0.55 * hx - 0.9, -0.55 * hx + 0.4), OBJECT_HEIGHT,
                            rng.uniform(-0.9 * hz, 0.9 * hz)])
        else:
            first = objects[group].position
            pos = np.array([first[0] + pair_shift, OBJECT_HEIGHT, first[2]])
        objects.append(VirtualObject(id=i, label=f"exhibit-{i}", position=pos))

    # each wall gets its own panel design, tiled along the wall with a fixed
    # period, so a wall looks like itself a couple of meters over but never
    # like the opposite wall
    pattern_count = WALL_LANDMARK_FACTOR * cfg.landmarks_per_object // 2
    wall_patterns = [
        [(rng.uniform(0.0, WALL_PATTERN_PERIOD), rng.uniform(*LANDMARK_Y_RANGE),
          rng.uniform(*DETECT_NEAR_RANGE))
         for _ in range(pattern_count)]
        for _ in range(WALL_SIDES)
    ]
    base_pool = _min_separated(
        rng, WALL_SIDES * pattern_count + n_groups * cfg.landmarks_per_object,
        POOL_BASE_SEPARATION)

    y_lo, y_hi = LANDMARK_Y_RANGE
    wx, wz = hx + WALL_MARGIN, hz + WALL_MARGIN
    positions = []
    base_idx = []
    bands = []
    for side in range(WALL_SIDES):
        half_len = wx if side < 2 else wz
        period = WALL_PATTERN_PERIOD
        for j, (offset, y, near) in enumerate(wall_patterns[side]):
            along = offset - half_len
            while along < half_len:
                if side == 0:
                    positions.append([along, y, wz])
                elif side == 1:
                    positions.append([along, y, -wz])
                elif side == 2:
                    positions.append([wx, y, along])
                else:
                    positions.append([-wx, y, along])
                base_idx.append(side * pattern_count + j)
                bands.append(near)
                along += period
    ring_specs = [
        [(rng.uniform(0.0, 2 * np.pi), rng.uniform(0.15, 0.35), rng.uniform(y_lo, y_hi),
          rng.uniform(*DETECT_NEAR_RANGE))
         for _ in range(cfg.landmarks_per_object)]
        for _ in range(n_groups)
    ]
    for obj in objects:
        group = obj.id % n_groups
        for j, (ang, radius, y, near) in enumerate(ring_specs[group]):
            positions.append([obj.position[0] + radius * np.sin(ang), y,
                              obj.position[2] + radius * np.cos(ang)])
            base_idx.append(WALL_SIDES * pattern_count + group * cfg.landmarks_per_object + j)
            bands.append(near)

    if cfg.unique_appearance:
        # every landmark instance gets its own well-separated texture; used by
        # degenerate-noise studies where repeated decoration would make some
        # views indistinguishable by construction
        base_pool = _min_separated(rng, len(positions), POOL_BASE_SEPARATION)
        base_idx = list(range(len(positions)))
    sigs = _signatures(rng, base_pool, base_idx)
    landmarks = [
        Landmark(id=i, world_position=np.array(p), signature=sigs[i],
                 detect_near=near, detect_far=near * DETECT_BAND_FACTOR)
        for i, (p, near) in enumerate(zip(positions, bands))
    ]
    return SynthWorld(aps=aps, landmarks=landmarks, objects=objects)


def sample_fingerprint(world: SynthWorld, position, cfg: SynthConfig,
                       rng: np.random.Generator, device_bias: float = 0.0) -> Fingerprint:
    """One RSS observation at ``position``; noise draws come from ``rng``."""
    pos = np.asarray(position, dtype=float)
    readings = {}
    for ap in world.aps:
        d = float(np.linalg.norm(ap.position - pos))
        rss = path_loss_rss(d, cfg.tx_power_p0, cfg.path_loss_gamma) + device_bias
        if cfg.rss_noise_sigma > 0:
            rss += rng.normal(0.0, cfg.rss_noise_sigma)
        readings[ap.id] = min(rss, -1.0)
    return Fingerprint(readings=readings)


def project_view(eye: EyePose, landmarks: list[Landmark], cfg: SynthConfig,
                 pose_cfg: PoseConfig | None = None,
                 rng: np.random.Generator | None = None) -> KeypointSet:
    """Pinhole projection of the visible landmarks onto an 800x600 frame.

    Pixel jitter and descriptor noise are drawn from ``rng`` when their sigmas
    are positive; with both at zero repeated calls are identical.
    """
    pose_cfg = pose_cfg or PoseConfig()
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    frustum = build_frustum(eye, pose_cfg)
    # the camera resolves keypoints only within its own range, which is
    # shorter than the AR display distance
    frustum.max_distance = cfg.camera_range
    focal = (FRAME_WIDTH / 2) / np.tan(frustum.half_angle_h)
    cx, cy = FRAME_WIDTH / 2, FRAME_HEIGHT / 2

    keypoints = []
    for lm in landmarks:
        lp = to_local(eye, lm.world_position)
        if not is_visible(lp, frustum):
            continue
        if not lm.detect_near <= lp.distance <= lm.detect_far:
            continue
        # detection dropout: real extractors miss a fraction of repeatable
        # points per view, which also diversifies match counts across images
        if cfg.landmark_dropout > 0 and rng.uniform() < cfg.landmark_dropout:
            continue
        px = cx + focal * lp.right / lp.forward
        py = cy - focal * lp.up / lp.forward
        if cfg.keypoint_jitter_px > 0:
            px += rng.normal(0.0, cfg.keypoint_jitter_px)
            py += rng.normal(0.0, cfg.keypoint_jitter_px)
        desc = lm.signature.copy()
        if cfg.descriptor_noise > 0:
            desc += rng.normal(0.0, cfg.descriptor_noise, size=DESCRIPTOR_DIM)
        sigma = max(0.5, 4.0 / lp.distance)
        keypoints.append(Keypoint(px=float(px), py=float(py), sigma=float(sigma), descriptor=desc))
    return KeypointSet(keypoints=keypoints)


def stored_headings(cfg: SynthConfig) -> list[float]:
    return [i * 360.0 / cfg.headings_per_rp for i in range(cfg.headings_per_rp)]


def gen_environment(width: float, depth: float, interval: float, cfg: SynthConfig,
                    pose_cfg: PoseConfig | None = None) -> IndoorMap:
    """Fully surveyed synthetic map: grid RPs with fingerprints and stored views.

    Each RP receives fingerprints_per_rp RSS samples and images_per_rp keypoint
    sets cycling through the stored headings. Subareas are not built here.
    """
    pose_cfg = pose_cfg or PoseConfig()
    indoor_map = make_grid_map(width, depth, interval)
    world = synth_world(width, depth, cfg)
    headings = stored_headings(cfg)

    for rp in indoor_map.rps:
        rng = np.random.default_rng([cfg.seed, _SURVEY_STREAM, rp.id])
        for _ in range(cfg.fingerprints_per_rp):
            rp.fingerprints.append(sample_fingerprint(world, rp.position, cfg, rng))
        for i in range(cfg.images_per_rp):
            heading = headings[i % len(headings)]
            # the surveyor does not reshoot a heading from the identical pose;
            # small pose variation makes repeated headings distinct viewpoints
            shot_heading = heading
            position = rp.position
            if cfg.survey_heading_jitter_deg > 0:
                shot_heading = (heading + rng.uniform(-cfg.survey_heading_jitter_deg,
                                                      cfg.survey_heading_jitter_deg)) % 360.0
            if cfg.survey_position_jitter > 0:
                position = position + np.array([
                    rng.uniform(-cfg.survey_position_jitter, cfg.survey_position_jitter),
                    0.0,
                    rng.uniform(-cfg.survey_position_jitter, cfg.survey_position_jitter),
                ])
            eye = eye_pose_at(position, shot_heading, pose_cfg)
            view = project_view(eye, world.landmarks, cfg, pose_cfg, rng)
            view.source_rp_id = rp.id
            view.source_heading = heading
            rp.images.append(view)
            rp.viewpoint_headings.append(heading)
    indoor_map.objects = world.objects
    return indoor_map


def gen_trials(indoor_map: IndoorMap, cfg: SynthConfig, num_trials: int,
               devices: list[str], pose_cfg: PoseConfig | None = None,
               trial_seed: int | None = None) -> list[tuple[Query, int]]:
    """Seeded online observations: (query, true rp id) pairs.

    Each trial picks a true RP and a stored heading uniformly, jitters the
    standing position within trial_jitter_cells of a grid cell, and synthesizes
    a fresh fingerprint (with the device's RSS bias) plus view. The world is
    rebuilt from cfg.seed; the per-trial noise streams key off trial_seed
    (default cfg.seed) and the trial index, so trials replay independently.
    """
    if not devices:
        raise ValueError("need at least one device id")
    pose_cfg = pose_cfg or PoseConfig()
    world = synth_world(indoor_map.width, indoor_map.depth, cfg)
    headings = stored_headings(cfg)
    rps = sorted(indoor_map.rps, key=lambda rp: rp.id)
    base_seed = cfg.seed if trial_seed is None else trial_seed
    half_jitter = cfg.trial_jitter_cells * indoor_map.interval / 2

    trials = []
    for t in range(num_trials):
        rng = np.random.default_rng([base_seed, _TRIAL_STREAM, t])
        rp = rps[int(rng.integers(len(rps)))]
        heading = headings[int(rng.integers(len(headings)))]
        offset = np.array([rng.uniform(-half_jitter, half_jitter), 0.0,
                           rng.uniform(-half_jitter, half_jitter)]) if half_jitter > 0 else np.zeros(3)
        position = rp.position + offset
        device = devices[t % len(devices)]
        bias = cfg.device_rss_offsets.get(device, 0.0)
        fp = sample_fingerprint(world, position, cfg, rng, device_bias=bias)
        view = project_view(eye_pose_at(position, heading, pose_cfg), world.landmarks,
                            cfg, pose_cfg, rng)
        trials.append((Query(fingerprint=fp, keypoints=view, heading=heading,
                             device_id=device), rp.id))
    return trials
