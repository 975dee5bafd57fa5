"""Iterative angle refinement: per-class sign-gradient ascent on the matching
score over projection angles, initialized from a pose-normalized frame.

The matcher is a black box across a process boundary, so the partial
derivative is realized as the sign of a central finite difference. Probe
pairs share the same rng seed (common random numbers), which keeps the sign
estimate stable for Monte-Carlo matchers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core3d import Geometry, pca_align
from .errors import EmptyClassSet
from .match import MatcherHandle, class_probabilities, make_scorer
from .project import CameraConfig, ProjectionStyle, ViewAngles, VoxelParams

AZIMUTH_ONLY = "azimuth_only"
FULL_2D = "full_2d"

DEFAULT_ETAS = (20.0, 18.0, 16.0, 14.0, 12.0, 10.0, 8.0, 6.0, 4.0, 2.0)


@dataclass(frozen=True)
class RefineConfig:
    """Refinement schedule: R steps scaled by etas, probed at fd_step degrees.

    In azimuth-only mode the elevation stays pinned at ``initial.phi1`` (the
    pose-normalized frame puts the camera on the z-axis, so the default is the
    top view) and only the azimuth moves. ``keep_best`` reports the
    trace-maximal iterate instead of the last one, guarding against the fixed
    schedule stepping past a peak.
    """

    R: int = 10
    etas: tuple = DEFAULT_ETAS
    fd_step: float = 5.0
    mode: str = AZIMUTH_ONLY
    initial: ViewAngles = ViewAngles(90.0, 0.0)
    keep_best: bool = True

    def __post_init__(self):
        if self.R < 1:
            raise ValueError("R must be >= 1")
        if len(self.etas) != self.R:
            raise ValueError(f"need exactly R={self.R} etas, got {len(self.etas)}")
        if any(e <= 0 for e in self.etas):
            raise ValueError("etas must be positive")
        if self.fd_step <= 0:
            raise ValueError("fd_step must be positive")
        if self.mode not in (AZIMUTH_ONLY, FULL_2D):
            raise ValueError(f"unknown mode {self.mode!r}")

    @classmethod
    def with_steps(cls, R: int, eta_max: float = 20.0, **kw) -> "RefineConfig":
        etas = tuple(np.linspace(eta_max, eta_max / R, R)) if R > 1 else (eta_max,)
        return cls(R=R, etas=etas, **kw)


@dataclass(frozen=True)
class RefineStep:
    r: int
    phi: ViewAngles
    score: float


@dataclass(frozen=True)
class RefineTrace:
    """Every iterate of one class's refinement, r = 0..R."""

    class_name: str
    steps: tuple

    def __len__(self) -> int:
        return len(self.steps)

    def best(self) -> RefineStep:
        return max(self.steps, key=lambda s: (s.score, -s.r))


@dataclass(frozen=True)
class Prediction:
    """Final open-pose prediction with per-class refined angles and evidence."""

    predicted_class: str
    angles: dict
    scores: dict
    probabilities: dict

    def __post_init__(self):
        total = sum(self.probabilities.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {total}")


def _clamp_phi1(v: float) -> float:
    return min(90.0, max(-90.0, v))


def _step(phi: ViewAngles, delta: np.ndarray, mode: str) -> ViewAngles:
    if mode == AZIMUTH_ONLY:
        return ViewAngles(phi.phi1, phi.phi2 + float(delta[0]))
    return ViewAngles(_clamp_phi1(phi.phi1 + float(delta[0])), phi.phi2 + float(delta[1]))


def _probes(phi: ViewAngles, dim: int, fd: float, mode: str):
    if mode == AZIMUTH_ONLY:
        return (
            ViewAngles(phi.phi1, phi.phi2 + fd),
            ViewAngles(phi.phi1, phi.phi2 - fd),
        )
    if dim == 0:
        return (
            ViewAngles(_clamp_phi1(phi.phi1 + fd), phi.phi2),
            ViewAngles(_clamp_phi1(phi.phi1 - fd), phi.phi2),
        )
    return (
        ViewAngles(phi.phi1, phi.phi2 + fd),
        ViewAngles(phi.phi1, phi.phi2 - fd),
    )


def grad_sign(x, phi: ViewAngles, class_name: str, scorer, fd_step: float,
              mode: str = AZIMUTH_ONLY, rng_seed: int = 42) -> np.ndarray:
    """Per-dimension sign of the central difference of the matching score.

    sign(0) is 0: a flat probe pair leaves that dimension untouched. Both
    probe evaluations share rng_seed.
    """
    dims = 1 if mode == AZIMUTH_ONLY else 2
    out = np.zeros(dims)
    for dim in range(dims):
        hi, lo = _probes(phi, dim, fd_step, mode)
        diff = scorer(x, hi, class_name, rng_seed) - scorer(x, lo, class_name, rng_seed)
        out[dim] = np.sign(diff)
    return out


def refine_angles(x, class_name: str, scorer, cfg: RefineConfig = RefineConfig(),
                  rng_seed: int = 42) -> tuple[ViewAngles, float, RefineTrace]:
    """Run R sign-gradient updates from cfg.initial for one class.

    Returns (refined angle, its score, trace of all R+1 iterates). With
    keep_best the reported angle is the trace-maximal one, otherwise the
    final iterate.
    """
    phi = cfg.initial
    steps = []
    for r in range(cfg.R):
        seed_r = rng_seed + 1013 * r
        steps.append(RefineStep(r, phi, float(scorer(x, phi, class_name, seed_r))))
        s = grad_sign(x, phi, class_name, scorer, cfg.fd_step, cfg.mode, seed_r)
        phi = _step(phi, cfg.etas[r] * s, cfg.mode)
    steps.append(RefineStep(cfg.R, phi, float(scorer(x, phi, class_name, rng_seed + 1013 * cfg.R))))
    trace = RefineTrace(class_name, tuple(steps))
    chosen = trace.best() if cfg.keep_best else trace.steps[-1]
    return chosen.phi, chosen.score, trace


def _as_scorer(matcher, styles, cam, vox):
    if isinstance(matcher, MatcherHandle):
        return make_scorer(matcher, styles, cam, vox)
    return matcher  # already a (x, phi, class_name, seed) -> float callable


def classify_openpose(
    x: Geometry,
    classes,
    matcher,
    cfg: RefineConfig = RefineConfig(),
    styles=(ProjectionStyle.DEPTH,),
    cam: CameraConfig = CameraConfig(),
    vox: VoxelParams = VoxelParams(),
    rng_seed: int = 42,
    align: bool = True,
) -> tuple[Prediction, dict]:
    """Full open-pose classification of one sample.

    Pose-normalizes the sample, refines a projection angle per class, scores
    every class at its refined angle, and normalizes into probabilities.
    Ties break toward the lowest class index. Returns the prediction and the
    per-class refinement traces.
    """
    classes = list(classes)
    if not classes:
        raise EmptyClassSet("no candidate classes")
    scorer = _as_scorer(matcher, styles, cam, vox)
    sample = pca_align(x) if align else x

    angles: dict = {}
    scores: dict = {}
    traces: dict = {}
    for c in classes:
        phi_c, score_c, trace = refine_angles(sample, c, scorer, cfg, rng_seed)
        angles[c] = phi_c
        scores[c] = score_c
        traces[c] = trace

    probs = class_probabilities(scores)
    best = max(classes, key=lambda c: (probs[c], -classes.index(c)))
    return Prediction(best, angles, scores, probs), traces
