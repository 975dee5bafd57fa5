"""Text-image matching scores.

Two matcher families share one probability pipeline: diffusion-style matchers
report per-trial denoising errors that fold into exp(-mean error), and
similarity-style matchers report raw similarities that are temperature-
softmaxed at the probability layer. A deterministic reference matcher built
on stored silhouette templates makes the whole pipeline runnable with no
pretrained model and no external process.
"""

from __future__ import annotations

import base64
import io as _io
import json
import os
import shlex
import socket
import subprocess
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .core3d import Geometry, pca_align
from .errors import (
    EmptyClassSet,
    EmptyTemplateBank,
    MatcherUnavailable,
    NoTrials,
    ProtocolError,
    TimestepOutOfRange,
)
from .project import (
    CameraConfig,
    GrayImage,
    ProjectionStyle,
    ViewAngles,
    VoxelParams,
    project,
)

PROMPT_SLOT = "[n_c]"

# Style-specific templates that scored best across the prompt library.
DEFAULT_PROMPTS = {
    ProjectionStyle.RENDER: "one model of [n_c] in linear composition",
    ProjectionStyle.DEPTH: "one line-drawn [n_c]",
    ProjectionStyle.EDGE: "one edge map of one standalone [n_c]",
}

# Candidate templates for prompt sweeps.
PROMPT_LIBRARY = (
    "one model of [n_c]",
    "one line-drawn [n_c]",
    "one photo of one [n_c]",
    "one photo of one standalone [n_c]",
    "one depth map of one standalone [n_c]",
    "one edge map of one standalone [n_c]",
    "one render image of one standalone white [n_c]",
    "one sketch photo of one standalone white [n_c]",
    "one model of [n_c] in linear composition",
    "one photo of one [n_c] in linear composition",
)

SIMILARITY_TAU = 0.01  # temperature for similarity -> pseudo-score conversion
REFERENCE_SHARPNESS = 3.0  # exponent scale of the handle-level reference score
BANK_INDEX_NAME = "bank.json"
TEMPLATE_MASK_LEVEL = 0.08  # binarization level for silhouette comparison


@dataclass(frozen=True)
class PromptTemplate:
    style: ProjectionStyle
    template: str

    def __post_init__(self):
        if self.template.count(PROMPT_SLOT) != 1:
            raise ValueError(f"template must contain {PROMPT_SLOT} exactly once")

    def fill(self, class_name: str) -> str:
        return self.template.replace(PROMPT_SLOT, class_name)


def build_prompt(style: ProjectionStyle, class_name: str, template: str | None = None) -> str:
    """Fill the style's default template (or an explicit one) with the class name."""
    if not class_name:
        raise ValueError("class_name must be nonempty")
    tpl = template if template is not None else DEFAULT_PROMPTS[style]
    return PromptTemplate(style, tpl).fill(class_name)


@dataclass(frozen=True)
class NoiseSchedule:
    """Forward-process variance schedule: betas, alphas = 1 - beta, and the
    cumulative products alpha_bar_t = prod_{i<=t} alpha_i."""

    betas: np.ndarray

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 1:
            raise ValueError("betas must be a non-empty vector")
        if np.any(betas <= 0.0) or np.any(betas >= 1.0):
            raise ValueError("betas must lie in (0, 1)")
        betas = betas.copy()
        betas.flags.writeable = False
        object.__setattr__(self, "betas", betas)
        bars = np.cumprod(1.0 - betas)
        if bars[-1] <= 0.0 or np.any(np.diff(bars) >= 0.0):
            raise ValueError("alpha_bar must stay positive and strictly decrease")

    @property
    def T(self) -> int:
        return self.betas.size

    @property
    def alphas(self) -> np.ndarray:
        return 1.0 - self.betas

    @property
    def alpha_bars(self) -> np.ndarray:
        return np.cumprod(1.0 - self.betas)

    @classmethod
    def linear(cls, T: int = 600, beta_start: float = 1e-4, beta_end: float = 0.02) -> "NoiseSchedule":
        return cls(np.linspace(beta_start, beta_end, T))


def noised_from_alpha_bar(f0: np.ndarray, alpha_bar: float, eps: np.ndarray) -> np.ndarray:
    """sqrt(alpha_bar) * f0 + sqrt(1 - alpha_bar) * eps."""
    return np.sqrt(alpha_bar) * np.asarray(f0) + np.sqrt(1.0 - alpha_bar) * np.asarray(eps)


def noised_feature(f0: np.ndarray, t: int, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """Forward-process feature at timestep t (1-based, t in [1, T])."""
    if not 1 <= t <= schedule.T:
        raise TimestepOutOfRange(f"t={t} outside [1, {schedule.T}]")
    return noised_from_alpha_bar(f0, float(schedule.alpha_bars[t - 1]), eps)


@dataclass(frozen=True)
class DenoiseTrial:
    """One denoising probe: the drawn noise, the prediction, and their MSE."""

    t: int
    eps: np.ndarray
    eps_hat: np.ndarray
    sq_err: float

    def __post_init__(self):
        if np.shape(self.eps) != np.shape(self.eps_hat):
            raise ValueError("eps and eps_hat must share a shape")
        if self.sq_err < 0.0:
            raise ValueError("sq_err must be >= 0")

    @classmethod
    def from_vectors(cls, t: int, eps, eps_hat) -> "DenoiseTrial":
        eps = np.asarray(eps, dtype=np.float64)
        eps_hat = np.asarray(eps_hat, dtype=np.float64)
        return cls(t, eps, eps_hat, float(np.mean((eps - eps_hat) ** 2)))


@dataclass(frozen=True)
class MatchScore:
    """exp(-m) for a nonnegative pooled error m; always in (0, 1]."""

    value: float

    def __post_init__(self):
        if not 0.0 < self.value <= 1.0:
            raise ValueError(f"score must lie in (0, 1], got {self.value}")

    @property
    def pooled_error(self) -> float:
        return -float(np.log(self.value))

    @classmethod
    def from_error(cls, m: float) -> "MatchScore":
        if m < 0.0:
            raise ValueError("pooled error must be >= 0")
        return cls(float(np.exp(-m)))


def matching_score(trials, styles_used=None) -> MatchScore:
    """Pool trial errors from all styles and exponentiate: exp(-mean sq_err)."""
    errs = [tr.sq_err if isinstance(tr, DenoiseTrial) else float(tr) for tr in trials]
    if not errs:
        raise NoTrials("need at least one denoising trial")
    return MatchScore.from_error(float(np.mean(errs)))


def class_probabilities(scores: dict) -> dict:
    """Normalize per-class scores into probabilities (sum exactly renormalized)."""
    if not scores:
        raise EmptyClassSet("no class scores to normalize")
    values = {c: (s.value if isinstance(s, MatchScore) else float(s)) for c, s in scores.items()}
    if any(v <= 0.0 for v in values.values()):
        raise ValueError("scores must be strictly positive")
    total = sum(values.values())
    return {c: v / total for c, v in values.items()}


def similarity_scores(sims: dict, tau: float = SIMILARITY_TAU) -> dict:
    """Map raw similarities to strictly positive pseudo-scores.

    Shifts by the max before exponentiating (exp((s - s_max)/tau)), which
    leaves class_probabilities unchanged while avoiding underflow.
    """
    if not sims:
        raise EmptyClassSet("no similarities")
    s_max = max(sims.values())
    return {c: MatchScore(float(np.exp((s - s_max) / tau))) for c, s in sims.items()}


# ---------------------------------------------------------------------------
# Reference matcher: deterministic template-bank silhouette similarity.
# ---------------------------------------------------------------------------


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    inter = np.logical_and(a, b).sum()
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0  # two empty masks are identical
    return float(inter) / float(union)


@dataclass
class TemplateBank:
    """Per-class binary silhouette templates plus how they were rendered."""

    masks: dict[str, list[np.ndarray]]
    info: dict = field(default_factory=dict)

    @property
    def classes(self) -> list[str]:
        return sorted(self.masks)

    def save(self, bank_dir) -> None:
        os.makedirs(bank_dir, exist_ok=True)
        index = {"info": self.info, "classes": {}}
        for cls in self.classes:
            names = []
            for i, mask in enumerate(self.masks[cls]):
                name = f"{cls}_{i:02d}.png"
                GrayImage(mask.astype(np.float64)).save_png(os.path.join(bank_dir, name))
                names.append(name)
            index["classes"][cls] = names
        with open(os.path.join(bank_dir, BANK_INDEX_NAME), "w") as f:
            json.dump(index, f, indent=1, sort_keys=True)

    @classmethod
    def load(cls, bank_dir) -> "TemplateBank":
        with open(os.path.join(bank_dir, BANK_INDEX_NAME)) as f:
            index = json.load(f)
        masks = {}
        for name, files in index["classes"].items():
            masks[name] = [
                GrayImage.load_png(os.path.join(bank_dir, fn)).pixels > 0.5 for fn in files
            ]
        return cls(masks, index.get("info", {}))


def build_template_bank(
    canonical: dict[str, Geometry],
    n_views: int = 12,
    phi1: float = 30.0,
    style: ProjectionStyle = ProjectionStyle.DEPTH,
    cfg: CameraConfig = CameraConfig(),
    vox: VoxelParams = VoxelParams(),
    align: bool = True,
) -> TemplateBank:
    """Render a ring of silhouettes per class from designated canonical samples.

    Samples are pose-normalized first so the stored views live in each
    object's own principal frame.
    """
    masks: dict[str, list[np.ndarray]] = {}
    for cls, geom in canonical.items():
        sample = pca_align(geom) if align else geom
        views = []
        for i in range(n_views):
            phi = ViewAngles(phi1, i * 360.0 / n_views)
            img = project(sample, phi, style, cfg, vox)
            views.append(img.pixels > TEMPLATE_MASK_LEVEL)
        masks[cls] = views
    return TemplateBank(
        masks,
        info={
            "n_views": n_views,
            "phi1": phi1,
            "style": style.value,
            "image_px": cfg.image_px,
            "aligned": align,
        },
    )


def reference_similarity(image: GrayImage, templates) -> MatchScore:
    """exp(-(1 - best IoU)) of the binarized image against a class's templates."""
    if isinstance(templates, GrayImage):
        templates = [templates.pixels > 0.5]
    templates = list(templates)
    if not templates:
        raise EmptyTemplateBank("class entry holds no templates")
    mask = image.pixels > TEMPLATE_MASK_LEVEL
    best = max(mask_iou(mask, np.asarray(t, dtype=bool)) for t in templates)
    return MatchScore.from_error(1.0 - best)


# ---------------------------------------------------------------------------
# External matcher protocol client (line-delimited JSON over stdio or TCP).
# ---------------------------------------------------------------------------


class ExternalClient:
    """Client for a matcher worker speaking the line-delimited JSON protocol.

    The endpoint is either a launch command (list of argv strings or a shell
    string) or ``tcp://host:port``. Requests carry unique ids; responses may
    arrive out of order and are parked until their caller claims them.
    """

    def __init__(self, endpoint, timeout: float = 30.0):
        self.timeout = timeout
        self._wlock = threading.Lock()    # guards writes and id allocation
        self._read_lock = threading.Lock()  # at most one thread reads the stream
        self._cond = threading.Condition()  # guards _parked
        self._parked: dict[int, dict] = {}
        self._next_id = 1
        self._proc = None
        self._sock = None
        if isinstance(endpoint, str) and endpoint.startswith("tcp://"):
            host, _, port = endpoint[len("tcp://"):].partition(":")
            try:
                self._sock = socket.create_connection((host, int(port)), timeout=timeout)
            except OSError as e:
                raise MatcherUnavailable(f"cannot connect to {endpoint}: {e}") from e
            self._reader = self._sock.makefile("r", encoding="utf-8")
            self._writer = self._sock.makefile("w", encoding="utf-8")
        else:
            cmd = shlex.split(endpoint) if isinstance(endpoint, str) else list(endpoint)
            try:
                self._proc = subprocess.Popen(
                    cmd,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    text=True,
                    bufsize=1,
                )
            except OSError as e:
                raise MatcherUnavailable(f"cannot launch {cmd!r}: {e}") from e
            self._reader = self._proc.stdout
            self._writer = self._proc.stdin
        self.handshake = self._read_handshake()
        self.modes = tuple(self.handshake.get("modes", ()))

    def _read_handshake(self) -> dict:
        deadline = time.monotonic() + self.timeout
        while time.monotonic() < deadline:
            line = self._reader.readline()
            if not line:
                raise MatcherUnavailable("worker closed the stream before handshake")
            line = line.strip()
            if not line:
                continue
            try:
                msg = json.loads(line)
            except json.JSONDecodeError as e:
                raise ProtocolError(f"bad handshake line {line!r}") from e
            if msg.get("ready"):
                return msg
            raise ProtocolError(f"expected ready handshake, got {msg!r}")
        raise MatcherUnavailable("handshake timed out")

    def close(self) -> None:
        try:
            self._writer.close()
        except Exception:
            pass
        if self._proc is not None:
            try:
                self._proc.terminate()
                self._proc.wait(timeout=5)
            except Exception:
                pass
        if self._sock is not None:
            try:
                self._sock.close()
            except Exception:
                pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def request(self, mode: str, image_png_b64: str, prompts, trials: int, seed: int) -> dict:
        with self._wlock:
            rid = self._next_id
            self._next_id += 1
            msg = {
                "id": rid,
                "mode": mode,
                "image_png_b64": image_png_b64,
                "prompts": list(prompts),
                "trials": int(trials),
                "seed": int(seed),
            }
            try:
                self._writer.write(json.dumps(msg) + "\n")
                self._writer.flush()
            except (BrokenPipeError, OSError) as e:
                raise MatcherUnavailable(f"worker stream broken: {e}") from e
        return self._await(rid)

    def _read_one(self) -> None:
        """Read a single response line and park it (caller holds _read_lock)."""
        line = self._reader.readline()
        if not line:
            raise MatcherUnavailable("worker closed the stream mid-request")
        line = line.strip()
        if not line:
            return
        try:
            resp = json.loads(line)
        except json.JSONDecodeError as e:
            raise ProtocolError(f"unparseable response line {line!r}") from e
        with self._cond:
            self._parked[resp.get("id")] = resp
            self._cond.notify_all()

    def _await(self, rid: int) -> dict:
        # Leader/follower multiplexing: whichever waiter acquires the read
        # lock pulls lines off the stream and parks them by id; everyone else
        # sleeps on the condition until their id shows up.
        deadline = time.monotonic() + self.timeout
        while True:
            with self._cond:
                if rid in self._parked:
                    resp = self._parked.pop(rid)
                    break
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise MatcherUnavailable(f"timed out waiting for response {rid}")
            if self._read_lock.acquire(timeout=min(remaining, 0.05)):
                try:
                    with self._cond:
                        if rid in self._parked:
                            continue
                    self._read_one()
                finally:
                    self._read_lock.release()
            else:
                with self._cond:
                    if rid not in self._parked:
                        self._cond.wait(timeout=min(remaining, 0.05))
        if "error" in resp:
            raise ProtocolError(str(resp["error"]))
        return resp


def encode_png_b64(image: GrayImage) -> str:
    from PIL import Image

    buf = _io.BytesIO()
    Image.fromarray(np.round(image.pixels * 255.0).astype(np.uint8), mode="L").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


# ---------------------------------------------------------------------------
# Matcher handles and the MS(x, phi, c) pipeline.
# ---------------------------------------------------------------------------


REFERENCE = "reference"
EXTERNAL = "external"


@dataclass
class MatcherHandle:
    """Opaque matcher: a template bank (reference) or a protocol client.

    ``mode`` selects the external score family; the reference matcher always
    behaves like the diffusion family (its mismatch plays the role of a
    pooled denoising error).
    """

    kind: str
    bank: TemplateBank | None = None
    client: ExternalClient | None = None
    mode: str = "diffusion"
    trials: int = 30
    schedule: NoiseSchedule | None = None
    sharpness: float = REFERENCE_SHARPNESS

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.kind == REFERENCE and self.bank is None:
            raise EmptyTemplateBank("reference matcher needs a template bank")
        if self.kind == EXTERNAL and self.client is None:
            raise MatcherUnavailable("external matcher needs a connected client")

    @classmethod
    def reference(cls, bank: TemplateBank, **kw) -> "MatcherHandle":
        return cls(kind=REFERENCE, bank=bank, **kw)

    @classmethod
    def external(cls, client: ExternalClient, mode: str = "diffusion", **kw) -> "MatcherHandle":
        return cls(kind=EXTERNAL, client=client, mode=mode, **kw)


def _class_from_prompt(bank: TemplateBank, prompt: str) -> str:
    # Longest class name appearing in the prompt wins ("night_stand" over "stand").
    for cls in sorted(bank.classes, key=len, reverse=True):
        if cls in prompt:
            return cls
    raise EmptyTemplateBank(f"no bank class mentioned in prompt {prompt!r}")


def _reference_error(handle: MatcherHandle, image: GrayImage, class_name: str) -> float:
    templates = handle.bank.masks.get(class_name)
    if not templates:
        raise EmptyTemplateBank(f"no templates for class {class_name!r}")
    base = reference_similarity(image, templates)
    return handle.sharpness * base.pooled_error


def score(handle: MatcherHandle, image: GrayImage, prompt: str, rng_seed: int = 42) -> MatchScore:
    """Single (image, prompt) matching score through the handle's backend."""
    if handle.kind == REFERENCE:
        cls = _class_from_prompt(handle.bank, prompt)
        return MatchScore.from_error(_reference_error(handle, image, cls))
    resp = handle.client.request(
        handle.mode, encode_png_b64(image), [prompt], handle.trials, rng_seed
    )
    if handle.mode == "diffusion":
        errs = resp.get("sq_err")
        if not errs or len(errs) != 1:
            raise ProtocolError(f"expected one sq_err list, got {errs!r}")
        return matching_score(errs[0])
    sims = resp.get("sim")
    if not sims or len(sims) != 1:
        raise ProtocolError(f"expected one similarity, got {sims!r}")
    # A lone similarity has no cross-class max to shift by; cosine similarity
    # is bounded by 1, so exp(s - 1) keeps the score in (0, 1].
    return MatchScore(float(np.exp(min(sims[0], 1.0) - 1.0)))


def ms_score(
    x: Geometry,
    phi: ViewAngles,
    class_name: str,
    handle: MatcherHandle,
    styles=(ProjectionStyle.DEPTH,),
    cfg: CameraConfig = CameraConfig(),
    vox: VoxelParams = VoxelParams(),
    rng_seed: int = 42,
    prompts: dict | None = None,
) -> MatchScore:
    """MS(x, phi, c): project in every style, score, and pool across styles.

    Diffusion-family errors are averaged inside the exponent; similarity-mode
    handles average the per-style similarities before the (0, 1] mapping.
    """
    styles = list(styles)
    errors = []
    sims = []
    for style in styles:
        image = project(x, phi, style, cfg, vox)
        tpl = prompts.get(style) if prompts else None
        prompt = build_prompt(style, class_name, tpl)
        if handle.kind == REFERENCE:
            errors.append(_reference_error(handle, image, class_name))
        elif handle.mode == "diffusion":
            resp = handle.client.request(
                "diffusion", encode_png_b64(image), [prompt], handle.trials, rng_seed
            )
            errs = resp.get("sq_err")
            if not errs or len(errs) != 1:
                raise ProtocolError(f"expected one sq_err list, got {errs!r}")
            errors.extend(float(e) for e in errs[0])
        else:
            resp = handle.client.request(
                "similarity", encode_png_b64(image), [prompt], handle.trials, rng_seed
            )
            vals = resp.get("sim")
            if not vals or len(vals) != 1:
                raise ProtocolError(f"expected one similarity, got {vals!r}")
            sims.append(float(vals[0]))
    if sims:
        s = float(np.mean(sims))
        return MatchScore(float(np.exp(min(s, 1.0) - 1.0)))
    return matching_score(errors)


def make_scorer(
    handle: MatcherHandle,
    styles=(ProjectionStyle.DEPTH,),
    cfg: CameraConfig = CameraConfig(),
    vox: VoxelParams = VoxelParams(),
    prompts: dict | None = None,
):
    """Bind a handle and projection settings into a (x, phi, class, seed) -> float."""

    def scorer(x, phi, class_name, rng_seed=42):
        return ms_score(
            x, phi, class_name, handle, styles, cfg, vox, rng_seed=rng_seed, prompts=prompts
        ).value

    return scorer
