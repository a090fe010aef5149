"""Synthetic scene generator with a rule-based oracle.

Each sample is a tabletop-like scene photographed by three fixed cameras
before and after an object is moved. The tool determines how far the
object travels (four distinct magnitudes, small jitter), the action
determines the direction (four axis-aligned directions), and a sprite
strip along the top edge shows which tool was used. Lateral cameras see
the same scene through a fixed scale-and-shift coordinate map and with
three times the sensor noise of the center camera.

The background is a two-axis color gradient, so absolute object position
is recoverable from channel statistics alone. Sensor noise is drawn per
8x8 block, which keeps the PNGs small and fast to encode without changing
the per-pixel noise scale.

The oracle inverts the construction without any learning: it segments the
object against the known background on the center camera, classifies the
action from the displacement direction, and classifies the tool from the
displacement magnitude combined with a template match on the sprite strip.
Generator and oracle share no code path with the training stack, so a
model can be checked against ground truth end to end.
"""

from __future__ import annotations

import functools
import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from PIL import Image

from .core import Action, CameraView, CAMERA_ORDER, PHASE_ORDER, Phase, Tool, image_key
from .data import FULL_OBJECTS, FULL_REPETITIONS, Sample, SampleSet, write_manifest
from .errors import GenerationError, OracleError

# Displacement magnitude in native pixels, one per tool.
MAGNITUDES: dict[Tool, float] = {
    Tool.boomerang: 40.0,
    Tool.ruler: 60.0,
    Tool.slingshot: 80.0,
    Tool.spatula: 100.0,
}

# Unit displacement direction, one per action. Image y grows downward, so
# push moves the object toward the top of the frame.
DIRECTIONS: dict[Action, tuple[float, float]] = {
    Action.push: (0.0, -1.0),
    Action.pull: (0.0, 1.0),
    Action.left_to_right: (1.0, 0.0),
    Action.right_to_left: (-1.0, 0.0),
}


@dataclass(frozen=True)
class CameraParams:
    """Fixed scale-and-shift map from scene coordinates to a camera's
    pixel coordinates."""

    scale: float
    dx: float
    dy: float

    def x(self, x: float) -> float:
        return self.scale * x + self.dx

    def y(self, y: float) -> float:
        return self.scale * y + self.dy

    def length(self, value: float) -> float:
        return self.scale * value


CAMERA_MODELS: dict[CameraView, CameraParams] = {
    CameraView.center: CameraParams(1.0, 0.0, 0.0),
    CameraView.left: CameraParams(0.94, 34.0, 12.0),
    CameraView.right: CameraParams(0.97, 4.0, 6.0),
}


@dataclass(frozen=True)
class SceneParams:
    """Geometry, palette and noise model of the generated scenes."""

    width: int = 640
    height: int = 480
    # Background gradient: R = red_base + red_span * x / (W - 1),
    # G = green_base + green_span * y / (H - 1), B constant. The steep
    # two-axis gradient makes absolute object position recoverable from
    # local contrast, which is what lets the position-change (action)
    # signal survive global average pooling in small encoders.
    red_base: float = 40.0
    red_span: float = 140.0
    green_base: float = 70.0
    green_span: float = 130.0
    blue: float = 70.0
    noise_block: int = 8
    noise_std_center: float = 3.0
    noise_std_lateral: float = 9.0
    magnitude_jitter: float = 5.0
    # Initial object center is drawn uniformly from this box; the box plus
    # the largest displacement keeps every sprite fully in frame on all
    # three cameras and below the sprite strip.
    object_x: tuple[float, float] = (150.0, 490.0)
    object_y: tuple[float, float] = (215.0, 330.0)
    # Sprite strip (tool indicator) backdrop in scene coordinates.
    strip_box: tuple[int, int, int, int] = (50, 5, 270, 53)

    def noise_std(self, view: CameraView) -> float:
        return self.noise_std_center if view is CameraView.center else self.noise_std_lateral

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SceneParams":
        data = dict(data)
        for key in ("object_x", "object_y", "strip_box"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)


def default_scene_params() -> SceneParams:
    return SceneParams()


STRIP_COLOR = (40.0, 40.0, 48.0)

# 20 object appearances: 10 fill colors x 2 shapes. The background's blue
# channel is constant, so every color keeps its blue at least 61 counts
# away from it; segmentation then works at any position regardless of the
# red/green gradients.
OBJECT_COLORS: tuple[tuple[float, float, float], ...] = (
    (225.0, 60.0, 200.0),
    (60.0, 220.0, 200.0),
    (230.0, 230.0, 2.0),
    (150.0, 70.0, 230.0),
    (240.0, 140.0, 4.0),
    (70.0, 110.0, 235.0),
    (235.0, 90.0, 200.0),
    (130.0, 225.0, 6.0),
    (250.0, 245.0, 235.0),
    (25.0, 20.0, 5.0),
)


def object_appearance(object_id: int) -> tuple[tuple[float, float, float], str, float]:
    """(fill color, shape name, radius) for an object id."""
    color = OBJECT_COLORS[object_id % len(OBJECT_COLORS)]
    shape = "disk" if object_id < len(OBJECT_COLORS) else "square"
    radius = 32.0 + 4.0 * (object_id % 3)
    return color, shape, radius


@functools.lru_cache(maxsize=4)
def expected_background(params: SceneParams) -> np.ndarray:
    """Noise-free background image, float32 (H, W, 3)."""
    h, w = params.height, params.width
    bg = np.empty((h, w, 3), dtype=np.float32)
    bg[:, :, 0] = params.red_base + params.red_span * (np.arange(w, dtype=np.float32) / (w - 1))
    bg[:, :, 1] = (
        params.green_base
        + params.green_span * (np.arange(h, dtype=np.float32) / (h - 1))[:, None]
    )
    bg[:, :, 2] = params.blue
    return bg


def _block_noise(rng: np.random.Generator, params: SceneParams, std: float) -> np.ndarray:
    """Blockwise Gaussian sensor noise at full resolution."""
    b = params.noise_block
    h, w = params.height, params.width
    if h % b or w % b:
        raise GenerationError(f"image size {w}x{h} not divisible by noise block {b}")
    coarse = rng.normal(0.0, std, size=(h // b, w // b, 3)).astype(np.float32)
    return np.repeat(np.repeat(coarse, b, axis=0), b, axis=1)


def _paint_rect(img: np.ndarray, cam: CameraParams, box: tuple[float, float, float, float], color) -> None:
    """Fill an axis-aligned scene-coordinate rectangle, mapped through the
    camera and clipped to the frame."""
    x0, y0, x1, y1 = box
    xa = int(round(cam.x(x0)))
    xb = int(round(cam.x(x1)))
    ya = int(round(cam.y(y0)))
    yb = int(round(cam.y(y1)))
    h, w = img.shape[:2]
    xa, xb = max(xa, 0), min(xb, w)
    ya, yb = max(ya, 0), min(yb, h)
    if xa < xb and ya < yb:
        img[ya:yb, xa:xb] = color


def _paint_disk(img: np.ndarray, cam: CameraParams, cx: float, cy: float, r: float, color) -> None:
    px, py, pr = cam.x(cx), cam.y(cy), cam.length(r)
    h, w = img.shape[:2]
    xa = max(int(np.floor(px - pr)), 0)
    xb = min(int(np.ceil(px + pr)) + 1, w)
    ya = max(int(np.floor(py - pr)), 0)
    yb = min(int(np.ceil(py + pr)) + 1, h)
    if xa >= xb or ya >= yb:
        return
    xs = np.arange(xa, xb, dtype=np.float32) - px
    ys = np.arange(ya, yb, dtype=np.float32) - py
    mask = (xs[None, :] ** 2 + ys[:, None] ** 2) <= pr * pr
    img[ya:yb, xa:xb][mask] = color


def _paint_square(img: np.ndarray, cam: CameraParams, cx: float, cy: float, r: float, color) -> None:
    _paint_rect(img, cam, (cx - r, cy - r, cx + r, cy + r), color)


def _paint_tool_sprite(img: np.ndarray, cam: CameraParams, tool: Tool, params: SceneParams) -> None:
    """Draw the strip backdrop and the tool's sprite in scene coordinates
    mapped through the camera."""
    _paint_rect(img, cam, params.strip_box, STRIP_COLOR)
    if tool is Tool.boomerang:
        orange = (235.0, 120.0, 30.0)
        _paint_rect(img, cam, (70, 12, 90, 46), orange)
        _paint_rect(img, cam, (70, 30, 150, 46), orange)
    elif tool is Tool.ruler:
        yellow = (230.0, 210.0, 40.0)
        _paint_rect(img, cam, (70, 18, 230, 40), yellow)
        for tick_x in range(80, 230, 20):
            _paint_rect(img, cam, (tick_x, 18, tick_x + 4, 28), (120.0, 100.0, 20.0))
    elif tool is Tool.slingshot:
        green = (60.0, 200.0, 80.0)
        _paint_rect(img, cam, (150, 26, 166, 48), green)
        _paint_rect(img, cam, (130, 10, 150, 30), green)
        _paint_rect(img, cam, (166, 10, 186, 30), green)
    elif tool is Tool.spatula:
        blue = (120.0, 190.0, 235.0)
        _paint_rect(img, cam, (70, 14, 130, 44), blue)
        _paint_rect(img, cam, (130, 25, 240, 33), blue)
    else:
        raise GenerationError(f"no sprite defined for tool {tool!r}")


def _paint_object(img: np.ndarray, cam: CameraParams, object_id: int, cx: float, cy: float) -> None:
    color, shape, radius = object_appearance(object_id)
    if shape == "disk":
        _paint_disk(img, cam, cx, cy, radius, color)
    else:
        _paint_square(img, cam, cx, cy, radius, color)


def render_scene(
    object_id: int,
    tool: Tool,
    center: tuple[float, float],
    view: CameraView,
    rng: np.random.Generator,
    params: SceneParams,
) -> np.ndarray:
    """Render one camera frame as (H, W, 3) uint8. `center` is the object
    center in scene coordinates for the phase being rendered."""
    cam = CAMERA_MODELS[view]
    img = expected_background(params) + _block_noise(rng, params, params.noise_std(view))
    _paint_tool_sprite(img, cam, tool, params)
    _paint_object(img, cam, object_id, center[0], center[1])
    return np.clip(img, 0.0, 255.0).astype(np.uint8)


def sample_motion(
    tool: Tool, action: Action, rng: np.random.Generator, params: SceneParams
) -> tuple[tuple[float, float], tuple[float, float]]:
    """Draw the initial object center and displaced final center."""
    cx = rng.uniform(*params.object_x)
    cy = rng.uniform(*params.object_y)
    magnitude = MAGNITUDES[tool] + rng.uniform(-params.magnitude_jitter, params.magnitude_jitter)
    dx, dy = DIRECTIONS[action]
    return (cx, cy), (cx + magnitude * dx, cy + magnitude * dy)


def render_sample_images(
    object_id: int,
    tool: Tool,
    action: Action,
    rng: np.random.Generator,
    params: SceneParams,
) -> dict[str, np.ndarray]:
    """Render all six frames of one sample, keyed like Sample.images."""
    initial, final = sample_motion(tool, action, rng, params)
    frames: dict[str, np.ndarray] = {}
    for view in CAMERA_ORDER:
        for phase in PHASE_ORDER:
            center = initial if phase is Phase.initial else final
            frames[image_key(view, phase)] = render_scene(
                object_id, tool, center, view, rng, params
            )
    return frames


def _sample_rng(seed: int, object_id: int, tool: Tool, action: Action, repetition: int) -> np.random.Generator:
    # Content-addressed seeding: a sample's pixels depend only on the seed
    # and its own identity, not on how many samples are generated.
    return np.random.default_rng(
        np.random.SeedSequence(entropy=(seed, object_id, int(tool), int(action), repetition))
    )


def generate_synthetic_dataset(
    out_dir: Path | str,
    objects: int = FULL_OBJECTS,
    repetitions: int = FULL_REPETITIONS,
    seed: int = 0,
    params: SceneParams | None = None,
    progress: bool = False,
) -> SampleSet:
    """Generate a full dataset on disk: images/, manifest.jsonl and a
    generator.json sidecar recording the seed and scene parameters."""
    if not 1 <= objects <= FULL_OBJECTS:
        raise GenerationError(f"objects must be in [1, {FULL_OBJECTS}], got {objects}")
    if not 1 <= repetitions <= FULL_REPETITIONS:
        raise GenerationError(f"repetitions must be in [1, {FULL_REPETITIONS}], got {repetitions}")
    params = params or default_scene_params()
    out_dir = Path(out_dir)
    image_dir = out_dir / "images"
    image_dir.mkdir(parents=True, exist_ok=True)

    samples: list[Sample] = []
    total = objects * len(Tool) * len(Action) * repetitions
    done = 0
    for object_id in range(objects):
        for tool in Tool:
            for action in Action:
                for rep in range(repetitions):
                    rng = _sample_rng(seed, object_id, tool, action, rep)
                    frames = render_sample_images(object_id, tool, action, rng, params)
                    stem = f"obj{object_id:02d}_{tool.name}_{action.name}_rep{rep:02d}"
                    rel_paths: dict[str, str] = {}
                    for key, frame in frames.items():
                        rel = f"images/{stem}_{key}.png"
                        # Low compression level: encode time dominates
                        # generation, and these images are synthetic scratch
                        # data, not archives.
                        Image.fromarray(frame).save(out_dir / rel, compress_level=1)
                        rel_paths[key] = rel
                    samples.append(
                        Sample(
                            object_id=object_id,
                            repetition=rep,
                            tool=tool,
                            action=action,
                            images=rel_paths,
                        )
                    )
                    done += 1
                    if progress and done % 200 == 0:
                        print(f"generated {done}/{total} samples", flush=True)

    write_manifest(samples, out_dir / "manifest.jsonl")
    sidecar = {
        "seed": seed,
        "objects": objects,
        "repetitions": repetitions,
        "scene": params.to_dict(),
    }
    (out_dir / "generator.json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return SampleSet(samples, root=out_dir)


def load_scene_params(dataset_dir: Path | str) -> SceneParams:
    """Scene parameters recorded next to a generated dataset, or defaults
    when no sidecar is present."""
    sidecar = Path(dataset_dir) / "generator.json"
    if sidecar.is_file():
        data = json.loads(sidecar.read_text(encoding="utf-8"))
        return SceneParams.from_dict(data["scene"])
    return default_scene_params()


# Oracle. Works on the center camera only, where the coordinate map is the
# identity and sensor noise is smallest.

SEGMENT_THRESHOLD = 60.0
# Rows above this are ignored during segmentation; covers the sprite strip
# with margin while staying above any reachable object pixel.
STRIP_CUTOFF_ROW = 64


def _as_array(image: Path | str | np.ndarray) -> np.ndarray:
    if isinstance(image, np.ndarray):
        return image
    with Image.open(image) as img:
        if img.mode != "RGB":
            img = img.convert("RGB")
        return np.asarray(img, dtype=np.uint8)


@functools.lru_cache(maxsize=4)
def _background_int16_coarse(params: SceneParams) -> np.ndarray:
    """Rounded background on the stride-2 segmentation lattice."""
    return np.rint(expected_background(params)[::2, ::2]).astype(np.int16)


def object_centroid(image: Path | str | np.ndarray, params: SceneParams) -> np.ndarray:
    """Centroid (x, y) of pixels that differ strongly from the known
    background, ignoring the sprite strip.

    Segmentation runs on a stride-2 lattice in integer arithmetic; the
    sub-pixel centroid bias this introduces is far below the 20 px spacing
    between tool magnitudes.
    """
    arr = _as_array(image)
    if arr.shape != (params.height, params.width, 3):
        raise OracleError(f"expected a {params.width}x{params.height} center frame, got shape {arr.shape}")
    coarse = arr[::2, ::2].astype(np.int16)
    diff = np.abs(coarse - _background_int16_coarse(params)).max(axis=2)
    diff[: STRIP_CUTOFF_ROW // 2, :] = 0
    ys, xs = np.nonzero(diff > SEGMENT_THRESHOLD)
    if xs.size == 0:
        raise OracleError("segmentation found no object pixels")
    return np.array([2.0 * xs.mean(), 2.0 * ys.mean()], dtype=np.float64)


def estimate_displacement(
    initial: Path | str | np.ndarray, final: Path | str | np.ndarray, params: SceneParams
) -> np.ndarray:
    """Object displacement (dx, dy) between the two center frames."""
    return object_centroid(final, params) - object_centroid(initial, params)


def classify_action(displacement: np.ndarray) -> Action:
    d = np.asarray(displacement, dtype=np.float64)
    if np.hypot(d[0], d[1]) < 1.0:
        raise OracleError(f"displacement {d} too small to classify")
    scores = {action: d[0] * v[0] + d[1] * v[1] for action, v in DIRECTIONS.items()}
    return max(scores, key=scores.get)  # type: ignore[arg-type]


@functools.lru_cache(maxsize=4)
def strip_templates(params: SceneParams) -> dict[Tool, np.ndarray]:
    """Noise-free sprite-strip crops for each tool, center camera."""
    x0, y0, x1, y1 = params.strip_box
    templates: dict[Tool, np.ndarray] = {}
    for tool in Tool:
        img = expected_background(params).copy()
        _paint_tool_sprite(img, CAMERA_MODELS[CameraView.center], tool, params)
        templates[tool] = img[y0:y1, x0:x1].copy()
    return templates


def classify_tool(
    initial: Path | str | np.ndarray, displacement: np.ndarray, params: SceneParams
) -> Tool:
    """Combine two independent cues: distance of the displacement magnitude
    to each tool's nominal magnitude, and template error on the sprite
    strip. Each cue is normalized by its worst case before summing."""
    magnitude = float(np.hypot(*np.asarray(displacement, dtype=np.float64)))
    mag_dist = np.array([abs(magnitude - MAGNITUDES[tool]) for tool in Tool])

    arr = _as_array(initial).astype(np.float32)
    x0, y0, x1, y1 = params.strip_box
    crop = arr[y0:y1, x0:x1]
    templates = strip_templates(params)
    mse = np.array([float(np.mean((crop - templates[tool]) ** 2)) for tool in Tool])

    score = mag_dist / max(mag_dist.max(), 1e-9) + mse / max(mse.max(), 1e-9)
    return list(Tool)[int(np.argmin(score))]


def oracle_classify(
    initial: Path | str | np.ndarray,
    final: Path | str | np.ndarray,
    params: SceneParams | None = None,
) -> tuple[Tool, Action]:
    """Rule-based prediction from the two center-camera frames."""
    params = params or default_scene_params()
    initial_arr = _as_array(initial)
    final_arr = _as_array(final)
    displacement = estimate_displacement(initial_arr, final_arr, params)
    return classify_tool(initial_arr, displacement, params), classify_action(displacement)


def oracle_accuracy(dataset: SampleSet, params: SceneParams | None = None) -> dict[str, float]:
    """Oracle agreement with dataset labels: tool, action and joint
    accuracy over all samples."""
    params = params or (load_scene_params(dataset.root) if dataset.root else default_scene_params())
    tool_hits = action_hits = joint_hits = 0
    for sample in dataset:
        initial = dataset.resolve(sample, image_key(CameraView.center, Phase.initial))
        final = dataset.resolve(sample, image_key(CameraView.center, Phase.final))
        tool, action = oracle_classify(initial, final, params)
        tool_ok = tool is sample.tool
        action_ok = action is sample.action
        tool_hits += tool_ok
        action_hits += action_ok
        joint_hits += tool_ok and action_ok
    n = len(dataset)
    if n == 0:
        raise OracleError("cannot score an empty sample set")
    return {
        "n": float(n),
        "tool_accuracy": tool_hits / n,
        "action_accuracy": action_hits / n,
        "joint_accuracy": joint_hits / n,
    }
