"""Procedural face generator with recorded ground-truth factors.

Each image is a pure function of four factors: identity (discrete, drives
skin/hair colors and face geometry), yaw (continuous in [-1, 1], rendered
as horizontal asymmetry), expression (discrete mouth/eye variant), and two
nuisance scalars (background shade, lighting level).

The renderer is constructed so that, bit for bit,

    render(yaw=+a) == horizontal mirror of render(yaw=-a)

for all factor combinations: every horizontal term is either even in x,
mirror-paired (left/right eye, ears), or enters only through products and
squares that are exactly sign-symmetric in IEEE arithmetic. In particular
yaw=0 renders a bilaterally symmetric face. sign(yaw) is therefore an
honest binary pose label, and a horizontal flip of a rendered face is
exactly the rendering of the yaw-negated factors.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .config import DataConfig
from .errors import ValidationError

GENERATOR_VERSION = "1"

# Renderer supports a fixed set of expression variants:
# (mouth curvature, mouth openness, eye aperture scale)
_EXPRESSIONS = [
    (0.00, 0.30, 1.00),   # neutral
    (0.45, 0.40, 0.90),   # smile
    (-0.45, 0.35, 0.75),  # frown / squint
    (0.00, 1.00, 1.30),   # surprise, open mouth and wide eyes
    (0.60, 0.75, 0.85),   # grin
    (-0.15, 0.20, 0.55),  # sleepy
]
NUM_EXPRESSION_VARIANTS = len(_EXPRESSIONS)

_IDENTITY_SALT = 0x5EED_FACE

# Pose strengths: how yaw shows up in the image.
_HEAD_SHIFT = 0.14      # head center offset per unit yaw
_FEATURE_SHIFT = 0.11   # extra eye/nose/mouth offset per unit yaw
_SHADING = 0.45         # lateral brightness gradient per unit yaw
_EAR_ASYM = 0.55        # ear size asymmetry per unit yaw


@dataclass(frozen=True)
class SynthFactors:
    """Ground-truth generative factors for one face."""

    identity_id: int
    yaw: float
    expression_id: int
    nuisance_bg: float
    nuisance_light: float

    def validate(self) -> "SynthFactors":
        if self.identity_id < 0:
            raise ValidationError(f"identity_id must be >= 0, got {self.identity_id}")
        if not -1.0 <= self.yaw <= 1.0:
            raise ValidationError(f"yaw must be in [-1, 1], got {self.yaw}")
        if not 0 <= self.expression_id < NUM_EXPRESSION_VARIANTS:
            raise ValidationError(
                f"expression_id must be in [0, {NUM_EXPRESSION_VARIANTS}), "
                f"got {self.expression_id}")
        for name in ("nuisance_bg", "nuisance_light"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1], got {v}")
        return self

    @property
    def pose_label(self) -> int:
        """Binary pose label: 1 for right-facing (yaw > 0), else 0."""
        return int(self.yaw > 0)


@dataclass
class ImageBatch:
    """N images, channel-first float32 in [0, 1]."""

    data: np.ndarray            # (N, 3, H, W)
    ids: list[str]

    def validate(self) -> "ImageBatch":
        if self.data.ndim != 4 or self.data.shape[1] != 3:
            raise ValidationError(f"expected (N, 3, H, W), got {self.data.shape}")
        if self.data.shape[0] < 1:
            raise ValidationError("batch must hold at least one image")
        if len(self.ids) != self.data.shape[0]:
            raise ValidationError("ids length must match batch size")
        if self.data.min() < 0.0 or self.data.max() > 1.0:
            raise ValidationError("pixel values must lie in [0, 1]")
        return self


def _identity_params(identity_id: int) -> dict:
    rng = np.random.default_rng([_IDENTITY_SALT, int(identity_id)])
    u = rng.uniform
    skin = np.array([u(0.55, 0.95), u(0.42, 0.75), u(0.30, 0.62)], dtype=np.float32)
    hair = np.array([u(0.05, 0.85), u(0.05, 0.55), u(0.02, 0.40)], dtype=np.float32)
    return {
        "skin": skin,
        "hair": hair,
        "head_rx": np.float32(u(0.46, 0.60)),
        "head_ry": np.float32(u(0.62, 0.78)),
        "hairline": np.float32(u(-0.62, -0.38)),   # y above which hair covers the head
        "eye_y": np.float32(u(-0.30, -0.12)),
        "eye_dx": np.float32(u(0.18, 0.28)),
        "eye_r": np.float32(u(0.055, 0.085)),
        "mouth_y": np.float32(u(0.30, 0.44)),
        "mouth_w": np.float32(u(0.16, 0.26)),
        "nose_len": np.float32(u(0.10, 0.20)),
        "ear_r": np.float32(u(0.10, 0.16)),
    }


def _soft_mask(d2: np.ndarray, sharp: float = 14.0) -> np.ndarray:
    # d2 is a squared normalized distance; mask ~1 inside the unit level set.
    return np.clip((1.0 - d2) * np.float32(sharp), 0.0, 1.0).astype(np.float32)


def _over(canvas: np.ndarray, mask: np.ndarray, color: np.ndarray) -> np.ndarray:
    return mask[None] * color[:, None, None] + (1.0 - mask[None]) * canvas


def render_face(factors: SynthFactors, size: int = 64) -> np.ndarray:
    """Render one face as a float32 (3, size, size) array in [0, 1].

    Deterministic in ``factors``; see the module docstring for the exact
    mirror symmetry this construction guarantees.
    """
    factors.validate()
    if size < 16:
        raise ValidationError(f"size must be >= 16, got {size}")

    pid = _identity_params(factors.identity_id)
    yaw = np.float32(factors.yaw)
    curve, openness, eye_scale = (np.float32(v) for v in _EXPRESSIONS[factors.expression_id])

    half = np.float32((size - 1) / 2.0)
    coords = (np.arange(size, dtype=np.float32) - half) / half
    xx = coords[None, :].repeat(size, axis=0)          # antisymmetric: xx[:, j] = -xx[:, -1-j]
    yy = coords[:, None].repeat(size, axis=1)

    # Background: vertical gradient, horizontally uniform.
    bg_shade = np.float32(factors.nuisance_bg)
    top = np.array([0.08, 0.10, 0.16], dtype=np.float32) + 0.55 * bg_shade * np.array(
        [0.9, 0.8, 1.0], dtype=np.float32)
    bottom = top * np.float32(0.45)
    t = (yy + 1.0) * np.float32(0.5)
    canvas = (1.0 - t)[None] * top[:, None, None] + t[None] * bottom[:, None, None]

    cx = _HEAD_SHIFT * yaw                              # head center, odd in yaw
    fx = cx + _FEATURE_SHIFT * yaw                      # feature center, odd in yaw

    # Ears: mirror-paired disks whose sizes trade off with yaw (the far ear
    # shrinks as the head turns). Drawn before the head so the head overlaps.
    ear_y = pid["eye_y"] + np.float32(0.18)
    ear_l = pid["ear_r"] * (1.0 - _EAR_ASYM * yaw)
    ear_r = pid["ear_r"] * (1.0 + _EAR_ASYM * yaw)
    ear_color = pid["skin"] * np.float32(0.92)
    for ex, er in ((cx - pid["head_rx"], ear_l), (cx + pid["head_rx"], ear_r)):
        er2 = np.maximum(er, np.float32(1e-3)) ** 2
        d2 = ((xx - ex) ** 2 + (yy - ear_y) ** 2) / er2
        canvas = _over(canvas, _soft_mask(d2), ear_color)

    # Head ellipse with lateral shading that follows the yaw sign.
    d2_head = ((xx - cx) / pid["head_rx"]) ** 2 + (yy / pid["head_ry"]) ** 2
    head_mask = _soft_mask(d2_head)
    shade = 1.0 + _SHADING * yaw * (xx - cx)
    skin_img = pid["skin"][:, None, None] * np.clip(shade, 0.55, 1.45)[None]
    canvas = head_mask[None] * skin_img + (1.0 - head_mask[None]) * canvas

    # Hair: the part of the head above the identity's hairline.
    hair_mask = head_mask * np.clip((pid["hairline"] - yy) * np.float32(9.0), 0.0, 1.0)
    canvas = _over(canvas, hair_mask, pid["hair"])

    # Eyes: mirror-paired, shifted with the face; aperture set by expression.
    eye_ry = pid["eye_r"] * eye_scale
    sclera = np.array([0.93, 0.93, 0.95], dtype=np.float32)
    pupil = np.array([0.06, 0.05, 0.08], dtype=np.float32)
    for ex in (fx - pid["eye_dx"], fx + pid["eye_dx"]):
        d2 = ((xx - ex) / (pid["eye_r"] * np.float32(1.35))) ** 2 \
            + ((yy - pid["eye_y"]) / eye_ry) ** 2
        canvas = _over(canvas, _soft_mask(d2), sclera)
        d2p = ((xx - ex) ** 2 + (yy - pid["eye_y"]) ** 2) / (pid["eye_r"] * np.float32(0.5)) ** 2
        canvas = _over(canvas, _soft_mask(d2p), pupil)

    # Nose: a small vertical wedge at the feature center.
    nose_color = pid["skin"] * np.float32(0.72)
    nose_y = pid["eye_y"] + np.float32(0.24)
    d2n = ((xx - fx) / np.float32(0.045)) ** 2 \
        + ((yy - nose_y - pid["nose_len"]) / pid["nose_len"]) ** 2
    canvas = _over(canvas, _soft_mask(d2n), nose_color)

    # Mouth: curvature and openness from the expression variant. The local
    # abscissa enters only through u and u*u with mirror-safe pairing.
    mouth_color = np.array([0.55, 0.12, 0.16], dtype=np.float32)
    u = (xx - fx) / pid["mouth_w"]
    mouth_center = pid["mouth_y"] - np.float32(0.10) * curve * (u * u - 1.0)
    mouth_h = np.float32(0.022) + np.float32(0.055) * openness
    d2m = u * u + ((yy - mouth_center) / mouth_h) ** 2
    canvas = _over(canvas, _soft_mask(d2m), mouth_color)
    if openness > 0.5:
        inner = np.array([0.12, 0.04, 0.06], dtype=np.float32)
        d2i = (u / np.float32(0.6)) ** 2 + ((yy - mouth_center) / (mouth_h * np.float32(0.55))) ** 2
        canvas = _over(canvas, _soft_mask(d2i), inner)

    # Lighting nuisance: global brightness scale.
    light = np.float32(0.78) + np.float32(0.22) * np.float32(factors.nuisance_light)
    canvas = canvas * light
    return np.clip(canvas, 0.0, 1.0).astype(np.float32)


def sample_factors(rng: np.random.Generator, config: DataConfig) -> SynthFactors:
    """Draw one factor tuple from the documented generation distributions.

    identity and expression are uniform categoricals; |yaw| is uniform on
    [min_abs_yaw, 1] with a uniform sign (yaw = 0 never occurs, keeping the
    binary pose label well-defined); nuisance scalars are uniform on [0, 1].
    """
    identity = int(rng.integers(0, config.num_identities))
    magnitude = rng.uniform(config.min_abs_yaw, 1.0)
    sign = 1.0 if rng.uniform() < 0.5 else -1.0
    expression = int(rng.integers(0, config.num_expressions))
    return SynthFactors(
        identity_id=identity,
        yaw=float(sign * magnitude),
        expression_id=expression,
        nuisance_bg=float(rng.uniform()),
        nuisance_light=float(rng.uniform()),
    )


@dataclass
class ManifestRow:
    image_id: str
    path: str                   # relative to the manifest directory
    factors: SynthFactors
    split: str                  # "train" or "test"


@dataclass
class DatasetManifest:
    rows: list[ManifestRow]
    seed: int
    version: str
    root: Path = field(default_factory=Path)

    def split_rows(self, split: str | None) -> list[ManifestRow]:
        if split is None:
            return self.rows
        return [r for r in self.rows if r.split == split]


_CSV_HEADER = ["id", "path", "identity_id", "yaw", "expression_id",
               "nuisance_bg", "nuisance_light", "split"]


def _manifest_csv_text(manifest: DatasetManifest) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_CSV_HEADER)
    for row in manifest.rows:
        f = row.factors
        writer.writerow([row.image_id, row.path, f.identity_id, repr(f.yaw),
                         f.expression_id, repr(f.nuisance_bg),
                         repr(f.nuisance_light), row.split])
    return buf.getvalue()


def write_manifest(manifest: DatasetManifest, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest_path = directory / "manifest.csv"
    manifest_path.write_text(_manifest_csv_text(manifest))
    meta = {"seed": manifest.seed, "generator_version": manifest.version}
    (directory / "meta.json").write_text(json.dumps(meta, sort_keys=True) + "\n")
    return manifest_path


def read_manifest(directory: str | Path) -> DatasetManifest:
    directory = Path(directory)
    manifest_path = directory / "manifest.csv"
    meta = json.loads((directory / "meta.json").read_text())
    rows = []
    with manifest_path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            factors = SynthFactors(
                identity_id=int(rec["identity_id"]),
                yaw=float(rec["yaw"]),
                expression_id=int(rec["expression_id"]),
                nuisance_bg=float(rec["nuisance_bg"]),
                nuisance_light=float(rec["nuisance_light"]),
            )
            rows.append(ManifestRow(rec["id"], rec["path"], factors, rec["split"]))
    return DatasetManifest(rows=rows, seed=int(meta["seed"]),
                           version=str(meta["generator_version"]), root=directory)


def save_image(image: np.ndarray, path: str | Path) -> None:
    """Store a (3, H, W) float image as 8-bit PNG."""
    arr = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(arr.transpose(1, 2, 0)).save(path, format="PNG")


def load_image(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    return arr.transpose(2, 0, 1)


def generate_dataset(n: int, seed: int, out_dir: str | Path,
                     config: DataConfig | None = None) -> DatasetManifest:
    """Render ``n`` faces with seeded factors and write images + manifest.

    The split tag assigns the trailing ``test_fraction`` of rows to "test";
    factor draws are iid, so the index split is an unbiased holdout.
    """
    config = (config or DataConfig()).validate()
    config = replace(config, n_images=n, seed=seed)
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    n_train = int(round(n * (1.0 - config.test_fraction)))
    rows = []
    for i in range(n):
        factors = sample_factors(rng, config)
        image_id = f"{i:06d}"
        rel_path = f"images/{image_id}.png"
        save_image(render_face(factors), out_dir / rel_path)
        split = "train" if i < n_train else "test"
        rows.append(ManifestRow(image_id, rel_path, factors, split))

    manifest = DatasetManifest(rows=rows, seed=seed, version=GENERATOR_VERSION,
                               root=out_dir)
    write_manifest(manifest, out_dir)
    return manifest


def load_image_batch(manifest: DatasetManifest, split: str | None = None) -> ImageBatch:
    rows = manifest.split_rows(split)
    if not rows:
        raise ValidationError(f"manifest has no rows for split {split!r}")
    data = np.stack([load_image(manifest.root / r.path) for r in rows])
    return ImageBatch(data=data, ids=[r.image_id for r in rows]).validate()


TASKS = ("pose", "identity", "expression")


def labels_for(manifest: DatasetManifest, task: str, split: str | None = None) -> np.ndarray:
    """Integer labels for a probe task, aligned with load_image_batch order."""
    rows = manifest.split_rows(split)
    if task == "pose":
        return np.array([r.factors.pose_label for r in rows], dtype=np.int64)
    if task == "identity":
        return np.array([r.factors.identity_id for r in rows], dtype=np.int64)
    if task == "expression":
        return np.array([r.factors.expression_id for r in rows], dtype=np.int64)
    raise ValidationError(f"unknown task {task!r}, expected one of {TASKS}")
