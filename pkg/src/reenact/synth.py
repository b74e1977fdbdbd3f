"""Procedural synthetic face dataset.

Renders cartoon-like 256x256 faces whose landmarks are known exactly,
because the image is drawn from the landmark geometry itself. Identities
differ in base geometry (face oval, inter-ocular distance, mouth width,
...) and palette; expressions are additive landmark displacement fields
shared across identities; poses are affine skews of the whole face.

Everything is a pure function of (spec, seed): running the generator twice
with the same spec produces byte-identical directory trees.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from reenact.errors import ConfigurationError
from reenact.landmarks import DEFAULT_GROUPING, LANDMARK_COUNT, Landmark
from reenact.images import IMAGE_SIZE

MANIFEST_VERSION = 1
_SUPERSAMPLE = 2

# Index ranges of the synthetic 106-point convention (see DEFAULT_GROUPING).
_JAW = slice(0, 33)
_BROW_L = slice(33, 42)
_BROW_R = slice(42, 51)
_NOSE = slice(51, 66)
_EYE_L = slice(66, 76)
_EYE_R = slice(76, 86)
_LIP_OUTER = slice(86, 98)
_LIP_INNER = slice(98, 106)

# Canonical per-index parameters reused by every identity, so expression
# displacement fields defined on them are identity-independent.
_JAW_ANGLES = np.linspace(math.radians(170.0), math.radians(10.0), 33)
_BROW_T = np.linspace(0.0, 1.0, 9)
_EYE_ANGLES = np.linspace(0.0, 2.0 * math.pi, 10, endpoint=False)
_LIP_OUTER_ANGLES = np.linspace(0.0, 2.0 * math.pi, 12, endpoint=False)
_LIP_INNER_ANGLES = np.linspace(0.0, 2.0 * math.pi, 8, endpoint=False)


@dataclass(frozen=True)
class SynthSpec:
    identities: int
    expressions: int
    poses: int = 1
    seed: int = 0

    def __post_init__(self):
        if min(self.identities, self.expressions, self.poses) < 1:
            raise ConfigurationError("identity/expression/pose counts must all be >= 1")


@dataclass
class _IdentityParams:
    face_w: float
    face_h: float
    eye_dx: float
    eye_dy: float
    eye_rx: float
    eye_ry: float
    brow_offset: float
    brow_arch: float
    nose_len: float
    nose_w: float
    mouth_dy: float
    mouth_w: float
    mouth_h: float
    skin: tuple[int, int, int]
    lip: tuple[int, int, int]
    brow: tuple[int, int, int]
    iris: tuple[int, int, int]
    background: tuple[int, int, int]


def _identity_params(seed: int, index: int) -> _IdentityParams:
    rng = np.random.default_rng([seed, 1, index])
    u = rng.uniform

    def color(lo, hi):
        return tuple(int(round(u(a, b))) for a, b in zip(lo, hi))

    return _IdentityParams(
        face_w=u(0.26, 0.34),
        face_h=u(0.33, 0.40),
        eye_dx=u(0.10, 0.17),
        eye_dy=u(0.08, 0.12),
        eye_rx=u(0.040, 0.055),
        eye_ry=u(0.016, 0.030),
        brow_offset=u(0.045, 0.065),
        brow_arch=u(0.008, 0.020),
        nose_len=u(0.10, 0.14),
        nose_w=u(0.030, 0.048),
        mouth_dy=u(0.16, 0.21),
        mouth_w=u(0.060, 0.115),
        mouth_h=u(0.020, 0.032),
        skin=color((188, 132, 100), (238, 196, 170)),
        lip=color((130, 30, 40), (200, 80, 90)),
        brow=color((40, 25, 15), (110, 80, 60)),
        iris=color((40, 50, 60), (120, 140, 170)),
        background=color((165, 170, 180), (225, 232, 240)),
    )


def base_landmarks(params: _IdentityParams) -> np.ndarray:
    """Neutral-expression landmark layout for one identity."""
    cx, cy = 0.5, 0.54
    pts = np.zeros((LANDMARK_COUNT, 2))

    pts[_JAW, 0] = cx + params.face_w * np.cos(_JAW_ANGLES)
    pts[_JAW, 1] = cy + params.face_h * np.sin(_JAW_ANGLES)

    ey = cy - params.eye_dy
    for sign, eye_sl, brow_sl in ((-1, _EYE_L, _BROW_L), (1, _EYE_R, _BROW_R)):
        ex = cx + sign * params.eye_dx
        pts[eye_sl, 0] = ex + params.eye_rx * np.cos(_EYE_ANGLES)
        pts[eye_sl, 1] = ey + params.eye_ry * np.sin(_EYE_ANGLES)
        brow_w = params.eye_rx * 1.5
        pts[brow_sl, 0] = ex + brow_w * (2.0 * _BROW_T - 1.0)
        pts[brow_sl, 1] = ey - params.brow_offset - params.brow_arch * np.sin(np.pi * _BROW_T)

    # Nose: 4-point bridge plus an 11-point base arc.
    tip_y = ey + params.nose_len
    pts[51:55, 0] = cx
    pts[51:55, 1] = np.linspace(ey + 0.02, tip_y - 0.01, 4)
    base_t = np.linspace(0.0, 1.0, 11)
    pts[55:66, 0] = cx + params.nose_w * (2.0 * base_t - 1.0)
    pts[55:66, 1] = tip_y + 0.012 * np.sin(np.pi * base_t)

    my = cy + params.mouth_dy
    pts[_LIP_OUTER, 0] = cx + params.mouth_w * np.cos(_LIP_OUTER_ANGLES)
    pts[_LIP_OUTER, 1] = my + params.mouth_h * np.sin(_LIP_OUTER_ANGLES)
    pts[_LIP_INNER, 0] = cx + 0.7 * params.mouth_w * np.cos(_LIP_INNER_ANGLES)
    pts[_LIP_INNER, 1] = my + 0.22 * params.mouth_h * np.sin(_LIP_INNER_ANGLES)
    return pts


def expression_displacement(seed: int, expression_index: int) -> np.ndarray:
    """Additive displacement field for one expression, shared by all identities.

    Index 0 is the neutral reference expression (zero field). Displacements
    concentrate on the mouth, brows and eyes; the jaw only follows the chin
    drop of an opening mouth, at well below mouth magnitude.
    """
    d = np.zeros((LANDMARK_COUNT, 2))
    if expression_index == 0:
        return d
    rng = np.random.default_rng([seed, 2, expression_index])
    mouth_open = rng.uniform(0.15, 1.0) * 0.055
    smile = rng.uniform(-1.0, 1.0) * 0.030
    widen = rng.uniform(-1.0, 1.0) * 0.022
    brow_l = rng.uniform(-1.0, 1.0) * 0.034
    brow_r = brow_l + rng.uniform(-0.5, 0.5) * 0.014
    eye_open = rng.uniform(-1.0, 1.0) * 0.014

    # Mouth: lower half drops with the opening, corners follow smile/width.
    sin_o, cos_o = np.sin(_LIP_OUTER_ANGLES), np.cos(_LIP_OUTER_ANGLES)
    d[_LIP_OUTER, 0] = widen * cos_o
    d[_LIP_OUTER, 1] = mouth_open * np.where(sin_o > 0, 0.9 * sin_o, 0.15 * sin_o)
    d[_LIP_OUTER, 1] -= smile * np.abs(cos_o) ** 3
    sin_i = np.sin(_LIP_INNER_ANGLES)
    d[_LIP_INNER, 0] = 0.7 * widen * np.cos(_LIP_INNER_ANGLES)
    d[_LIP_INNER, 1] = mouth_open * np.where(sin_i > 0, 0.75 * sin_i, -0.25 * np.abs(sin_i))
    d[_LIP_INNER, 1] -= 0.8 * smile * np.abs(np.cos(_LIP_INNER_ANGLES)) ** 3

    # Brows: raise/lower with a gentle arch emphasis.
    arch = 0.6 + 0.4 * np.sin(np.pi * _BROW_T)
    d[_BROW_L, 1] = -brow_l * arch
    d[_BROW_R, 1] = -brow_r * arch

    # Eyes: widen (negative squint) scales the lids vertically.
    d[_EYE_L, 1] = eye_open * np.sin(_EYE_ANGLES)
    d[_EYE_R, 1] = eye_open * np.sin(_EYE_ANGLES)

    # Chin drop tied to the mouth opening; well below mouth magnitude.
    d[_JAW, 1] = 0.3 * mouth_open * np.sin(_JAW_ANGLES) ** 4
    return d


def modulation_factors(params: _IdentityParams) -> np.ndarray:
    """Per-point scale the displacement field picks up from identity proportions.

    An expression is the same motion on every face, but its extent follows
    the face it lands on: mouth motion scales with mouth width, brow and
    eye motion with the inter-ocular distance and lid height, the chin drop
    with face height. The converter has to undo the source's factors and
    apply the target's.
    """
    m = np.ones((LANDMARK_COUNT, 1))
    m[_JAW] = params.face_h / 0.365
    m[_BROW_L] = params.eye_dx / 0.135
    m[_BROW_R] = params.eye_dx / 0.135
    m[_EYE_L] = params.eye_ry / 0.023
    m[_EYE_R] = params.eye_ry / 0.023
    m[_LIP_OUTER] = params.mouth_w / 0.0875
    m[_LIP_INNER] = params.mouth_w / 0.0875
    return m


def record_jitter(seed: int, identity_index: int, expression_index: int, pose_index: int) -> np.ndarray:
    """Small per-record geometric idiosyncrasy, like capture-to-capture variation.

    Each facial part gets a rigid offset plus per-point jitter. The image is
    rendered from the jittered geometry, so landmark files stay exact; the
    (identity, expression) -> landmark map, however, carries an irreducible
    noise floor as with a real detector.
    """
    rng = np.random.default_rng([seed, 4, identity_index, expression_index, pose_index])
    eps = np.zeros((LANDMARK_COUNT, 2))
    for part in (_JAW, _BROW_L, _BROW_R, _NOSE, _EYE_L, _EYE_R, _LIP_OUTER, _LIP_INNER):
        eps[part] += rng.normal(0.0, 0.0013, size=2)
    eps += rng.normal(0.0, 0.0006, size=(LANDMARK_COUNT, 2))
    return eps


def style_factors(seed: int, identity_index: int) -> np.ndarray:
    """Per-identity expressive style: how strongly each facial group moves.

    Unlike :func:`modulation_factors` this is not predictable from the face
    geometry; it can only be picked up from that identity's own expressive
    records.
    """
    rng = np.random.default_rng([seed, 5, identity_index])
    mouth, brows, eyes = rng.uniform(0.65, 1.35, size=3)
    s = np.ones((LANDMARK_COUNT, 1))
    s[_JAW] = mouth  # chin drop follows the mouth
    s[_BROW_L] = brows
    s[_BROW_R] = brows
    s[_EYE_L] = eyes
    s[_EYE_R] = eyes
    s[_LIP_OUTER] = mouth
    s[_LIP_INNER] = mouth
    return s


def pose_transform(seed: int, pose_index: int) -> np.ndarray:
    """2x3 affine (about the image center) for one pose bucket; pose 0 is identity."""
    if pose_index == 0:
        return np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    rng = np.random.default_rng([seed, 3, pose_index])
    rot = math.radians(rng.uniform(-10.0, 10.0))
    squish = rng.uniform(0.86, 1.0)
    shear = rng.uniform(-0.06, 0.06)
    c, s = math.cos(rot), math.sin(rot)
    lin = np.array([[c * squish, -s + shear], [s, c]])
    center = np.array([0.5, 0.5])
    offset = center - lin @ center
    return np.hstack([lin, offset[:, None]])


def _apply_affine(pts: np.ndarray, affine: np.ndarray) -> np.ndarray:
    return pts @ affine[:, :2].T + affine[:, 2]


def _forehead_arc(params: _IdentityParams) -> np.ndarray:
    angles = np.linspace(math.radians(10.0), math.radians(-190.0), 24)
    arc = np.zeros((24, 2))
    arc[:, 0] = 0.5 + params.face_w * np.cos(angles)
    arc[:, 1] = 0.54 + 0.92 * params.face_h * np.sin(angles)
    return arc


def _shade(color: tuple[int, int, int], factor: float) -> tuple[int, int, int]:
    return tuple(max(0, min(255, int(round(c * factor)))) for c in color)


def render_face(
    landmarks: np.ndarray, params: _IdentityParams, affine: np.ndarray
) -> Image.Image:
    """Draw the face image implied by posed landmark positions."""
    size = IMAGE_SIZE * _SUPERSAMPLE
    img = Image.new("RGB", (size, size), params.background)
    draw = ImageDraw.Draw(img)

    def px(pts: np.ndarray) -> list[tuple[float, float]]:
        return [(float(x) * size, float(y) * size) for x, y in pts]

    outline = _shade(params.skin, 0.62)
    face_poly = np.vstack([landmarks[_JAW], _apply_affine(_forehead_arc(params), affine)])
    draw.polygon(px(face_poly), fill=params.skin, outline=outline, width=2 * _SUPERSAMPLE)

    for sl in (_BROW_L, _BROW_R):
        draw.line(px(landmarks[sl]), fill=params.brow, width=3 * _SUPERSAMPLE, joint="curve")

    iris_r = params.eye_ry * 0.85 * size
    for sl in (_EYE_L, _EYE_R):
        eye = landmarks[sl]
        draw.polygon(px(eye), fill=(250, 250, 250), outline=(45, 40, 40), width=_SUPERSAMPLE)
        ecx, ecy = eye.mean(axis=0) * size
        draw.ellipse([ecx - iris_r, ecy - iris_r, ecx + iris_r, ecy + iris_r], fill=params.iris)

    draw.line(px(landmarks[_NOSE]), fill=outline, width=2 * _SUPERSAMPLE, joint="curve")

    draw.polygon(px(landmarks[_LIP_OUTER]), fill=params.lip, outline=_shade(params.lip, 0.7))
    draw.polygon(px(landmarks[_LIP_INNER]), fill=(46, 26, 30))

    return img.resize((IMAGE_SIZE, IMAGE_SIZE), Image.LANCZOS)


def _ids(prefix: str, count: int) -> list[str]:
    return [f"{prefix}{i:02d}" for i in range(count)]


def generate_synthetic_dataset(spec: SynthSpec, out_dir: str | Path) -> Path:
    """Write images, landmark files and a manifest; returns the manifest path."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    identity_ids = _ids("id", spec.identities)
    expression_ids = _ids("e", spec.expressions)
    pose_ids = _ids("p", spec.poses)

    displacements = [expression_displacement(spec.seed, e) for e in range(spec.expressions)]
    affines = [pose_transform(spec.seed, p) for p in range(spec.poses)]

    records = []
    for i, identity in enumerate(identity_ids):
        params = _identity_params(spec.seed, i)
        base = base_landmarks(params)
        factors = modulation_factors(params) * style_factors(spec.seed, i)
        (root / identity).mkdir(exist_ok=True)
        for e, expression in enumerate(expression_ids):
            canonical = base + factors * displacements[e]
            for p, pose in enumerate(pose_ids):
                jittered = canonical + record_jitter(spec.seed, i, e, p)
                posed = _apply_affine(jittered, affines[p])
                stem = f"{identity}/{expression}_{pose}"
                Landmark(posed).save(root / f"{stem}.json")
                render_face(posed, params, affines[p]).save(root / f"{stem}.png", format="PNG")
                records.append(
                    {
                        "identity": identity,
                        "expression": expression,
                        "pose": pose,
                        "image": f"{stem}.png",
                        "landmarks": f"{stem}.json",
                    }
                )

    manifest = {
        "version": MANIFEST_VERSION,
        "crop": {"convention": "face-centered", "crop_size": 416, "output_size": IMAGE_SIZE},
        "reference_expression": expression_ids[0],
        "poses": pose_ids,
        "grouping": [
            {"name": part.name, "indices": list(part.indices), "closed": part.closed}
            for part in DEFAULT_GROUPING
        ],
        "records": records,
    }
    manifest_path = root / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=1))
    return manifest_path
