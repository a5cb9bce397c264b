"""Procedural brick walls with exact ground-truth annotations.

A wall is described by a small token grid: `H`/`L` bricks span cells to the
right, `V` bricks span downward, `.` leaves a mortar-filled cell.  Cell pitch
equals brick face height plus joint width, so a brick drawn over n cells gets
an n*pitch - joint frontal extent and every gap between neighbours is exactly
one joint.  Brick fronts sit at z = 0, the mortar slab face at z = -recess.

Per-brick randomness (dimension jitter, surface damage, corner chips) comes
from a generator keyed by (wall_seed, brick_id), so any subset of bricks can
be rebuilt independently and the result never depends on build order.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import (GridPitchError, PatternOverlapError, PatternShapeError,
                     PatternTokenError)
from .geometry import TriangleMesh, merge_meshes, subdivided_box
from .rng import hash_unit, spawn

DEFAULT_JOINT = 15.0        # mm of mortar between neighbouring bricks
DEFAULT_RECESS = 12.0       # mm the mortar face sits behind the brick face
JITTER_CLAMP_SD = 3.0       # dimension jitter is clipped at this many SDs

ORIENT_H = "H"
ORIENT_V = "V"
TYPE_STANDARD = "STANDARD"
TYPE_LONG = "LONG"

_TOKEN_RE = re.compile(r"^([HVL])([0-9]*)$")


@dataclass
class BrickSpec:
    """Nominal brick geometry and its generative variation parameters.

    Lengths are mm.  Jitter SDs apply per generated brick and are clamped at
    three SDs.  Damage is smooth value noise along face normals with the
    given amplitude (mm) and spatial frequency (1/mm), plus an optional
    corner chip.
    """
    face_length: float = 240.0
    face_height: float = 45.0
    depth: float = 240.0
    length_jitter_sd: float = 2.0
    height_jitter_sd: float = 1.0
    depth_jitter_sd: float = 2.0
    damage_amplitude: float = 2.0
    damage_frequency: float = 0.05
    chip_probability: float = 0.1
    chip_fraction: float = 0.25
    long_length_factor: float = 1.5
    long_depth_factor: float = 1.5

    def __post_init__(self) -> None:
        if min(self.face_length, self.face_height, self.depth) <= 0:
            raise ValueError("brick dimensions must be positive")
        if min(self.length_jitter_sd, self.height_jitter_sd,
               self.depth_jitter_sd) < 0:
            raise ValueError("jitter SDs must be non-negative")
        if self.damage_amplitude < 0:
            raise ValueError("damage amplitude must be non-negative")
        if self.damage_amplitude > 0 and self.damage_frequency <= 0:
            raise ValueError("damage frequency must be positive")
        if not 0 <= self.chip_probability <= 1:
            raise ValueError("chip probability must be in [0, 1]")

    def long_variant(self) -> "BrickSpec":
        """The elongated, deeper brick class used for band borders."""
        return BrickSpec(
            face_length=self.face_length * self.long_length_factor,
            face_height=self.face_height,
            depth=self.depth * self.long_depth_factor,
            length_jitter_sd=self.length_jitter_sd,
            height_jitter_sd=self.height_jitter_sd,
            depth_jitter_sd=self.depth_jitter_sd,
            damage_amplitude=self.damage_amplitude,
            damage_frequency=self.damage_frequency,
            chip_probability=self.chip_probability,
            chip_fraction=self.chip_fraction,
            long_length_factor=self.long_length_factor,
            long_depth_factor=self.long_depth_factor,
        )


@dataclass
class Placement:
    row: int
    col: int
    span: int
    kind: str  # "H", "V" or "L"


@dataclass
class WallPattern:
    rows: int
    cols: int
    cell_unit: float    # mm, grid pitch
    joint: float        # mm
    placements: List[Placement] = field(default_factory=list)

    def grid(self) -> np.ndarray:
        """Occupancy grid of placement indices, -1 for empty cells."""
        g = np.full((self.rows, self.cols), -1, dtype=np.int64)
        for i, p in enumerate(self.placements):
            if p.kind == "V":
                g[p.row:p.row + p.span, p.col] = i
            else:
                g[p.row, p.col:p.col + p.span] = i
        return g


@dataclass
class Annotation:
    brick_id: int
    rect_mm: Tuple[float, float, float, float]  # x, y, w, h, y up from wall base
    orientation: str   # "H" or "V"
    brick_type: str    # "STANDARD" or "LONG"


@dataclass
class WallModel:
    mesh: TriangleMesh
    annotations: List[Annotation]
    pattern: WallPattern
    spec: BrickSpec
    seed: int
    recess: float
    extent_mm: Tuple[float, float]


def parse_pattern(text: str, cell_unit: float = 60.0,
                  joint: float = DEFAULT_JOINT) -> WallPattern:
    """Parse a token grid into a wall pattern.

    Each line lists the tokens that start on that row, left to right.  Cells
    already covered by a V span from an earlier row are skipped implicitly.
    Raises PatternTokenError, PatternShapeError or PatternOverlapError.
    """
    rows_tokens: List[List[str]] = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        rows_tokens.append(line.split())
    if not rows_tokens:
        raise PatternShapeError("pattern has no token lines")

    n_rows = len(rows_tokens)
    placements: List[Placement] = []
    occupied: Dict[Tuple[int, int], int] = {}
    cols: Optional[int] = None

    def claim(r: int, c: int, pid: int) -> None:
        if cols is not None and c >= cols:
            raise PatternShapeError(
                f"row {r}: placement spills past column {cols}")
        if (r, c) in occupied:
            raise PatternOverlapError(
                f"cell ({r}, {c}) claimed twice "
                f"(placements {occupied[(r, c)]} and {pid})")
        occupied[(r, c)] = pid

    for r, tokens in enumerate(rows_tokens):
        cursor = 0
        for token in tokens:
            while (r, cursor) in occupied and (cols is None or cursor < cols):
                cursor += 1
            if cols is not None and cursor >= cols:
                raise PatternShapeError(
                    f"row {r}: more tokens than free cells")
            if token == ".":
                # Mortar cell: consumed but owns no placement.
                occupied[(r, cursor)] = -1
                cursor += 1
                continue
            m = _TOKEN_RE.match(token)
            if m is None:
                raise PatternTokenError(f"row {r}: unknown token {token!r}")
            kind = m.group(1)
            span = int(m.group(2)) if m.group(2) else 1
            if span < 1:
                raise PatternTokenError(
                    f"row {r}: span must be a positive integer in {token!r}")
            pid = len(placements)
            if kind == "V":
                if r + span > n_rows:
                    raise PatternShapeError(
                        f"row {r}: V{span} runs past the last row")
                for rr in range(r, r + span):
                    claim(rr, cursor, pid)
                cursor += 1
            else:
                for cc in range(cursor, cursor + span):
                    claim(r, cc, pid)
                cursor += span
            placements.append(Placement(row=r, col=cursor - (1 if kind == "V"
                                        else span), span=span, kind=kind))
        while (r, cursor) in occupied and (cols is None or cursor < cols):
            cursor += 1
        if cols is None:
            cols = cursor
            if cols == 0:
                raise PatternShapeError("first row is empty")
        elif cursor != cols:
            raise PatternShapeError(
                f"row {r} fills {cursor} columns, expected {cols}")
    return WallPattern(rows=n_rows, cols=int(cols), cell_unit=float(cell_unit),
                       joint=float(joint), placements=placements)


def parse_pattern_file(path, cell_unit: float = 60.0,
                       joint: float = DEFAULT_JOINT) -> WallPattern:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_pattern(fh.read(), cell_unit=cell_unit, joint=joint)


def _value_noise(key: int, uv: np.ndarray, frequency: float) -> np.ndarray:
    """Smooth value noise in [-1, 1] over in-plane mm coordinates."""
    p = uv * frequency
    i0 = np.floor(p).astype(np.int64)
    f = p - i0
    w = f * f * (3.0 - 2.0 * f)

    def corner(di: int, dj: int) -> np.ndarray:
        h = hash_unit(key, i0[:, 0] + di, i0[:, 1] + dj)
        return 2.0 * h - 1.0

    top = corner(0, 0) * (1 - w[:, 0]) + corner(1, 0) * w[:, 0]
    bot = corner(0, 1) * (1 - w[:, 0]) + corner(1, 1) * w[:, 0]
    return top * (1 - w[:, 1]) + bot * w[:, 1]


def _clamped_normal(rng: np.random.Generator, sd: float) -> float:
    if sd == 0:
        return 0.0
    return float(np.clip(rng.normal(0.0, sd),
                         -JITTER_CLAMP_SD * sd, JITTER_CLAMP_SD * sd))


def _build_brick_mesh(spec: BrickSpec, rng: np.random.Generator,
                      length: float, height: float,
                      depth: float) -> TriangleMesh:
    """Jittered, damaged box with its front face centred on (0, 0, z=0).

    Draw order from rng is fixed: length, height, depth jitter, noise key,
    chip decision, chip corner, chip size.
    """
    l = max(length + _clamped_normal(rng, spec.length_jitter_sd), 0.1 * length)
    h = max(height + _clamped_normal(rng, spec.height_jitter_sd), 0.1 * height)
    d = max(depth + _clamped_normal(rng, spec.depth_jitter_sd), 0.1 * depth)
    noise_key = int(rng.integers(0, 2 ** 63))
    do_chip = bool(rng.random() < spec.chip_probability)
    corner = int(rng.integers(0, 8))
    chip_scale = float(rng.uniform(0.5, 1.0))

    if spec.damage_amplitude > 0:
        quad = 1.0 / spec.damage_frequency
        divisions = (max(1, int(np.ceil(l / quad))),
                     max(1, int(np.ceil(h / quad))),
                     max(1, int(np.ceil(d / quad))))
    else:
        divisions = (1, 1, 1)
    mesh, faces = subdivided_box((l, h, d), divisions)

    if spec.damage_amplitude > 0:
        disp = np.zeros_like(mesh.vertices)
        for fi, face in enumerate(faces):
            n = _value_noise(noise_key + fi, face.uv, spec.damage_frequency)
            disp[face.vertex_ids] += face.normal * (
                spec.damage_amplitude * n)[:, None]
        mesh.vertices += disp

    if do_chip:
        legs = spec.chip_fraction * min(l, h, d) * chip_scale
        dims = np.array([l, h, d])
        bits = np.array([(corner >> k) & 1 for k in range(3)])
        # Corner-local coordinates increase away from the chosen corner.
        local = np.where(bits, dims - mesh.vertices, mesh.vertices)
        s = local.sum(axis=1)
        delta = np.maximum(legs - s, 0.0) / 3.0
        shift = delta[:, None] * np.where(bits, -1.0, 1.0)
        mesh.vertices += shift

    # Front face (max z) to z = 0, frontal rect centred on the origin.
    mesh.vertices += np.array([-l / 2.0, -h / 2.0, -d])
    return mesh


def generate_brick(spec: BrickSpec, seed: int) -> Tuple[TriangleMesh, Annotation]:
    """Single brick with its nominal front rect anchored at (0, 0).

    The mesh's undamaged front face spans exactly x in [0, face_length],
    y in [0, face_height] before jitter; jitter grows or shrinks the brick
    symmetrically about the rect centre.
    """
    rng = spawn(seed, 0)
    mesh = _build_brick_mesh(spec, rng, spec.face_length, spec.face_height,
                             spec.depth)
    mesh = mesh.translated((spec.face_length / 2.0, spec.face_height / 2.0, 0.0))
    ann = Annotation(brick_id=0,
                     rect_mm=(0.0, 0.0, spec.face_length, spec.face_height),
                     orientation=ORIENT_H, brick_type=TYPE_STANDARD)
    return mesh, ann


def _placement_rect(p: Placement, pattern: WallPattern) -> Tuple[float, float,
                                                                 float, float]:
    pitch = pattern.cell_unit
    j = pattern.joint
    if p.kind == "V":
        x = p.col * pitch + j / 2.0
        y = (pattern.rows - p.row - p.span) * pitch + j / 2.0
        return (x, y, pitch - j, p.span * pitch - j)
    x = p.col * pitch + j / 2.0
    y = (pattern.rows - p.row - 1) * pitch + j / 2.0
    return (x, y, p.span * pitch - j, pitch - j)


def generate_wall(pattern: WallPattern, spec: BrickSpec, seed: int,
                  recess: float = DEFAULT_RECESS) -> WallModel:
    """Assemble a wall mesh plus exact annotations from a pattern.

    Brick fronts are coplanar at z = 0 before damage; a mortar slab covering
    the whole wall extent fronts at z = -recess.  Raises GridPitchError when
    the pattern pitch does not equal face_height + joint.
    """
    expected_pitch = spec.face_height + pattern.joint
    if abs(pattern.cell_unit - expected_pitch) > 1e-6:
        raise GridPitchError(
            f"pattern pitch {pattern.cell_unit} mm does not match "
            f"face_height + joint = {expected_pitch} mm")
    if recess < 0:
        raise ValueError("recess must be non-negative")

    width = pattern.cols * pattern.cell_unit
    height = pattern.rows * pattern.cell_unit
    slab, _ = subdivided_box((width, height, spec.depth), (1, 1, 1))
    meshes = [slab.translated((0.0, 0.0, -recess - spec.depth))]
    annotations: List[Annotation] = []

    for brick_id, p in enumerate(pattern.placements):
        rng = spawn(seed, brick_id)
        rect = _placement_rect(p, pattern)
        x, y, w, h = rect
        cx, cy = x + w / 2.0, y + h / 2.0
        if p.kind == "V":
            vspec = spec
            brick = _build_brick_mesh(vspec, rng, length=h, height=w,
                                      depth=spec.depth)
            brick = brick.rotated_z90()
            orientation = ORIENT_V
            brick_type = TYPE_STANDARD
        else:
            bspec = spec.long_variant() if p.kind == "L" else spec
            depth = spec.depth * (spec.long_depth_factor if p.kind == "L"
                                  else 1.0)
            brick = _build_brick_mesh(bspec, rng, length=w, height=h,
                                      depth=depth)
            orientation = ORIENT_H
            brick_type = TYPE_LONG if p.kind == "L" else TYPE_STANDARD
        meshes.append(brick.translated((cx, cy, 0.0)))
        annotations.append(Annotation(brick_id=brick_id, rect_mm=rect,
                                      orientation=orientation,
                                      brick_type=brick_type))

    wall = merge_meshes(meshes)
    return WallModel(mesh=wall, annotations=annotations, pattern=pattern,
                     spec=spec, seed=int(seed), recess=float(recess),
                     extent_mm=(width, height))
