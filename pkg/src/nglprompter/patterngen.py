"""Simplified 2D sewing patterns from GarmentCode-style parameters.

Block construction only: flat bodice blocks, trapezoid and annular-sector
skirts, stacked tiers, four-panel pants, sleeves with a cap solved to the
armhole length. Every seam joins two edges of equal arc length, so the
result can be checked with ``check_pattern`` and drawn with ``render_svg``.

Coordinates are centimetres, y pointing up, panels counter-clockwise.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from shapely.geometry import LinearRing

from .compiler import leaf_value
from .serialize import canonical_json, content_hash

Point = tuple[float, float]

CURVE_SEGMENTS = 64
EASE = {"fitted": 1.02, "regular": 1.08, "loose": 1.20}

# body proportions as fractions of waist_to_floor unless noted
TORSO = 0.42            # shoulder line to waist
THIGH_DROP = 0.35       # waist to mid-thigh
WAIST_TO_HIP = 0.20
CROTCH_DEPTH = 0.26
ARMHOLE_DEPTH = 0.45    # fraction of torso, from the shoulder line
BICEP = 0.34            # fraction of bust
MAX_ARC_PIECE = math.pi / 8


class PatternError(ValueError):
    pass


@dataclass(frozen=True)
class BodyMeasurements:
    bust: float = 90.0
    waist: float = 70.0
    hip: float = 96.0
    waist_to_floor: float = 100.0
    arm_length: float = 60.0
    shoulder_width: float = 40.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise PatternError(f"body measurement {name} must be positive, got {value}")

    @classmethod
    def from_json(cls, data: Mapping) -> "BodyMeasurements":
        return cls(**{k: float(v) for k, v in data.items()})

    @classmethod
    def load(cls, path: str | Path) -> "BodyMeasurements":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class Edge:
    start: int
    end: int
    control: Point | None = None

    def to_json(self) -> dict:
        out = {"endpoints": [self.start, self.end]}
        if self.control is not None:
            out["control"] = list(self.control)
        return out


@dataclass
class Panel:
    name: str
    vertices: list[Point]
    edges: list[Edge]
    translation: str
    tags: dict[str, int] = field(default_factory=dict, compare=False)

    def edge_points(self, i: int, segments: int = CURVE_SEGMENTS) -> list[Point]:
        e = self.edges[i]
        return curve_points(self.vertices[e.start], e.control, self.vertices[e.end], segments)

    def edge_length(self, i: int) -> float:
        return polyline_length(self.edge_points(i))

    def outline(self, segments: int = CURVE_SEGMENTS) -> list[Point]:
        pts = []
        for i in range(len(self.edges)):
            pts.extend(self.edge_points(i, segments)[:-1])
        return pts

    def signed_area(self) -> float:
        pts = self.outline()
        return 0.5 * sum(
            x0 * y1 - x1 * y0
            for (x0, y0), (x1, y1) in zip(pts, pts[1:] + pts[:1])
        )

    def edge(self, tag: str) -> int:
        return self.tags[tag]

    def bounds(self) -> tuple[float, float, float, float]:
        pts = self.outline(8)
        xs, ys = [p[0] for p in pts], [p[1] for p in pts]
        return min(xs), min(ys), max(xs), max(ys)

    def to_json(self) -> dict:
        return {
            "translation": self.translation,
            "vertices": [list(v) for v in self.vertices],
            "edges": [e.to_json() for e in self.edges],
        }


@dataclass(frozen=True)
class Stitch:
    a: tuple[str, int]
    b: tuple[str, int]

    def to_json(self) -> list:
        return [{"panel": self.a[0], "edge": self.a[1]}, {"panel": self.b[0], "edge": self.b[1]}]


@dataclass
class PatternDocument:
    panels: list[Panel] = field(default_factory=list)
    stitches: list[Stitch] = field(default_factory=list)
    units: str = "cm"
    provenance: str = ""

    def panel(self, name: str) -> Panel:
        for p in self.panels:
            if p.name == name:
                return p
        raise KeyError(name)

    @property
    def panel_names(self) -> list[str]:
        return [p.name for p in self.panels]

    def to_json(self) -> dict:
        return {
            "units": self.units,
            "provenance": self.provenance,
            "panels": {p.name: p.to_json() for p in self.panels},
            "panel_order": self.panel_names,
            "stitches": [s.to_json() for s in self.stitches],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "PatternDocument":
        panels = []
        for name in data.get("panel_order", sorted(data["panels"])):
            raw = data["panels"][name]
            edges = [
                Edge(e["endpoints"][0], e["endpoints"][1],
                     tuple(e["control"]) if "control" in e else None)
                for e in raw["edges"]
            ]
            panels.append(Panel(name, [tuple(v) for v in raw["vertices"]], edges, raw["translation"]))
        stitches = [
            Stitch((s[0]["panel"], s[0]["edge"]), (s[1]["panel"], s[1]["edge"]))
            for s in data.get("stitches", [])
        ]
        return cls(panels, stitches, data.get("units", "cm"), data.get("provenance", ""))


# -- geometry ---------------------------------------------------------------

def curve_points(p0: Point, control: Point | None, p1: Point, segments: int = CURVE_SEGMENTS) -> list[Point]:
    if control is None:
        return [p0, p1]
    out = []
    for k in range(segments + 1):
        t = k / segments
        u = 1 - t
        out.append((
            u * u * p0[0] + 2 * u * t * control[0] + t * t * p1[0],
            u * u * p0[1] + 2 * u * t * control[1] + t * t * p1[1],
        ))
    return out


def polyline_length(points: Sequence[Point]) -> float:
    return sum(math.dist(a, b) for a, b in zip(points, points[1:]))


def _mx(p: Point | None) -> Point | None:
    return None if p is None else (-p[0], p[1])


def _swap_side(tag: str) -> str:
    if tag.endswith("_r"):
        return tag[:-2] + "_l"
    if tag.endswith("_l"):
        return tag[:-2] + "_r"
    return tag


# A path segment: end point, optional quadratic control point, edge tag.
Seg = tuple[Point, "Point | None", str]


def panel_from_path(name: str, translation: str, start: Point, segs: Sequence[Seg]) -> Panel:
    """Closed panel from a start point and segments; the last segment returns to start."""
    if math.dist(segs[-1][0], start) > 1e-9:
        raise PatternError(f"{name}: path does not close")
    vertices = [start]
    edges, tags = [], {}
    for k, (end, control, tag) in enumerate(segs):
        if k == len(segs) - 1:
            edges.append(Edge(len(vertices) - 1, 0, control))
        else:
            vertices.append(end)
            edges.append(Edge(len(vertices) - 2, len(vertices) - 1, control))
        if tag:
            tags[tag] = len(edges) - 1
    return Panel(name, vertices, edges, translation, tags)


def symmetric_panel(name: str, translation: str, start: Point, right: Sequence[Seg]) -> Panel:
    """Panel symmetric about x = 0 from its right half.

    ``right`` runs from ``start`` (on the axis) around the right side and
    ends on the axis; tags get ``_r``/``_l`` suffixes.
    """
    points = [start] + [s[0] for s in right]
    segs = [(end, ctrl, tag + "_r") for end, ctrl, tag in right]
    for i in range(len(right), 0, -1):
        _, ctrl, tag = right[i - 1]
        segs.append((_mx(points[i - 1]), _mx(ctrl), tag + "_l"))
    segs[-1] = (start, segs[-1][1], segs[-1][2])
    return panel_from_path(name, translation, start, segs)


def mirror_panel(panel: Panel, name: str, translation: str) -> Panel:
    """Reflection about x = 0, re-ordered to stay counter-clockwise."""
    n = len(panel.vertices)
    vertices = [_mx(panel.vertices[(n - k) % n]) for k in range(n)]
    m = len(panel.edges)
    edges = []
    for j in range(m):
        e = panel.edges[m - 1 - j]
        edges.append(Edge((n - e.end) % n, (n - e.start) % n, _mx(e.control)))
    tags = {_swap_side(t): m - 1 - i for t, i in panel.tags.items()}
    return Panel(name, vertices, edges, translation, tags)


def arc_pieces(radius: float, theta0: float, theta1: float, pieces: int) -> list[tuple[Point, Point]]:
    """Quadratic pieces approximating a circular arc: (end point, control) each."""
    out = []
    step = (theta1 - theta0) / pieces
    for k in range(1, pieces + 1):
        a, b = theta0 + (k - 1) * step, theta0 + k * step
        mid = (a + b) / 2
        reach = radius / math.cos(step / 2)
        out.append((_snap((radius * math.cos(b), radius * math.sin(b))),
                    _snap((reach * math.cos(mid), reach * math.sin(mid)))))
    return out


def _snap(p: Point) -> Point:
    return tuple(0.0 if abs(c) < 1e-12 else c for c in p)


def _unit_arc_piece_length(step: float) -> float:
    (end, ctrl), = arc_pieces(1.0, 0.0, step, 1)
    return polyline_length(curve_points((1.0, 0.0), ctrl, end))


# -- body model -------------------------------------------------------------

@dataclass(frozen=True)
class Frame:
    """Body-derived lengths (cm) and an ease class."""

    body: BodyMeasurements
    ease: float

    @property
    def wtf(self) -> float:
        return self.body.waist_to_floor

    @property
    def torso(self) -> float:
        return TORSO * self.wtf

    @property
    def bust_level(self) -> float:
        # depth below the waist (negative: above)
        return -self.torso * (1 - ARMHOLE_DEPTH)

    def girth_at(self, depth: float) -> float:
        """Garment girth at ``depth`` cm below the waist. Waist itself carries no ease."""
        b = self.body
        hip_level = WAIST_TO_HIP * self.wtf
        bust, hip = b.bust * self.ease, b.hip * self.ease
        if depth <= self.bust_level:
            return bust
        if depth < 0:
            t = depth / self.bust_level
            return b.waist + t * (bust - b.waist)
        if depth < hip_level:
            return b.waist + depth / hip_level * (hip - b.waist)
        return hip


def _frame(params: Mapping, section: str, body: BodyMeasurements) -> Frame:
    fit = leaf_value(params, section, "fit", "regular")
    return Frame(body, EASE[fit])


# -- builders ---------------------------------------------------------------

@dataclass
class _Build:
    panels: list[Panel] = field(default_factory=list)
    stitches: list[tuple[tuple[str, str], tuple[str, str]]] = field(default_factory=list)

    def add(self, panel: Panel) -> Panel:
        self.panels.append(panel)
        return panel

    def stitch(self, a: Panel, a_tag: str, b: Panel, b_tag: str) -> None:
        self.stitches.append(((a.name, a_tag), (b.name, b_tag)))

    def document(self, provenance: str) -> PatternDocument:
        by_name = {p.name: p for p in self.panels}
        stitches = [
            Stitch((pa, by_name[pa].edge(ta)), (pb, by_name[pb].edge(tb)))
            for (pa, ta), (pb, tb) in self.stitches
        ]
        return PatternDocument(self.panels, stitches, "cm", provenance)


def _profile_segments(y: float, pieces: Sequence[float], outward: bool, tag: str) -> list[Seg]:
    """Straight pieces along y from the axis outwards (or back), tagged tag0.. from the axis."""
    xs = [0.0]
    for w in pieces:
        xs.append(xs[-1] + w)
    if outward:
        return [((xs[k + 1], y), None, f"{tag}{k}") for k in range(len(pieces))]
    return [((xs[k], y), None, f"{tag}{k}") for k in range(len(pieces) - 1, -1, -1)]


def _neck_half(tag_shape: str, nw: float, depth: float, top: float) -> list[Seg]:
    """Right half of a neckline from the shoulder-side neck point to the centre."""
    centre = (0.0, top - depth)
    if tag_shape == "v-neck":
        return [(centre, None, "neck")]
    if tag_shape == "square":
        return [((nw, top - depth), None, "neck_side"), (centre, None, "neck")]
    if tag_shape == "scoop":
        return [(centre, (nw, top - depth), "neck")]
    if tag_shape == "boat":
        return [(centre, (nw * 0.25, top - depth), "neck")]
    return [(centre, (nw / 2, top - depth), "neck")]


@dataclass(frozen=True)
class _Bodice:
    height: float
    hem_half: float
    chest_half: float
    underarm: float
    shoulder_x: float
    neck_half: float
    neck_depth: float


def _bodice_dims(params: Mapping, frame: Frame, attached: bool, back: bool) -> _Bodice:
    body = frame.body
    if attached:
        height = frame.torso + leaf_value(params, "shirt", "waist_drop", 0.0) * frame.wtf
    else:
        height = leaf_value(params, "shirt", "length") * (TORSO + THIGH_DROP) * frame.wtf
    armhole = ARMHOLE_DEPTH * frame.torso
    if leaf_value(params, "shirt", "armhole") == "deep-cut":
        armhole *= 1.3
    underarm = max(height - armhole, 0.2 * height)
    chest_half = body.bust * frame.ease / 4
    hem_half = frame.girth_at(height - frame.torso) / 4
    shoulder_x = min(body.shoulder_width / 2, chest_half * 0.95)
    neckline = leaf_value(params, "collar", "neckline", "crew")
    width = leaf_value(params, "collar", "width", 0.45)
    depth = leaf_value(params, "collar", "depth", 0.2)
    if neckline == "boat":
        width, depth = max(width, 0.6), depth * 0.5
    neck_half = min(width * body.shoulder_width / 2, shoulder_x - 2.0)
    neck_depth = 0.06 * frame.torso if back else depth * frame.torso
    neck_depth = min(neck_depth, 0.8 * (height - underarm) + 0.5 * underarm)
    return _Bodice(height, hem_half, chest_half, underarm, shoulder_x, neck_half, neck_depth)


def _bodice_right(params: Mapping, d: _Bodice, hem: Sequence[float] | None, back: bool) -> tuple[Point, list[Seg]]:
    """Start point and right-half path of a symmetric bodice block."""
    curved = hem is None and leaf_value(params, "shirt", "hem_shape") == "curved"
    if curved:
        drop = 0.06 * d.height
        start = (0.0, -drop)
        segs: list[Seg] = [((d.hem_half, 0.0), (d.hem_half / 2, -drop), "hem")]
    else:
        start = (0.0, 0.0)
        segs = _profile_segments(0.0, hem or [d.hem_half], True, "hem")
    segs.append(((d.chest_half, d.underarm), None, "side"))
    if leaf_value(params, "shirt", "strapless"):
        shape = "straight" if back else leaf_value(params, "collar", "neckline", "straight")
        if shape == "sweetheart":
            dip = 0.12 * (d.height - d.underarm)
            segs.append(((0.0, d.underarm - dip), (d.chest_half / 2, d.underarm + 2 * dip), "top"))
        else:
            segs.append(((0.0, d.underarm), None, "top"))
        return start, segs
    top = d.height
    control = (d.shoulder_x, d.underarm + 0.25 * (top - d.underarm))
    segs.append(((d.shoulder_x, top), control, "armhole"))
    segs.append(((d.neck_half, top), None, "shoulder"))
    shape = "crew" if back else leaf_value(params, "collar", "neckline", "crew")
    segs.extend(_neck_half(shape, d.neck_half, d.neck_depth, top))
    return start, segs


def _one_shoulder_panel(params: Mapping, d: _Bodice, hem: Sequence[float] | None, name: str, label: str) -> Panel:
    """Asymmetric bodice: strap on the left, diagonal neckline to the right underarm."""
    start, right = _bodice_right(params, d, hem, back=False)
    # keep hem and right side seam, replace the rest with the diagonal neckline
    keep = [s for s in right if s[2].startswith("hem")] + [((d.chest_half, d.underarm), None, "side")]
    segs = [(e, c, t + "_r") for e, c, t in keep]
    top = d.height
    segs.append(((-d.neck_half, top), (0.0, d.underarm + 0.35 * (top - d.underarm)), "neck"))
    segs.append(((-d.shoulder_x, top), None, "shoulder_l"))
    control = (-d.shoulder_x, d.underarm + 0.25 * (top - d.underarm))
    segs.append(((-d.chest_half, d.underarm), control, "armhole_l"))
    left_hem = [s for s in right if s[2].startswith("hem")]
    pts = [start] + [s[0] for s in left_hem]
    segs.append(((-d.hem_half, pts[-1][1]), None, "side_l"))
    for i in range(len(left_hem), 0, -1):
        segs.append((_mx(pts[i - 1]), _mx(left_hem[i - 1][1]), left_hem[i - 1][2] + "_l"))
    return panel_from_path(name, label, start, segs)


def _upper(build: _Build, params: Mapping, body: BodyMeasurements, hem: Sequence[float] | None, prefix: str = "") -> dict[str, Panel]:
    """Front/back bodice and sleeves; returns panels keyed by role."""
    frame = _frame(params, "shirt", body)
    attached = hem is not None
    front_d = _bodice_dims(params, frame, attached, back=False)
    back_d = _bodice_dims(params, frame, attached, back=True)
    if hem is not None and abs(sum(hem) - front_d.hem_half) > 1e-6 * front_d.hem_half:
        raise PatternError("bodice hem does not match the attached bottom")
    one_shoulder = leaf_value(params, "shirt", "one_shoulder")
    opening = leaf_value(params, "shirt", "front_opening", "closed")
    roles: dict[str, Panel] = {}

    if one_shoulder:
        front = build.add(_one_shoulder_panel(params, front_d, hem, prefix + "front", "front"))
        shaped = _one_shoulder_panel(params, back_d, hem, "tmp", "back")
        back = build.add(mirror_panel(shaped, prefix + "back", "back"))
        roles.update(front=front, back=back)
        build.stitch(front, "side_r", back, "side_l")
        build.stitch(front, "side_l", back, "side_r")
        build.stitch(front, "shoulder_l", back, "shoulder_r")
        armholes = [("l", "r")]
    else:
        start, right = _bodice_right(params, front_d, hem, back=False)
        if opening != "closed" and not attached:
            fr = build.add(panel_from_path(
                prefix + "front-right", "front", start,
                [(e, c, t + "_r") for e, c, t in right] + [(start, None, "centre_r")]))
            fl = build.add(mirror_panel(fr, prefix + "front-left", "front"))
            front_sides = [(fr, "r"), (fl, "l")]
            roles.update(front_right=fr, front_left=fl)
        else:
            front = build.add(symmetric_panel(prefix + "front", "front", start, right))
            front_sides = [(front, "r"), (front, "l")]
            roles.update(front=front)
        bstart, bright = _bodice_right(params, back_d, hem, back=True)
        back = build.add(symmetric_panel(prefix + "back", "back", bstart, bright))
        roles.update(back=back)
        for panel, side in front_sides:
            other = "l" if side == "r" else "r"
            build.stitch(panel, f"side_{side}", back, f"side_{other}")
            if not leaf_value(params, "shirt", "strapless"):
                build.stitch(panel, f"shoulder_{side}", back, f"shoulder_{other}")
        armholes = [] if leaf_value(params, "shirt", "strapless") else [("r", "l"), ("l", "r")]

    count = leaf_value(params, "sleeve", "count", 0)
    if leaf_value(params, "sleeve", "sleeveless", True):
        count = 0
    sleeves_on = armholes[:count]
    for side, back_side in sleeves_on:
        front_panel = roles.get("front") or roles["front_right" if side == "r" else "front_left"]
        arm_len = front_panel.edge_length(front_panel.edge(f"armhole_{side}"))
        sleeve = _sleeve(params, frame, arm_len)
        name = prefix + ("right-sleeve" if side == "r" else "left-sleeve")
        label = "right-sleeve" if side == "r" else "left-sleeve"
        panel = sleeve if side == "r" else mirror_panel(sleeve, name, label)
        panel.name, panel.translation = name, label
        build.add(panel)
        front_cap, back_cap = ("cap_l", "cap_r") if side == "r" else ("cap_r", "cap_l")
        build.stitch(front_panel, f"armhole_{side}", panel, front_cap)
        build.stitch(back, f"armhole_{back_side}", panel, back_cap)
        build.stitch(panel, "underarm_r", panel, "underarm_l")
        if leaf_value(params, "sleeve", "cuff"):
            cuff_h = leaf_value(params, "sleeve", "cuff_length") * body.arm_length
            hem_w = panel.edge_length(panel.edge("hem0_r"))
            cuff = build.add(_band(name + "-cuff", label, [hem_w], [hem_w], cuff_h))
            build.stitch(panel, "hem0_r", cuff, "top0_r")
            build.stitch(panel, "hem0_l", cuff, "top0_l")
            build.stitch(cuff, "side_r", cuff, "side_l")
    return roles


def _sleeve(params: Mapping, frame: Frame, armhole_len: float) -> Panel:
    body = frame.body
    length = leaf_value(params, "sleeve", "length") * body.arm_length
    volume = leaf_value(params, "sleeve", "volume", 1.0)
    bicep = min(BICEP * body.bust * frame.ease * volume / 2, 0.9 * armhole_len)
    hem = bicep * 0.6 * leaf_value(params, "sleeve", "opening", 1.1)

    def cap(height: float) -> tuple[Point, Point]:
        return (0.0, length + height), (bicep * 0.6, length + height)

    lo, hi = 0.0, 2.0 * armhole_len
    for _ in range(200):
        mid = (lo + hi) / 2
        end, ctrl = cap(mid)
        if polyline_length(curve_points((bicep, length), ctrl, end)) < armhole_len:
            lo = mid
        else:
            hi = mid
    end, ctrl = cap((lo + hi) / 2)
    right = [((hem, 0.0), None, "hem0"), ((bicep, length), None, "underarm"), (end, ctrl, "cap")]
    return symmetric_panel("sleeve", "right-sleeve", (0.0, 0.0), right)


def _band(name: str, label: str, top: Sequence[float], bottom: Sequence[float], height: float) -> Panel:
    """Rectangular band (waistband, cuff) split along top and bottom to match its seams."""
    if abs(sum(top) - sum(bottom)) > 1e-9 * max(sum(top), 1.0):
        raise PatternError(f"{name}: band top and bottom widths differ")
    right = _profile_segments(0.0, bottom, True, "bottom")
    right.append(((sum(bottom), height), None, "side"))
    right.extend(_profile_segments(height, top, False, "top"))
    return symmetric_panel(name, label, (0.0, 0.0), right)


def _waistband(build: _Build, params: Mapping, body: BodyMeasurements, profile: Sequence[float], prefix: str) -> tuple[Panel, Panel]:
    height = leaf_value(params, "waistband", "width") * body.waist_to_floor
    front = build.add(_band(prefix + "waistband-front", "front", profile, profile, height))
    back = build.add(_band(prefix + "waistband-back", "back", profile, profile, height))
    build.stitch(front, "side_r", back, "side_l")
    build.stitch(front, "side_l", back, "side_r")
    return front, back


def _attach(build: _Build, upper: Panel, upper_prefix: str, lower: Panel, lower_prefix: str, pieces: int, sides=("r", "l")) -> None:
    for side in sides:
        for k in range(pieces):
            build.stitch(upper, f"{upper_prefix}{k}_{side}", lower, f"{lower_prefix}{k}_{side}")


@dataclass
class _Bottom:
    front: list[Panel]
    back: list[Panel]
    profile: list[float]         # top-edge pieces of one half, from the axis out
    top_tag: str = "top"


def _trapezoid_right(top_half: float, hem_half: float, height: float, hem_curved: bool,
                     slit: float | None, top_profile: Sequence[float] | None = None) -> tuple[Point, list[Seg]]:
    if hem_curved:
        drop = 0.05 * height
        start = (0.0, -drop)
        segs: list[Seg] = [((hem_half, 0.0), (hem_half / 2, -drop), "hem")]
    else:
        start = (0.0, 0.0)
        segs = [((hem_half, 0.0), None, "hem")]
    if slit:
        t = slit
        segs.append(((hem_half + t * (top_half - hem_half), t * height), None, "slit"))
    segs.append(((top_half, height), None, "side"))
    segs.extend(_profile_segments(height, top_profile or [top_half], False, "top"))
    return start, segs


def _split_centre(build: _Build, name: str, label: str, start: Point, right: list[Seg], slit_height: float) -> tuple[Panel, Panel]:
    """Two halves joined by a centre seam that stays open over the slit."""
    segs = [(e, c, t + "_r") for e, c, t in right]
    segs.append(((0.0, start[1] + slit_height), None, "centre_r"))
    segs.append((start, None, "centre_slit_r"))
    r = build.add(panel_from_path(name + "-right", label, start, segs))
    l = build.add(mirror_panel(r, name + "-left", label))
    build.stitch(r, "centre_r", l, "centre_l")
    return r, l


def _skirt_pair(build: _Build, params: Mapping, section: str, frame: Frame, top_drop: float,
                length: float, prefix: str, tier: str = "") -> _Bottom:
    """Front/back skirt panels for the trapezoid family (straight, a-line, pencil)."""
    top_half = frame.girth_at(top_drop) / 4
    hem_girth = frame.girth_at(top_drop + length) / 4
    if section == "pencil-skirt":
        hem_half = max(hem_girth * leaf_value(params, section, "taper", 0.9), top_half * 0.8)
    else:
        hem_half = max(hem_girth, top_half) * leaf_value(params, section, "flare", 1.0)
    return _sided_pair(build, params, section, prefix + tier, top_half, hem_half, length, [top_half])


def _sided_pair(build: _Build, params: Mapping, section: str, name: str, top_half: float,
                hem_half: float, length: float, profile: list[float]) -> _Bottom:
    curved = leaf_value(params, section, "hem_shape") == "curved"
    slit = leaf_value(params, section, "slit", False)
    position = leaf_value(params, section, "slit_position")
    depth = leaf_value(params, section, "slit_depth", 0.4)
    panels = {}
    for role in ("front", "back"):
        side_slit = depth if slit and position == "side" else None
        start, right = _trapezoid_right(top_half, hem_half, length, curved, side_slit, profile)
        if slit and position == role:
            panels[role] = list(_split_centre(build, name + role, role, start, right, depth * length))
        else:
            panels[role] = [build.add(symmetric_panel(name + role, role, start, right))]
    _join_sides(build, panels["front"], panels["back"])
    return _Bottom(panels["front"], panels["back"], profile)


def _join_sides(build: _Build, front: list[Panel], back: list[Panel]) -> None:
    fr, fl = front[0], front[-1]
    br, bl = back[0], back[-1]
    build.stitch(fr, "side_r", bl, "side_l")
    build.stitch(fl, "side_l", br, "side_r")


def _sector_pair(build: _Build, params: Mapping, section: str, frame: Frame, top_drop: float,
                 length: float, prefix: str) -> _Bottom:
    """Flared and circle skirts: two annular sectors whose inner arcs add up to the top girth."""
    girth = frame.girth_at(top_drop)
    total_angle = 2 * math.pi * leaf_value(params, section, "suns", 0.5)
    half = total_angle / 4
    pieces = max(1, math.ceil(half / MAX_ARC_PIECE - 1e-9))
    step = half / pieces
    inner = girth / (4 * pieces * _unit_arc_piece_length(step))
    outer = inner + length
    base = -math.pi / 2
    curved = leaf_value(params, section, "hem_shape") == "curved"
    slit = leaf_value(params, section, "slit", False)
    position = leaf_value(params, section, "slit_position")
    depth = leaf_value(params, section, "slit_depth", 0.4)

    def right_half(role: str) -> tuple[Point, list[Seg]]:
        hem_r = outer
        start = (0.0, -hem_r)
        segs: list[Seg] = []
        for k, (end, ctrl) in enumerate(arc_pieces(hem_r, base, base + half, pieces)):
            if curved:
                # bulge the hem outwards between the piece ends
                ctrl = (ctrl[0] * 1.03, ctrl[1] * 1.03)
            segs.append((end, ctrl, f"hem{k}"))
        a = base + half
        if slit and position == "side":
            rs = hem_r - depth * (hem_r - inner)
            segs.append(((rs * math.cos(a), rs * math.sin(a)), None, "slit"))
        segs.append(((inner * math.cos(a), inner * math.sin(a)), None, "side"))
        back_arc = arc_pieces(inner, base + half, base, pieces)
        for k, (end, ctrl) in enumerate(back_arc):
            segs.append((end, ctrl, f"top{pieces - 1 - k}"))
        return start, segs

    panels = {}
    for role in ("front", "back"):
        start, right = right_half(role)
        if slit and position == role:
            panels[role] = list(_split_centre(build, prefix + role, role, start, right,
                                              depth * (-start[1] - inner)))
        else:
            panels[role] = [build.add(symmetric_panel(prefix + role, role, start, right))]
    _join_sides(build, panels["front"], panels["back"])
    return _Bottom(panels["front"], panels["back"], [girth / (4 * pieces)] * pieces)


def _levels(build: _Build, params: Mapping, section: str, frame: Frame, top_drop: float,
            length: float, prefix: str) -> _Bottom:
    """Tiered skirt: stacked trapezoid tiers, each wider than the one above."""
    tiers = leaf_value(params, "levels-skirt", "tier_count", 2)
    base = leaf_value(params, "levels-skirt", "base", "straight")
    flare = {"pencil": 1.0, "straight": 1.0, "a-line": 1.15, "flared": 1.3, "circle": 1.45}[base]
    tier_len = length / tiers
    top_half = frame.girth_at(top_drop) / 4
    first = None
    above = None
    for i in range(tiers):
        hem_half = max(frame.girth_at(top_drop + (i + 1) * tier_len) / 4, top_half) * flare
        name = f"{prefix}tier{i + 1}-"
        pair = _Bottom([], [], [top_half])
        for role in ("front", "back"):
            start, right = _trapezoid_right(top_half, hem_half, tier_len,
                                            i == tiers - 1 and leaf_value(params, section, "hem_shape") == "curved",
                                            None)
            getattr(pair, role).append(build.add(symmetric_panel(name + role, role, start, right)))
        _join_sides(build, pair.front, pair.back)
        if above is not None:
            for a, b in ((above.front[0], pair.front[0]), (above.back[0], pair.back[0])):
                build.stitch(a, "hem_r", b, "top0_r")
                build.stitch(a, "hem_l", b, "top0_l")
        first = first or pair
        above = pair
        top_half = hem_half
    return first


def _pants(build: _Build, params: Mapping, frame: Frame, top_drop: float, prefix: str) -> _Bottom:
    wtf = frame.wtf
    height = leaf_value(params, "pants", "length") * wtf - top_drop
    crotch = max(CROTCH_DEPTH * wtf - top_drop, 0.05 * wtf)
    hip_depth = max(WAIST_TO_HIP * wtf - top_drop, 0.02 * wtf)
    crotch_y = height - crotch
    hip_y = max(height - hip_depth, crotch_y + 0.01 * wtf)
    if crotch_y <= 0:
        raise PatternError("pants shorter than the crotch depth")
    q = frame.girth_at(WAIST_TO_HIP * wtf) / 4 * leaf_value(params, "pants", "hip_width", 1.0)
    waist_q = frame.girth_at(top_drop) / 4
    ext = 0.08 * frame.body.hip
    leg = q + ext
    hem_w = min(leg * 0.55 * leaf_value(params, "pants", "leg_flare", 1.0), leg * 1.2)
    centre = (q - ext) / 2
    v0 = (centre - hem_w / 2, 0.0)
    segs: list[Seg] = [
        ((centre + hem_w / 2, 0.0), None, "hem0_r"),
        ((q, hip_y), None, "outseam_lower"),
        ((waist_q, height), None, "outseam_upper"),
        ((0.0, height), None, "top0_r"),
        ((0.0, crotch_y + 0.35 * crotch), None, "centre"),
        ((-ext, crotch_y), (0.0, crotch_y), "crotch"),
        (v0, None, "inseam"),
    ]
    fr = build.add(panel_from_path(prefix + "front-right", "front", v0, segs))
    fl = build.add(mirror_panel(fr, prefix + "front-left", "front"))
    br = build.add(panel_from_path(prefix + "back-right", "back", v0, segs))
    bl = build.add(mirror_panel(br, prefix + "back-left", "back"))
    for left, right in ((fl, fr), (bl, br)):
        build.stitch(right, "crotch", left, "crotch")
        build.stitch(right, "centre", left, "centre")
    for f, b in ((fr, br), (fl, bl)):
        build.stitch(f, "outseam_lower", b, "outseam_lower")
        build.stitch(f, "outseam_upper", b, "outseam_upper")
        build.stitch(f, "inseam", b, "inseam")
    if leaf_value(params, "pants", "cuffed"):
        cuff_h = 0.04 * wtf
        for p in (fr, fl, br, bl):
            hem_tag = "hem0_r" if "hem0_r" in p.tags else "hem0_l"
            cuff = build.add(_rect(p.name + "-cuff", p.translation, p.edge_length(p.edge(hem_tag)), cuff_h))
            build.stitch(p, hem_tag, cuff, "top")
            build.stitch(cuff, "side_r", cuff, "side_l")
    return _Bottom([fr, fl], [br, bl], [waist_q], "top")


def _rect(name: str, label: str, width: float, height: float) -> Panel:
    w = width / 2
    segs = [((w, 0.0), None, "bottom"), ((w, height), None, "side_r"),
            ((-w, height), None, "top"), ((-w, 0.0), None, "side_l")]
    return panel_from_path(name, label, (-w, 0.0), segs)


def _bottom(build: _Build, params: Mapping, body: BodyMeasurements, prefix: str) -> _Bottom:
    tag = params["meta"]["bottom"]["v"]
    if tag == "pants":
        section = "pants"
    elif tag == "levels":
        section = next((s for s in ("skirt", "pencil-skirt", "flare-skirt") if s in params["design"]), None)
    else:
        section = {"pencil": "pencil-skirt", "straight": "skirt", "a-line": "skirt",
                   "flared": "flare-skirt", "circle": "flare-skirt"}.get(tag)
        if section is None:
            raise PatternError(f"unsupported bottom component {tag!r}")
    if section not in params["design"]:
        raise PatternError(f"bottom component {tag!r} has no {section} section")
    frame = _frame(params, section, body)
    if params["meta"]["upper"]["v"]:
        # joined to a bodice: the bottom starts where the bodice ends
        top_drop = leaf_value(params, "shirt", "waist_drop", 0.0) * body.waist_to_floor
    else:
        top_drop = (1.0 - leaf_value(params, section, "rise", 1.0)) * WAIST_TO_HIP * body.waist_to_floor
    if tag == "pants":
        return _pants(build, params, frame, top_drop, prefix)
    length = leaf_value(params, section, "length") * body.waist_to_floor
    if tag == "levels":
        return _levels(build, params, section, frame, top_drop, length, prefix + "skirt-")
    if section == "flare-skirt":
        return _sector_pair(build, params, section, frame, top_drop, length, prefix + "skirt-")
    return _skirt_pair(build, params, section, frame, top_drop, length, prefix + "skirt-")


def _attach_bottom(build: _Build, upper_front: list[Panel], upper_back: Panel, upper_tag: str,
                   bottom: _Bottom) -> None:
    pieces = len(bottom.profile)
    fronts = bottom.front
    if len(fronts) == 1:
        _attach(build, upper_front[0], upper_tag, fronts[0], bottom.top_tag, pieces)
    else:
        _attach(build, upper_front[0], upper_tag, fronts[0], bottom.top_tag, pieces, ("r",))
        _attach(build, upper_front[-1], upper_tag, fronts[-1], bottom.top_tag, pieces, ("l",))
    backs = bottom.back
    if len(backs) == 1:
        _attach(build, upper_back, upper_tag, backs[0], bottom.top_tag, pieces)
    else:
        _attach(build, upper_back, upper_tag, backs[0], bottom.top_tag, pieces, ("r",))
        _attach(build, upper_back, upper_tag, backs[-1], bottom.top_tag, pieces, ("l",))


def generate_pattern(params: Mapping, body: BodyMeasurements | None = None, prefix: str = "") -> PatternDocument:
    """Panels and stitches for one garment layer."""
    body = body or BodyMeasurements()
    meta = params["meta"]
    upper, bottom_tag = meta["upper"]["v"], meta["bottom"]["v"]
    waistband = meta["waistband"]["v"]
    if upper is None and bottom_tag is None:
        raise PatternError("parameters select neither an upper nor a bottom component")
    if upper is not None and upper not in ("shirt", "fitted-shirt"):
        raise PatternError(f"unsupported upper component {upper!r}")
    if waistband and bottom_tag is None:
        raise PatternError("a waistband needs a bottom component")

    build = _Build()
    bottom = _bottom(build, params, body, prefix) if bottom_tag else None
    wb = None
    if waistband:
        wb = _waistband(build, params, body, bottom.profile, prefix)
        _attach_bottom(build, [wb[0]], wb[1], "bottom", bottom)
    if upper:
        roles = _upper(build, params, body, bottom.profile if bottom else None, prefix)
        if bottom:
            front = [roles["front"]] if "front" in roles else [roles["front_right"], roles["front_left"]]
            if wb:
                _attach(build, front[0], "hem", wb[0], "top", len(bottom.profile))
                _attach(build, roles["back"], "hem", wb[1], "top", len(bottom.profile))
            else:
                _attach_bottom(build, front, roles["back"], "hem", bottom)
    return build.document(content_hash(params))


# -- verification -----------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    kind: str
    where: str
    message: str
    value: float | None = None


def _segments_intersect(outline: list[Point]) -> bool:
    if len(outline) < 3:
        return True
    return not LinearRing(outline).is_simple


def check_pattern(doc: PatternDocument, seam_tolerance: float = 0.01) -> list[Violation]:
    out: list[Violation] = []
    names = [p.name for p in doc.panels]
    for name in sorted({n for n in names if names.count(n) > 1}):
        out.append(Violation("duplicate-panel", name, f"panel name {name} used more than once"))
    panels = {p.name: p for p in doc.panels}
    for p in doc.panels:
        n = len(p.vertices)
        if n < 3:
            out.append(Violation("too-few-vertices", p.name, f"{n} vertices", n))
            continue
        bad = [i for i, e in enumerate(p.edges)
               if not (0 <= e.start < n and 0 <= e.end < n)]
        if bad:
            out.append(Violation("bad-edge", p.name, f"edges {bad} reference missing vertices"))
            continue
        chain = all(p.edges[i].end == p.edges[(i + 1) % len(p.edges)].start for i in range(len(p.edges)))
        starts = sorted(e.start for e in p.edges)
        if not chain or starts != list(range(n)):
            out.append(Violation("open-chain", p.name, "edges do not form one closed loop over all vertices"))
            continue
        area = p.signed_area()
        if area <= 0:
            out.append(Violation("orientation", p.name, f"signed area {area:.4g} is not positive", area))
        if _segments_intersect(p.outline()):
            out.append(Violation("self-intersection", p.name, "outline crosses itself"))

    used: dict[tuple[str, int], int] = {}
    for k, s in enumerate(doc.stitches):
        lengths = []
        for ref in (s.a, s.b):
            panel = panels.get(ref[0])
            if panel is None or not 0 <= ref[1] < len(panel.edges):
                out.append(Violation("dangling-stitch", f"stitch {k}", f"{ref} does not exist"))
                break
            if ref in used:
                out.append(Violation("edge-reused", f"{ref[0]}:{ref[1]}",
                                     f"edge in stitches {used[ref]} and {k}"))
            used[ref] = k
            lengths.append(panel.edge_length(ref[1]))
        else:
            mismatch = abs(lengths[0] - lengths[1]) / max(lengths)
            if mismatch > seam_tolerance:
                out.append(Violation(
                    "seam-mismatch", f"stitch {k}",
                    f"edge lengths {lengths[0]:.4g} and {lengths[1]:.4g} differ by {mismatch:.2%}",
                    mismatch,
                ))
    return out


def seam_mismatches(doc: PatternDocument) -> list[float]:
    panels = {p.name: p for p in doc.panels}
    out = []
    for s in doc.stitches:
        la = panels[s.a[0]].edge_length(s.a[1])
        lb = panels[s.b[0]].edge_length(s.b[1])
        out.append(abs(la - lb) / max(la, lb))
    return out


def merge_patterns(docs: Sequence[PatternDocument], prefixes: Sequence[str]) -> PatternDocument:
    panels, stitches = [], []
    for doc, pre in zip(docs, prefixes):
        for p in doc.panels:
            panels.append(Panel(pre + p.name, p.vertices, p.edges, p.translation, p.tags))
        stitches.extend(Stitch((pre + s.a[0], s.a[1]), (pre + s.b[0], s.b[1])) for s in doc.stitches)
    return PatternDocument(panels, stitches, "cm", content_hash([d.provenance for d in docs]))


# -- SVG --------------------------------------------------------------------

def _num(x: float) -> str:
    s = f"{x:.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def render_svg(doc: PatternDocument, gap: float = 5.0) -> str:
    """SVG 1.1, millimetre user units, one group per panel laid out in a row."""
    stitch_of: dict[tuple[str, int], str] = {}
    for k, s in enumerate(doc.stitches):
        stitch_of[s.a] = f"s{k}"
        stitch_of[s.b] = f"s{k}"
    placed = []
    cursor = 0.0
    top = bottom = 0.0
    for p in doc.panels:
        x0, y0, x1, y1 = p.bounds()
        placed.append((p, cursor - x0))
        cursor += (x1 - x0) + gap
        top, bottom = max(top, y1), min(bottom, y0)
    width = max(cursor - gap, 0.0) * 10 if doc.panels else 10.0
    height = (top - bottom) * 10 if doc.panels else 10.0

    def pt(x: float, y: float, dx: float) -> str:
        return f"{_num((x + dx) * 10)} {_num((top - y) * 10)}"

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_num(width)}mm" height="{_num(height)}mm" viewBox="0 0 {_num(width)} {_num(height)}">',
    ]
    for p, dx in placed:
        v = p.vertices
        d = [f"M {pt(*v[p.edges[0].start], dx)}"]
        for e in p.edges:
            if e.control is None:
                d.append(f"L {pt(*v[e.end], dx)}")
            else:
                d.append(f"Q {pt(*e.control, dx)} {pt(*v[e.end], dx)}")
        d.append("Z")
        lines.append(f'  <g id="{p.name}" class="panel" data-translation="{p.translation}">')
        lines.append(f'    <path d="{" ".join(d)}" fill="none" stroke="black" stroke-width="1"/>')
        for i, e in enumerate(p.edges):
            sid = stitch_of.get((p.name, i))
            if sid is None:
                continue
            seg = f"M {pt(*v[e.start], dx)} " + (
                f"L {pt(*v[e.end], dx)}" if e.control is None
                else f"Q {pt(*e.control, dx)} {pt(*v[e.end], dx)}")
            lines.append(f'    <path class="stitch" data-stitch="{sid}" data-edge="{i}" d="{seg}" '
                         f'fill="none" stroke="red" stroke-width="2" stroke-dasharray="6 4"/>')
        lines.append("  </g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def pattern_json(doc: PatternDocument) -> str:
    return canonical_json(doc.to_json())
