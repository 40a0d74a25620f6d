"""Planar rigid-body math, convex shapes and contact queries.

Everything here works on plain Python floats: the physics models call these
functions thousands of times per control step, and tiny numpy arrays would
dominate the runtime.
"""
from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass
from typing import NamedTuple, Sequence

TWO_PI = 2.0 * math.pi

# C_free membership tolerance (m).
PENETRATION_TOL = 1e-6

# Characteristic length turning an angle into a commensurable distance (m).
DEFAULT_CHAR_LENGTH = 0.04


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = math.remainder(theta, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    return a


def angle_diff(a: float, b: float) -> float:
    """Shortest signed arc from b to a."""
    return normalize_angle(a - b)


class SE2Pose(namedtuple("_SE2Pose", "x y theta")):
    """Planar pose. ``theta`` is always stored in (-pi, pi]."""

    __slots__ = ()

    def __new__(cls, x: float = 0.0, y: float = 0.0, theta: float = 0.0):
        return super().__new__(cls, float(x), float(y), normalize_angle(float(theta)))

    def __matmul__(self, other: "SE2Pose") -> "SE2Pose":
        return se2_compose(self, other)

    def inverse(self) -> "SE2Pose":
        return se2_inverse(self)

    def transform_point(self, px: float, py: float) -> tuple[float, float]:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return self.x + c * px - s * py, self.y + s * px + c * py

    def as_matrix(self):
        import numpy as np

        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s, self.x], [s, c, self.y], [0.0, 0.0, 1.0]])


IDENTITY = SE2Pose(0.0, 0.0, 0.0)


class Twist2(NamedTuple):
    """Planar velocity (vx, vy, omega) expressed in the world frame."""

    vx: float = 0.0
    vy: float = 0.0
    omega: float = 0.0

    def scaled(self, k: float) -> "Twist2":
        return Twist2(self.vx * k, self.vy * k, self.omega * k)


ZERO_TWIST = Twist2(0.0, 0.0, 0.0)


def se2_compose(a: SE2Pose, b: SE2Pose) -> SE2Pose:
    """Return ``a ∘ b``: apply ``b`` in the frame of ``a``."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    return SE2Pose(a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, a.theta + b.theta)


def se2_inverse(a: SE2Pose) -> SE2Pose:
    c, s = math.cos(a.theta), math.sin(a.theta)
    return SE2Pose(-(c * a.x + s * a.y), s * a.x - c * a.y, -a.theta)


ENTITY_CLASSES = ("robot", "movable", "obstacle", "table_bound")


@dataclass(frozen=True)
class ConvexShape:
    """A box (half extents along its local x/y axes) or a disc."""

    kind: str
    half_w: float = 0.0
    half_h: float = 0.0
    radius: float = 0.0
    entity_class: str = "movable"

    def __post_init__(self):
        if self.kind == "box":
            if not (self.half_w > 0.0 and self.half_h > 0.0):
                raise ValueError(f"box extents must be positive, got {self.half_w}, {self.half_h}")
        elif self.kind == "disc":
            if not self.radius > 0.0:
                raise ValueError(f"disc radius must be positive, got {self.radius}")
        else:
            raise ValueError(f"unknown shape kind {self.kind!r}")
        if self.entity_class not in ENTITY_CLASSES:
            raise ValueError(f"unknown entity class {self.entity_class!r}")

    @classmethod
    def box(cls, half_w: float, half_h: float, entity_class: str = "movable") -> "ConvexShape":
        return cls("box", half_w=half_w, half_h=half_h, entity_class=entity_class)

    @classmethod
    def disc(cls, radius: float, entity_class: str = "movable") -> "ConvexShape":
        return cls("disc", radius=radius, entity_class=entity_class)

    @property
    def bounding_radius(self) -> float:
        if self.kind == "box":
            return math.hypot(self.half_w, self.half_h)
        return self.radius

    @property
    def area(self) -> float:
        if self.kind == "box":
            return 4.0 * self.half_w * self.half_h
        return math.pi * self.radius**2

    def inertia_per_mass(self) -> float:
        """Polar moment of inertia about the centroid divided by mass."""
        if self.kind == "box":
            return (self.half_w**2 + self.half_h**2) / 3.0
        return 0.5 * self.radius**2


class ContactPoint(NamedTuple):
    position: tuple[float, float]
    normal: tuple[float, float]
    penetration: float
    # Signed gap along the normal; negative when overlapping.
    separation: float = 0.0


class ContactManifold(NamedTuple):
    points: tuple[ContactPoint, ...]
    pair: tuple[int, int]

    @property
    def normal(self) -> tuple[float, float]:
        return self.points[0].normal

    @property
    def max_penetration(self) -> float:
        return max(p.penetration for p in self.points)

    def deepest(self) -> ContactPoint:
        return max(self.points, key=lambda p: p.penetration)


def contact_query(
    shape_a: ConvexShape,
    pose_a: SE2Pose,
    shape_b: ConvexShape,
    pose_b: SE2Pose,
    margin: float = 0.0,
    pair: tuple[int, int] = (0, 1),
) -> ContactManifold | None:
    """Contact manifold between two convex shapes, or None when separated.

    The normal points from ``a`` to ``b``. Touching shapes (separation exactly
    zero) produce a manifold with zero penetration; ``margin`` widens the
    reported region to shapes closer than ``margin`` (speculative contacts).
    """
    dx = pose_b.x - pose_a.x
    dy = pose_b.y - pose_a.y
    reach = shape_a.bounding_radius + shape_b.bounding_radius + margin
    if dx * dx + dy * dy > reach * reach:
        return None
    ka, kb = shape_a.kind, shape_b.kind
    if ka == "box" and kb == "box":
        pts = _box_box(shape_a, pose_a, shape_b, pose_b, margin)
    elif ka == "disc" and kb == "disc":
        pts = _disc_disc(shape_a, pose_a, shape_b, pose_b, margin)
    elif ka == "box":
        pts = _box_disc(shape_a, pose_a, shape_b, pose_b, margin, flip=False)
    else:
        pts = _box_disc(shape_b, pose_b, shape_a, pose_a, margin, flip=True)
    if not pts:
        return None
    return ContactManifold(tuple(pts), pair)


def overlaps(shape_a: ConvexShape, pose_a: SE2Pose, shape_b: ConvexShape, pose_b: SE2Pose) -> bool:
    m = contact_query(shape_a, pose_a, shape_b, pose_b)
    return m is not None and m.max_penetration > 0.0


def penetration_depth(shape_a: ConvexShape, pose_a: SE2Pose, shape_b: ConvexShape, pose_b: SE2Pose) -> float:
    m = contact_query(shape_a, pose_a, shape_b, pose_b)
    return 0.0 if m is None else m.max_penetration


def _disc_disc(a, pa, b, pb, margin):
    dx, dy = pb.x - pa.x, pb.y - pa.y
    dist = math.hypot(dx, dy)
    sep = dist - a.radius - b.radius
    if sep > margin:
        return None
    if dist > 1e-12:
        nx, ny = dx / dist, dy / dist
    else:
        nx, ny = 1.0, 0.0
    px = pa.x + nx * a.radius
    py = pa.y + ny * a.radius
    return [ContactPoint((px, py), (nx, ny), max(0.0, -sep), sep)]


def _box_disc(box, pbox, disc, pdisc, margin, flip):
    c, s = math.cos(pbox.theta), math.sin(pbox.theta)
    rx, ry = pdisc.x - pbox.x, pdisc.y - pbox.y
    lx = c * rx + s * ry
    ly = -s * rx + c * ry
    w, h, r = box.half_w, box.half_h, disc.radius
    if abs(lx) <= w and abs(ly) <= h:
        ex, ey = w - abs(lx), h - abs(ly)
        if ex <= ey:
            nlx, nly = (1.0 if lx >= 0 else -1.0), 0.0
            qx, qy = nlx * w, ly
            pen = ex + r
            sep = -pen
        else:
            nlx, nly = 0.0, (1.0 if ly >= 0 else -1.0)
            qx, qy = lx, nly * h
            pen = ey + r
            sep = -pen
    else:
        qx = min(max(lx, -w), w)
        qy = min(max(ly, -h), h)
        ddx, ddy = lx - qx, ly - qy
        dist = math.hypot(ddx, ddy)
        sep = dist - r
        if sep > margin:
            return None
        nlx, nly = ddx / dist, ddy / dist
        pen = max(0.0, -sep)
    nx = c * nlx - s * nly
    ny = s * nlx + c * nly
    px = pbox.x + c * qx - s * qy
    py = pbox.y + s * qx + c * qy
    if flip:
        nx, ny = -nx, -ny
    return [ContactPoint((px, py), (nx, ny), pen, sep)]


def _box_axes(pose):
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    return (c, s), (-s, c)


def _box_box(a, pa, b, pb, margin):
    ua, va = _box_axes(pa)
    ub, vb = _box_axes(pb)
    dx, dy = pb.x - pa.x, pb.y - pa.y

    uaub = abs(ua[0] * ub[0] + ua[1] * ub[1])
    uavb = abs(ua[0] * vb[0] + ua[1] * vb[1])
    vaub = abs(va[0] * ub[0] + va[1] * ub[1])
    vavb = abs(va[0] * vb[0] + va[1] * vb[1])

    da_u = dx * ua[0] + dy * ua[1]
    da_v = dx * va[0] + dy * va[1]
    db_u = dx * ub[0] + dy * ub[1]
    db_v = dx * vb[0] + dy * vb[1]

    s_au = abs(da_u) - a.half_w - (b.half_w * uaub + b.half_h * uavb)
    if s_au > margin:
        return None
    s_av = abs(da_v) - a.half_h - (b.half_w * vaub + b.half_h * vavb)
    if s_av > margin:
        return None
    s_bu = abs(db_u) - b.half_w - (a.half_w * uaub + a.half_h * vaub)
    if s_bu > margin:
        return None
    s_bv = abs(db_v) - b.half_h - (a.half_w * uavb + a.half_h * vavb)
    if s_bv > margin:
        return None

    # Reference face selection, biased toward A for temporal coherence.
    if s_au >= s_av:
        sep_a, axis_a, ext_n_a, ext_t_a, sign_a = s_au, ua, a.half_w, a.half_h, (1.0 if da_u >= 0 else -1.0)
    else:
        sep_a, axis_a, ext_n_a, ext_t_a, sign_a = s_av, va, a.half_h, a.half_w, (1.0 if da_v >= 0 else -1.0)
    if s_bu >= s_bv:
        sep_b, axis_b, ext_n_b, ext_t_b, sign_b = s_bu, ub, b.half_w, b.half_h, (-1.0 if db_u >= 0 else 1.0)
    else:
        sep_b, axis_b, ext_n_b, ext_t_b, sign_b = s_bv, vb, b.half_h, b.half_w, (-1.0 if db_v >= 0 else 1.0)

    if sep_b > 0.95 * sep_a + 0.01 * min(b.half_w, b.half_h):
        ref_pose, inc, inc_pose = pb, a, pa
        nrx, nry = axis_b[0] * sign_b, axis_b[1] * sign_b
        ext_n, ext_t = ext_n_b, ext_t_b
        flip = True
    else:
        ref_pose, inc, inc_pose = pa, b, pb
        nrx, nry = axis_a[0] * sign_a, axis_a[1] * sign_a
        ext_n, ext_t = ext_n_a, ext_t_a
        flip = False

    # Incident face: the face of the incident box most anti-parallel to n_ref.
    iu, iv = _box_axes(inc_pose)
    du = iu[0] * nrx + iu[1] * nry
    dv = iv[0] * nrx + iv[1] * nry
    if abs(du) >= abs(dv):
        sgn = -1.0 if du > 0 else 1.0
        fnx, fny = iu[0] * sgn, iu[1] * sgn
        cx = inc_pose.x + fnx * inc.half_w
        cy = inc_pose.y + fny * inc.half_w
        tx, ty, half = iv[0], iv[1], inc.half_h
    else:
        sgn = -1.0 if dv > 0 else 1.0
        fnx, fny = iv[0] * sgn, iv[1] * sgn
        cx = inc_pose.x + fnx * inc.half_h
        cy = inc_pose.y + fny * inc.half_h
        tx, ty, half = iu[0], iu[1], inc.half_w
    p1x, p1y = cx + tx * half, cy + ty * half
    p2x, p2y = cx - tx * half, cy - ty * half

    # Clip the incident segment against the reference face's side planes.
    rtx, rty = -nry, nrx
    t1 = (p1x - ref_pose.x) * rtx + (p1y - ref_pose.y) * rty
    t2 = (p2x - ref_pose.x) * rtx + (p2y - ref_pose.y) * rty
    seg = [(p1x, p1y, t1), (p2x, p2y, t2)]
    for bound, sense in ((ext_t, 1.0), (ext_t, -1.0)):
        (qx, qy, qt), (rx, ry, rt) = seg
        dq = sense * qt - bound
        dr = sense * rt - bound
        if dq > 0 and dr > 0:
            return None
        if dq > 0 or dr > 0:
            k = dq / (dq - dr)
            ix = qx + k * (rx - qx)
            iy = qy + k * (ry - qy)
            it = qt + k * (rt - qt)
            if dq > 0:
                seg = [(ix, iy, it), (rx, ry, rt)]
            else:
                seg = [(qx, qy, qt), (ix, iy, it)]

    nx, ny = (-nrx, -nry) if flip else (nrx, nry)
    pts = []
    for px, py, _ in seg:
        sep = (px - ref_pose.x) * nrx + (py - ref_pose.y) * nry - ext_n
        if sep <= margin:
            pts.append(ContactPoint((px, py), (nx, ny), max(0.0, -sep), sep))
    return pts


def cstate_distance(
    q1: Sequence[SE2Pose],
    q2: Sequence[SE2Pose],
    weights: Sequence[float],
    char_length: float = DEFAULT_CHAR_LENGTH,
) -> float:
    """Weighted product-space distance between two C-states.

    Each entity contributes ``w * (|dp| + char_length * |dtheta|)`` with the
    angle measured along the shortest arc.
    """
    if not (len(q1) == len(q2) == len(weights)):
        raise ValueError(f"length mismatch: {len(q1)}, {len(q2)}, {len(weights)} weights")
    total = 0.0
    for a, b, w in zip(q1, q2, weights):
        total += w * (math.hypot(a.x - b.x, a.y - b.y) + char_length * abs(angle_diff(a.theta, b.theta)))
    return total
