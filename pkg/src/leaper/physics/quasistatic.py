"""Quasi-static pushing and the weld relaxation.

Objects have no inertia: they move only while something pushes them and the
motion direction comes from an ellipsoidal limit surface. Steps are resolved
at the position level. The robot moves in small substeps; every movable it
penetrates is displaced along its quasi-static twist direction just far
enough to clear the contact, and the displaced object in turn pushes whatever
it now overlaps (bounded recursion, no pushing back along the chain).
"""
from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
from scipy.optimize import nnls

from leaper.geometry import (
    PENETRATION_TOL,
    ZERO_TWIST,
    ConvexShape,
    SE2Pose,
    Twist2,
    contact_query,
    se2_compose,
    se2_inverse,
)
from leaper.physics.state import LimitSurface, PhysicsParams, Scene, StepRejected, WorldState

RESOLVE_TOL = 1e-7
SKIN = 1e-9
MAX_SUBSTEP_TRANSLATION = 2e-3
MAX_PUSH_ITERS = 25


def limit_surface_velocity(surface: LimitSurface, applied_force) -> Twist2:
    """Unit twist direction normal to the limit surface at ``applied_force``.

    The wrench ``(f_x, f_y, m)`` is first scaled onto the ellipsoid; the
    returned direction is the normalized gradient
    ``(2 f_x / f_max^2, 2 f_y / f_max^2, 2 m / m_max^2)``.
    """
    fx, fy, m = (float(v) for v in applied_force)
    if fx == 0.0 and fy == 0.0 and m == 0.0:
        raise ValueError("zero wrench has no motion direction")
    fx, fy, m = surface.scale_onto(fx, fy, m)
    gx = 2.0 * fx / surface.f_max**2
    gy = 2.0 * fy / surface.f_max**2
    gw = 2.0 * m / surface.m_max**2
    norm = math.sqrt(gx * gx + gy * gy + gw * gw)
    return Twist2(gx / norm, gy / norm, gw / norm)


def point_push(rx, ry, nx, ny, vpx, vpy, mu, c2):
    """Object twist produced by a point pusher on an ellipsoidal limit surface.

    ``(rx, ry)`` is the contact point relative to the object centre, ``n`` the
    unit normal pointing into the object and ``vp`` the pusher velocity at the
    contact. ``c2`` is the squared ratio m_max / f_max. Returns a twist about
    the object centre whose contact-point normal velocity equals ``vp . n``,
    or None when the pusher is not moving into the object.
    """
    vn = vpx * nx + vpy * ny
    if vn <= 0.0:
        return None
    # Contact-point velocity is A f for a twist generated by force f.
    a11 = 1.0 + ry * ry / c2
    a12 = -rx * ry / c2
    a22 = 1.0 + rx * rx / c2
    det = a11 * a22 - a12 * a12
    fx = (a22 * vpx - a12 * vpy) / det
    fy = (-a12 * vpx + a11 * vpy) / det
    tx, ty = -ny, nx
    fn = fx * nx + fy * ny
    ft = fx * tx + fy * ty
    if fn > 0.0 and abs(ft) <= mu * fn:
        return fx, fy, (rx * fy - ry * fx) / c2
    s = 1.0 if ft >= 0.0 else -1.0
    ex, ey = nx + s * mu * tx, ny + s * mu * ty
    cvn = (a11 * ex + a12 * ey) * nx + (a12 * ex + a22 * ey) * ny
    if cvn <= 1e-12:
        ex, ey = nx, ny
        cvn = (a11 * ex + a12 * ey) * nx + (a12 * ex + a22 * ey) * ny
    lam = vn / cvn
    return lam * ex, lam * ey, lam * (rx * ey - ry * ex) / c2


def _pusher_velocity(motion, px, py):
    cx, cy, dx, dy, dw = motion
    return dx - dw * (py - cy), dy + dw * (px - cx)


def object_response(points, motion, center: SE2Pose, mu: float, c: float):
    """Quasi-static displacement direction of an object touched by a pusher.

    ``motion`` is ``(cx, cy, dx, dy, dtheta)``: the pusher's rigid displacement
    with rotation about ``(cx, cy)``. Two-point (face) contacts first test
    whether the object can follow the pusher rigidly, i.e. whether the wrench
    needed for that lies in the combined friction cone of both points.
    """
    c2 = c * c
    ox, oy = center.x, center.y
    if len(points) >= 2:
        # Rigid follow: object twist equal to the pusher's, about the object centre.
        vx, vy = _pusher_velocity(motion, ox, oy)
        dw = motion[4]
        gens = []
        for p in points[:2]:
            (px, py), (nx, ny) = p.position, p.normal
            rx, ry = px - ox, py - oy
            for s in (1.0, -1.0):
                gx, gy = nx - s * mu * ny, ny + s * mu * nx
                gens.append((gx, gy, rx * gy - ry * gx))
        w = np.array([vx, vy, c2 * dw])
        wn = float(np.linalg.norm(w))
        if wn > 0.0:
            _, resid = nnls(np.array(gens).T, w)
            if resid <= 1e-9 * wn:
                return vx, vy, dw
        best = None
        for i, p in enumerate(points[:2]):
            resp = _single(p, motion, ox, oy, mu, c2)
            if resp is None:
                continue
            other = points[1 - i]
            (qx, qy), (nx, ny) = other.position, other.normal
            ovx = resp[0] - resp[2] * (qy - oy)
            ovy = resp[1] + resp[2] * (qx - ox)
            pvx, pvy = _pusher_velocity(motion, qx, qy)
            gap_rate = (ovx - pvx) * nx + (ovy - pvy) * ny
            if gap_rate >= -1e-12 and (best is None or gap_rate < best[0]):
                best = (gap_rate, resp)
        if best is not None:
            return best[1]
        # Fall back to a single contact at the centre of pressure.
        (p1x, p1y), (p2x, p2y) = points[0].position, points[1].position
        mx, my = 0.5 * (p1x + p2x), 0.5 * (p1y + p2y)
        nx, ny = points[0].normal
        vpx, vpy = _pusher_velocity(motion, mx, my)
        return point_push(mx - ox, my - oy, nx, ny, vpx, vpy, mu, c2)
    return _single(points[0], motion, ox, oy, mu, c2)


def _single(p, motion, ox, oy, mu, c2):
    (px, py), (nx, ny) = p.position, p.normal
    vpx, vpy = _pusher_velocity(motion, px, py)
    return point_push(px - ox, py - oy, nx, ny, vpx, vpy, mu, c2)


def _aabb(shape: ConvexShape, pose: SE2Pose):
    if shape.kind == "disc":
        r = shape.radius
        return pose.x - r, pose.x + r, pose.y - r, pose.y + r
    c, s = abs(math.cos(pose.theta)), abs(math.sin(pose.theta))
    ex = c * shape.half_w + s * shape.half_h
    ey = s * shape.half_w + c * shape.half_h
    return pose.x - ex, pose.x + ex, pose.y - ey, pose.y + ey


def _swept_aabb(shape, p0, p1):
    a, b = _aabb(shape, p0), _aabb(shape, p1)
    bulge = shape.bounding_radius * min(abs(p1.theta - p0.theta), 2.0)
    return (
        min(a[0], b[0]) - bulge,
        max(a[1], b[1]) + bulge,
        min(a[2], b[2]) - bulge,
        max(a[3], b[3]) + bulge,
    )


def _aabb_overlap(a, b, margin=1e-3):
    return a[0] <= b[1] + margin and b[0] <= a[1] + margin and a[2] <= b[3] + margin and b[2] <= a[3] + margin


class _Resolver:
    """Mutable scratch state for resolving one quasi-static step."""

    def __init__(self, scene: Scene, params: PhysicsParams, poses: list[SE2Pose], welded: int | None):
        self.scene = scene
        self.params = params
        self.poses = poses
        self.welded = welded
        self.c = params.pressure_moment_const

    def check_static(self, shape, pose):
        for s, p in zip(self.scene.static_shapes, self.scene.static_poses):
            m = contact_query(shape, pose, s, p)
            if m is not None and m.max_penetration > PENETRATION_TOL:
                raise StepRejected(f"{shape.entity_class} penetrates {s.entity_class} by {m.max_penetration:.2e} m")

    def propagate(self, pusher_shape, pusher_pose, motion, chain, depth):
        shapes = self.scene.object_shapes
        for j in range(len(shapes)):
            if j in chain or j == self.welded:
                continue
            m = contact_query(pusher_shape, pusher_pose, shapes[j], self.poses[j])
            if m is None or m.max_penetration <= RESOLVE_TOL:
                continue
            if depth > len(shapes):
                raise StepRejected("push propagation exceeded its depth bound")
            mu = self.params.contact_friction(pusher_shape.entity_class, "movable")
            tx = ty = tw = 0.0
            for _ in range(MAX_PUSH_ITERS):
                pose = self.poses[j]
                resp = object_response(m.points, motion, pose, mu, self.c)
                dp = m.deepest()
                (px, py), (nx, ny) = dp.position, dp.normal
                if resp is None:
                    # Overlap the pusher is not moving into (corner grazing a
                    # side face): clear it as a push along the contact normal.
                    resp = object_response(m.points, (px, py, nx, ny, 0.0), pose, mu, self.c)
                    if resp is None:
                        break
                vn = (resp[0] - resp[2] * (py - pose.y)) * nx + (resp[1] + resp[2] * (px - pose.x)) * ny
                if vn <= 1e-15:
                    break
                lam = (dp.penetration + SKIN) / vn
                dx, dy, dw = lam * resp[0], lam * resp[1], lam * resp[2]
                self.poses[j] = SE2Pose(pose.x + dx, pose.y + dy, pose.theta + dw)
                tx += dx
                ty += dy
                tw += dw
                m = contact_query(pusher_shape, pusher_pose, shapes[j], self.poses[j])
                if m is None or m.max_penetration <= RESOLVE_TOL:
                    break
            if m is not None and m.max_penetration > PENETRATION_TOL:
                raise StepRejected(f"could not clear contact on object {j} ({m.max_penetration:.2e} m)")
            self.check_static(shapes[j], self.poses[j])
            if tx or ty or tw:
                pj = self.poses[j]
                self.propagate(shapes[j], pj, (pj.x, pj.y, tx, ty, tw), chain | {j}, depth + 1)


def _n_substeps(u: Twist2, dt: float, shape: ConvexShape) -> int:
    travel = max(abs(u.vx) * dt, abs(u.vy) * dt, abs(u.omega) * dt * shape.bounding_radius)
    return max(1, math.ceil(travel / MAX_SUBSTEP_TRANSLATION))


def _touching(scene: Scene, robot: SE2Pose, target: SE2Pose) -> bool:
    tshape = scene.object_shapes[scene.target_index]
    return contact_query(scene.robot_shape, robot, tshape, target, margin=PENETRATION_TOL) is not None


def _verify(scene: Scene, robot: SE2Pose, poses: list[SE2Pose]):
    shapes = (scene.robot_shape,) + scene.object_shapes
    allp = [robot] + poses
    for i in range(len(shapes)):
        for j in range(i + 1, len(shapes)):
            m = contact_query(shapes[i], allp[i], shapes[j], allp[j])
            if m is not None and m.max_penetration > PENETRATION_TOL:
                raise StepRejected(f"entities {i} and {j} interpenetrate after resolution")


def _step(state: WorldState, u: Twist2, dt: float, params: PhysicsParams, scene: Scene, weld_mode: bool) -> WorldState:
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    u = Twist2(*u)
    tidx = scene.target_index
    rel = state.weld if weld_mode else None
    if weld_mode and rel is None and _touching(scene, state.robot_pose, state.object_poses[tidx]):
        rel = se2_compose(se2_inverse(state.robot_pose), state.object_poses[tidx])
    if u.vx == 0.0 and u.vy == 0.0 and u.omega == 0.0:
        return replace(state.at_rest(), weld=rel)

    r0 = state.robot_pose
    r_end = SE2Pose(r0.x + u.vx * dt, r0.y + u.vy * dt, r0.theta + u.omega * dt)
    poses = list(state.object_poses)
    res = _Resolver(scene, params, poses, tidx if rel is not None else None)

    swept = _swept_aabb(scene.robot_shape, r0, r_end)
    near_object = rel is not None or any(
        _aabb_overlap(swept, _aabb(s, p)) for s, p in zip(scene.object_shapes, poses)
    )
    if not near_object:
        near_static = [
            (s, p) for s, p in zip(scene.static_shapes, scene.static_poses) if _aabb_overlap(swept, _aabb(s, p))
        ]
        n = _n_substeps(u, dt, scene.robot_shape) if near_static else 1
        for k in range(1, n + 1):
            f = dt * k / n
            robot = r_end if k == n else SE2Pose(r0.x + u.vx * f, r0.y + u.vy * f, r0.theta + u.omega * f)
            for s, p in near_static:
                m = contact_query(scene.robot_shape, robot, s, p)
                if m is not None and m.max_penetration > PENETRATION_TOL:
                    raise StepRejected("robot penetrates static geometry")
        return WorldState(r_end, tuple(poses), weld=rel)

    n = _n_substeps(u, dt, scene.robot_shape)
    robot = r0
    for k in range(1, n + 1):
        f = dt * k / n
        new_robot = r_end if k == n else SE2Pose(r0.x + u.vx * f, r0.y + u.vy * f, r0.theta + u.omega * f)
        motion = (
            new_robot.x,
            new_robot.y,
            new_robot.x - robot.x,
            new_robot.y - robot.y,
            u.omega * dt / n,
        )
        robot = new_robot
        res.check_static(scene.robot_shape, robot)
        if rel is not None:
            old_t = poses[tidx]
            poses[tidx] = se2_compose(robot, rel)
            res.check_static(scene.object_shapes[tidx], poses[tidx])
            tmotion = (
                poses[tidx].x,
                poses[tidx].y,
                poses[tidx].x - old_t.x,
                poses[tidx].y - old_t.y,
                motion[4],
            )
            res.propagate(scene.robot_shape, robot, motion, frozenset({tidx}), 1)
            res.propagate(scene.object_shapes[tidx], poses[tidx], tmotion, frozenset({tidx}), 1)
        else:
            res.propagate(scene.robot_shape, robot, motion, frozenset(), 1)
            if weld_mode and _touching(scene, robot, poses[tidx]):
                rel = se2_compose(se2_inverse(robot), poses[tidx])
                res.welded = tidx
    _verify(scene, r_end, poses)
    return WorldState(r_end, tuple(poses), weld=rel)


def step_quasistatic(state: WorldState, u: Twist2, dt: float, params: PhysicsParams, scene: Scene) -> WorldState:
    """Advance one control interval under quasi-static pushing.

    Raises StepRejected when the motion would drive an entity into static
    geometry or leaves penetration that the push recursion cannot clear.
    """
    return _step(replace(state, weld=None), u, dt, params, scene, weld_mode=False)


def step_weld(state: WorldState, u: Twist2, dt: float, params: PhysicsParams, scene: Scene) -> WorldState:
    """Quasi-static step in which the target welds to the robot at first contact."""
    return _step(state, u, dt, params, scene, weld_mode=True)
