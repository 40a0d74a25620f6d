"""Full-contact planar dynamics with a velocity-commanded robot.

Sequential-impulse contact solver: speculative contacts, zero restitution,
Coulomb friction between bodies, and Coulomb friction against the table
that brings free-sliding objects to rest. Penetration is removed by a
Baumgarte-style positional projection that never touches velocities, so it
cannot inject kinetic energy.
"""
from __future__ import annotations

import math

from leaper.geometry import ZERO_TWIST, SE2Pose, Twist2, contact_query
from leaper.physics.quasistatic import _aabb, _aabb_overlap, _swept_aabb
from leaper.physics.state import GRAVITY, PhysicsParams, Scene, WorldState

SUBSTEP = 0.005
ITERATIONS = 10
BAUMGARTE = 0.2
SLOP = 2e-5
SPECULATIVE_MARGIN = 0.004
MAX_PENETRATION = 1e-4
PINCH_PENETRATION = 1e-3

ROBOT = -1
STATIC = -2


def step_dynamic(
    state: WorldState,
    u: Twist2,
    dt: float,
    params: PhysicsParams,
    scene: Scene,
    substep: float = SUBSTEP,
    iterations: int = ITERATIONS,
    baumgarte: float = BAUMGARTE,
) -> WorldState:
    """Integrate full-contact dynamics over one control interval.

    The robot is kinematic: it follows ``u`` unless that would drive it into
    static geometry or crush an object against it, in which case it holds
    position for that substep. Never raises on solver trouble.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    u = Twist2(*u)
    moving = any(t.vx or t.vy or t.omega for t in state.object_twists)
    if not moving and u.vx == 0.0 and u.vy == 0.0 and u.omega == 0.0:
        return state.at_rest()

    r0 = state.robot_pose
    n = max(1, int(round(dt / substep)))
    h = dt / n

    if not moving:
        r_end = SE2Pose(r0.x + u.vx * dt, r0.y + u.vy * dt, r0.theta + u.omega * dt)
        swept = _swept_aabb(scene.robot_shape, r0, r_end)
        clear = not any(
            _aabb_overlap(swept, _aabb(s, p), SPECULATIVE_MARGIN)
            for s, p in zip(scene.object_shapes, state.object_poses)
        ) and not any(
            _aabb_overlap(swept, _aabb(s, p), SPECULATIVE_MARGIN)
            for s, p in zip(scene.static_shapes, scene.static_poses)
        )
        if clear:
            return WorldState(r_end, state.object_poses, u, state.object_twists)

    sim = _Sim(state, params, scene)
    robot = r0
    for _ in range(n):
        cand = SE2Pose(robot.x + u.vx * h, robot.y + u.vy * h, robot.theta + u.omega * h)
        if sim.robot_hits_static(cand):
            cand, ru = robot, ZERO_TWIST
        else:
            ru = u
        snapshot = sim.save()
        sim.substep(robot, ru, h, iterations, baumgarte)
        sim.project(cand, baumgarte, passes=1)
        if ru is not ZERO_TWIST and sim.pinched(cand):
            # Crushing an object against something immovable: hold the robot.
            sim.restore(snapshot)
            cand = robot
            sim.substep(robot, ZERO_TWIST, h, iterations, baumgarte)
            sim.project(cand, baumgarte, passes=1)
        robot = cand
    sim.project(robot, 1.0, passes=20, target=0.5 * MAX_PENETRATION)
    twist = Twist2(
        (robot.x - r0.x) / dt,
        (robot.y - r0.y) / dt,
        math.remainder(robot.theta - r0.theta, 2.0 * math.pi) / dt,
    )
    return sim.to_state(robot, twist)


class _Sim:
    def __init__(self, state: WorldState, params: PhysicsParams, scene: Scene):
        self.scene = scene
        self.params = params
        self.n = scene.n_objects
        self.x = [p.x for p in state.object_poses]
        self.y = [p.y for p in state.object_poses]
        self.th = [p.theta for p in state.object_poses]
        self.vx = [t.vx for t in state.object_twists]
        self.vy = [t.vy for t in state.object_twists]
        self.w = [t.omega for t in state.object_twists]
        self.inv_m = [1.0 / m for m in params.mass]
        self.inv_i = [1.0 / (m * s.inertia_per_mass()) for m, s in zip(params.mass, scene.object_shapes)]
        self.static_boxes = [_aabb(s, p) for s, p in zip(scene.static_shapes, scene.static_poses)]

    def save(self):
        return (self.x[:], self.y[:], self.th[:], self.vx[:], self.vy[:], self.w[:])

    def restore(self, snap):
        self.x, self.y, self.th, self.vx, self.vy, self.w = (list(a) for a in snap)

    def pose(self, j: int) -> SE2Pose:
        return SE2Pose(self.x[j], self.y[j], self.th[j])

    def robot_hits_static(self, robot: SE2Pose) -> bool:
        box = _aabb(self.scene.robot_shape, robot)
        for (s, p), sb in zip(zip(self.scene.static_shapes, self.scene.static_poses), self.static_boxes):
            if not _aabb_overlap(box, sb):
                continue
            m = contact_query(self.scene.robot_shape, robot, s, p)
            if m is not None and m.max_penetration > 0.5 * MAX_PENETRATION:
                return True
        return False

    def _pairs(self, robot: SE2Pose, margin: float):
        """Yield (a, b, manifold) for every potentially interacting pair."""
        scene = self.scene
        shapes = scene.object_shapes
        poses = [self.pose(j) for j in range(self.n)]
        boxes = [_aabb(s, p) for s, p in zip(shapes, poses)]
        rbox = _aabb(scene.robot_shape, robot)
        for j in range(self.n):
            if _aabb_overlap(rbox, boxes[j], margin):
                m = contact_query(scene.robot_shape, robot, shapes[j], poses[j], margin)
                if m is not None:
                    yield ROBOT, j, m
            for k in range(j + 1, self.n):
                if _aabb_overlap(boxes[j], boxes[k], margin):
                    m = contact_query(shapes[j], poses[j], shapes[k], poses[k], margin)
                    if m is not None:
                        yield j, k, m
            for s, p, sb in zip(scene.static_shapes, scene.static_poses, self.static_boxes):
                if _aabb_overlap(boxes[j], sb, margin):
                    m = contact_query(shapes[j], poses[j], s, p, margin)
                    if m is not None:
                        yield j, STATIC, m

    def _friction(self, a: int, b: int) -> float:
        if a == ROBOT:
            return self.params.friction_robot
        if b == STATIC:
            return self.params.friction_static
        return self.params.friction_object

    def substep(self, robot: SE2Pose, ru: Twist2, h: float, iterations: int, baumgarte: float):
        vx, vy, w = self.vx, self.vy, self.w
        c = self.params.pressure_moment_const
        for j in range(self.n):
            mu = self.params.friction_table[j]
            speed = math.hypot(vx[j], vy[j])
            dv = mu * GRAVITY * h
            if speed <= dv:
                vx[j] = vy[j] = 0.0
            else:
                k = (speed - dv) / speed
                vx[j] *= k
                vy[j] *= k
            dw = c * mu * GRAVITY * h * self.inv_i[j] * self.params.mass[j]
            if abs(w[j]) <= dw:
                w[j] = 0.0
            else:
                w[j] -= math.copysign(dw, w[j])

        rows = []
        for a, b, m in self._pairs(robot, SPECULATIVE_MARGIN):
            mu = self._friction(a, b)
            for p in m.points:
                (px, py), (nx, ny) = p.position, p.normal
                tx, ty = -ny, nx
                if a == ROBOT:
                    ima = iia = 0.0
                    rax, ray = px - robot.x, py - robot.y
                else:
                    ima, iia = self.inv_m[a], self.inv_i[a]
                    rax, ray = px - self.x[a], py - self.y[a]
                if b == STATIC:
                    imb = iib = 0.0
                    rbx = rby = 0.0
                else:
                    imb, iib = self.inv_m[b], self.inv_i[b]
                    rbx, rby = px - self.x[b], py - self.y[b]
                rna = rax * ny - ray * nx
                rnb = rbx * ny - rby * nx
                rta = rax * ty - ray * tx
                rtb = rbx * ty - rby * tx
                kn = ima + imb + iia * rna * rna + iib * rnb * rnb
                kt = ima + imb + iia * rta * rta + iib * rtb * rtb
                vn_min = -max(p.separation, 0.0) / h
                rows.append([a, b, nx, ny, tx, ty, rax, ray, rbx, rby, 1.0 / kn, 1.0 / kt, vn_min, mu, 0.0, 0.0])

        if rows:
            rvx, rvy, rw = ru
            for _ in range(iterations):
                for row in rows:
                    a, b, nx, ny, tx, ty, rax, ray, rbx, rby, mn, mt, vn_min, mu, jn, jt = row
                    if a == ROBOT:
                        vax, vay, wa = rvx, rvy, rw
                    else:
                        vax, vay, wa = vx[a], vy[a], w[a]
                    if b == STATIC:
                        vbx = vby = wb = 0.0
                    else:
                        vbx, vby, wb = vx[b], vy[b], w[b]
                    dvx = vbx - wb * rby - vax + wa * ray
                    dvy = vby + wb * rbx - vay - wa * rax
                    vn = dvx * nx + dvy * ny
                    new_jn = max(jn + (vn_min - vn) * mn, 0.0)
                    djn = new_jn - jn
                    row[14] = new_jn
                    vt = dvx * tx + dvy * ty
                    lim = mu * new_jn
                    new_jt = min(max(jt - vt * mt, -lim), lim)
                    djt = new_jt - jt
                    row[15] = new_jt
                    px = djn * nx + djt * tx
                    py = djn * ny + djt * ty
                    if a != ROBOT:
                        ima, iia = self.inv_m[a], self.inv_i[a]
                        vx[a] -= px * ima
                        vy[a] -= py * ima
                        w[a] -= iia * (rax * py - ray * px)
                    if b != STATIC:
                        imb, iib = self.inv_m[b], self.inv_i[b]
                        vx[b] += px * imb
                        vy[b] += py * imb
                        w[b] += iib * (rbx * py - rby * px)

        for j in range(self.n):
            self.x[j] += vx[j] * h
            self.y[j] += vy[j] * h
            self.th[j] += w[j] * h

    def project(self, robot: SE2Pose, factor: float, passes: int, target: float = SLOP):
        """Translate overlapping objects apart along contact normals."""
        for _ in range(passes):
            worst = 0.0
            for a, b, m in list(self._pairs(robot, 0.0)):
                pen = m.max_penetration
                worst = max(worst, pen)
                if pen <= SLOP:
                    continue
                nx, ny = m.normal
                corr = factor * (pen - SLOP if factor < 1.0 else pen)
                wa = 0.0 if a == ROBOT else self.inv_m[a]
                wb = 0.0 if b == STATIC else self.inv_m[b]
                tot = wa + wb
                if tot == 0.0:
                    continue
                if a != ROBOT:
                    self.x[a] -= nx * corr * wa / tot
                    self.y[a] -= ny * corr * wa / tot
                if b != STATIC:
                    self.x[b] += nx * corr * wb / tot
                    self.y[b] += ny * corr * wb / tot
            if worst <= target:
                return

    def pinched(self, robot: SE2Pose) -> bool:
        return any(m.max_penetration > PINCH_PENETRATION for _, _, m in self._pairs(robot, 0.0))

    def to_state(self, robot: SE2Pose, twist: Twist2) -> WorldState:
        return WorldState(
            robot,
            tuple(self.pose(j) for j in range(self.n)),
            twist,
            tuple(Twist2(self.vx[j], self.vy[j], self.w[j]) for j in range(self.n)),
        )
