"""2D planar world: polygon obstacles, an omnidirectional disc base, exact
360-degree lidar raycasting, and coalesced collision events.

The base is a disc of ``base_radius``; motion is first-order integration of a
body twist (vx, vy, omega) clamped to the configured speed limits.  A motion
step is checked as a swept capsule against every polygon edge, so the base
can neither tunnel through thin walls nor clip corners between endpoints.
Blocked motion stops at the contact point (bisection to ~1e-18 of the step
length) and raises a collision occurrence; occurrences closer together than
``COALESCE_WINDOW`` seconds count as one event.

Lidar beams are exact ray-segment intersections, no sampling; beam k points
along base-frame angle ``angle_of_beam_0 + k*angular_step`` and rotates with
the base.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import se3
from .se3 import Pose

MAX_LINEAR_SPEED = 0.3
MAX_ANGULAR_SPEED = 0.5
DT = 0.02
COALESCE_WINDOW = 0.5
DEFAULT_MAX_RANGE = 5.0


def clamp_twist(cmd):
    """Clamp (vx, vy, omega): planar speed to 0.3 m/s, yaw to 0.5 rad/s."""
    vx, vy, om = float(cmd[0]), float(cmd[1]), float(cmd[2])
    speed = np.hypot(vx, vy)
    if speed > MAX_LINEAR_SPEED:
        scale = MAX_LINEAR_SPEED / speed
        vx *= scale
        vy *= scale
    om = float(np.clip(om, -MAX_ANGULAR_SPEED, MAX_ANGULAR_SPEED))
    return np.array([vx, vy, om])


def box(xmin, ymin, xmax, ymax):
    """Axis-aligned rectangle polygon (counterclockwise)."""
    return np.array([[xmin, ymin], [xmax, ymin], [xmax, ymax], [xmin, ymax]],
                    dtype=float)


def _cross2(u, v):
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def _segments_intersect(p0, p1, a, b):
    d1 = np.cross(np.append(p1 - p0, 0), np.append(a - p0, 0))[2]
    d2 = np.cross(np.append(p1 - p0, 0), np.append(b - p0, 0))[2]
    d3 = np.cross(np.append(b - a, 0), np.append(p0 - a, 0))[2]
    d4 = np.cross(np.append(b - a, 0), np.append(p1 - a, 0))[2]
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def _polygon_is_simple(poly):
    k = len(poly)
    for i in range(k):
        a0, a1 = poly[i], poly[(i + 1) % k]
        for j in range(i + 1, k):
            if j == i or (j + 1) % k == i or (i + 1) % k == j:
                continue
            if _segments_intersect(a0, a1, poly[j], poly[(j + 1) % k]):
                return False
    return True


@dataclass
class LidarScan:
    """Uniform 360-degree range scan in the base frame."""

    ranges: np.ndarray
    angle_of_beam_0: float
    angular_step: float
    max_range: float

    def __post_init__(self):
        self.ranges = np.asarray(self.ranges, dtype=float)
        if self.ranges.ndim != 1 or self.ranges.shape[0] < 4:
            raise ValueError("scan needs at least 4 beams")
        if (self.ranges <= 0).any() or (self.ranges > self.max_range + 1e-12).any():
            raise ValueError("ranges must lie in (0, max_range]")

    @property
    def m(self):
        return self.ranges.shape[0]

    def beam_directions(self):
        angles = self.angle_of_beam_0 + np.arange(self.m) * self.angular_step
        return np.column_stack([np.cos(angles), np.sin(angles)])


def ray_range(scan, d_hat):
    """Free-space distance along an arbitrary base-frame direction, linearly
    interpolated between the two adjacent beams."""
    d_hat = np.asarray(d_hat, dtype=float)
    n = np.linalg.norm(d_hat)
    if abs(n - 1.0) > 1e-6:
        raise ValueError("direction must be a unit vector")
    angle = np.arctan2(d_hat[1], d_hat[0])
    idx = (angle - scan.angle_of_beam_0) / scan.angular_step
    lo = int(np.floor(idx))
    frac = idx - lo
    r0 = scan.ranges[lo % scan.m]
    r1 = scan.ranges[(lo + 1) % scan.m]
    return float(r0 * (1.0 - frac) + r1 * frac)


def _default_mounts():
    left = Pose(np.eye(3), np.array([0.0, 0.10, 0.35]))
    right = Pose(np.eye(3), np.array([0.0, -0.10, 0.35]))
    return (left, right)


class World:
    """Obstacles, base state, and simulated time.

    Obstacles are simple closed polygons in the world frame.  ``arm_mounts``
    are the two arm-base Pose offsets from the base frame (x forward, y
    left, z up at the base center).
    """

    def __init__(self, obstacles=(), base_pose=(0.0, 0.0, 0.0),
                 base_radius=0.2, arm_mounts=None,
                 lidar_max_range=DEFAULT_MAX_RANGE):
        self.obstacles = []
        for poly in obstacles:
            poly = np.asarray(poly, dtype=float)
            if poly.ndim != 2 or poly.shape[0] < 3 or poly.shape[1] != 2:
                raise ValueError("each obstacle must be a (k>=3, 2) polygon")
            if not np.isfinite(poly).all():
                raise ValueError("polygon vertices must be finite")
            if not _polygon_is_simple(poly):
                raise ValueError("obstacle polygon is self-intersecting")
            self.obstacles.append(poly)
        self.base_pose = np.asarray(base_pose, dtype=float).copy()
        if self.base_pose.shape != (3,):
            raise ValueError("base_pose must be (x, y, theta)")
        if base_radius <= 0:
            raise ValueError("base_radius must be positive")
        self.base_radius = float(base_radius)
        self.arm_mounts = tuple(arm_mounts) if arm_mounts else _default_mounts()
        self.lidar_max_range = float(lidar_max_range)
        self.time = 0.0
        self._last_contact_time = None
        self._edges_a, self._edges_b = self._edge_arrays()
        self._edges_e = self._edges_b - self._edges_a
        self._edges_len2 = np.maximum((self._edges_e ** 2).sum(axis=1), 1e-300)

    def _edge_arrays(self):
        if not self.obstacles:
            return np.zeros((0, 2)), np.zeros((0, 2))
        a_list, b_list = [], []
        for poly in self.obstacles:
            a_list.append(poly)
            b_list.append(np.roll(poly, -1, axis=0))
        return np.vstack(a_list), np.vstack(b_list)

    def copy(self):
        w = World(
            obstacles=[p.copy() for p in self.obstacles],
            base_pose=self.base_pose.copy(),
            base_radius=self.base_radius,
            arm_mounts=self.arm_mounts,
            lidar_max_range=self.lidar_max_range,
        )
        w.time = self.time
        w._last_contact_time = self._last_contact_time
        return w

    # collision geometry

    def point_in_obstacle(self, p):
        for poly in self.obstacles:
            inside = False
            k = len(poly)
            for i in range(k):
                x0, y0 = poly[i]
                x1, y1 = poly[(i + 1) % k]
                if (y0 > p[1]) != (y1 > p[1]):
                    xcross = x0 + (p[1] - y0) / (y1 - y0) * (x1 - x0)
                    if p[0] < xcross:
                        inside = not inside
            if inside:
                return True
        return False

    def _point_edge_distances(self, p):
        if self._edges_a.shape[0] == 0:
            return np.array([np.inf])
        e = self._edges_e
        ap = p[None, :] - self._edges_a
        t = np.clip((ap * e).sum(axis=1) / self._edges_len2, 0.0, 1.0)
        gap = ap - t[:, None] * e
        return np.sqrt((gap * gap).sum(axis=1))

    def clearance(self, p):
        """Distance from a point to the nearest obstacle edge (inf if none);
        negative-equivalent interiors are reported via point_in_obstacle."""
        return float(self._point_edge_distances(np.asarray(p, dtype=float)).min())

    def position_free(self, p):
        p = np.asarray(p, dtype=float)
        if self.point_in_obstacle(p):
            return False
        return self.clearance(p) >= self.base_radius

    def _segment_edge_distances(self, p0, p1):
        """Min distance between the motion segment and every obstacle edge."""
        if self._edges_a.shape[0] == 0:
            return np.array([np.inf])
        a, b = self._edges_a, self._edges_b
        d = p1 - p0
        e = b - a
        ao = a - p0[None, :]
        denom = d[0] * e[:, 1] - d[1] * e[:, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(np.abs(denom) > 1e-15, _cross2(ao, e) / denom, -1.0)
            s = np.where(np.abs(denom) > 1e-15,
                         (ao[:, 0] * d[1] - ao[:, 1] * d[0]) / denom, -1.0)
        crossing = (t >= 0.0) & (t <= 1.0) & (s >= 0.0) & (s <= 1.0)

        def point_to_seg(points, sa, sb):
            seg = sb - sa
            ap = points - sa
            denom2 = np.maximum((seg * seg).sum(axis=-1), 1e-300)
            tt = np.clip((ap * seg).sum(axis=-1) / denom2, 0.0, 1.0)
            gap = ap - tt[..., None] * seg
            return np.sqrt((gap * gap).sum(axis=-1))

        d_p0 = point_to_seg(p0[None, :], a, b)
        d_p1 = point_to_seg(p1[None, :], a, b)
        d_a = point_to_seg(a, p0[None, :], p1[None, :])
        d_b = point_to_seg(b, p0[None, :], p1[None, :])
        dist = np.minimum(np.minimum(d_p0, d_p1), np.minimum(d_a, d_b))
        return np.where(crossing, 0.0, dist)

    def motion_clear(self, p0, p1):
        p0 = np.asarray(p0, dtype=float)
        p1 = np.asarray(p1, dtype=float)
        if self.point_in_obstacle(p1):
            return False
        return bool(self._segment_edge_distances(p0, p1).min() >= self.base_radius)

    def _first_contact_fraction(self, p0, disp):
        """Smallest f in [0, 1] at which the swept disc first touches an edge.

        Closed form per edge: a tangency with the edge's supporting line
        (linear in f, valid while the foot lies on the edge) or with an
        endpoint circle (quadratic in f, valid while that endpoint is the
        closest feature).  Assumes the start position is clear; returns 0.0
        when already pressed against an approaching feature.
        """
        a, e, len2 = self._edges_a, self._edges_e, self._edges_len2
        if a.shape[0] == 0:
            return 1.0
        r = self.base_radius
        normals = np.column_stack([e[:, 1], -e[:, 0]]) / np.sqrt(len2)[:, None]
        rel = p0[None, :] - a
        g0 = (rel * normals).sum(axis=1)
        gd = normals @ disp
        side = np.where(g0 >= 0.0, 1.0, -1.0)
        approaching = gd * side < 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            f_line = (side * r - g0) / gd
            f_line = np.where(np.abs(g0) <= r, 0.0, f_line)
            u = (rel + f_line[:, None] * disp[None, :])
            u = (u * e).sum(axis=1) / len2
            ok = (approaching & np.isfinite(f_line) & (f_line >= 0.0)
                  & (f_line <= 1.0) & (u >= 0.0) & (u <= 1.0))
        best = np.min(np.where(ok, f_line, np.inf))

        dd = float(disp @ disp)
        if dd > 0.0:
            for corner, u_lo, u_hi in ((self._edges_a, -np.inf, 0.0),
                                       (self._edges_b, 1.0, np.inf)):
                rc = p0[None, :] - corner
                b_half = (rc * disp).sum(axis=1)
                c = (rc * rc).sum(axis=1) - r * r
                disc = b_half * b_half - dd * c
                sq = np.sqrt(np.maximum(disc, 0.0))
                f_c = (-b_half - sq) / dd
                f_c = np.where((c <= 0.0) & (b_half < 0.0), 0.0, f_c)
                u_c = ((p0[None, :] + f_c[:, None] * disp[None, :] - a)
                       * e).sum(axis=1) / len2
                ok_c = ((disc >= 0.0) & (b_half < 0.0) & (f_c >= 0.0)
                        & (f_c <= 1.0) & (u_c >= u_lo) & (u_c <= u_hi))
                cand = np.min(np.where(ok_c, f_c, np.inf))
                best = min(best, cand)
        return float(best) if np.isfinite(best) else 0.0

    def _blocked_fraction_bisect(self, start, target, iters=60):
        """Reference bisection for the blocked-motion fraction (slow path)."""
        lo, hi = 0.0, 1.0
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            if self.motion_clear(start, start + (target - start) * mid):
                lo = mid
            else:
                hi = mid
        return lo

    # dynamics

    def step(self, cmd, dt=DT):
        """Advance one tick; returns the number of new coalesced collision
        events (0 or 1)."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        vx, vy, om = clamp_twist(cmd)
        self.time += dt
        theta = self.base_pose[2]
        cos_t, sin_t = np.cos(theta), np.sin(theta)
        v_world = np.array([cos_t * vx - sin_t * vy, sin_t * vx + cos_t * vy])
        start = self.base_pose[:2].copy()
        target = start + v_world * dt
        events = 0
        if self.motion_clear(start, target):
            self.base_pose[:2] = target
        else:
            frac = self._first_contact_fraction(start, target - start)
            self.base_pose[:2] = start + (target - start) * frac
            if (self._last_contact_time is None
                    or self.time - self._last_contact_time > COALESCE_WINDOW):
                events = 1
            self._last_contact_time = self.time
        self.base_pose[2] = theta + om * dt
        return events

    # lidar

    def lidar(self, m_beams=360, angle_of_beam_0=0.0):
        if m_beams < 4:
            raise ValueError("need at least 4 beams")
        step_ang = 2.0 * np.pi / m_beams
        theta = self.base_pose[2]
        angles = theta + angle_of_beam_0 + np.arange(m_beams) * step_ang
        dirs = np.column_stack([np.cos(angles), np.sin(angles)])
        ranges = np.full(m_beams, self.lidar_max_range)
        if self._edges_a.shape[0] > 0:
            o = self.base_pose[:2]
            a, b = self._edges_a, self._edges_b
            e = b - a
            ao = a - o[None, :]
            denom = dirs[:, None, 0] * e[None, :, 1] - dirs[:, None, 1] * e[None, :, 0]
            cross_ao_e = _cross2(ao, e)
            with np.errstate(divide="ignore", invalid="ignore"):
                t = cross_ao_e[None, :] / denom
                s = (ao[None, :, 0] * dirs[:, None, 1]
                     - ao[None, :, 1] * dirs[:, None, 0]) / denom
            valid = (np.abs(denom) > 1e-15) & (t > 1e-12) & (s >= -1e-12) & (s <= 1.0 + 1e-12)
            t = np.where(valid, t, np.inf)
            ranges = np.minimum(ranges, t.min(axis=1))
        return LidarScan(ranges, angle_of_beam_0, step_ang, self.lidar_max_range)

    # serialization

    def to_dict(self):
        return {
            "obstacles": [p.tolist() for p in self.obstacles],
            "base_pose": self.base_pose.tolist(),
            "base_radius": self.base_radius,
            "arm_mounts": [m.flatten().tolist() for m in self.arm_mounts],
            "lidar_max_range": self.lidar_max_range,
            "time": self.time,
        }

    @classmethod
    def from_dict(cls, d):
        w = cls(
            obstacles=d.get("obstacles", ()),
            base_pose=d.get("base_pose", (0.0, 0.0, 0.0)),
            base_radius=d.get("base_radius", 0.2),
            arm_mounts=[Pose.from_flat(m) for m in d["arm_mounts"]]
            if "arm_mounts" in d else None,
            lidar_max_range=d.get("lidar_max_range", DEFAULT_MAX_RANGE),
        )
        w.time = d.get("time", 0.0)
        return w


def step(world, cmd, dt=DT):
    """Functional wrapper over World.step; returns (world, events)."""
    events = world.step(cmd, dt)
    return world, events


def lidar_scan(world, m_beams=360):
    return world.lidar(m_beams)
