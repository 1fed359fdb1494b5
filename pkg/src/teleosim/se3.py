"""Rigid-body transforms on SE(3) and their twist coordinates.

Rotations are stored as 3x3 matrices, translations as 3-vectors.  A twist is
a 6-vector ordered (angular, linear).  The exponential and logarithm use the
closed Rodrigues forms with series fallbacks below ``ANGLE_EPS`` so both maps
stay smooth through the identity, and the logarithm refuses rotations within
``BRANCH_MARGIN`` of pi where the principal branch is ill-conditioned.

Long chains of compositions accumulate floating-point drift in the rotation
block; ``Pose.compose`` counts compositions and re-projects onto SO(3) via
SVD every ``Pose.REORTHO_EVERY`` products, which keeps the orthogonality
defect near machine precision indefinitely.
"""

from __future__ import annotations

import numpy as np

# below this angle the closed-form coefficient ratios lose digits to
# cancellation, so the series expansions take over; at the switch point the
# series truncation error is already far below machine epsilon
ANGLE_EPS = 1e-4
# log_map rejects rotations closer than this to the pi branch cut
BRANCH_MARGIN = 1e-6


def skew(w):
    """3x3 skew-symmetric matrix such that skew(w) @ x == cross(w, x)."""
    w = np.asarray(w, dtype=float)
    return np.array([
        [0.0, -w[2], w[1]],
        [w[2], 0.0, -w[0]],
        [-w[1], w[0], 0.0],
    ])


def unskew(m):
    """Inverse of :func:`skew` for an exactly skew-symmetric matrix."""
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def reorthonormalize(rot):
    """Project a near-rotation matrix onto SO(3) (nearest in Frobenius norm)."""
    u, _, vt = np.linalg.svd(rot)
    r = u @ vt
    if np.linalg.det(r) < 0.0:
        u = u.copy()
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return r


class Pose:
    """A rigid transform: rotation ``rot`` (3x3) and translation ``trans`` (3,).

    Acts on points by ``rot @ p + trans``.  Composition is matrix-like:
    ``a.compose(b)`` applies ``b`` first, then ``a`` (same as ``a @ b`` on
    homogeneous matrices; the ``@`` operator is provided as an alias).
    """

    __slots__ = ("rot", "trans", "_composed")

    REORTHO_EVERY = 100

    def __init__(self, rot=None, trans=None, _composed=0):
        rot = np.eye(3) if rot is None else np.array(rot, dtype=float)
        trans = np.zeros(3) if trans is None else np.array(trans, dtype=float)
        if rot.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got shape {rot.shape}")
        if trans.shape != (3,):
            raise ValueError(f"translation must be a 3-vector, got shape {trans.shape}")
        if not (np.isfinite(rot).all() and np.isfinite(trans).all()):
            raise ValueError("pose entries must be finite")
        self.rot = rot
        self.trans = trans
        self._composed = _composed

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_rt(cls, rot, trans):
        return cls(rot, trans)

    def compose(self, other):
        """Return self * other (other applied first)."""
        rot = self.rot @ other.rot
        trans = self.rot @ other.trans + self.trans
        count = self._composed + other._composed + 1
        if count >= self.REORTHO_EVERY:
            rot = reorthonormalize(rot)
            count = 0
        return Pose(rot, trans, _composed=count)

    def __matmul__(self, other):
        return self.compose(other)

    def inverse(self):
        rt = self.rot.T.copy()
        return Pose(rt, -(rt @ self.trans), _composed=self._composed)

    def apply(self, points):
        """Transform one point (3,) or a stack of points (n, 3)."""
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            return self.rot @ points + self.trans
        return points @ self.rot.T + self.trans

    def as_matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rot
        m[:3, 3] = self.trans
        return m

    def flatten(self):
        """Serialize to 12 numbers: row-major rotation then translation."""
        return np.concatenate([self.rot.reshape(-1), self.trans])

    @classmethod
    def from_flat(cls, values):
        """Inverse of :func:`flatten`; rejects grossly non-orthonormal input."""
        values = np.asarray(values, dtype=float)
        if values.shape != (12,):
            raise ValueError(f"flat pose must have 12 entries, got {values.shape}")
        rot = values[:9].reshape(3, 3)
        defect = np.abs(rot.T @ rot - np.eye(3)).max()
        if defect > 1e-6:
            raise ValueError(f"rotation block is not orthonormal (defect {defect:.3e})")
        if np.linalg.det(rot) < 0.0:
            raise ValueError("rotation block has negative determinant")
        return cls(rot, values[9:])

    def __repr__(self):
        return f"Pose(rot={self.rot.tolist()!r}, trans={self.trans.tolist()!r})"


def _rodrigues_coeffs(theta):
    """Coefficients (a, b, c) with R = I + a K + b K^2, V = I + b K + c K^2.

    K is the unnormalized skew of the rotation vector; a = sin(t)/t,
    b = (1 - cos(t))/t^2, c = (t - sin(t))/t^3, each with its series form
    below ANGLE_EPS.  b uses the half-angle identity 1 - cos t = 2 sin^2(t/2)
    so it keeps full precision down to the switch point.
    """
    if theta < ANGLE_EPS:
        t2 = theta * theta
        a = 1.0 - t2 / 6.0 * (1.0 - t2 / 20.0)
        b = 0.5 - t2 / 24.0 * (1.0 - t2 / 30.0)
        c = 1.0 / 6.0 - t2 / 120.0 * (1.0 - t2 / 42.0)
    else:
        a = np.sin(theta) / theta
        half_sin = np.sin(theta / 2.0)
        b = 2.0 * half_sin * half_sin / (theta * theta)
        c = (theta - np.sin(theta)) / (theta ** 3)
    return a, b, c


def exp_map(twist):
    """Exponential map from a twist (angular, linear) to a Pose."""
    twist = np.asarray(twist, dtype=float)
    if twist.shape != (6,):
        raise ValueError(f"twist must be a 6-vector, got shape {twist.shape}")
    if not np.isfinite(twist).all():
        raise ValueError("twist entries must be finite")
    w, v = twist[:3], twist[3:]
    theta = np.linalg.norm(w)
    k = skew(w)
    k2 = k @ k
    a, b, c = _rodrigues_coeffs(theta)
    rot = np.eye(3) + a * k + b * k2
    vmat = np.eye(3) + b * k + c * k2
    return Pose(rot, vmat @ v)


def log_map(pose):
    """Logarithm map from a Pose to a twist (angular, linear).

    Raises ValueError when the rotation angle is within BRANCH_MARGIN of pi;
    the principal branch is not defined there and callers must stay away
    from the cut.
    """
    rot, trans = pose.rot, pose.trans
    vee = unskew(rot - rot.T)
    # |vee| = 2 sin(theta); atan2 recovers theta with ~eps absolute error on
    # the whole principal range, where arccos of the trace loses digits at
    # both ends
    sin_theta = np.linalg.norm(vee) / 2.0
    cos_theta = (np.trace(rot) - 1.0) / 2.0
    theta = np.arctan2(sin_theta, cos_theta)
    if theta >= np.pi - BRANCH_MARGIN:
        raise ValueError(
            f"rotation angle {theta:.9f} is within {BRANCH_MARGIN:g} of pi; "
            "principal-branch logarithm rejected"
        )
    if sin_theta < 1e-12:
        # sin(t)/t is 1 to double precision here
        w = vee / 2.0
    else:
        w = theta / (2.0 * sin_theta) * vee
    k = skew(w)
    k2 = k @ k
    if theta < ANGLE_EPS:
        t2 = theta * theta
        coeff = 1.0 / 12.0 + t2 / 720.0
    else:
        half = theta / 2.0
        coeff = (1.0 / (theta * theta)
                 - np.cos(half) / (2.0 * theta * np.sin(half)))
    vinv = np.eye(3) - 0.5 * k + coeff * k2
    return np.concatenate([w, vinv @ trans])


def axis_angle(axis, angle):
    """Pure rotation Pose about a (unit) axis by angle radians."""
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("rotation axis must be a nonzero finite vector")
    w = axis / n * angle
    return exp_map(np.concatenate([w, np.zeros(3)]))


def translation(t):
    """Pure translation Pose."""
    return Pose(np.eye(3), np.asarray(t, dtype=float))
