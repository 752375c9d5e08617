"""Calibrated camera geometry: projection, undistortion, ground-plane
back-projection and vertical height solving.

Coordinate conventions
======================
World frame (right-handed):
  - x, y span the ground plane, f is height above it (f = 0 on the ground,
    increasing upward).
Camera frame (standard computer vision):
  - x right, y down, z forward along the optical axis.
  - ``rotation`` maps world vectors into the camera frame; ``translation``
    is the world origin expressed in camera coordinates (meters).
Image frame:
  - u right, v down, in pixels, origin at the top-left corner. Pixel (i, j)
    is addressed at u = i, v = j (no half-pixel offset).

The composed 3x4 projection is ``T = K [R|t]`` with K built from the focal
and principal-point fields (zero skew, independent focal_x/focal_y). Radial
distortion uses two coefficients applied in normalized coordinates:
``x_d = x_n (1 + k1 r^2 + k2 r^4)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DescryError, LoadError

ROTATION_TOL = 1e-9
UNDISTORT_TOL = 1e-9
UNDISTORT_MAX_ITER = 50


class BehindCameraError(DescryError):
    """Point or ground intersection lies at non-positive camera depth."""


class DegenerateRayError(DescryError):
    """Viewing ray is parallel to the ground plane (or numerically so)."""


class UnobservableHeightError(DescryError):
    """Height equations are rank deficient for the given head/feet pair."""


class UndistortConvergenceError(DescryError):
    """Fixed-point undistortion failed to converge; carries last residual."""

    def __init__(self, residual):
        super().__init__(f"undistortion did not converge (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class ImagePoint:
    u: float
    v: float


@dataclass(frozen=True)
class WorldPoint:
    x: float
    y: float
    f: float


@dataclass(frozen=True)
class HeightBias:
    """Systematic estimated-minus-annotated height offset, fit on training data."""

    bias: float = 0.0
    sample_count: int = 0


@dataclass(frozen=True)
class CameraModel:
    focal_x: float
    focal_y: float
    principal_x: float
    principal_y: float
    rotation: np.ndarray
    translation: np.ndarray
    k1: float = 0.0
    k2: float = 0.0
    image_width: int = 0
    image_height: int = 0
    camera_id: str = ""

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        if not (self.focal_x > 0 and self.focal_y > 0):
            raise ValueError("focal lengths must be positive")
        if not np.all(np.isfinite(R)) or not np.all(np.isfinite(t)):
            raise ValueError("rotation/translation must be finite")
        if np.max(np.abs(R.T @ R - np.eye(3))) >= ROTATION_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) >= ROTATION_TOL:
            raise ValueError("rotation determinant must be +1")
        if np.linalg.matrix_rank(self.projection_matrix()) != 3:
            raise ValueError("projection matrix is rank deficient")

    def intrinsic_matrix(self) -> np.ndarray:
        return np.array(
            [
                [self.focal_x, 0.0, self.principal_x],
                [0.0, self.focal_y, self.principal_y],
                [0.0, 0.0, 1.0],
            ]
        )

    def projection_matrix(self) -> np.ndarray:
        """The 3x4 composition of intrinsics with [R|t]."""
        Rt = np.hstack([self.rotation, self.translation[:, None]])
        return self.intrinsic_matrix() @ Rt

    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation


def _distort_normalized(camera: CameraModel, x: float, y: float) -> tuple[float, float]:
    r2 = x * x + y * y
    factor = 1.0 + camera.k1 * r2 + camera.k2 * r2 * r2
    return x * factor, y * factor


def project(camera: CameraModel, p: WorldPoint) -> ImagePoint:
    """Project a world point to distorted pixel coordinates.

    Raises BehindCameraError when the point has non-positive camera depth.
    """
    pw = np.array([p.x, p.y, p.f])
    pc = camera.rotation @ pw + camera.translation
    if pc[2] <= 0:
        raise BehindCameraError("behind camera")
    xn, yn = pc[0] / pc[2], pc[1] / pc[2]
    xd, yd = _distort_normalized(camera, xn, yn)
    return ImagePoint(
        camera.principal_x + camera.focal_x * xd,
        camera.principal_y + camera.focal_y * yd,
    )


def undistort(camera: CameraModel, p: ImagePoint) -> ImagePoint:
    """Invert the radial distortion by fixed-point iteration.

    Returns the ideal pixel whose distortion reproduces ``p``. Convergence is
    checked in normalized units (tolerance 1e-9, at most 50 iterations).
    """
    if abs(camera.k1) > 0.5 or abs(camera.k2) > 0.5:
        raise ValueError("distortion coefficients outside the sane lens regime")
    xd = (p.u - camera.principal_x) / camera.focal_x
    yd = (p.v - camera.principal_y) / camera.focal_y
    x, y = xd, yd
    for _ in range(UNDISTORT_MAX_ITER):
        r2 = x * x + y * y
        factor = 1.0 + camera.k1 * r2 + camera.k2 * r2 * r2
        x_new, y_new = xd / factor, yd / factor
        residual = max(abs(x_new - x), abs(y_new - y))
        x, y = x_new, y_new
        if residual < UNDISTORT_TOL:
            return ImagePoint(
                camera.principal_x + camera.focal_x * x,
                camera.principal_y + camera.focal_y * y,
            )
    raise UndistortConvergenceError(residual)


def backproject_ground(camera: CameraModel, p: ImagePoint) -> WorldPoint:
    """Intersect the (already undistorted) pixel's viewing ray with f = 0.

    Uses the plane-restricted inverse of the projection matrix. Raises
    DegenerateRayError when the ray is parallel to the ground plane and
    BehindCameraError when the intersection has non-positive depth.
    """
    uv1 = np.array([p.u, p.v, 1.0])
    d_cam = np.linalg.solve(camera.intrinsic_matrix(), uv1)
    d_world = camera.rotation.T @ d_cam
    d_world = d_world / np.linalg.norm(d_world)
    if abs(d_world[2]) <= 1e-12:
        raise DegenerateRayError("degenerate ray")
    T = camera.projection_matrix()
    H = T[:, [0, 1, 3]]
    try:
        w = np.linalg.solve(H, uv1)
    except np.linalg.LinAlgError as exc:
        raise DegenerateRayError("degenerate ray") from exc
    if abs(w[2]) <= 1e-15:
        raise DegenerateRayError("degenerate ray")
    X, Y = w[0] / w[2], w[1] / w[2]
    depth = (camera.rotation @ np.array([X, Y, 0.0]) + camera.translation)[2]
    if depth <= 0:
        raise BehindCameraError("behind camera")
    return WorldPoint(X, Y, 0.0)


def estimate_height(camera: CameraModel, head: ImagePoint, feet: ImagePoint) -> float:
    """Solve the head's height above the feet's ground point.

    The feet pixel fixes (X, Y) on the ground plane; the head is assumed
    vertically above at (X, Y, H). Both pixel equations are linear in H and
    are solved jointly by least squares. Input points must be undistorted.
    """
    ground = backproject_ground(camera, feet)
    X, Y = ground.x, ground.y
    T = camera.projection_matrix()
    u, v = head.u, head.v
    a1 = u * T[2, 2] - T[0, 2]
    b1 = (T[0, 0] * X + T[0, 1] * Y + T[0, 3]) - u * (T[2, 0] * X + T[2, 1] * Y + T[2, 3])
    a2 = v * T[2, 2] - T[1, 2]
    b2 = (T[1, 0] * X + T[1, 1] * Y + T[1, 3]) - v * (T[2, 0] * X + T[2, 1] * Y + T[2, 3])
    denom = a1 * a1 + a2 * a2
    if denom < 1e-12:
        raise UnobservableHeightError("unobservable height")
    return float((a1 * b1 + a2 * b2) / denom)


def fit_height_bias(samples) -> HeightBias:
    """Mean estimated-minus-annotated offset over (estimated, annotated) pairs."""
    samples = list(samples)
    if not samples:
        raise ValueError("no samples")
    bias = sum(est - ann for est, ann in samples) / len(samples)
    return HeightBias(bias=bias, sample_count=len(samples))


def corrected_height(est: float, bias: HeightBias) -> float:
    """Subtract the fitted bias, clamping the result below at zero."""
    return max(0.0, est - bias.bias)


@dataclass(frozen=True)
class BiasTable:
    """Per-camera height biases with a global fallback.

    A camera's own bias is used only when it was fit from at least
    ``min_samples`` training pairs; otherwise the global bias applies.
    """

    global_bias: HeightBias = HeightBias()
    per_camera: dict = field(default_factory=dict)
    min_samples: int = 5

    def for_camera(self, camera_id: str) -> HeightBias:
        bias = self.per_camera.get(camera_id)
        if bias is not None and bias.sample_count >= self.min_samples:
            return bias
        return self.global_bias


def fit_bias_table(samples, min_samples: int = 5) -> BiasTable:
    """Fit per-camera biases from (camera_id, estimated, annotated) triples."""
    samples = list(samples)
    if not samples:
        raise ValueError("no samples")
    by_camera: dict[str, list] = {}
    for camera_id, est, ann in samples:
        by_camera.setdefault(camera_id, []).append((est, ann))
    return BiasTable(
        global_bias=fit_height_bias((e, a) for _, e, a in samples),
        per_camera={cid: fit_height_bias(pairs) for cid, pairs in by_camera.items()},
        min_samples=min_samples,
    )


_CALIB_SCALAR_FIELDS = {
    "focal_x": float,
    "focal_y": float,
    "principal_x": float,
    "principal_y": float,
    "k1": float,
    "k2": float,
    "image_width": int,
    "image_height": int,
}
_CALIB_REQUIRED = {"camera_id", "image_width", "image_height", "focal_x", "focal_y",
                   "principal_x", "principal_y", "k1", "k2", "rotation", "translation"}


def parse_calibration(text: str, path: str = "<calibration>") -> CameraModel:
    """Parse the key-value calibration document for one camera.

    Recognized keys: camera_id, image_width, image_height, focal_x, focal_y,
    principal_x, principal_y, k1, k2, rotation (9 numbers, row-major),
    translation (3 numbers, meters). Lines starting with '#' are comments.
    Violations of the camera invariants are rejected with a line-numbered error.
    """
    values: dict = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise LoadError("expected 'key: value'", path=path, line=lineno)
        key, _, rest = line.partition(":")
        key = key.strip()
        rest = rest.strip()
        if key in values:
            raise LoadError(f"duplicate key '{key}'", path=path, line=lineno)
        lines[key] = lineno
        try:
            if key == "camera_id":
                if not rest:
                    raise ValueError("empty camera_id")
                values[key] = rest
            elif key in _CALIB_SCALAR_FIELDS:
                values[key] = _CALIB_SCALAR_FIELDS[key](rest)
            elif key == "rotation":
                nums = [float(tok) for tok in rest.split()]
                if len(nums) != 9:
                    raise ValueError(f"rotation needs 9 numbers, got {len(nums)}")
                values[key] = np.array(nums).reshape(3, 3)
            elif key == "translation":
                nums = [float(tok) for tok in rest.split()]
                if len(nums) != 3:
                    raise ValueError(f"translation needs 3 numbers, got {len(nums)}")
                values[key] = np.array(nums)
            else:
                raise ValueError(f"unknown key '{key}'")
        except ValueError as exc:
            raise LoadError(str(exc), path=path, line=lineno) from exc
    missing = _CALIB_REQUIRED - set(values)
    if missing:
        raise LoadError(f"missing fields: {', '.join(sorted(missing))}", path=path)
    try:
        return CameraModel(
            focal_x=values["focal_x"],
            focal_y=values["focal_y"],
            principal_x=values["principal_x"],
            principal_y=values["principal_y"],
            rotation=values["rotation"],
            translation=values["translation"],
            k1=values["k1"],
            k2=values["k2"],
            image_width=values["image_width"],
            image_height=values["image_height"],
            camera_id=values["camera_id"],
        )
    except ValueError as exc:
        msg = str(exc)
        key = "rotation" if "rotation" in msg or "rank" in msg else "focal_x"
        raise LoadError(msg, path=path, line=lines.get(key)) from exc


def load_calibration(path) -> CameraModel:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_calibration(fh.read(), path=str(path))


def format_calibration(camera: CameraModel) -> str:
    """Serialize a camera back to the calibration document format."""
    rot = " ".join(repr(float(x)) for x in camera.rotation.reshape(-1))
    trans = " ".join(repr(float(x)) for x in camera.translation)
    return "\n".join(
        [
            f"camera_id: {camera.camera_id}",
            f"image_width: {camera.image_width}",
            f"image_height: {camera.image_height}",
            f"focal_x: {camera.focal_x!r}",
            f"focal_y: {camera.focal_y!r}",
            f"principal_x: {camera.principal_x!r}",
            f"principal_y: {camera.principal_y!r}",
            f"k1: {camera.k1!r}",
            f"k2: {camera.k2!r}",
            f"rotation: {rot}",
            f"translation: {trans}",
        ]
    ) + "\n"


def look_at_camera(
    position,
    target,
    focal: float = 1000.0,
    image_size: tuple[int, int] = (1280, 720),
    k1: float = 0.0,
    k2: float = 0.0,
    camera_id: str = "cam",
) -> CameraModel:
    """Build a camera at ``position`` looking toward ``target`` (world coords).

    The camera's image x axis stays parallel to the ground plane. Useful for
    synthetic scenes and tests; not a calibration estimator.
    """
    position = np.asarray(position, dtype=float)
    target = np.asarray(target, dtype=float)
    forward = target - position
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise ValueError("camera position and target coincide")
    forward = forward / norm
    up_world = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, up_world)
    r_norm = np.linalg.norm(right)
    if r_norm < 1e-12:
        # looking straight up or down: pick x axis along world x
        right = np.array([1.0, 0.0, 0.0])
    else:
        right = right / r_norm
    down = np.cross(forward, right)
    R = np.vstack([right, down, forward])
    # re-orthonormalize to keep the invariant tight under fp error
    u_svd, _, vt = np.linalg.svd(R)
    R = u_svd @ vt
    t = -R @ position
    w, h = image_size
    return CameraModel(
        focal_x=focal,
        focal_y=focal,
        principal_x=w / 2.0,
        principal_y=h / 2.0,
        rotation=R,
        translation=t,
        k1=k1,
        k2=k2,
        image_width=w,
        image_height=h,
        camera_id=camera_id,
    )
