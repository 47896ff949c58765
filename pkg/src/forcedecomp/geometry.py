"""Vector math for the net force method.

An agent's measured force ``f_self`` is split into the component along the
group's net force (``f_parallel``) and the remainder (``f_perpendicular``).
The angle between the two inputs is binned into five categories of interest.

Everything here has a scalar form working on :class:`CartesianVector` and an
array form (``*_arrays``) working on ``(N, 3)`` float arrays; the scalar forms
delegate to the array forms so both paths share identical numerics.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateDirectionError,
    UnitMismatchError,
    ValidationError,
)

# Reported angles are snapped to this grid (degrees). Rounding noise from a
# change of frame is ~1e-13 deg, far below the grid, so theta and category
# come out bit-identical in any frame.
THETA_RESOLUTION_DEG = 1e-6
_THETA_SCALE = 1.0 / THETA_RESOLUTION_DEG

EPS_NET_MATH = 1e-9
EPS_NET_DATA = 0.5


class Unit(str, enum.Enum):
    FORCE = "N"
    TORQUE = "N*m"
    POSITION = "m"
    VELOCITY = "m/s"
    ACCELERATION = "m/s^2"


class Category(str, enum.Enum):
    ALIGNED = "aligned"
    ACUTE = "acute"
    ORTHOGONAL = "orthogonal"
    OBTUSE = "obtuse"
    ANTAGONISTIC = "antagonistic"
    INDETERMINATE = "indeterminate"

    @property
    def code(self) -> int:
        return _CATEGORY_CODES[self]

    @classmethod
    def from_code(cls, code: int) -> "Category":
        return CATEGORIES_WITH_INDETERMINATE[int(code)]


# The five bands in angular order; array forms use the index as the code.
CATEGORIES = (
    Category.ALIGNED,
    Category.ACUTE,
    Category.ORTHOGONAL,
    Category.OBTUSE,
    Category.ANTAGONISTIC,
)
CATEGORIES_WITH_INDETERMINATE = CATEGORIES + (Category.INDETERMINATE,)
INDETERMINATE_CODE = 5
_CATEGORY_CODES = {c: i for i, c in enumerate(CATEGORIES_WITH_INDETERMINATE)}


@dataclass(frozen=True)
class CartesianVector:
    """A finite 3-vector carrying a physical unit tag."""

    x: float
    y: float
    z: float
    unit: Unit

    def __post_init__(self):
        if not isinstance(self.unit, Unit):
            try:
                object.__setattr__(self, "unit", Unit(self.unit))
            except ValueError as exc:
                raise ValidationError(f"unknown unit tag {self.unit!r}") from exc
        for name in ("x", "y", "z"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValidationError(f"component {name} is not finite: {value}")
            object.__setattr__(self, name, value)

    @classmethod
    def from_array(cls, values, unit: Unit) -> "CartesianVector":
        arr = np.asarray(values, dtype=float).reshape(-1)
        if arr.shape != (3,):
            raise ValidationError(f"expected 3 components, got shape {arr.shape}")
        return cls(float(arr[0]), float(arr[1]), float(arr[2]), unit)

    @classmethod
    def zero(cls, unit: Unit) -> "CartesianVector":
        return cls(0.0, 0.0, 0.0, unit)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def _check_same(self, other: "CartesianVector", op: str):
        if not isinstance(other, CartesianVector):
            raise TypeError(f"cannot {op} CartesianVector and {type(other).__name__}")
        if other.unit is not self.unit:
            raise UnitMismatchError(
                f"cannot {op} vectors tagged {self.unit.value} and {other.unit.value}"
            )

    def __add__(self, other: "CartesianVector") -> "CartesianVector":
        self._check_same(other, "add")
        return CartesianVector(self.x + other.x, self.y + other.y, self.z + other.z, self.unit)

    def __sub__(self, other: "CartesianVector") -> "CartesianVector":
        self._check_same(other, "subtract")
        return CartesianVector(self.x - other.x, self.y - other.y, self.z - other.z, self.unit)

    def __neg__(self) -> "CartesianVector":
        return CartesianVector(-self.x, -self.y, -self.z, self.unit)

    def __mul__(self, k: float) -> "CartesianVector":
        if isinstance(k, CartesianVector):
            raise TypeError("use dot() or cross() for vector products")
        return CartesianVector(self.x * k, self.y * k, self.z * k, self.unit)

    __rmul__ = __mul__

    def __truediv__(self, k: float) -> "CartesianVector":
        return CartesianVector(self.x / k, self.y / k, self.z / k, self.unit)

    def dot(self, other: "CartesianVector") -> float:
        self._check_same(other, "dot")
        return self.x * other.x + self.y * other.y + self.z * other.z

    def cross(self, other: "CartesianVector") -> "CartesianVector":
        """Cross product. ``position x force`` yields a torque; otherwise units must match."""
        if not isinstance(other, CartesianVector):
            raise TypeError(f"cannot cross CartesianVector and {type(other).__name__}")
        if self.unit is Unit.POSITION and other.unit is Unit.FORCE:
            unit = Unit.TORQUE
        else:
            self._check_same(other, "cross")
            unit = self.unit
        c = np.cross(self.as_array(), other.as_array())
        return CartesianVector.from_array(c, unit)

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def rotated(self, rotation) -> "CartesianVector":
        return CartesianVector.from_array(np.asarray(rotation, dtype=float) @ self.as_array(), self.unit)


@dataclass(frozen=True)
class WrenchSample:
    """Force and torque measured for one agent at time ``t``."""

    t: float
    force: CartesianVector
    torque: CartesianVector
    frame: str = "world"
    agent_id: str | None = None

    def __post_init__(self):
        if self.force.unit is not Unit.FORCE:
            raise UnitMismatchError(f"wrench force tagged {self.force.unit.value}")
        if self.torque.unit is not Unit.TORQUE:
            raise UnitMismatchError(f"wrench torque tagged {self.torque.unit.value}")
        if not math.isfinite(self.t):
            raise ValidationError("wrench timestamp is not finite")


@dataclass(frozen=True)
class CategoryBands:
    """Half-widths (degrees) of the three narrow bands around 0, 90 and 180."""

    aligned_halfwidth_deg: float = 5.0
    orthogonal_halfwidth_deg: float = 5.0
    antagonistic_halfwidth_deg: float = 5.0

    def __post_init__(self):
        for name in ("aligned_halfwidth_deg", "orthogonal_halfwidth_deg", "antagonistic_halfwidth_deg"):
            value = getattr(self, name)
            if not (0.0 < value < 45.0):
                raise ValidationError(f"{name} must lie in (0, 45), got {value}")

    @classmethod
    def parse(cls, text: str) -> "CategoryBands":
        """Parse ``"a,o,n"`` (three half-widths in degrees)."""
        parts = [p for p in text.replace(" ", "").split(",") if p]
        if len(parts) != 3:
            raise ValidationError(f"bands must be three comma-separated numbers, got {text!r}")
        return cls(*(float(p) for p in parts))

    def edges(self) -> tuple[float, float, float, float]:
        """Upper bounds of aligned, acute, orthogonal and obtuse bands."""
        return (
            self.aligned_halfwidth_deg,
            90.0 - self.orthogonal_halfwidth_deg,
            90.0 + self.orthogonal_halfwidth_deg,
            180.0 - self.antagonistic_halfwidth_deg,
        )

    def as_dict(self) -> dict:
        return {
            "aligned_halfwidth_deg": self.aligned_halfwidth_deg,
            "orthogonal_halfwidth_deg": self.orthogonal_halfwidth_deg,
            "antagonistic_halfwidth_deg": self.antagonistic_halfwidth_deg,
        }


DEFAULT_BANDS = CategoryBands()


@dataclass(frozen=True)
class DecompositionSample:
    """Parallel/perpendicular split of one measured vector against a net vector.

    The same type serves forces and torques; the unit tag of ``parallel``
    tells which. ``theta_deg`` is NaN and both components are zero when the
    sample is indeterminate.
    """

    parallel: CartesianVector
    perpendicular: CartesianVector
    theta_deg: float
    category: Category
    parallel_signed_mag: float

    @property
    def f_parallel(self) -> CartesianVector:
        return self.parallel

    @property
    def f_perpendicular(self) -> CartesianVector:
        return self.perpendicular

    @property
    def indeterminate(self) -> bool:
        return self.category is Category.INDETERMINATE


@dataclass(frozen=True)
class WrenchDecomposition:
    force: DecompositionSample
    torque: DecompositionSample

    @property
    def tau_parallel(self) -> CartesianVector:
        return self.torque.parallel

    @property
    def tau_perpendicular(self) -> CartesianVector:
        return self.torque.perpendicular


@dataclass
class DecompositionArrays:
    """Array form of a stream of decompositions (``N`` samples)."""

    parallel: np.ndarray
    perpendicular: np.ndarray
    theta_deg: np.ndarray
    category: np.ndarray
    parallel_signed_mag: np.ndarray
    net_norm: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.theta_deg)

    @property
    def determinate(self) -> np.ndarray:
        return self.category != INDETERMINATE_CODE

    def sample(self, i: int, unit: Unit = Unit.FORCE) -> DecompositionSample:
        return DecompositionSample(
            parallel=CartesianVector.from_array(self.parallel[i], unit),
            perpendicular=CartesianVector.from_array(self.perpendicular[i], unit),
            theta_deg=float(self.theta_deg[i]),
            category=Category.from_code(self.category[i]),
            parallel_signed_mag=float(self.parallel_signed_mag[i]),
        )


def _as_rows(a) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValidationError(f"expected an (N, 3) array, got shape {arr.shape}")
    return arr


def _rowdot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1] + a[:, 2] * b[:, 2]


def _rownorm(a: np.ndarray) -> np.ndarray:
    return np.sqrt(_rowdot(a, a))


def _quantize_theta(theta: np.ndarray) -> np.ndarray:
    return np.round(theta * _THETA_SCALE) / _THETA_SCALE


def angle_between_arrays(a, b) -> np.ndarray:
    """Row-wise angle in degrees, ``[0, 180]``; zero-length rows give 0.

    Uses ``atan2(|a x b|, a . b)`` rather than a clamped arccos: the two agree
    mathematically but arccos loses about half the digits near 0 and 180.
    """
    a = _as_rows(a)
    b = _as_rows(b)
    cross = np.cross(a, b)
    theta = np.degrees(np.arctan2(_rownorm(cross), _rowdot(a, b)))
    return _quantize_theta(theta)


def angle_between(a: CartesianVector, b: CartesianVector) -> float:
    """Angle between two same-unit vectors in degrees."""
    a._check_same(b, "measure angle between")
    if a.norm() == 0.0 or b.norm() == 0.0:
        raise DegenerateDirectionError("angle undefined for a zero-length vector")
    return float(angle_between_arrays(a.as_array(), b.as_array())[0])


def classify_arrays(theta_deg, bands: CategoryBands = DEFAULT_BANDS) -> np.ndarray:
    """Category codes for an array of angles; NaN maps to indeterminate."""
    theta = np.asarray(theta_deg, dtype=float)
    nan = np.isnan(theta)
    if np.any((theta[~nan] < 0.0) | (theta[~nan] > 180.0)):
        raise ValidationError("theta must lie in [0, 180] degrees")
    e_aligned, e_acute, e_orth, e_obtuse = bands.edges()
    codes = np.full(theta.shape, 4, dtype=np.int8)
    # Narrow bands own their closed boundaries.
    codes[theta < e_obtuse] = 3
    codes[theta <= e_orth] = 2
    codes[theta < e_acute] = 1
    codes[theta <= e_aligned] = 0
    codes[nan] = INDETERMINATE_CODE
    return codes


def classify_category(theta_deg: float, bands: CategoryBands = DEFAULT_BANDS) -> Category:
    if not (0.0 <= theta_deg <= 180.0):
        raise ValidationError(f"theta must lie in [0, 180] degrees, got {theta_deg}")
    return Category.from_code(classify_arrays(np.array([theta_deg]), bands)[0])


def decompose_arrays(
    self_vec,
    net_vec,
    eps_net: float = EPS_NET_MATH,
    bands: CategoryBands = DEFAULT_BANDS,
) -> DecompositionArrays:
    """Decompose each row of ``self_vec`` against the matching row of ``net_vec``.

    Rows whose net norm is ``<= eps_net`` are indeterminate: zero components,
    NaN angle.
    """
    s = _as_rows(self_vec)
    n = _as_rows(net_vec)
    if s.shape != n.shape:
        raise ValidationError(f"shape mismatch: {s.shape} vs {n.shape}")
    if eps_net < 0 or not math.isfinite(eps_net):
        raise ValidationError(f"eps_net must be finite and >= 0, got {eps_net}")
    if not (np.isfinite(s).all() and np.isfinite(n).all()):
        raise ValidationError("non-finite vector components")

    net_norm = _rownorm(n)
    ok = net_norm > eps_net
    safe_norm = np.where(ok, net_norm, 1.0)
    unit_net = n / safe_norm[:, None]
    signed = _rowdot(s, n) / safe_norm
    signed[~ok] = 0.0
    parallel = signed[:, None] * unit_net
    parallel[~ok] = 0.0
    perpendicular = s - parallel
    perpendicular[~ok] = 0.0

    theta = angle_between_arrays(s, n)
    theta[~ok] = np.nan
    return DecompositionArrays(
        parallel=parallel,
        perpendicular=perpendicular,
        theta_deg=theta,
        category=classify_arrays(theta, bands),
        parallel_signed_mag=signed,
        net_norm=net_norm,
    )


def _decompose(self_vec: CartesianVector, net_vec: CartesianVector, unit: Unit, eps_net, bands):
    for v in (self_vec, net_vec):
        if v.unit is not unit:
            raise UnitMismatchError(f"expected {unit.value}, got {v.unit.value}")
    out = decompose_arrays(self_vec.as_array(), net_vec.as_array(), eps_net, bands)
    return out.sample(0, unit)


def decompose_force(
    f_self: CartesianVector,
    f_net: CartesianVector,
    eps_net: float = EPS_NET_MATH,
    bands: CategoryBands = DEFAULT_BANDS,
) -> DecompositionSample:
    """Split ``f_self`` into components parallel and perpendicular to ``f_net``.

    ``parallel`` is the orthogonal projection of ``f_self`` onto ``f_net`` and
    ``perpendicular = f_self - parallel``, so the two always sum back to
    ``f_self``. ``parallel_signed_mag`` is positive when the agent pushes along
    the net force.

    Example:
        >>> s = decompose_force(CartesianVector(3, 4, 0, Unit.FORCE),
        ...                     CartesianVector(1, 0, 0, Unit.FORCE))
        >>> s.parallel.x, s.perpendicular.y, s.category
        (3.0, 4.0, <Category.ACUTE: 'acute'>)
    """
    return _decompose(f_self, f_net, Unit.FORCE, eps_net, bands)


def decompose_torque(
    tau_self: CartesianVector,
    tau_net: CartesianVector,
    eps_net: float = EPS_NET_MATH,
    bands: CategoryBands = DEFAULT_BANDS,
) -> DecompositionSample:
    """Torque analogue of :func:`decompose_force`."""
    return _decompose(tau_self, tau_net, Unit.TORQUE, eps_net, bands)


def decompose_wrench(
    self_wrench: WrenchSample,
    net_force: CartesianVector,
    net_torque: CartesianVector,
    eps_force: float = EPS_NET_MATH,
    eps_torque: float = EPS_NET_MATH,
    bands: CategoryBands = DEFAULT_BANDS,
) -> WrenchDecomposition:
    return WrenchDecomposition(
        force=decompose_force(self_wrench.force, net_force, eps_force, bands),
        torque=decompose_torque(self_wrench.torque, net_torque, eps_torque, bands),
    )


def reversed_rejection(f_self: CartesianVector, f_net: CartesianVector) -> CartesianVector:
    """``projection - f_self``: the rejection with its sign flipped.

    Kept only so tests can show this form does not reconstruct ``f_self``
    (``parallel + reversed_rejection == 2 * parallel - f_self``). Use
    :func:`decompose_force` for analysis.
    """
    f_self._check_same(f_net, "project")
    n = f_net.norm()
    if n == 0.0:
        raise DegenerateDirectionError("net force has zero length")
    parallel = f_net * (f_self.dot(f_net) / n / n)
    return parallel - f_self


@dataclass(frozen=True)
class PlanarMask:
    """Which channels survive gravity reduction, expressed in the gravity frame."""

    horizontal_force: bool = True
    vertical_force: bool = False
    horizontal_torque: bool = False
    vertical_torque: bool = True

    def as_dict(self) -> dict:
        return {
            "horizontal_force": self.horizontal_force,
            "vertical_force": self.vertical_force,
            "horizontal_torque": self.horizontal_torque,
            "vertical_torque": self.vertical_torque,
        }


DEFAULT_MASK = PlanarMask()


def _check_axis(axis) -> np.ndarray:
    g = np.asarray(axis.as_array() if isinstance(axis, CartesianVector) else axis, dtype=float)
    if g.shape != (3,) or not np.isfinite(g).all():
        raise ValidationError(f"gravity axis must be a finite 3-vector, got {axis!r}")
    if abs(float(np.linalg.norm(g)) - 1.0) > 1e-9:
        raise ValidationError(f"gravity axis must have unit norm, got {np.linalg.norm(g)!r}")
    return g


def _split(v: np.ndarray, g: np.ndarray, keep_h: bool, keep_v: bool) -> np.ndarray:
    if keep_h and keep_v:
        return v.copy()
    nonzero = np.flatnonzero(g)
    if len(nonzero) == 1:
        # Coordinate axis: mask components so kept channels are untouched bitwise.
        out = v.copy()
        i = nonzero[0]
        if not keep_v:
            out[:, i] = 0.0
        if not keep_h:
            others = [j for j in range(3) if j != i]
            out[:, others] = 0.0
        return out
    vertical = (v @ g)[:, None] * g[None, :]
    if keep_v:
        return vertical
    if keep_h:
        return v - vertical
    return np.zeros_like(v)


def planar_reduce_arrays(force, torque, gravity_axis=(0.0, 0.0, 1.0), mask: PlanarMask = DEFAULT_MASK):
    """Array form of :func:`planar_reduce`; returns ``(force, torque)``."""
    g = _check_axis(gravity_axis)
    f = _as_rows(force)
    t = _as_rows(torque)
    return (
        _split(f, g, mask.horizontal_force, mask.vertical_force),
        _split(t, g, mask.horizontal_torque, mask.vertical_torque),
    )


def planar_reduce(
    wrench: WrenchSample,
    gravity_axis=(0.0, 0.0, 1.0),
    mask: PlanarMask = DEFAULT_MASK,
) -> WrenchSample:
    """Drop the channels attributed to gravity.

    By default keeps the horizontal force plane and the torque about the
    gravity axis (three of the six channels). The force along gravity and the
    torques about horizontal axes, which a vertical load produces, are removed.
    """
    f, t = planar_reduce_arrays(wrench.force.as_array(), wrench.torque.as_array(), gravity_axis, mask)
    return WrenchSample(
        t=wrench.t,
        force=CartesianVector.from_array(f[0], Unit.FORCE),
        torque=CartesianVector.from_array(t[0], Unit.TORQUE),
        frame=wrench.frame,
        agent_id=wrench.agent_id,
    )
