"""Net force estimation, differentiation, filtering and signed acceleration."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .dataio import TrialRecord, check_uniform
from .errors import ConfigError, SamplingError, StreamMissingError, ValidationError
from .geometry import CartesianVector, Unit, planar_reduce_arrays

V_EPS = 0.01
# Direction-only estimates treat |a| at or below this as zero (0.5 N on 20 kg).
ACCEL_EPS = 0.025


class NetSource(str, enum.Enum):
    KINEMATIC = "kinematic"
    SUM_OF_AGENTS = "sum-of-agents"
    PROVIDED = "provided"


class FilterMethod(str, enum.Enum):
    BUTTERWORTH = "zero-phase-butterworth"
    MOVING_AVERAGE = "moving-average"
    NONE = "none"


@dataclass(frozen=True)
class FilterConfig:
    cutoff_hz: float = 5.0
    order: int = 2
    method: FilterMethod = FilterMethod.BUTTERWORTH

    def __post_init__(self):
        try:
            object.__setattr__(self, "method", FilterMethod(self.method))
        except ValueError as exc:
            raise ConfigError(f"unknown filter method {self.method!r}") from exc
        if not (isinstance(self.order, int) and self.order >= 1):
            raise ConfigError(f"filter order must be an integer >= 1, got {self.order!r}")
        if not (math.isfinite(self.cutoff_hz) and self.cutoff_hz > 0):
            raise ConfigError(f"cutoff_hz must be positive, got {self.cutoff_hz!r}")

    def check(self, sample_rate: float) -> None:
        if self.method is not FilterMethod.NONE and self.cutoff_hz >= sample_rate / 2.0:
            raise ConfigError(
                f"cutoff {self.cutoff_hz} Hz is not below Nyquist ({sample_rate / 2.0} Hz)"
            )

    def as_dict(self) -> dict:
        return {"cutoff_hz": self.cutoff_hz, "order": self.order, "method": self.method.value}


NO_FILTER = FilterConfig(method=FilterMethod.NONE)


@dataclass(frozen=True)
class NetForceEstimate:
    """Net wrench on the object at one instant.

    When ``valid`` is False the vectors are unit directions (or zero) and
    their magnitudes carry no meaning.
    """

    force: CartesianVector
    torque: CartesianVector
    source: NetSource
    valid: bool


@dataclass
class NetForceSeries:
    force: np.ndarray
    torque: np.ndarray
    source: NetSource
    valid: bool
    streams: dict[str, str] = field(default_factory=dict)

    def at(self, i: int) -> NetForceEstimate:
        return NetForceEstimate(
            force=CartesianVector.from_array(self.force[i], Unit.FORCE),
            torque=CartesianVector.from_array(self.torque[i], Unit.TORQUE),
            source=self.source,
            valid=self.valid,
        )


def differentiate(samples, sample_rate: float, t=None) -> np.ndarray:
    """First derivative along axis 0.

    Central differences at interior points, first-order one-sided differences
    at the two ends. If timestamps ``t`` are given they must be uniform at
    ``1/sample_rate`` within 1%.
    """
    x = np.asarray(samples, dtype=float)
    if x.shape[0] < 3:
        raise SamplingError(f"need at least 3 samples to differentiate, got {x.shape[0]}")
    if not (sample_rate > 0 and math.isfinite(sample_rate)):
        raise SamplingError(f"sample rate must be positive, got {sample_rate!r}")
    if t is not None:
        t = np.asarray(t, dtype=float)
        if t.shape[0] != x.shape[0]:
            raise SamplingError("timestamps and samples differ in length")
        check_uniform(t, sample_rate)
    return np.gradient(x, 1.0 / sample_rate, axis=0, edge_order=1)


def lowpass(stream, config: FilterConfig, sample_rate: float) -> np.ndarray:
    """Zero-phase low-pass along axis 0; ``method=none`` returns the input values unchanged."""
    config.check(sample_rate)
    x = np.asarray(stream, dtype=float)
    if config.method is FilterMethod.NONE:
        return x.copy()
    n = x.shape[0]
    if config.method is FilterMethod.BUTTERWORTH:
        from scipy import signal

        sos = signal.butter(config.order, config.cutoff_hz, btype="low", fs=sample_rate, output="sos")
        if n < 2:
            return x.copy()
        padlen = min(3 * (2 * len(sos) + 1), n - 1)
        return signal.sosfiltfilt(sos, x, axis=0, padlen=padlen)
    # Centered boxcar with its -3 dB point near the cutoff, applied `order` times.
    width = max(1, int(round(0.443 * sample_rate / config.cutoff_hz)))
    if width % 2 == 0:
        width += 1
    from scipy import ndimage

    y = x
    for _ in range(config.order):
        y = ndimage.uniform_filter1d(y, size=width, axis=0, mode="nearest")
    return y


def signed_accel_arrays(a, v, v_eps: float = V_EPS) -> np.ndarray:
    """Row-wise ``sign(a . v) * |a|``; rows with ``|v| <= v_eps`` count as speeding up."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    if a.shape != v.shape:
        raise ValidationError(f"shape mismatch: {a.shape} vs {v.shape}")
    if not (np.isfinite(a).all() and np.isfinite(v).all()):
        raise ValidationError("non-finite acceleration or velocity")
    mag = np.sqrt(np.einsum("ij,ij->i", a, a))
    dot = np.einsum("ij,ij->i", a, v)
    speed = np.sqrt(np.einsum("ij,ij->i", v, v))
    out = np.sign(dot) * mag
    slow = speed <= v_eps
    out[slow] = mag[slow]
    return out


def signed_accel(a: CartesianVector, v: CartesianVector, v_eps: float = V_EPS) -> float:
    """Acceleration magnitude, negative when it reduces the speed.

    >>> signed_accel(CartesianVector(1, 0, 0, Unit.ACCELERATION),
    ...              CartesianVector(-2, 0, 0, Unit.VELOCITY))
    -1.0
    """
    if a.unit is not Unit.ACCELERATION or v.unit is not Unit.VELOCITY:
        raise ValidationError("signed_accel expects (acceleration, velocity) vectors")
    return float(signed_accel_arrays(a.as_array(), v.as_array(), v_eps)[0])


@dataclass
class Kinematics:
    """Object kinematic streams, recorded or derived, after filtering."""

    velocity: np.ndarray
    acceleration: np.ndarray
    yaw_rate: np.ndarray
    yaw_accel: np.ndarray
    streams: dict[str, str]


def object_kinematics(trial: TrialRecord, config: FilterConfig = NO_FILTER) -> Kinematics:
    """Collect velocity/acceleration, differentiating position or yaw where a stream is absent."""
    fs = trial.meta.sample_rate_hz
    config.check(fs)
    streams = {}

    def chain(recorded, base, name):
        if recorded is not None:
            streams[name] = "recorded"
            return lowpass(recorded, config, fs)
        streams[name] = "derived"
        return differentiate(base, fs)

    pos = trial.position if trial.velocity is not None else lowpass(trial.position, config, fs)
    vel = chain(trial.velocity, pos, "velocity")
    acc = chain(trial.acceleration, vel, "acceleration")
    yaw = np.unwrap(trial.yaw)
    if trial.yaw_rate is None:
        yaw = lowpass(yaw, config, fs)
    yaw_rate = chain(trial.yaw_rate, yaw, "yaw_rate")
    yaw_accel = chain(trial.yaw_accel, yaw_rate, "yaw_accel")
    return Kinematics(vel, acc, yaw_rate, yaw_accel, streams)


def _kinematic_net(acc, yaw_accel, mass, inertia, gravity_axis, accel_eps):
    g = np.asarray(gravity_axis, dtype=float)
    acc = np.atleast_2d(acc)
    yaw_accel = np.atleast_1d(yaw_accel)
    torque_dir = yaw_accel[:, None] * g[None, :]
    acc_planar, _ = planar_reduce_arrays(acc, np.zeros_like(acc), g)
    if mass is not None:
        force = mass * acc_planar
    else:
        norm = np.sqrt(np.einsum("ij,ij->i", acc_planar, acc_planar))
        big = norm > accel_eps
        force = np.zeros_like(acc_planar)
        force[big] = acc_planar[big] / norm[big, None]
    if inertia is not None:
        torque = inertia * torque_dir
    else:
        torque = np.sign(yaw_accel)[:, None] * g[None, :]
    return force, torque


def _sum_of_agents(trial: TrialRecord, forces: dict, torques: dict):
    g = trial.meta.gravity_axis
    total_f = np.zeros((len(trial), 3))
    total_t = np.zeros((len(trial), 3))
    for aid in trial.meta.agent_ids:
        f, tau = planar_reduce_arrays(forces[aid], torques[aid], g)
        r = trial.grasp_offset_world(aid)
        total_f = total_f + f
        total_t = total_t + (np.cross(r, f) + tau)
    _, total_t = planar_reduce_arrays(np.zeros_like(total_t), total_t, g)
    return total_f, total_t


def agent_wrench(trial: TrialRecord, agent_id: str, config: FilterConfig = NO_FILTER):
    """Planar-reduced, filtered force and torque arrays for one agent."""
    fs = trial.meta.sample_rate_hz
    trial.meta.agent(agent_id)
    f = lowpass(trial.forces[agent_id], config, fs)
    tau = lowpass(trial.torques[agent_id], config, fs)
    return planar_reduce_arrays(f, tau, trial.meta.gravity_axis)


def net_series(
    trial: TrialRecord,
    source: NetSource | str = NetSource.KINEMATIC,
    config: FilterConfig = NO_FILTER,
    provided: tuple[np.ndarray, np.ndarray] | None = None,
    kinematics: Kinematics | None = None,
    accel_eps: float = ACCEL_EPS,
) -> NetForceSeries:
    """Net wrench for every sample of ``trial``.

    Missing velocity/acceleration streams are derived by differentiation;
    which streams were recorded vs derived is reported in ``streams``.
    """
    source = NetSource(source)
    meta = trial.meta
    if source is NetSource.PROVIDED:
        if provided is None:
            raise StreamMissingError("net_force", "source 'provided' needs explicit net arrays")
        force, torque = (np.asarray(x, dtype=float) for x in provided)
        if force.shape != (len(trial), 3) or torque.shape != (len(trial), 3):
            raise ValidationError("provided net arrays must be (N, 3)")
        return NetForceSeries(force.copy(), torque.copy(), source, True, {"net": "provided"})
    if source is NetSource.SUM_OF_AGENTS:
        fs = meta.sample_rate_hz
        config.check(fs)
        forces = {a: lowpass(trial.forces[a], config, fs) for a in meta.agent_ids}
        torques = {a: lowpass(trial.torques[a], config, fs) for a in meta.agent_ids}
        force, torque = _sum_of_agents(trial, forces, torques)
        return NetForceSeries(force, torque, source, True, {"net": "sum-of-agents"})
    kin = kinematics if kinematics is not None else object_kinematics(trial, config)
    force, torque = _kinematic_net(
        kin.acceleration, kin.yaw_accel, meta.mass_kg, meta.inertia_z, meta.gravity_axis, accel_eps
    )
    valid = meta.mass_kg is not None and meta.inertia_z is not None
    return NetForceSeries(force, torque, source, valid, dict(kin.streams))


def estimate_net(
    trial: TrialRecord,
    t_index: int,
    source: NetSource | str = NetSource.KINEMATIC,
    provided: tuple | None = None,
    accel_eps: float = ACCEL_EPS,
) -> NetForceEstimate:
    """Net wrench at one sample, using only streams present in the trial.

    Raises:
        StreamMissingError: the kinematic source needs recorded
            ``acceleration`` and ``yaw_accel`` streams.
    """
    source = NetSource(source)
    if not (-len(trial) <= t_index < len(trial)):
        raise ValidationError(f"t_index {t_index} out of range for {len(trial)} samples")
    meta = trial.meta
    if source is NetSource.KINEMATIC:
        for name in ("acceleration", "yaw_accel"):
            if getattr(trial, name) is None:
                raise StreamMissingError(name, "kinematic net force")
        force, torque = _kinematic_net(
            trial.acceleration[t_index], trial.yaw_accel[t_index],
            meta.mass_kg, meta.inertia_z, meta.gravity_axis, accel_eps,
        )
        valid = meta.mass_kg is not None and meta.inertia_z is not None
        return NetForceEstimate(
            CartesianVector.from_array(force[0], Unit.FORCE),
            CartesianVector.from_array(torque[0], Unit.TORQUE),
            source, valid,
        )
    if source is NetSource.SUM_OF_AGENTS:
        idx = t_index % len(trial)
        sl = slice(idx, idx + 1)
        sub = TrialRecord(
            meta=meta, t=trial.t[sl],
            forces={a: trial.forces[a][sl] for a in meta.agent_ids},
            torques={a: trial.torques[a][sl] for a in meta.agent_ids},
            position=trial.position[sl], yaw=trial.yaw[sl],
        )
        force, torque = _sum_of_agents(sub, sub.forces, sub.torques)
        return NetForceEstimate(
            CartesianVector.from_array(force[0], Unit.FORCE),
            CartesianVector.from_array(torque[0], Unit.TORQUE),
            source, True,
        )
    series = net_series(trial, source, provided=provided)
    return series.at(t_index)
