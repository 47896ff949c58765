"""Tension / compression / cooperation between one agent and the rest of the group.

Positions are taken from the midpoint of the segment joining the center of
mass and the agent's grasp point: ``P0`` points to the grasp, ``P_net`` to the
center of mass. Each side contributes the sign of its force projected on its
own position vector; the mean of the two signs scales the smaller force's
projection onto its position direction. Positive means the agent and the rest
of the group pull away from each other.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .dataio import TrialRecord
from .errors import GeometryError, StreamMissingError, ValidationError
from .geometry import CartesianVector, Unit, planar_reduce_arrays
from .netforce import NO_FILTER, FilterConfig, NetForceSeries, NetSource, agent_wrench, net_series

EPS_DOT = 1e-9


class OperandMode(str, enum.Enum):
    # f_net - f0 acts at the center of mass (everything except this agent).
    OTHERS = "others"
    # f_net itself, as the formula is literally written.
    LITERAL_NET = "literal-net"


class TensionState(str, enum.Enum):
    TENSION = "tension"
    COMPRESSION = "compression"
    COOPERATION = "cooperation"


TENSION_STATES = (TensionState.TENSION, TensionState.COMPRESSION, TensionState.COOPERATION)


@dataclass(frozen=True)
class TensionSample:
    value: float
    state: TensionState
    midpoint: CartesianVector
    p0: CartesianVector
    p_net: CartesianVector
    sign_term: float


@dataclass
class TensionArrays:
    value: np.ndarray
    state: np.ndarray  # codes into TENSION_STATES
    sign_term: np.ndarray

    def __len__(self) -> int:
        return len(self.value)


@dataclass
class TensionSeries:
    agent_id: str
    mode: OperandMode
    value: np.ndarray
    state: np.ndarray
    counts: dict[TensionState, int]
    fractions: dict[TensionState, float]

    def csv_header(self) -> list[str]:
        return ["state", "count", "fraction"]

    def csv_rows(self):
        for s in TENSION_STATES:
            yield [s.value, self.counts[s], self.fractions[s]]

    def as_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "mode": self.mode.value,
            "total": int(len(self.value)),
            "counts": {s.value: self.counts[s] for s in TENSION_STATES},
            "fractions": {s.value: self.fractions[s] for s in TENSION_STATES},
        }


def _sgn(x: np.ndarray, eps: float) -> np.ndarray:
    out = np.sign(x)
    out[np.abs(x) <= eps] = 0.0
    return out


def _rowdot(a, b):
    return np.einsum("ij,ij->i", a, b)


def tension_arrays(
    f_self,
    f_net,
    grasp_pos,
    mode: OperandMode | str = OperandMode.OTHERS,
    eps_dot: float = EPS_DOT,
) -> TensionArrays:
    """Vectorized tension measure over ``(N, 3)`` arrays."""
    mode = OperandMode(mode)
    f0 = np.atleast_2d(np.asarray(f_self, dtype=float))
    fn = np.atleast_2d(np.asarray(f_net, dtype=float))
    r = np.atleast_2d(np.asarray(grasp_pos, dtype=float))
    if not (f0.shape == fn.shape == r.shape) or f0.shape[1:] != (3,):
        raise ValidationError(f"shape mismatch: {f0.shape}, {fn.shape}, {r.shape}")
    if eps_dot < 0:
        raise ValidationError("eps_dot must be >= 0")
    r_norm = np.sqrt(_rowdot(r, r))
    if np.any(r_norm == 0.0):
        raise GeometryError("grasp position coincides with the center of mass")
    midpoint = 0.5 * r
    p0 = r - midpoint
    p_net = -midpoint
    f_other = fn - f0 if mode is OperandMode.OTHERS else fn

    sign_term = (_sgn(_rowdot(f0, p0), eps_dot) + _sgn(_rowdot(f_other, p_net), eps_dot)) / 2.0
    self_is_min = _rowdot(f0, f0) <= _rowdot(f_other, f_other)
    f_min = np.where(self_is_min[:, None], f0, f_other)
    p_min = np.where(self_is_min[:, None], p0, p_net)
    # |P0| == |P_net| == |r|/2 by construction.
    magnitude = np.abs(_rowdot(f_min, p_min) / np.sqrt(_rowdot(p_min, p_min)))
    value = magnitude * sign_term + 0.0  # + 0.0 folds -0.0 into 0.0

    state = np.full(len(value), 2, dtype=np.int8)
    state[value > 0] = 0
    state[value < 0] = 1
    return TensionArrays(value=value, state=state, sign_term=sign_term)


def tension_value(
    f_self: CartesianVector,
    f_net: CartesianVector,
    grasp_pos: CartesianVector,
    operand_mode: OperandMode | str = OperandMode.OTHERS,
    eps_dot: float = EPS_DOT,
) -> TensionSample:
    """Signed tension (+) or compression (-) for one agent, in newtons.

    ``grasp_pos`` is the grasp point relative to the center of mass. In
    ``others`` mode the opposing force is ``f_net - f_self``; in
    ``literal-net`` mode it is ``f_net``.

    Example (pull-apart):
        >>> s = tension_value(CartesianVector(1, 0, 0, Unit.FORCE),
        ...                   CartesianVector(0, 0, 0, Unit.FORCE),
        ...                   CartesianVector(1, 0, 0, Unit.POSITION))
        >>> s.value, s.state.value
        (1.0, 'tension')
    """
    if f_self.unit is not Unit.FORCE or f_net.unit is not Unit.FORCE:
        raise ValidationError("tension_value expects force vectors")
    if grasp_pos.unit is not Unit.POSITION:
        raise ValidationError("grasp_pos must be a position vector")
    out = tension_arrays(f_self.as_array(), f_net.as_array(), grasp_pos.as_array(), operand_mode, eps_dot)
    mid = grasp_pos * 0.5
    return TensionSample(
        value=float(out.value[0]),
        state=TENSION_STATES[out.state[0]],
        midpoint=mid,
        p0=grasp_pos - mid,
        p_net=-mid,
        sign_term=float(out.sign_term[0]),
    )


def state_fractions(state_codes: np.ndarray) -> tuple[dict, dict]:
    counts = np.bincount(np.asarray(state_codes, dtype=np.int64), minlength=3)
    total = int(counts.sum())
    count_map = {s: int(counts[i]) for i, s in enumerate(TENSION_STATES)}
    frac_map = {s: (counts[i] / total if total else float("nan")) for i, s in enumerate(TENSION_STATES)}
    return count_map, {k: float(v) for k, v in frac_map.items()}


def classify_tension_series(
    trial: TrialRecord,
    agent_id: str,
    mode: OperandMode | str = OperandMode.OTHERS,
    eps_dot: float = EPS_DOT,
    net: NetForceSeries | None = None,
    source: NetSource | str = NetSource.KINEMATIC,
    filter_config: FilterConfig = NO_FILTER,
) -> TensionSeries:
    """Per-sample tension values and the fraction of samples in each state.

    Fractions divide by every sample in the trial.
    """
    mode = OperandMode(mode)
    meta = trial.meta
    if meta.agent(agent_id).grasp_offset is None:
        raise StreamMissingError(f"grasp_offset[{agent_id}]")
    if net is None:
        net = net_series(trial, source, filter_config)
    if not net.valid and mode is OperandMode.OTHERS:
        raise ValidationError(
            "tension in 'others' mode needs a net force with valid magnitude (supply mass or use sum-of-agents)"
        )
    f0, _ = agent_wrench(trial, agent_id, filter_config)
    grasp, _ = planar_reduce_arrays(trial.grasp_offset_world(agent_id), np.zeros((len(trial), 3)), meta.gravity_axis)
    out = tension_arrays(f0, net.force, grasp, mode, eps_dot)
    counts, fractions = state_fractions(out.state)
    return TensionSeries(agent_id, mode, out.value, out.state, counts, fractions)
