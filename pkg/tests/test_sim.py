import json

import numpy as np
import pytest

from _helpers import carry_scenario
from forcedecomp.dataio import write_trial
from forcedecomp.errors import ConfigError, InstabilityError
from forcedecomp.geometry import decompose_arrays, planar_reduce_arrays
from forcedecomp.netforce import net_series
from forcedecomp.sim import (
    AgentSpec,
    ObjectState,
    PolicyContext,
    SimScenario,
    agent_noise,
    agent_policy,
    load_scenario,
    run_scenario,
    step,
)

ZERO_W = ((0.0, 0.0, 0.0), (0.0, 0.0, 0.0))


def two_agents(**kw):
    return SimScenario(
        agents=[AgentSpec("a", (1.0, 0.0, 0.0), "scripted", {"profile": [[0, [0, 0, 0]]]}),
                AgentSpec("b", (-1.0, 0.0, 0.0), "scripted", {"profile": [[0, [0, 0, 0]]]})],
        **kw,
    )


# ----------------------------------------------------------------------- step


def test_step_at_rest():
    s = ObjectState()
    assert step(s, [ZERO_W, ZERO_W], two_agents()) == s


def test_step_constant_force():
    sc = two_agents(mass=20.0, dt=0.005)
    s = ObjectState()
    for _ in range(200):
        s = step(s, [((20.0, 0.0, 0.0), (0, 0, 0)), ZERO_W], sc)
    assert s.velocity[0] == pytest.approx(1.0, abs=1e-12)
    assert s.velocity[1] == 0.0
    # Semi-implicit Euler: x = dt^2 * a * n(n+1)/2.
    assert s.position[0] == pytest.approx(0.005**2 * 1.0 * 200 * 201 / 2, rel=1e-12)


def test_step_opposed_pull_is_static():
    s = step(ObjectState(), [((5.0, 0, 0), (0, 0, 0)), ((-5.0, 0, 0), (0, 0, 0))], two_agents())
    assert s == ObjectState()


def test_step_couple_spins():
    s = step(ObjectState(), [((0, 1.0, 0), (0, 0, 0)), ((0, -1.0, 0), (0, 0, 0))], two_agents(inertia_z=2.0))
    assert s.velocity == (0.0, 0.0)
    assert s.yaw_rate == pytest.approx(2.0 / 2.0 * 0.005)


# ------------------------------------------------------------------- policies


def ctx(state=ObjectState(), gv=(0.0, 0.0), t=0.0):
    return PolicyContext(t, 0.005, state, (1.0, 0.0), gv)


def test_damper_at_rest_is_idle():
    assert agent_policy("follower-damper", ctx()) == ZERO_W


def test_damper_opposes_grasp_velocity():
    f, _ = agent_policy("follower-damper", ctx(gv=(0.5, -1.0)), {"b": 10.0})
    assert f == (-5.0, 10.0, 0.0)


def test_leader_at_waypoint_is_idle():
    state = ObjectState(position=(2.0, 3.0))
    assert agent_policy("leader-waypoint-pd", ctx(state), waypoints=[(2.0, 3.0)]) == ZERO_W


def test_leader_saturates():
    f, _ = agent_policy("leader-waypoint-pd", ctx(), {"f_max": 10.0}, waypoints=[(100.0, 0.0)])
    assert f == (10.0, 0.0, 0.0)


def test_scripted_interpolates():
    params = {"profile": [[0.0, [1, 0, 0]], [1.0, [3, 0, 0]]]}
    assert agent_policy("scripted", ctx(t=0.5), params)[0] == (2.0, 0.0, 0.0)
    assert agent_policy("scripted", ctx(t=5.0), params)[0] == (3.0, 0.0, 0.0)


def test_unknown_policy():
    with pytest.raises(ConfigError):
        agent_policy("telepathy", ctx())
    with pytest.raises(ConfigError):
        AgentSpec("x", (0, 0, 0), "telepathy")


def test_scenario_validation():
    with pytest.raises(ConfigError):
        SimScenario(agents=[])
    with pytest.raises(ConfigError):
        two_agents(mass=0.0)
    with pytest.raises(ConfigError):
        SimScenario(agents=[AgentSpec("l", (1, 0, 0), "leader-waypoint-pd")])


# ------------------------------------------------------------------ scenarios


def leader_damper(duration):
    return SimScenario(
        agents=[AgentSpec("leader", (1.0, 0.0, 0.0), "leader-waypoint-pd"),
                AgentSpec("follower", (-1.0, 0.0, 0.0), "follower-damper")],
        waypoints=[(5.0, 0.0)], duration=duration,
    )


def test_reaches_waypoint():
    trial = run_scenario(leader_damper(20.0))
    end = trial.position[-1]
    assert np.hypot(end[0] - 5.0, end[1]) < 0.1
    # Regression pin for the default gains.
    assert end[0] == pytest.approx(4.999951842240964, abs=1e-12)


def test_seeded_runs_are_byte_identical(tmp_path):
    sc = carry_scenario(duration=3.0, noise=0.5)
    write_trial(run_scenario(sc, seed=42), tmp_path / "a.jsonl")
    write_trial(run_scenario(sc, seed=42), tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    write_trial(run_scenario(sc, seed=43), tmp_path / "c.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() != (tmp_path / "c.jsonl").read_bytes()


def test_zero_noise_sensed_equals_true(carry_trial):
    for aid in carry_trial.meta.agent_ids:
        assert np.array_equal(carry_trial.forces[aid], carry_trial.true_forces[aid])
        assert np.array_equal(carry_trial.torques[aid], carry_trial.true_torques[aid])


def test_gravity_share_on_vertical_channel(carry_trial):
    for aid in carry_trial.meta.agent_ids:
        assert np.all(carry_trial.true_forces[aid][:, 2] == -20.0 * 9.81 / 2)


def test_newton_holds_each_step(carry_trial):
    fx = 0.0 + carry_trial.true_forces["leader"][:, 0] + carry_trial.true_forces["follower"][:, 0]
    assert np.array_equal(fx / 20.0, carry_trial.acceleration[:, 0])


def test_position_derivatives_match_acceleration(carry_trial):
    dt = 0.005
    g = np.gradient(np.gradient(carry_trial.position, dt, axis=0, edge_order=1), dt, axis=0, edge_order=1)
    a = carry_trial.acceleration
    mag = np.linalg.norm(a, axis=1)
    sel = np.zeros(len(a), bool)
    sel[2:-2] = mag[2:-2] > 0.05
    rel = np.linalg.norm(g - a, axis=1)[sel] / mag[sel]
    assert rel.max() <= 0.02


def test_parallel_components_close_on_net(carry_trial):
    f = {k: planar_reduce_arrays(carry_trial.true_forces[k], carry_trial.true_torques[k])[0]
         for k in carry_trial.meta.agent_ids}
    net = f["leader"] + f["follower"]
    decomp = {k: decompose_arrays(v, net) for k, v in f.items()}
    total_par = sum(d.parallel_signed_mag for d in decomp.values())
    total_perp = sum(d.perpendicular for d in decomp.values())
    norm = np.linalg.norm(net, axis=1)
    ok = norm > 1e-9
    assert np.max(np.abs(total_par - norm)[ok] / norm[ok]) <= 1e-9
    assert np.max(np.linalg.norm(total_perp, axis=1)[ok] / norm[ok]) <= 1e-9


def test_speed_bounded_with_damper(carry_trial):
    # Terminal speed under the saturated leader is f_max / b = 3 m/s.
    assert np.linalg.norm(carry_trial.velocity, axis=1).max() <= 3.0


def test_divergence_guard():
    sc = SimScenario(agents=[AgentSpec("x", (1.0, 0, 0), "scripted", {"profile": [[0, [1e9, 0, 0]]]})],
                     duration=1.0)
    with pytest.raises(InstabilityError):
        run_scenario(sc)


def test_noise_independent_of_agent_order():
    sc = carry_scenario(duration=1.0, noise=0.3)
    rev = carry_scenario(duration=1.0, noise=0.3)
    rev.agents = list(reversed(rev.agents))
    a, b = run_scenario(sc), run_scenario(rev)
    for aid in ("leader", "follower"):
        noise_a = a.forces[aid] - a.true_forces[aid]
        noise_b = b.forces[aid] - b.true_forces[aid]
        assert np.array_equal(noise_a, noise_b)
    assert np.array_equal(agent_noise(1, "x", 4, 1.0, 0.0), agent_noise(1, "x", 4, 1.0, 0.0))


def test_extra_idle_agents_leave_decomposition_unchanged():
    base = carry_scenario(duration=5.0, noise=0.4)
    more = carry_scenario(duration=5.0, noise=0.4)
    more.agents = more.agents + [
        AgentSpec(f"idle{i}", (0.0, 0.7 * (i + 1), 0.0), "scripted", {"profile": [[0, [0, 0, 0]]]})
        for i in range(2)
    ]
    outs = []
    for sc in (base, more):
        trial = run_scenario(sc)
        for source in ("sum-of-agents", "kinematic"):
            net = net_series(trial, source)
            f_self = planar_reduce_arrays(trial.forces["leader"], trial.torques["leader"])[0]
            d = decompose_arrays(f_self, net.force, 0.5)
            outs.append((source, d.parallel.tobytes(), d.perpendicular.tobytes(),
                         d.theta_deg.tobytes(), d.category.tobytes()))
    assert outs[:2] == outs[2:]


def test_scenario_file_round_trip(tmp_path):
    sc = carry_scenario(duration=1.0)
    path = tmp_path / "s.json"
    path.write_text(json.dumps(sc.as_dict()))
    assert load_scenario(path).as_dict() == sc.as_dict()
    path.write_text(json.dumps({**sc.as_dict(), "bogus": 1}))
    with pytest.raises(ConfigError):
        load_scenario(path)
