"""Scenario builders and small utilities shared by the test modules."""

import json
import subprocess
import sys

import numpy as np
from forcedecomp.sim import AgentSpec, SimScenario, run_scenario

# A closed loop long enough that the leader's reference keeps moving for 30 s.
LOOP_WAYPOINTS = [(4.0, 0.0), (4.0, 3.0), (0.0, 3.0), (0.0, 0.0), (3.0, 1.0)]


def carry_scenario(duration=30.0, noise=0.0, seed=7, follower="follower-damper", **kw):
    agents = [
        AgentSpec("leader", (1.0, 0.2, 0.0), "leader-waypoint-pd", noise_std=noise, torque_noise_std=noise / 10),
        AgentSpec("follower", (-1.0, 0.0, 0.0), follower, noise_std=noise, torque_noise_std=noise / 10),
    ]
    return SimScenario(agents=agents, mass=20.0, inertia_z=8.0, dt=0.005, duration=duration,
                       seed=seed, waypoints=LOOP_WAYPOINTS, **kw)


def pull_apart_scenario(duration=2.0):
    """Two scripted agents pulling outward with equal force: static tension."""
    agents = [
        AgentSpec("a", (1.0, 0.0, 0.0), "scripted", {"profile": [[0.0, [5.0, 0.0, 0.0]]]}),
        AgentSpec("b", (-1.0, 0.0, 0.0), "scripted", {"profile": [[0.0, [-5.0, 0.0, 0.0]]]}),
    ]
    return SimScenario(agents=agents, duration=duration, seed=1)


def scenario_json(scenario) -> str:
    return json.dumps(scenario.as_dict())


def run_cli(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "forcedecomp", *map(str, args)],
                          capture_output=True, text=True, cwd=cwd)


def random_rotation(rng):
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])
