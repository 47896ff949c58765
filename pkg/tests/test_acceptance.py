"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` to see the verdict lines.
"""

import dataclasses
import time

import numpy as np
import pytest

from _helpers import carry_scenario, random_rotation, run_cli, scenario_json
from forcedecomp.dataio import write_trial
from forcedecomp.geometry import (
    Category,
    CartesianVector,
    Unit,
    classify_arrays,
    classify_category,
    decompose_arrays,
    decompose_force,
    planar_reduce_arrays,
    reversed_rejection,
)
from forcedecomp.netforce import V_EPS, net_series, signed_accel_arrays
from forcedecomp.sim import run_scenario
from forcedecomp.stats import category_stats, circular_density
from forcedecomp.tension import TensionState, tension_arrays, tension_value

CATS = ("aligned", "acute", "orthogonal", "obtuse", "antagonistic")


@pytest.fixture
def verdict(capsys):
    def emit(name, ok, detail=""):
        with capsys.disabled():
            print(f"\n[acceptance] {name}: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
        assert ok, f"{name}: {detail}"
    return emit


def rel_err(a, b, scale):
    return np.max(np.linalg.norm(a - b, axis=-1) / scale)


def test_decomposition_algebra(verdict):
    rng = np.random.default_rng(20240101)
    n = 100_000
    s = rng.standard_normal((n, 3)) * rng.lognormal(0, 2, (n, 1))
    f = rng.standard_normal((n, 3)) * rng.lognormal(0, 2, (n, 1))
    t0 = time.perf_counter()
    d = decompose_arrays(s, f)
    elapsed = time.perf_counter() - t0
    par, perp = d.parallel, d.perpendicular
    ns = np.linalg.norm(s, axis=1)
    recon = rel_err(par + perp, s, ns)
    ortho = np.max(np.abs(np.einsum("ij,ij->i", par, perp)) / ns**2)
    pyth = np.max(np.abs(np.sum(par**2, 1) + np.sum(perp**2, 1) - ns**2) / ns**2)
    bound = np.max((np.linalg.norm(par, axis=1) - ns) / ns)
    worst = max(recon, ortho, pyth, bound)
    ok = worst <= 1e-9 and elapsed < 5.0 and not np.any(d.category == 5)
    verdict("decomposition algebra", ok, f"worst rel err {worst:.2e}, {elapsed:.3f} s for 1e5 pairs")


def test_frame_invariance(verdict):
    rng = np.random.default_rng(7)
    n = 10_000
    s = rng.standard_normal((n, 3)) * 10
    f = rng.standard_normal((n, 3)) * 10
    base = decompose_arrays(s, f)
    rots = np.stack([random_rotation(rng) for _ in range(n)])
    rs = np.einsum("nij,nj->ni", rots, s)
    rf = np.einsum("nij,nj->ni", rots, f)
    rot = decompose_arrays(rs, rf)
    theta_same = np.array_equal(base.theta_deg, rot.theta_deg)
    cat_same = np.array_equal(base.category, rot.category)
    ns = np.linalg.norm(s, axis=1)
    eq_par = rel_err(np.einsum("nij,nj->ni", rots, base.parallel), rot.parallel, ns)
    eq_perp = rel_err(np.einsum("nij,nj->ni", rots, base.perpendicular), rot.perpendicular, ns)
    k = rng.uniform(1e-3, 1e3, (n, 1))
    scaled = decompose_arrays(s, f * k)
    scale_same = (np.array_equal(base.theta_deg, scaled.theta_deg)
                  and np.array_equal(base.category, scaled.category))
    ok = theta_same and cat_same and max(eq_par, eq_perp) <= 1e-9 and scale_same
    verdict("frame invariance", ok,
            f"theta identical={theta_same}, category identical={cat_same}, "
            f"equivariance err {max(eq_par, eq_perp):.2e}, scale exact={scale_same}")


def test_category_partition(verdict):
    sweep = np.round(np.arange(0, 1801) * 0.1, 1)
    codes = classify_arrays(sweep)
    one_each = bool(np.all((codes >= 0) & (codes <= 4)))
    # Membership computed independently from the closed/open bounds.
    member = np.stack([
        (sweep >= 0) & (sweep <= 5),
        (sweep > 5) & (sweep < 85),
        (sweep >= 85) & (sweep <= 95),
        (sweep > 95) & (sweep < 175),
        (sweep >= 175) & (sweep <= 180),
    ])
    exactly_one = bool(np.all(member.sum(0) == 1))
    agrees = bool(np.array_equal(np.argmax(member, 0), codes))
    expected = {5.0: "aligned", 85.0: "orthogonal", 95.0: "orthogonal", 175.0: "antagonistic",
                0.0: "aligned", 180.0: "antagonistic"}
    bounds_ok = all(classify_category(a).value == c for a, c in expected.items())
    ok = one_each and exactly_one and agrees and bounds_ok
    verdict("category partition", ok, f"{len(sweep)} angles, counts {np.bincount(codes, minlength=5).tolist()}")


def test_oracle_equivalence(verdict, carry_trial):
    trial = carry_trial
    assert trial.meta.mass_kg == 20.0 and trial.meta.sample_rate_hz == 200.0 and len(trial) == 6000
    derived = dataclasses.replace(trial, velocity=None, acceleration=None, yaw_rate=None, yaw_accel=None)
    n = len(trial)
    interior = np.zeros(n, bool)
    interior[2:-2] = True
    worst_ang = worst_mag = 0.0
    worst_agree = 1.0
    for rec in (trial, derived):
        kin = net_series(rec, "kinematic").force
        tot = net_series(rec, "sum-of-agents").force
        mk, mt = np.linalg.norm(kin, axis=1), np.linalg.norm(tot, axis=1)
        sel = interior & (mt > 0.5)
        ang = np.degrees(np.arctan2(np.linalg.norm(np.cross(kin, tot), axis=1), np.einsum("ij,ij->i", kin, tot)))
        worst_ang = max(worst_ang, ang[sel].max())
        worst_mag = max(worst_mag, (np.abs(mk - mt) / mt)[sel].max())
        for aid in rec.meta.agent_ids:
            f = planar_reduce_arrays(rec.forces[aid], rec.torques[aid])[0]
            a = decompose_arrays(f, kin, 0.5).category[interior]
            b = decompose_arrays(f, tot, 0.5).category[interior]
            worst_agree = min(worst_agree, float(np.mean(a == b)))
    ok = worst_ang < 1.0 and worst_mag < 0.02 and worst_agree >= 0.995
    verdict("oracle equivalence", ok,
            f"max direction {worst_ang:.3g} deg, max magnitude {100 * worst_mag:.3g}%, "
            f"category agreement {100 * worst_agree:.2f}% (recorded and derived kinematics)")


def test_statistics_recovery(verdict):
    rng = np.random.default_rng(11)
    n = 100_000
    props = np.array([0.10, 0.60, 0.05, 0.23, 0.02])
    ranges = np.array([(0, 5), (5, 85), (85, 95), (95, 175), (175, 180)], dtype=float)
    which = rng.choice(5, size=n, p=props)
    lo, hi = ranges[which, 0], ranges[which, 1]
    theta = lo + (hi - lo) * rng.uniform(0.001, 0.999, n)
    table = category_stats(classify_arrays(theta), np.zeros((n, 3)), np.zeros((n, 3)))
    pct_err = max(abs(table[c].percent_time - 100 * p) for c, p in zip(CATS, props))
    mix_sum = abs(circular_density(theta).density.sum() - 1.0)
    uni = circular_density(np.random.default_rng(2).uniform(0, 180, 1_000_000)).density
    uni_err = np.max(np.abs(uni - 1 / 36))
    ok = pct_err <= 1.0 and mix_sum <= 1e-9 and uni_err <= 0.002
    verdict("statistics recovery", ok,
            f"max pct err {pct_err:.3f} pt, density sum err {mix_sum:.1e}, uniform bin err {uni_err:.4f}")


def test_signed_accel_semantics(verdict, carry_trial, noisy_trial):
    rates = []
    for trial in (carry_trial, noisy_trial):
        v = trial.velocity
        speed = np.linalg.norm(v, axis=1)
        dspeed = np.gradient(speed, 1.0 / trial.meta.sample_rate_hz)
        sa = signed_accel_arrays(trial.acceleration, v)
        sel = np.zeros(len(trial), bool)
        sel[1:-1] = speed[1:-1] > V_EPS
        rates.append(float(np.mean(np.sign(sa[sel]) == np.sign(dspeed[sel]))))
    ok = min(rates) >= 0.99
    verdict("signed acceleration", ok, "sign match " + ", ".join(f"{100 * r:.2f}%" for r in rates))


def test_tension_triptych(verdict):
    def fv(*v):
        return CartesianVector(*v, Unit.FORCE)

    grasp = CartesianVector(1, 0, 0, Unit.POSITION)
    pull = tension_value(fv(1, 0, 0), fv(0, 0, 0), grasp)
    push = tension_value(fv(-1, 0, 0), fv(0, 0, 0), grasp)
    co = tension_value(fv(-1, 0, 0), fv(-2, 0, 0), grasp)
    trip = (pull.value == 1.0 and pull.state is TensionState.TENSION
            and push.value == -1.0 and push.state is TensionState.COMPRESSION
            and co.value == 0.0 and co.state is TensionState.COOPERATION)

    rng = np.random.default_rng(3)
    n = 10_000
    f0 = rng.standard_normal((n, 3)) * 10
    fn = rng.standard_normal((n, 3)) * 10
    r = rng.standard_normal((n, 3))
    rots = np.stack([random_rotation(rng) for _ in range(n)])
    rot = lambda x: np.einsum("nij,nj->ni", rots, x)  # noqa: E731
    a = tension_arrays(f0, fn, r)
    b = tension_arrays(rot(f0), rot(fn), rot(r))
    err = float(np.max(np.abs(a.value - b.value)))
    ok = trip and err <= 1e-9
    verdict("tension triptych", ok,
            f"values {pull.value}, {push.value}, {co.value}; rotation err {err:.1e}")


def test_determinism(verdict, tmp_path):
    sc = tmp_path / "carry.json"
    sc.write_text(scenario_json(carry_scenario(duration=20.0, noise=0.5)))
    outs = []
    for tag in ("a", "b"):
        run_dir = tmp_path / tag
        run_dir.mkdir()
        trial = run_dir / "trial.jsonl"
        sim = run_cli("simulate", "--scenario", sc, "--seed", 123, "--out", trial)
        rep = run_cli("report", trial, "--agent", "follower", "--out", run_dir / "report")
        assert sim.returncode == 0 and rep.returncode == 0, sim.stderr + rep.stderr
        bundle = {p.name: p.read_bytes() for p in sorted((run_dir / "report").iterdir())}
        outs.append((trial.read_bytes(), bundle))
    sim_same = outs[0][0] == outs[1][0]
    rep_same = outs[0][1] == outs[1][1]
    verdict("determinism", sim_same and rep_same,
            f"simulate identical={sim_same}, report identical={rep_same} ({len(outs[0][1])} files)")


@pytest.fixture(scope="module")
def long_trial(tmp_path_factory):
    path = tmp_path_factory.mktemp("long") / "long.jsonl"
    trial = run_scenario(carry_scenario(duration=600.0, noise=0.5), seed=5)
    write_trial(trial, path)
    return path, len(trial)


def test_throughput(verdict, long_trial, tmp_path):
    path, n = long_trial
    times = []
    for i in range(3):
        t0 = time.perf_counter_ns()
        r = run_cli("report", path, "--agent", "follower", "--out", tmp_path / f"o{i}")
        times.append((time.perf_counter_ns() - t0) / 1e9)
        assert r.returncode == 0, r.stderr
    best = min(times)
    verdict("throughput", n == 120_000 and best < 2.0,
            f"{n} samples, best of 3 wall times {best:.3f} s (all: {', '.join(f'{t:.3f}' for t in times)})")


def test_rejection_sign_fidelity(verdict):
    """The rejection written as projection minus f_self fails to reconstruct f_self.

    The implemented rejection f_self minus projection does reconstruct it.
    """
    rng = np.random.default_rng(9)
    printed_fails = implemented_holds = 0
    for s, f in zip(rng.standard_normal((200, 3)), rng.standard_normal((200, 3))):
        s_v, f_v = CartesianVector(*s, Unit.FORCE), CartesianVector(*f, Unit.FORCE)
        d = decompose_force(s_v, f_v)
        scale = max(1.0, s_v.norm())
        printed_fails += (d.parallel + reversed_rejection(s_v, f_v) - s_v).norm() > 1e-6 * scale
        implemented_holds += (d.parallel + d.perpendicular - s_v).norm() <= 1e-9 * scale
    s_v, f_v = CartesianVector(3, 4, 0, Unit.FORCE), CartesianVector(1, 0, 0, Unit.FORCE)
    worked = decompose_force(s_v, f_v)
    example = (worked.parallel + reversed_rejection(s_v, f_v)).as_array().tolist()
    ok = printed_fails == 200 and implemented_holds == 200 and example == [3, -4, 0]
    assert worked.category is Category.ACUTE
    verdict("rejection sign fidelity", ok,
            f"printed form breaks {printed_fails}/200, implemented holds {implemented_holds}/200")
