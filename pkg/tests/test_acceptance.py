"""Acceptance suite: one PASS/FAIL line per criterion, plus timings.

Run with ``pytest -v tests/test_acceptance.py``; the report lines are written
straight to the terminal.  Lines tagged INFO are sensitivity checks and are
never asserted.
"""

import dataclasses
import hashlib
import itertools
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from roadbound import bingham, cli, conic, fileio, simulator
from roadbound.bingham import MotionDelta
from roadbound.conic import FieldOfView
from roadbound.evaluation import evaluate_run
from roadbound.mixture import Candidate, Datagram, MixtureState, e_step, expected_pi, m_step, run_mfvi
from roadbound.proposal import ProposerConfig, confidence, propose, weighted_sample
from roadbound.tracker import BoundaryTracker, TrackerConfig, _prune, update_concentrations

from conftest import fixture_path, planted_datagram

FOV = FieldOfView()


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail, elapsed=None, limit=None):
        timing = ""
        if elapsed is not None:
            timing = f" [{elapsed:.2f} s"
            if limit is not None:
                timing += f" / {limit:g} s"
                ok = ok and elapsed < limit
            timing += "]"
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}{timing}")
        return ok
    return emit


def info(capsys, text):
    with capsys.disabled():
        print(f"\nINFO {text}")


def scene(name, **overrides):
    spec = cli.resolve_scene(name)
    return dataclasses.replace(spec, **overrides) if overrides else spec


def run_scene(spec, cfg=TrackerConfig()):
    frames, truths = simulator.generate(spec)
    estimates = BoundaryTracker(cfg).run(frames)
    return evaluate_run(estimates, truths)


def random_psd(rng):
    a = rng.normal(size=(4, 4))
    return a @ a.T


def random_mixture(rng, k):
    cands = []
    for cid in range(1, k + 1):
        c = random_psd(rng) * 10.0 ** rng.uniform(-3, 3)
        cands.append(Candidate(cid, c, c, conic.normalize(rng.normal(size=4))))
    return MixtureState(rng.uniform(0.1, 50.0, k + 1), cands)


def test_criterion_1_responsibility_normalization(report):
    rng = np.random.default_rng(1)
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(10_000):
        n = int(rng.integers(1, 61))
        z = Datagram(0.0, rng.uniform(0.0, FOV.r_max, n), rng.uniform(FOV.theta_min, FOV.theta_max, n),
                     10.0 ** rng.uniform(-3, 0, n), 10.0 ** rng.uniform(-4, -1, n))
        mix = random_mixture(rng, int(rng.integers(0, 6)))
        g = e_step(z, mix, expected_pi(mix.alpha), FOV)
        worst = max(worst, float(np.abs(g.sum(axis=1) - 1.0).max()))
    elapsed = time.perf_counter() - t0
    ok = report(1, worst <= 1e-12, f"max |row sum - 1| = {worst:.2e} over 10^4 E-steps", elapsed, 5)
    assert ok


def test_criterion_2_prediction_consistency(report):
    rng = np.random.default_rng(2)
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(1000):
        beta = conic.normalize(rng.normal(size=4))
        m = MotionDelta(rng.uniform(-3, 3), rng.uniform(-1, 1), rng.uniform(-0.5, 0.5))
        p_old = rng.uniform(-20, 20, 2)
        r0, t_0 = conic.cartesian_to_polar(p_old)
        r1, t_1 = conic.cartesian_to_polar(m.to_current(p_old))
        f = bingham.motion_matrix(m)
        worst = max(worst, abs(conic.evaluate(f @ beta, r1, t_1) - conic.evaluate(beta, r0, t_0)))
    elapsed = time.perf_counter() - t0
    ok = report(2, worst <= 1e-9, f"max residual mismatch = {worst:.2e} over 10^3 triples", elapsed, 1)
    assert ok


def test_criterion_3_eigen_mode(report):
    rng = np.random.default_rng(3)
    worst_vec = worst_res = 0.0
    t0 = time.perf_counter()
    for _ in range(1000):
        a = random_psd(rng)
        beta, lam = bingham.mode(a)
        w, v = np.linalg.eigh(a)
        ref = v[:, 0]
        worst_vec = max(worst_vec, min(np.abs(beta - ref).max(), np.abs(beta + ref).max()))
        worst_res = max(worst_res, float(np.linalg.norm(a @ beta - lam * beta)))
    elapsed = time.perf_counter() - t0
    ok = worst_vec <= 1e-8 and worst_res <= 1e-8
    ok = report(3, ok, f"max mode error = {worst_vec:.2e}, max residual = {worst_res:.2e}", elapsed, 1)
    assert ok


def test_criterion_4_m_step_oracle(report):
    rng = np.random.default_rng(4)
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(100):
        truth = conic.normalize([rng.uniform(-0.02, 0.02), rng.uniform(-0.1, 0.1), 1.0, rng.uniform(-6, 6)])
        z, _ = planted_datagram(truth, 36, 24, rng)
        prior = random_psd(rng)
        mode = conic.normalize(truth + rng.normal(0, 0.01, 4))
        mix = MixtureState([10.0, 10.0], [Candidate(1, prior, prior, mode)])
        gamma = rng.dirichlet([1.0, 1.0], size=len(z))
        out = m_step(z, gamma, mix).candidates[0].cinv
        brute = prior.copy()
        for i in range(len(z)):
            phi = conic.basis(z.r[i], z.theta[i])
            s2 = conic.pseudo_variance(mode, z.r[i], z.theta[i],
                                       np.diag([z.sigma_r[i] ** 2, z.sigma_theta[i] ** 2]))
            brute += gamma[i, 1] * np.outer(phi, phi) / s2
        # entry-wise, relative to the largest entry of the matrix
        worst = max(worst, float(np.abs(out - brute).max() / np.abs(brute).max()))
    elapsed = time.perf_counter() - t0
    ok = report(4, worst <= 1e-10, f"max entry-wise relative deviation = {worst:.2e} over 100 frames",
                elapsed, 1)
    assert ok


def _tracked_candidate(beta, rng):
    """A concentrated candidate, as left behind by a previous frame that saw 30 returns."""
    prev, n = planted_datagram(beta, 30, 0, rng)
    s2 = conic.pseudo_variance_diag(beta, prev.r, prev.theta, prev.sigma_r, prev.sigma_theta)
    cinv = bingham.update(1e-6 * np.eye(4), np.ones(n), prev.phi, s2)
    return Candidate(1, cinv, cinv, bingham.mode(cinv, beta)[0])


def recovery_rate(n_first, n_second, n_clutter, seeds=100):
    first = conic.normalize([0, 0, 1, 3.5])
    second = conic.normalize([0, 0, 1, -3.5])
    hits = 0
    for seed in range(seeds):
        rng = np.random.default_rng(seed)
        cand = _tracked_candidate(first, rng)
        parts = [planted_datagram(second, n_second, n_clutter, rng)[0]]
        if n_first:
            parts.append(planted_datagram(first, n_first, 0, rng)[0])
        z = Datagram(0.0, np.concatenate([p.r for p in parts]), np.concatenate([p.theta for p in parts]),
                     0.15, math.radians(0.5))
        res = run_mfvi(z, MixtureState([10.0, 30.0], [cand]), FOV)
        prop = propose(z, res.mixture, res.gamma, FOV, ProposerConfig(), np.random.default_rng(seed))
        if prop is not None and conic.angular_distance(prop.beta, second) < math.radians(5):
            hits += 1
    return hits


def test_criterion_5_ransac_recovery(report, capsys):
    t0 = time.perf_counter()
    # the mixture already tracks the first boundary; 30 returns on the second, 30 uniform clutter
    hits = recovery_rate(0, 30, 30)
    spot = [
        (1.0, 1, 1.0),
        (0.5, 10, 1.0 - (1.0 - 0.125) ** 10),
        (0.3, 50, 1.0 - (1.0 - 0.027) ** 50),
    ]
    spot_ok = all(abs(confidence(r, j) - want) <= 1e-12 for r, j, want in spot)
    # hand values: 1, 0.7369..., 0.7496...
    elapsed = time.perf_counter() - t0
    ok = report(5, hits >= 95 and spot_ok,
                f"planted boundary recovered within 5 deg in {hits}/100 seeds; "
                f"confidence spot checks {'match' if spot_ok else 'differ'}", elapsed, 30)
    info(capsys, f"criterion 5 split 15 first / 15 second / 30 clutter: {recovery_rate(15, 15, 30)}/100")
    assert ok


def test_criterion_6_straight_road(report, capsys):
    spec = scene("straight_road")
    t0 = time.perf_counter()
    run = run_scene(spec)
    elapsed = time.perf_counter() - t0
    m = run.sides
    ok = all(m[s].mean_mae <= 0.15 and m[s].failure_rate <= 0.05 for s in ("left", "right"))
    detail = ", ".join(f"{s} e_MAE {100 * m[s].mean_mae:.2f} cm fail {100 * m[s].failure_rate:.1f}%"
                       for s in ("left", "right"))
    ok = report(6, ok, detail, elapsed, 60)
    for label, cfg, sp in [
        ("unit-scaled process noise", TrackerConfig(process_noise=bingham.UNIT_SCALED_PROCESS_NOISE), spec),
        ("acceptance threshold 6",
         TrackerConfig(proposer=ProposerConfig(acceptance_threshold=6.0)), spec),
        ("outlier alpha0 5", TrackerConfig(alpha_outlier=5.0), spec),
        ("outlier alpha0 20", TrackerConfig(alpha_outlier=20.0), spec),
        ("r_max 50 m", TrackerConfig(fov=FieldOfView(50.0, FOV.theta_min, FOV.theta_max)),
         dataclasses.replace(spec, fov=FieldOfView(50.0, FOV.theta_min, FOV.theta_max))),
    ]:
        r = run_scene(sp, cfg).sides
        info(capsys, f"straight road, {label}: " + ", ".join(
            f"{s} {100 * r[s].mean_mae:.2f} cm / {100 * r[s].failure_rate:.1f}%" for s in ("left", "right")))
    assert ok


TRANSITIONS = (11.0, 21.0)  # arc entry and exit at 10 m/s


def transition_windows(run):
    """Per side and transition: (peak MAE in [t-1, t+3), mean MAE in [t+3, t+4), failures there)."""
    out = {}
    for side, m in run.sides.items():
        t = run.times[side]
        rows = []
        for tt in TRANSITIONS:
            near = (t >= tt - 1.0) & (t < tt + 3.0)
            after = (t >= tt + 3.0 - 1e-9) & (t < tt + 4.0 - 1e-9)
            peak = float(np.nanmax(m.frame_mae[near])) if np.isfinite(m.frame_mae[near]).any() else math.nan
            rows.append((peak, float(np.nanmean(m.frame_mae[after])) if np.isfinite(m.frame_mae[after]).any()
                         else math.nan, int(m.failed[after].sum())))
        out[side] = rows
    return out


def test_criterion_7_curved_transition(report, capsys):
    spec = scene("curved_transition")
    t0 = time.perf_counter()
    run = run_scene(spec)
    elapsed = time.perf_counter() - t0
    win = transition_windows(run)
    # e_MAE is defined over non-failed frames; failures in the window are reported alongside
    ok = all(mean <= 0.20 for rows in win.values() for _, mean, _ in rows)
    parts = []
    for side, rows in win.items():
        steady = 100 * float(np.nanmedian(run.sides[side].frame_mae))
        for tt, (peak, mean, fails) in zip(TRANSITIONS, rows):
            parts.append(f"{side}@{tt:g}s peak {100 * peak:.1f} mean+3s {100 * mean:.1f} cm"
                         f"{f' ({fails} failed)' if fails else ''}")
        parts.append(f"{side} median {steady:.1f} cm")
    ok = report(7, ok, "; ".join(parts), elapsed, 60)
    r = transition_windows(run_scene(dataclasses.replace(spec, fov=FieldOfView(30.0, FOV.theta_min, FOV.theta_max)),
                                     TrackerConfig(fov=FieldOfView(30.0, FOV.theta_min, FOV.theta_max))))
    info(capsys, "curved transition, r_max 30 m, mean+3s: " + ", ".join(
        f"{s}@{tt:g}s {100 * rows[i][1]:.1f} cm" for s, rows in r.items() for i, tt in enumerate(TRANSITIONS)))
    assert ok


def test_criterion_8_concentration_dynamics(report):
    t0 = time.perf_counter()
    c = 0.3
    mix = MixtureState([10.0, 10.0], [Candidate(1, np.eye(4), np.eye(4), conic.normalize([0, 0, 1, -3.5]))])
    gamma = np.column_stack([np.ones(8), np.zeros(8)])
    exact = Fraction(10)
    factor = Fraction(1) - Fraction(c)  # the float c, exactly
    ok = True
    pruned_at = None
    for frame in range(1, 7):
        alpha = update_concentrations(mix.alpha, gamma, c)
        exact *= factor
        ok &= Fraction(alpha[1]) == Fraction(float(exact)) or \
            abs(Fraction(alpha[1]) - exact) <= exact * Fraction(1, 2 ** 52) * frame
        mix, removed = _prune(MixtureState(alpha, mix.candidates), 2.0)
        if removed:
            pruned_at = frame
            break
    ok &= pruned_at is not None and pruned_at <= 6
    elapsed = time.perf_counter() - t0
    ok = report(8, ok, f"alpha follows 10 * 0.7^t; pruned at frame {pruned_at}", elapsed, 1)
    assert ok


def inclusion_oracle(weights, k):
    w = np.asarray(weights, dtype=float)
    pos = [i for i in range(w.size) if w[i] > 0]
    incl = np.zeros(w.size)
    for seq in itertools.permutations(pos, k):
        p, left = 1.0, w.sum()
        for i in seq:
            p *= w[i] / left
            left -= w[i]
        incl[list(seq)] += p
    return incl


def test_criterion_9_reservoir_statistics(report):
    profiles = [
        [1, 1, 1, 1, 1, 1],
        [10, 1, 1, 1, 1],
        [0.05, 0.2, 0.5, 0.9, 0.99, 0.3, 0.7],
        [1, 2, 3, 4, 5, 6, 7, 8],
        [0.0, 3.0, 0.0, 1.0, 1e-3, 2.0, 0.5],
    ]
    rng = np.random.default_rng(9)
    n = 100_000
    worst = 0.0
    t0 = time.perf_counter()
    for w in profiles:
        counts = np.zeros(len(w))
        for _ in range(n):
            counts[weighted_sample(w, 3, rng)] += 1
        p = inclusion_oracle(w, 3)
        sd = np.sqrt(n * p * (1 - p))
        dev = np.abs(counts - n * p)
        # certain or impossible items must match exactly
        z = np.where(sd > 0, dev / np.where(sd > 0, sd, 1.0), np.where(dev > 1e-6, np.inf, 0.0))
        worst = max(worst, float(z.max()))
    elapsed = time.perf_counter() - t0
    ok = report(9, worst <= 3.0, f"max deviation {worst:.2f} sigma over 5 profiles x 10^5 draws", elapsed, 10)
    assert ok


def test_criterion_10_determinism(report, tmp_path):
    t0 = time.perf_counter()
    digests = []
    for name in ("a.jsonl", "b.jsonl"):
        out = tmp_path / name
        code = cli.main(["track", fixture_path("datagrams.jsonl"), "--config", fixture_path("run_config.json"),
                         "--seed", "0", "--output", str(out)])
        assert code == 0
        digests.append(hashlib.sha256(out.read_bytes()).hexdigest())
    elapsed = time.perf_counter() - t0
    ok = report(10, digests[0] == digests[1], f"sha256 {digests[0][:16]} vs {digests[1][:16]}", elapsed, 30)
    assert ok
