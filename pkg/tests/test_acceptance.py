"""Acceptance gate: one test per criterion, each logging a PASS/FAIL line that
is printed in the terminal summary."""
import itertools
import json
import math
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy.stats import binom

from certirand.bits import BitString
from certirand.devices import (ROLES, all_classical_pairs, chsh_win, classical_deterministic, ideal_chsh,
                               parse_strategy, parse_strategy_file, play_pair_batch, spawn_cluster)
from certirand.errors import ConfigError
from certirand.extractor import extract, h_check, solve_spec
from certirand._kernels import mask_words_np
from certirand.lemmas import CORE, format_suite, run_suite
from certirand.orchestrator import DeviceFarm, infinite_expansion, replay, write_run_dir
from certirand.params import COS2_PI8, ProtocolConstants, delta_ledger, eps_ec, g_iter, load_constants, ruv_params
from certirand.protocol_ruv import run_ruv, select_sub_block
from certirand.protocol_vv import num_test_rounds, run_vv
from certirand.params import vv_params
from certirand.qsim import QuantumBackend
from certirand.rng import RunStreams


def _log(log, n, ok, detail, seconds, budget):
    ok = ok and seconds < budget
    log.append(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}  ({seconds:.1f}s, budget {budget:.0f}s)")
    return ok


def _cluster(strat_a, strat_b, pair, seed):
    strat = {r: ideal_chsh() for r in ROLES}
    strat[f"{pair}_a"], strat[f"{pair}_b"] = strat_a, strat_b
    cl = spawn_cluster(0, strat, QuantumBackend(), RunStreams(seed))
    return cl[f"{pair}_a"], cl[f"{pair}_b"]


def _seed(n, k):
    return BitString.random(n, np.random.default_rng([n, k, 2024]))


def test_criterion_1_tsirelson_point(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    a, b = rng.integers(0, 2, 100_000), rng.integers(0, 2, 100_000)
    x, y = play_pair_batch(*_cluster(ideal_chsh(), ideal_chsh(), "vv", 1), a, b, 0)
    rate = chsh_win(a, b, x, y).mean()
    ok = abs(rate - COS2_PI8) <= 0.01
    assert _log(acceptance_log, 1, ok, f"ideal win rate {rate:.5f} vs {COS2_PI8:.5f} +- 0.01",
                time.perf_counter() - t0, 30)


def test_criterion_2_classical_ceiling(acceptance_log):
    t0 = time.perf_counter()
    # independent enumeration with exact fractions
    best = Fraction(0)
    for ta in itertools.product((0, 1), repeat=2):
        for tb in itertools.product((0, 1), repeat=2):
            wins = sum((ta[a] ^ tb[b]) == (a & b) for a in (0, 1) for b in (0, 1))
            best = max(best, Fraction(wins, 4))
    pairs = all_classical_pairs()
    lib_best = max(p for _, _, p in pairs)
    ok = len(pairs) == 16 and best == Fraction(3, 4) and lib_best == 0.75
    assert _log(acceptance_log, 2, ok, f"max over {len(pairs)} pairs = {lib_best} (exact {best})",
                time.perf_counter() - t0, 1)


def test_criterion_3_ruv_completeness_soundness(acceptance_log):
    t0 = time.perf_counter()
    c = load_constants("preset:ruv4096")
    assert c.alpha == 2 and ruv_params(16384, c).n_games == 4096
    ideal_pass = sum(not run_ruv(*_cluster(ideal_chsh(), ideal_chsh(), "ruv", k), _seed(16384, k), c).aborted
                     for k in range(100))
    pairs = all_classical_pairs()
    classical_abort = 0
    for k in range(100):
        ta, tb, _ = pairs[k % 16]
        devs = _cluster(classical_deterministic(ta), classical_deterministic(tb), "ruv", 1000 + k)
        classical_abort += run_ruv(*devs, _seed(16384, 1000 + k), c).aborted
    ok = ideal_pass >= 90 and classical_abort >= 99
    assert _log(acceptance_log, 3, ok, f"N=4096 alpha=2: ideal pass {ideal_pass}/100, "
                f"classical abort {classical_abort}/100", time.perf_counter() - t0, 300)


def test_criterion_4_vv_completeness_soundness(acceptance_log):
    t0 = time.perf_counter()
    # density 2^-4 and margin 0.05 as in the test constants, run long enough for 1024 test rounds
    c = load_constants("preset:vv_accept")
    base = ProtocolConstants.test()
    assert (c.vv_test_density, c.vv_margin) == (base.vv_test_density, base.vv_margin)
    s = 4224
    T = num_test_rounds(vv_params(s, c).n, c)
    zeros = parse_strategy("zeros")
    ideal_pass = sum(not run_vv(*_cluster(ideal_chsh(), ideal_chsh(), "vv", k), _seed(s, k), c).aborted
                     for k in range(100))
    zeros_abort = sum(run_vv(*_cluster(zeros, zeros, "vv", 500 + k), _seed(s, 500 + k), c).aborted
                      for k in range(100))
    # at the default run length (256 test rounds) all-zeros devices pass with this probability
    t256 = num_test_rounds(vv_params(2048, base).n, base)
    need = math.ceil((COS2_PI8 - base.vv_margin) * t256)
    p_pass_256 = binom.sf(need - 1, t256, 0.75)
    ok = ideal_pass >= 95 and zeros_abort >= 99
    assert _log(acceptance_log, 4, ok, f"T={T}: ideal pass {ideal_pass}/100, all-zeros abort {zeros_abort}/100; "
                f"at T={t256} all-zeros pass prob {p_pass_256:.3f}", time.perf_counter() - t0, 300)


def _mask_int(i, y, n):
    return int(mask_words_np(i, y, n)[0]) >> (64 - n)


def _joint_counts(spec, xs):
    """counts[seed, z] of the extractor output over source support xs (ints)."""
    counts = np.zeros((1 << spec.d, 1 << spec.r), dtype=np.int64)
    for s in range(1 << spec.d):
        ys = BitString.from_int(s, spec.d).bits[spec.design.sets]
        z = np.zeros(len(xs), dtype=np.int64)
        for i in range(spec.r):
            y = int("".join(map(str, ys[i])), 2)
            par = np.bitwise_count(xs & np.uint64(_mask_int(i, y, spec.n))) & 1
            z = (z << 1) | par.astype(np.int64)
        counts[s] = np.bincount(z, minlength=1 << spec.r)
    return counts


def test_criterion_5_extractor_exactness(acceptance_log):
    t0 = time.perf_counter()
    eps = 0.05
    rng = np.random.default_rng(5)
    uniform_ok, deficient_ok, n_unif, n_def, worst = True, True, 0, 0, 0.0
    for n, r in itertools.product(range(1, 13), (1, 2)):
        if r > n:
            continue  # rejected by solve_spec: no map from n bits can be uniform on r > n bits
        try:
            spec = solve_spec(n, r, eps)
        except ConfigError:
            continue
        if spec.d > 10:
            continue
        xs = np.arange(1 << n, dtype=np.uint64)
        counts = _joint_counts(spec, xs)
        # the table must agree with the public extractor
        for _ in range(50):
            xv, sv = int(rng.integers(0, 1 << n)), int(rng.integers(0, 1 << spec.d))
            z = extract(BitString.from_int(xv, n), BitString.from_int(sv, spec.d), spec).to_int()
            one = _joint_counts(spec, np.array([xv], dtype=np.uint64))[sv]
            assert one[z] == 1
        n_unif += 1
        uniform_ok &= bool((counts * (1 << (spec.d + spec.r)) == (1 << (n + spec.d))).all())
        hmin = math.log2((1 << n) - 1) if n > 1 else 0.0
        if not h_check(hmin, r, eps):
            continue
        dc = _joint_counts(spec, xs[1:])
        joint = dc / dc.sum()
        tv = 0.5 * np.abs(joint - 1.0 / joint.size).sum()
        worst = max(worst, tv)
        n_def += 1
        deficient_ok &= tv <= spec.epsilon
    ok = uniform_ok and deficient_ok and n_unif > 0 and n_def > 0
    assert _log(acceptance_log, 5, ok, f"uniform exact on {n_unif} specs, deficient TV max {worst:.4f} <= {eps} "
                f"on {n_def} specs", time.perf_counter() - t0, 120)


def test_criterion_6_end_to_end_chain(acceptance_log):
    t0 = time.perf_counter()
    c = load_constants("preset:chain3")
    want = g_iter(3, 98, c, realized=True).realized_lengths
    completed, lengths_ok = 0, True
    for k in range(20):
        state = infinite_expansion(DeviceFarm(run_seed=k), _seed(98, k), 3, c)
        if state.completed:
            completed += 1
            lengths_ok &= [len(r.output) for r in state.cluster_runs] == want
    ok = completed >= 16 and lengths_ok
    assert _log(acceptance_log, 6, ok, f"k=3 from 98 bits: {completed}/20 complete, lengths {want}",
                time.perf_counter() - t0, 600)


def test_criterion_7_ledger_fidelity(acceptance_log):
    t0 = time.perf_counter()
    c = ProtocolConstants.test()
    rng = np.random.default_rng(7)
    violations, checked = 0, 0
    for _ in range(10_000):
        k = int(rng.integers(1, 9))
        ps = rng.uniform(0.05, 1.0, k)
        m = int(rng.integers(8, 200_000))
        hist, prev = [(m, float(ps[0]))], eps_ec(m, ps[0], c)
        for p in ps[1:]:
            # smallest m whose error is at most a random fraction (<= 1/2) of the previous one
            target = prev * rng.uniform(0.05, 0.5)
            m = max(m + 1, math.ceil((-math.log(target * p) / c.c_dprime) ** 3))
            hist.append((m, float(p)))
            prev = eps_ec(m, p, c)
        led = delta_ledger(hist, c)
        assert led.halving_regime()
        # recursion folded here, independent of the ledger
        d = 0.0
        for mi, pi in hist:
            d = eps_ec(mi, pi, c) + d / pi
        assert d == pytest.approx(led.delta, rel=1e-12)
        bound = 2 * eps_ec(hist[0][0], hist[0][1], c) / math.prod(p for _, p in hist)
        violations += d > bound * (1 + 1e-12)
        checked += 1
    ok = violations == 0 and checked == 10_000
    assert _log(acceptance_log, 7, ok, f"{checked} halving histories, {violations} violations",
                time.perf_counter() - t0, 60)


def test_criterion_8_lemma_suite(acceptance_log):
    t0 = time.perf_counter()
    res = run_suite(1000, 0, (2, 2, 2), list(CORE))
    print(format_suite(res))
    ok = [r.name for r in res] == list(CORE) and all(r.passed and r.trials == 1000 for r in res)
    bad = sum(r.violations for r in res)
    assert _log(acceptance_log, 8, ok, f"{len(res)} lemmas x 1000 trials, {bad} violations",
                time.perf_counter() - t0, 300)


def _read_jsonl(path):
    recs = [json.loads(line) for line in path.read_text().splitlines()]
    rounds = [r for r in recs if r["type"] == "round"]
    return recs[0], rounds, recs[-1]


def _recheck_ruv(path, consts):
    """Recompute w, the threshold and (i, j) from the persisted rounds."""
    header, rounds, summ = _read_jsonl(path)
    a, b, x, y = (np.array([r[key] for r in rounds]) for key in "abxy")
    w = int(chsh_win(a, b, x, y).sum())
    seed = BitString.from_hex(header["seed_hex"], header["seed_bits"])
    p = ruv_params(len(seed), consts)
    s1, s2 = seed.split_halves()
    ok = w == summ["w"] and p.win_threshold == summ["threshold"]
    ok &= np.array_equal(a, s1.bits[:p.n_games]) and np.array_equal(b, s1.bits[len(s1) - p.n_games:])
    if summ["aborted"]:
        return ok and summ["i"] is None if "i" in summ else ok
    sel = select_sub_block(BitString(x.astype(np.uint8)), s2, p)
    return ok and (sel.i, sel.j) == (summ["i"], summ["j"]) and sel.z.to_hex() == summ["z_hex"]


def test_criterion_9_replay_corpus(acceptance_log, tmp_path):
    t0 = time.perf_counter()
    c = load_constants("preset:replay_small")
    adversaries = ["strategy.cluster1.vv_a = zeros\nstrategy.cluster1.vv_b = zeros\n",
                   "strategy.cluster1.ruv_a = zeros\nstrategy.cluster1.ruv_b = zeros\n"]
    identical, rechecked, aborts = 0, 0, 0
    for k in range(50):
        strat = parse_strategy_file(adversaries[k % 2]) if k % 5 == 4 else None
        farm = DeviceFarm(strat, run_seed=k)
        state = infinite_expansion(farm, _seed(4224, k), 1, c)
        aborts += state.halted
        d = write_run_dir(state, tmp_path / f"run{k}", farm.describe())
        res = replay(d)
        identical += res.identical and res.summary_text == (d / "summary.txt").read_text()
        ruv = d / "iter1_ruv.jsonl"
        rechecked += _recheck_ruv(ruv, c) if ruv.exists() else True
    ok = identical == 50 and rechecked == 50
    assert _log(acceptance_log, 9, ok, f"50 runs ({aborts} aborted): {identical} identical replays, "
                f"{rechecked} w/threshold/(i,j) rechecks match", time.perf_counter() - t0, 600)
