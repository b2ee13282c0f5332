import numpy as np
import pytest

from certirand.bits import BitString
from certirand.devices import ROLES, audit_transcript, ideal_chsh, parse_strategy, spawn_cluster
from certirand.errors import ConfigError, InvalidSeedLength
from certirand.extractor import extract
from certirand.params import COS2_PI8, ProtocolConstants, load_constants, vv_params
from certirand.protocol_vv import EntropyResult, num_test_rounds, run_protocol_b, run_vv
from certirand.protocol_vv import test_layout as layout
from certirand.qsim import QuantumBackend
from certirand.rng import RunStreams
from certirand.transcript import ProtocolTranscript

C = ProtocolConstants.test()


def _devs(strategy="ideal", seed=0):
    strat = {r: ideal_chsh() for r in ROLES}
    strat["vv_a"] = strat["vv_b"] = parse_strategy(strategy)
    cl = spawn_cluster(0, strat, QuantumBackend(), RunStreams(seed))
    return cl["vv_a"], cl["vv_b"]


def _seed(n, k=0):
    return BitString.random(n, np.random.default_rng([n, k]))


def test_ideal_run_outputs_v_bits():
    p = vv_params(2048, C)
    assert (p.h, p.v) == (32, 16)
    run = run_vv(*_devs(), _seed(2048), C)
    assert not run.aborted
    assert len(run.x) == p.v == 16 and len(run.y) == p.n
    assert run.consumed <= 2048
    assert run.consumed == C.vv_key_bits + 2 * num_test_rounds(p.n, C) + run.spec.d
    assert run.x == extract(run.y, run.s2[: run.spec.d], run.spec)
    assert audit_transcript(run.transcript).ok


def test_seed_split():
    seed = _seed(2048)
    run = run_vv(*_devs(), seed, C)
    assert run.s1 + run.s2 == seed and len(run.s1) == len(run.s2) == 1024


def test_same_seeds_same_output():
    a = run_vv(*_devs(seed=3), _seed(2048, 1), C)
    b = run_vv(*_devs(seed=3), _seed(2048, 1), C)
    assert a.x == b.x and a.transcript.summary == b.transcript.summary


def test_all_zeros_devices_abort():
    run = run_vv(*_devs("zeros"), _seed(2048), C)
    assert run.aborted and run.x is None
    assert run.cause.startswith("protocol B: test win fraction")
    frac = run.source.test_wins / run.source.tests
    assert abs(frac - 0.75) < 0.1
    assert run.transcript.has_event("abort")


def test_test_layout_is_seeded_and_sparse():
    s1 = _seed(1024)
    pos, ta, tb, used = layout(s1, 4096, C)
    T = num_test_rounds(4096, C)
    assert pos.size == T == 256 and used == 16 + 2 * T
    assert np.all(np.diff(pos) > 0) and pos.max() < 4096
    raw = s1.bits[16:used]
    assert np.array_equal(ta, raw[0::2]) and np.array_equal(tb, raw[1::2])
    pos2, *_ = layout(s1, 4096, C)
    assert np.array_equal(pos, pos2)


def test_rounds_outside_tests_use_zero_inputs():
    run = run_vv(*_devs(), _seed(2048), C)
    r = run.transcript.rounds
    off = ~r["test"]
    assert not r["a"][off].any() and not r["b"][off].any()
    assert r["test"].sum() == run.source.tests
    assert int((run.transcript.wins() & r["test"]).sum()) == run.source.test_wins


def test_seed_exhaustion_is_config_error():
    dense = C.replace(vv_test_density=1.0)
    with pytest.raises(ConfigError):
        run_vv(*_devs(), _seed(2048), dense)


def test_zero_test_rounds_accept_with_flag():
    none = C.replace(vv_test_density=0.0)
    run = run_vv(*_devs("zeros"), _seed(2048), none)
    assert not run.aborted and "no-test-rounds" in run.flags


def test_extractor_seed_too_long_is_infeasible():
    # a small k1 makes h, hence v, larger than the raw output it is extracted from
    run = run_vv(*_devs(), _seed(16), C.replace(k1=1e-4))
    assert run.aborted and run.cause.startswith("infeasible parameters: cannot extract")
    run = run_vv(*_devs(), _seed(16), C.replace(k1=0.01))
    assert run.aborted and run.cause.startswith("infeasible parameters: extractor seed d=9")
    assert run.transcript.num_rounds == 0
    run = run_vv(*_devs(), _seed(12), C)
    assert run.aborted and "v=0" in run.cause


def test_short_seed_rejected():
    with pytest.raises(InvalidSeedLength):
        run_vv(*_devs(), _seed(7), C)


def test_protocol_b_returns_dev_a_outputs():
    p = vv_params(2048, C)
    tr = ProtocolTranscript("protocol-b")
    y = run_protocol_b(*_devs(), _seed(1024), p, C, tr)
    assert len(y) == p.n
    assert np.array_equal(y.bits, tr.rounds["x"])


def test_entropy_source_can_be_swapped():
    class Fixed:
        def run(self, dev_a, dev_b, s1, n, consts, transcript):
            return EntropyResult(BitString.zeros(n), False)
    run = run_vv(*_devs(), _seed(2048), C, source=Fixed())
    assert not run.aborted and run.x == BitString.zeros(16)


def test_ideal_abort_rate_at_small_test_count(oracle):
    # n = 2048 with 128 test rounds; the exact per-run abort probability is frozen in the oracle
    c = C.replace(n_cap=2048)
    assert num_test_rounds(vv_params(2048, c).n, c) == 128
    aborts = sum(run_vv(*_devs(seed=k), _seed(2048, k), c).aborted for k in range(60))
    p = oracle["vv_ideal_abort_prob_T128"]
    assert 0.05 < p < 0.051
    assert aborts <= 12  # binomial(60, p) exceeds 12 with probability < 1e-3


def test_soundness_at_1024_test_rounds(oracle):
    c = load_constants("preset:vv_accept")
    assert num_test_rounds(vv_params(4224, c).n, c) == 1024
    assert oracle["vv_classical_pass_prob_T1024_m0.05"] < 1e-4
    for k in range(5):
        assert run_vv(*_devs("zeros", seed=k), _seed(4224, k), c).aborted
        assert not run_vv(*_devs(seed=k), _seed(4224, k), c).aborted


def test_threshold_recorded():
    run = run_vv(*_devs(), _seed(2048), C)
    assert run.source.threshold == pytest.approx(COS2_PI8 - C.vv_margin)
    assert run.transcript.header["claimed_min_entropy"] == 32
