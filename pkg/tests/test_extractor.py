import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from certirand.bits import BitString
from certirand.errors import ConfigError, InputError
from certirand.extractor import (build_weak_design, design_degree, extract, get_field, h_check, one_bit_extract,
                                 prime_power, seed_envelope, solve_spec)
from certirand._kernels import mask_words_np


def _mask_int(i, y, n):
    return int(mask_words_np(i, y, n)[0]) >> (64 - n)


def _popparity(v):
    return np.bitwise_count(v) & 1


def test_small_design_matches_oracle(oracle):
    d = build_weak_design(2, 2)
    want = oracle["design_r2_t2"]
    assert d.sets.tolist() == want["sets"]
    assert d.universe == 4 and d.set_size == 2
    assert d.max_intersection == want["max_intersection"] <= 1


def test_single_set_design():
    d = build_weak_design(1, 3)
    assert d.sets.shape == (1, 3) and d.universe == 9


@pytest.mark.parametrize("r,t_w", [(16, 7), (64, 4), (9, 3), (49, 7)])
def test_design_overlaps_exhaustive(r, t_w):
    d = build_weak_design(r, t_w)
    deg = design_degree(r, t_w)
    assert d.exhaustive
    assert all(len(set(s)) == t_w for s in d.sets.tolist())
    assert all(0 <= v < d.universe for v in d.sets.ravel())
    for i, j in itertools.combinations(range(r), 2):
        assert len(set(d.sets[i]) & set(d.sets[j])) <= deg
    sums = d.overlap_sums()
    for i in range(1, r):
        assert sums[i] <= d.overlap_bound * i + 1e-9


def test_design_errors():
    with pytest.raises(ConfigError):
        build_weak_design(4, 6)
    with pytest.raises(ConfigError):
        build_weak_design(10 ** 6, 3)
    with pytest.raises(InputError):
        build_weak_design(0, 2)
    assert prime_power(9) == (3, 2) and prime_power(12) is None


def test_field_arithmetic():
    for q in (2, 3, 4, 7, 8, 9):
        gf = get_field(q)
        polys = np.array([[1, 1]])  # 1 + a
        vals = gf.eval_polys(polys)[0]
        assert sorted(vals.tolist()) == list(range(q))


def test_zero_source_gives_zero():
    for n, y in [(5, "101"), (12, "1111")]:
        assert one_bit_extract(BitString.zeros(n), BitString.from_str(y)) == 0
    assert one_bit_extract(BitString.zeros(8), BitString.from_str("1011"), mode="rs_hadamard") == 0


def test_identity_code_is_parity():
    x = BitString.from_str("1101001")
    assert one_bit_extract(x, BitString.from_str("1111111"), code="identity") == 0
    assert one_bit_extract(x, BitString.from_str("1000000"), code="identity") == 1
    with pytest.raises(InputError):
        one_bit_extract(x, BitString.from_str("11"), code="identity")


@pytest.mark.parametrize("n", [1, 2, 5, 9, 12, 16])
def test_one_bit_uniform_exhaustive(n):
    xs = np.arange(1 << n, dtype=np.uint64)
    for i in (0, 1, 2):
        for y in range(8):
            m = _mask_int(i, y, n)
            assert np.sum(_popparity(xs & np.uint64(m))) == 1 << (n - 1)


def test_one_bit_extract_matches_mask(rng):
    for _ in range(200):
        n = int(rng.integers(1, 40))
        x = BitString.random(n, rng)
        y = int(rng.integers(0, 16))
        i = int(rng.integers(0, 5))
        got = one_bit_extract(x, BitString.from_int(y, 4), index=i)
        assert got == bin(x.to_int() & _mask_int(i, y, n)).count("1") % 2


def test_single_set_extract_is_one_bit():
    spec = solve_spec(10, 1, 0.1)
    rng = np.random.default_rng(1)
    for _ in range(20):
        x, s = BitString.random(10, rng), BitString.random(spec.d, rng)
        y = BitString(s.bits[spec.design.sets[0]])
        assert extract(x, s, spec).to_str() == str(one_bit_extract(x, y, 0))


def _joint_table(spec, xs_ints):
    """counts[seed, z] over the given source support."""
    n = spec.n
    counts = np.zeros((1 << spec.d, 1 << spec.r), dtype=np.int64)
    for s in range(1 << spec.d):
        seed = BitString.from_int(s, spec.d)
        ys = seed.bits[spec.design.sets]
        z = np.zeros(len(xs_ints), dtype=np.int64)
        for i in range(spec.r):
            y = int("".join(map(str, ys[i])), 2)
            m = np.uint64(_mask_int(i, y, n))
            z = (z << 1) | _popparity(xs_ints & m).astype(np.int64)
        counts[s] = np.bincount(z, minlength=1 << spec.r)
    return counts


@pytest.mark.parametrize("n,r", [(8, 2), (12, 2), (6, 1)])
def test_joint_output_seed_exactly_uniform(n, r):
    spec = solve_spec(n, r, 0.05)
    assert spec.d <= 10
    counts = _joint_table(spec, np.arange(1 << n, dtype=np.uint64))
    assert (counts == (1 << (n - r))).all()


def test_joint_table_matches_extract():
    spec = solve_spec(8, 2, 0.05)
    xs = np.arange(256, dtype=np.uint64)
    counts = _joint_table(spec, xs)
    direct = np.zeros_like(counts)
    for s in range(1 << spec.d):
        seed = BitString.from_int(s, spec.d)
        for x in range(256):
            direct[s, extract(BitString.from_int(x, 8), seed, spec).to_int()] += 1
    assert np.array_equal(counts, direct)


@pytest.mark.parametrize("n", [8, 10, 12])
def test_deficient_source_within_epsilon(n, oracle):
    eps = 0.01
    spec = solve_spec(n, 2, eps)
    xs = np.arange(1, 1 << n, dtype=np.uint64)  # uniform minus the zero string
    counts = _joint_table(spec, xs)
    joint = counts / (len(xs) * (1 << spec.d))
    tv = 0.5 * np.abs(joint - 1.0 / joint.size).sum()
    assert tv <= spec.epsilon
    # source min-entropy is log2(2^n - 1)
    assert abs(-np.log2(1 / len(xs)) - oracle[f"hmin_uniform_minus_one_n{n}"]) < 1e-4


def test_solve_spec_envelope():
    spec = solve_spec(1 << 10, 16, 2.0 ** -5)
    assert spec.d <= seed_envelope(1 << 10, 16, 2.0 ** -5) == spec.envelope
    assert spec.design.num_sets == 16 and spec.d == spec.design.universe
    one = solve_spec(100, 1, 0.1)
    assert one.d == 4


def test_doubling_epsilon_never_increases_d():
    for n in (16, 256, 4096):
        for r in (1, 3, 16, 40):
            if r > n:
                continue
            ds = [solve_spec(n, r, 2.0 ** -k).d for k in range(10, 0, -1)]
            assert ds == sorted(ds, reverse=True)


def test_solve_spec_errors():
    with pytest.raises(InputError):
        solve_spec(8, 0, 0.1)
    with pytest.raises(InputError):
        solve_spec(8, 2, 1.5)
    with pytest.raises(ConfigError):
        solve_spec(1, 2, 0.1)
    with pytest.raises(InputError):
        solve_spec(8, 2, 0.1, one_bit="magic")
    with pytest.raises(ConfigError):
        solve_spec(400, 200, 0.5, c0=0.01)


def test_extract_length_errors():
    spec = solve_spec(8, 2, 0.05)
    with pytest.raises(InputError):
        extract(BitString.zeros(7), BitString.zeros(spec.d), spec)
    with pytest.raises(InputError):
        extract(BitString.zeros(8), BitString.zeros(spec.d + 1), spec)


def test_rs_hadamard_mode():
    spec = solve_spec(16, 3, 0.05, one_bit="rs_hadamard")
    assert prime_power(spec.t_w)[0] == 2
    rng = np.random.default_rng(3)
    for _ in range(20):
        x, s = BitString.random(16, rng), BitString.random(spec.d, rng)
        z = extract(x, s, spec)
        ys = s.bits[spec.design.sets]
        assert z.to_str() == "".join(str(one_bit_extract(x, BitString(ys[i]), i, mode="rs_hadamard"))
                                     for i in range(3))
    with pytest.raises(InputError):
        one_bit_extract(BitString.zeros(4), BitString.from_str("101"), mode="rs_hadamard")


def test_rs_hadamard_uniform_for_nonzero_beta():
    # the bit is <RS(x)(alpha), beta>; with beta != 0 it is a nonzero linear form in x
    n = 8
    for y in range(1, 16):
        if y & 3 == 0:
            continue
        ones = sum(one_bit_extract(BitString.from_int(x, n), BitString.from_int(y, 4), mode="rs_hadamard")
                   for x in range(1 << n))
        assert ones == 1 << (n - 1)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 80), st.sampled_from([1, 2, 5, 16]), st.sampled_from(["parity_of_selected", "rs_hadamard"]),
       st.integers(0, 2 ** 32 - 1))
def test_extract_is_linear(n, r, mode, seed):
    rng = np.random.default_rng(seed)
    r = min(r, n)
    spec = solve_spec(n, r, 0.01, one_bit=mode)
    x1, x2, s = BitString.random(n, rng), BitString.random(n, rng), BitString.random(spec.d, rng)
    x12 = BitString(x1.bits ^ x2.bits)
    z = extract(x12, s, spec)
    assert np.array_equal(z.bits, extract(x1, s, spec).bits ^ extract(x2, s, spec).bits)
    assert len(z) == r


def test_h_check():
    assert h_check(64, 16, 0.01)
    assert not h_check(16, 16, 0.01)
