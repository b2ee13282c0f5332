import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from certirand.errors import CapacityError, InputError
from certirand.infotheory import (CqState, DensityMatrix, check_pinsker, conditioning_bound_check, dump_matrix,
                                  entropies, fidelity, fidelity_trick_construct, generalized_trace_distance,
                                  grid_guess_qubit, guessing_probability, helstrom_guess, load_matrix,
                                  min_entropy_cq, random_cq, random_density, random_pure, security_distance,
                                  smoothed_min_entropy_lb, subblock_chain_check, trace_norm_dist, von_neumann)
from certirand.lemmas import CHECKS, CORE, format_suite, parse_dims, run_suite

KET0 = np.array([1, 0])
PLUS = np.array([1, 1]) / np.sqrt(2)
EPR = np.array([1, 0, 0, 1]) / np.sqrt(2)
AB = [("A", 2), ("B", 2)]


def _corr():
    return DensityMatrix.diag([0.5, 0, 0, 0.5], AB)


def test_trace_distance_examples():
    r = random_density(AB, np.random.default_rng(0))
    assert trace_norm_dist(r, r) == pytest.approx(0, abs=1e-12)
    assert trace_norm_dist(DensityMatrix.from_pure(KET0), DensityMatrix.from_pure([0, 1])) == pytest.approx(1)
    assert trace_norm_dist(_corr(), DensityMatrix.maximally_mixed(AB)) == pytest.approx(0.5)
    with pytest.raises(InputError):
        trace_norm_dist(r, DensityMatrix.maximally_mixed([("A", 2)]))


def test_security_distance_examples():
    uniform_product = CqState.from_ensemble(np.stack([np.eye(2) / 4, np.eye(2) / 4]))
    assert security_distance(uniform_product) == pytest.approx(0, abs=1e-12)
    fixed = CqState.from_ensemble(np.stack([np.array([[1.0]]), np.array([[0.0]])]))
    assert security_distance(fixed) == pytest.approx(0.5)
    copied = CqState.from_ensemble(np.stack([np.diag([0.5, 0]), np.diag([0, 0.5])]))
    assert security_distance(copied) == pytest.approx(0.5)
    with pytest.raises(InputError):
        security_distance(_corr())


def test_entropy_examples():
    assert von_neumann(DensityMatrix.from_pure(PLUS)) == pytest.approx(0, abs=1e-12)
    assert von_neumann(DensityMatrix.maximally_mixed(AB)) == pytest.approx(2)
    e = entropies(DensityMatrix.from_pure(EPR, AB), "A", "B")
    assert e["von_neumann"] == pytest.approx(0, abs=1e-12)
    assert e["conditional"] == pytest.approx(-1)
    assert e["mutual_info"] == pytest.approx(2)
    with pytest.raises(InputError):
        entropies(_corr(), "A", "C")


def test_min_entropy_examples(oracle):
    uniform = CqState.from_ensemble(np.full((8, 1, 1), 1 / 8))
    assert min_entropy_cq(uniform) == pytest.approx(3, abs=1e-6)
    copied = CqState.from_ensemble(np.stack([np.diag([0.5, 0]), np.diag([0, 0.5])]))
    assert min_entropy_cq(copied) == pytest.approx(0, abs=1e-6)
    s = np.stack([0.5 * np.outer(KET0, KET0), 0.5 * np.outer(PLUS, PLUS)])
    res = guessing_probability(s)
    assert res.certified and res.gap < 1e-6
    assert res.p_guess == pytest.approx(oracle["p_guess_0_plus"], abs=1e-6)
    assert grid_guess_qubit(s[0], s[1]) == pytest.approx(oracle["p_guess_0_plus"], abs=1e-6)
    assert min_entropy_cq(CqState.from_ensemble(s)) == pytest.approx(oracle["hmin_0_plus"], abs=1e-5)


def test_min_entropy_capacity():
    big = CqState.from_ensemble(np.stack([np.eye(9) / 18, np.eye(9) / 18]))
    with pytest.raises(CapacityError):
        min_entropy_cq(big)
    with pytest.raises(CapacityError):
        smoothed_min_entropy_lb(big, 0.1)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_solver_matches_grid_on_qubits(seed):
    rng = np.random.default_rng(seed)
    e = random_cq(2, 2, rng).ensemble
    res = guessing_probability(e)
    assert res.certified
    assert abs(res.p_guess - grid_guess_qubit(e[0], e[1], step=4e-3)) < 1e-5
    assert abs(res.p_guess - helstrom_guess(e[0], e[1])) < 1e-6


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 4), st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
def test_guessing_bounds(nx, de, seed):
    rng = np.random.default_rng(seed)
    st_ = random_cq(nx, de, rng)
    res = guessing_probability(st_.ensemble)
    # guessing the likeliest x is always possible; the primal is within the certified gap
    assert max(st_.probs()) <= res.upper + 1e-12
    assert res.p_guess >= max(st_.probs()) - 1e-6
    assert res.p_guess <= 1 + 1e-9
    # H_min <= H(X|E)
    h = entropies(st_.base, "X", "E")["conditional"]
    assert -math.log2(res.upper) <= h + 1e-6


def test_smoothing_never_decreases_bound(rng):
    stt = random_cq(4, 2, rng)
    base = smoothed_min_entropy_lb(stt, 0.0)["lower_bound"]
    for eps in (0.01, 0.1, 0.3):
        out = smoothed_min_entropy_lb(stt, eps)
        assert out["lower_bound"] >= base - 1e-9 and not out["exact"]
    with pytest.raises(InputError):
        smoothed_min_entropy_lb(stt, 1.0)


def test_generalized_distance_reduces_to_trace_distance(rng):
    a, b = random_density(AB, rng), random_density(AB, rng)
    assert generalized_trace_distance(a, b) == pytest.approx(trace_norm_dist(a, b))


def test_pinsker_examples():
    prod = DensityMatrix.maximally_mixed(AB)
    r = check_pinsker(prod, ("A", "B"))
    assert r["lhs"] == pytest.approx(0, abs=1e-12) and r["rhs"] == pytest.approx(0, abs=1e-12) and r["holds"]
    r = check_pinsker(_corr(), ("A", "B"))
    assert r["lhs"] == pytest.approx(0.25) and r["rhs"] == pytest.approx(2) and r["holds"] and r["base"] == 2


def test_conditioning_bound_examples(rng):
    a = random_cq(2, 2, rng)
    r = conditioning_bound_check(a, a, [0])
    assert r["lhs"] == pytest.approx(0, abs=1e-12)
    b = random_cq(2, 2, rng)
    r = conditioning_bound_check(a, b, [0, 1])
    assert r["holds"] and r["rhs"] == pytest.approx(security_like(a, b))
    zero = CqState.from_ensemble(np.stack([np.eye(2) / 2, np.zeros((2, 2))]))
    with pytest.raises(InputError):
        conditioning_bound_check(zero, zero, [1])


def security_like(a, b):
    return sum(trace_norm_dist(x, y) for x, y in zip(a.ensemble, b.ensemble))


def _cqq(rng, dims=(2, 2, 2)):
    lab = [("A1", dims[0]), ("A2", dims[1]), ("B", dims[2])]
    return random_density(lab, rng).dephase("A1")


def test_fidelity_trick_zero_distance(rng):
    rho = _cqq(rng)
    out = fidelity_trick_construct(rho, rho.ptrace(["A1", "A2"]), 0.0)
    assert out.distance <= 1e-6 and out.marginal_ok and out.ok


def test_fidelity_trick_perturbation(rng):
    for _ in range(20):
        rho = _cqq(rng)
        ra = rho.ptrace(["A1", "A2"])
        noise = random_density(ra.dims, rng).dephase("A1")
        sigma = DensityMatrix(0.98 * ra.m + 0.02 * noise.m, ra.dims)
        eps = trace_norm_dist(ra, sigma)
        assert eps <= 1e-2 + 1e-12
        out = fidelity_trick_construct(rho, sigma, eps)
        assert out.ok and out.provable_ok
        assert np.allclose(out.tau.ptrace(["A1", "A2"]).m, sigma.m, atol=1e-8)


def test_fidelity_trick_trivial_b(rng):
    lab = [("A1", 2), ("A2", 2), ("B", 1)]
    rho = random_density(lab, rng).dephase("A1")
    ra = rho.ptrace(["A1", "A2"])
    sigma = DensityMatrix(0.9 * ra.m + 0.1 * np.eye(4) / 4, ra.dims)
    out = fidelity_trick_construct(rho, sigma, trace_norm_dist(ra, sigma))
    assert np.allclose(out.tau.m, sigma.m, atol=1e-8)


def test_fidelity_trick_preconditions(rng):
    rho = _cqq(rng)
    far = DensityMatrix.maximally_mixed([("A1", 2), ("A2", 2)])
    d = trace_norm_dist(rho.ptrace(["A1", "A2"]), far)
    with pytest.raises(InputError):
        fidelity_trick_construct(rho, far, d / 2)
    quantum_a1 = random_density([("A1", 2), ("A2", 2), ("B", 2)], rng)
    with pytest.raises(InputError):
        fidelity_trick_construct(quantum_a1, far, 1.0)
    with pytest.raises(CapacityError):
        fidelity_trick_construct(_cqq(rng, (4, 4, 8)), DensityMatrix.maximally_mixed([("A1", 4), ("A2", 4)]), 1.0)


def test_fidelity_of_identical_states(rng):
    r = random_density(AB, rng)
    assert fidelity(r, r) == pytest.approx(1)


def test_subblock_chain_ideal_state(rng):
    ideal = CqState.from_ensemble(np.stack([np.eye(2) / 32] * 16))
    r = subblock_chain_check(ideal, 4)
    assert r["zeta"] == pytest.approx(0, abs=1e-12) and r["holds"]
    assert r["vacuous"]  # mu >= 1 at every t below 256
    with pytest.raises(InputError):
        subblock_chain_check(ideal, 3)


def test_density_matrix_validation():
    with pytest.raises(InputError):
        DensityMatrix(np.array([[1, 1], [0, 0]]))
    with pytest.raises(InputError):
        DensityMatrix(np.diag([0.7, 0.7]))
    with pytest.raises(InputError):
        DensityMatrix(np.diag([1.5, -0.5]))
    with pytest.raises(InputError):
        DensityMatrix(np.eye(4) / 4, [("A", 2), ("B", 3)])


def test_ptrace_and_permute(rng):
    r = random_density([("A", 2), ("B", 3)], rng)
    p = r.permute(["B", "A"])
    assert np.allclose(p.ptrace("A").m, r.ptrace("A").m)
    assert np.allclose(p.permute(["A", "B"]).m, r.m)
    assert np.allclose(r.ptrace("A").kron(r.ptrace("B")).ptrace("B").m, r.ptrace("B").m)


def test_matrix_text_roundtrip(tmp_path, rng):
    r = random_density(AB, rng)
    text = dump_matrix(r)
    back = load_matrix(text)
    assert back.dims == r.dims and np.allclose(back.m, r.m)
    f = tmp_path / "m.txt"
    f.write_text("# EPR\ndims A:2 B:2\n0.5 0 0 0.5\n0 0 0 0\n0 0 0 0\n0.5 0 0 0.5\n")
    e = entropies(load_matrix(f), "A", "B")
    assert e["conditional"] == pytest.approx(-1)
    with pytest.raises(InputError):
        load_matrix("1 0\n0\n")
    with pytest.raises(InputError):
        load_matrix("dims A\n1\n")


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
def test_entropy_inequalities(da, db, seed):
    rng = np.random.default_rng(seed)
    rho = random_density([("A", da), ("B", db)], rng)
    e = entropies(rho, "A", "B")
    assert e["mutual_info"] >= -1e-9
    assert e["conditional"] >= -math.log2(min(da, db)) - 1e-9
    assert check_pinsker(rho, ("A", "B"))["holds"]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_pure_state_entropies_match(seed):
    rng = np.random.default_rng(seed)
    psi = random_pure([("A", 2), ("B", 3)], rng)
    assert von_neumann(psi.ptrace("A")) == pytest.approx(von_neumann(psi.ptrace("B")), abs=1e-9)


def test_lemma_suite_small():
    res = run_suite(50, 1)
    assert [r.name for r in res] == list(CHECKS)
    assert all(r.passed for r in res), format_suite(res)
    assert set(CORE) <= set(CHECKS)


def test_parse_dims():
    assert parse_dims("2x3") == (2, 3, 2)
    assert parse_dims("2x2x4") == (2, 2, 4)
    for bad in ("2", "axb", "4x4x8", "0x2"):
        with pytest.raises(InputError):
            parse_dims(bad)
