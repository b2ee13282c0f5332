"""Randomized lemma suite: each check draws small random states and counts
violations of an inequality or construction certificate."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .infotheory import (TOL, CqState, DensityMatrix, check_pinsker, conditioning_bound_check, entropies,
                         fidelity_trick_construct, grid_guess_qubit, guessing_probability, helstrom_guess,
                         random_cq, random_density, subblock_chain_check, trace_norm_dist)

EXACT_TOL = 1e-9


@dataclass
class LemmaResult:
    name: str
    trials: int
    violations: int
    worst: float
    seconds: float

    @property
    def passed(self) -> bool:
        return self.violations == 0


def _rank(rng, n):
    return int(rng.integers(1, n + 1))


def _pinsker(rng, dims):
    da, db = dims[0], dims[1]
    rho = random_density([("A", da), ("B", db)], rng, _rank(rng, da * db))
    r = check_pinsker(rho, ("A", "B"))
    return not r["holds"], r["lhs"] - r["rhs"]


def _chain_rule(rng, dims):
    da, db, dc = dims
    rho = random_density([("A", da), ("B", db), ("C", dc)], rng, _rank(rng, da * db * dc))
    i_abc = entropies(rho, "A", ["B", "C"])["mutual_info"]
    i_ab = entropies(rho, "A", "B")["mutual_info"]
    i_acb = entropies(rho, "A", "B", "C")["conditional_mutual_info"]
    err = abs(i_abc - i_ab - i_acb)
    return err > EXACT_TOL, err


def _conditioning(rho_rng, dims):
    da, db = dims[0], dims[1]
    rho = random_density([("A", da), ("B", db)], rho_rng, _rank(rho_rng, da * db))
    e = entropies(rho, "A", "B")
    ha = entropies(rho, "A", [])["conditional"]
    slack = e["conditional"] - ha
    return slack > EXACT_TOL, slack


def _data_processing(rng, dims):
    da, db = dims[0], dims[1]
    d = [("A", da), ("B", db)]
    rho, sigma = random_density(d, rng, _rank(rng, da * db)), random_density(d, rng, _rank(rng, da * db))
    slack = trace_norm_dist(rho.ptrace("A"), sigma.ptrace("A")) - trace_norm_dist(rho, sigma)
    return slack > EXACT_TOL, slack


def _triangle(rng, dims):
    d = [("A", dims[0]), ("B", dims[1])]
    a, b, c = (random_density(d, rng, _rank(rng, dims[0] * dims[1])) for _ in range(3))
    slack = trace_norm_dist(a, c) - trace_norm_dist(a, b) - trace_norm_dist(b, c)
    return slack > EXACT_TOL, slack


def _conditioning_bound(rng, dims):
    """Classical flag F (2 outcomes) with a qubit Q."""
    rho, sigma = random_cq(2, dims[1], rng), random_cq(2, dims[1], rng)
    event = [[0], [1], [0, 1]][int(rng.integers(3))]
    r = conditioning_bound_check(rho, sigma, event)
    return not r["holds"], r["lhs"] - r["rhs"]


def _fidelity_trick(rng, dims):
    da1, da2, db = dims
    lab = [("A1", da1), ("A2", da2), ("B", db)]
    rho = random_density(lab, rng, _rank(rng, da1 * da2 * db)).dephase("A1")
    ra = rho.ptrace(["A1", "A2"])
    noise = random_density(lab[:2], rng).dephase("A1")
    q = rng.uniform(0, 0.05)
    sigma = DensityMatrix((1 - q) * ra.m + q * noise.m, ra.dims)
    eps = trace_norm_dist(ra, sigma)
    r = fidelity_trick_construct(rho, sigma, eps)
    return not r.ok, max(r.distance - r.sqrt_eps_bound, r.marginal_error - 1e-8)


def _binary_guess(rng, dims):
    st = random_cq(2, dims[1], rng)
    e = st.ensemble
    res = guessing_probability(e)
    err = abs(res.p_guess - helstrom_guess(e[0], e[1]))
    return err > TOL.cert or not res.certified, err


def _subblock_chain(rng, dims):
    t = 4
    noise = random_cq(1 << t, dims[1], rng).ensemble
    ideal = np.stack([noise.sum(axis=0) / (1 << t)] * (1 << t))
    q = rng.uniform(0, 1)
    st = CqState.from_ensemble((1 - q) * ideal + q * noise)
    r = subblock_chain_check(st, t)
    return not r["holds"], r["required"] - r["good_fraction"]


CHECKS = {
    "pinsker": _pinsker,
    "chain_rule": _chain_rule,
    "conditioning_reduces_entropy": _conditioning,
    "data_processing": _data_processing,
    "triangle_inequality": _triangle,
    "conditioning_bound": _conditioning_bound,
    "fidelity_trick": _fidelity_trick,
    "binary_guessing": _binary_guess,
    "subblock_chain": _subblock_chain,
}

CORE = ("pinsker", "chain_rule", "conditioning_reduces_entropy", "data_processing", "conditioning_bound",
        "fidelity_trick")


def parse_dims(spec: str) -> tuple:
    try:
        dims = tuple(int(x) for x in spec.lower().split("x"))
    except ValueError as exc:
        raise InputError(f"bad dims spec {spec!r}") from exc
    if len(dims) == 2:
        dims = dims + (2,)
    if len(dims) != 3 or min(dims) < 1 or np.prod(dims) > 64:
        raise InputError("dims spec must be AxB or AxBxC with total dimension <= 64")
    return dims


def run_suite(trials: int = 1000, seed: int = 0, dims=(2, 2, 2), names=None) -> list:
    dims = tuple(dims) if dims else (2, 2, 2)
    out = []
    for name in names or CHECKS:
        fn = CHECKS[name]
        rng = np.random.default_rng([seed, list(CHECKS).index(name)])
        t0 = time.perf_counter()
        bad, worst = 0, -np.inf
        for _ in range(trials):
            v, slack = fn(rng, dims)
            bad += bool(v)
            worst = max(worst, float(slack))
        out.append(LemmaResult(name, trials, bad, worst, time.perf_counter() - t0))
    return out


def format_suite(results) -> str:
    rows = [f"{'lemma':<30} {'trials':>7} {'violations':>10} {'worst slack':>13} {'sec':>7}  result"]
    for r in results:
        rows.append(f"{r.name:<30} {r.trials:>7} {r.violations:>10} {r.worst:>13.3e} {r.seconds:>7.2f}  "
                    f"{'PASS' if r.passed else 'FAIL'}")
    return "\n".join(rows)
