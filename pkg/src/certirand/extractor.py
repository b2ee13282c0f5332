"""Trevisan-style strong extractor: polynomial weak design + linear one-bit extractor.

Design. Over a field F of size t_w, set i is the graph {(a, P_i(a)) : a in F}
of the i-th polynomial of degree <= l, encoded as indices a*t_w + P_i(a) in a
universe of d = t_w**2 seed bits. Polynomials are numbered by their base-t_w
coefficient digits (constant term least significant). Two distinct graphs
meet in at most l points.

One-bit extractors (both linear in x):
  * ``parity_of_selected``: <x, mask(i, y)> mod 2 where the mask is an n-bit
    string from a counter-based generator keyed by the set index i and the
    seed chunk y, with Hamming-weight parity (i+1) mod 2 (``random_linear``
    code); the ``identity`` code takes the mask to be y itself.
  * ``rs_hadamard``: y = (alpha, beta) of t_w/2 bits each; output
    <RS(x)(alpha), beta> over GF(2), where RS(x)(alpha) = sum_k x_k alpha^k
    with x cut into t_w/2-bit symbols (MSB first). t_w must be a power of two.

Only the classical strong-extractor behaviour is tested here; quantum-proofness
is a property of the construction, not something a simulation can check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels
from .bits import BitString, pack_words
from .errors import ConfigError, InputError

DEFAULT_C0 = 4
MAX_FIELD = 256


# ---------------------------------------------------------------------------
# finite fields


def prime_power(q: int):
    """(p, k) with q = p**k, or None."""
    if q < 2:
        return None
    for p in range(2, q + 1):
        if q % p == 0:
            k = 0
            while q % p == 0:
                q //= p
                k += 1
            return (p, k) if q == 1 else None
    return None


def _poly_mod(a, m, p):
    a = list(a)
    while len(a) >= len(m):
        c = a[-1]
        if c:
            shift = len(a) - len(m)
            for i, mc in enumerate(m):
                a[shift + i] = (a[shift + i] - c * mc) % p
        a.pop()
    return a


def _irreducible(p, k):
    """Monic irreducible polynomial of degree k over GF(p), coefficients low first."""
    if k == 1:
        return [0, 1]
    for tail in range(p ** k):
        cand = [(tail // p ** i) % p for i in range(k)] + [1]
        if cand[0] == 0:
            continue
        ok = True
        for deg in range(1, k // 2 + 1):
            for t2 in range(p ** deg):
                div = [(t2 // p ** i) % p for i in range(deg)] + [1]
                if not any(_poly_mod(cand, div, p)):
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return cand
    raise AssertionError("no irreducible polynomial found")


class GF:
    """Field of prime-power order q with precomputed addition/multiplication tables.

    Elements are integers 0..q-1 read as base-p digit vectors (low digit =
    constant coefficient). For q = 2**k, addition is XOR."""

    def __init__(self, q: int):
        pk = prime_power(q)
        if pk is None:
            raise ConfigError(f"{q} is not a prime power")
        self.q, (self.p, self.k) = q, pk
        p, k = self.p, self.k
        digits = np.array([[(e // p ** i) % p for i in range(k)] for e in range(q)], dtype=np.int64)
        weights = p ** np.arange(k)
        self.add = ((digits[:, None, :] + digits[None, :, :]) % p) @ weights
        modulus = _irreducible(p, k)
        mul = np.zeros((q, q), dtype=np.int64)
        for a in range(q):
            for b in range(a, q):
                prod = np.convolve(digits[a], digits[b]) % p
                red = _poly_mod(list(prod), modulus, p) if k > 1 else [int(prod[0]) % p]
                red = (red + [0] * k)[:k]
                mul[a, b] = mul[b, a] = int(np.dot(red, weights))
        self.mul = mul
        self._logexp = None

    def log_exp(self):
        """(exp, log) tables w.r.t. a primitive element; exp has length 2(q-1)."""
        if self._logexp is None:
            q = self.q
            for g in range(2, q) if q > 2 else [1]:
                seen, x = [], 1
                for _ in range(q - 1):
                    seen.append(x)
                    x = int(self.mul[x, g])
                if len(set(seen)) == q - 1:
                    break
            exp = np.array(seen + seen, dtype=np.int64)
            log = np.zeros(q, dtype=np.int64)
            log[np.array(seen)] = np.arange(q - 1)
            self._logexp = (exp, log)
        return self._logexp

    def eval_polys(self, coeffs: np.ndarray) -> np.ndarray:
        """coeffs (r, l+1), low degree first -> values (r, q) at every point."""
        r, L = coeffs.shape
        pts = np.arange(self.q)
        acc = np.zeros((r, self.q), dtype=np.int64)
        for c in range(L - 1, -1, -1):
            acc = self.add[self.mul[acc, pts[None, :]], coeffs[:, c][:, None]]
        return acc


@lru_cache(maxsize=64)
def get_field(q: int) -> GF:
    return GF(q)


# ---------------------------------------------------------------------------
# weak designs


@dataclass(frozen=True)
class WeakDesign:
    num_sets: int
    set_size: int
    universe: int
    degree: int
    sets: np.ndarray = field(repr=False)
    overlap_bound: float = 1.0
    max_intersection: int | None = None
    exhaustive: bool = False

    def overlap_sums(self) -> np.ndarray:
        """sum_{j<i} 2^{|S_i n S_j|} for each i (quadratic; small designs only)."""
        s = self.sets
        r = s.shape[0]
        out = np.zeros(r)
        for i in range(1, r):
            inter = (s[:i] == s[i][None, :]).sum(axis=1)
            out[i] = np.sum(2.0 ** inter)
        return out


def design_degree(r: int, t_w: int) -> int:
    deg = 0
    while t_w ** (deg + 1) < r:
        deg += 1
    return deg


def design_capacity(t_w: int) -> int:
    return t_w ** t_w


def build_weak_design(r: int, t_w: int, verify_limit: int = 64) -> WeakDesign:
    if r < 1:
        raise InputError("a design needs at least one set")
    gf = get_field(t_w)
    deg = design_degree(r, t_w)
    if deg > t_w - 1:
        raise ConfigError(f"{r} sets exceed the capacity {design_capacity(t_w)} of a design over GF({t_w})")
    idx = np.arange(r, dtype=np.int64)
    coeffs = np.stack([(idx // t_w ** c) % t_w for c in range(deg + 1)], axis=1)
    vals = gf.eval_polys(coeffs)
    sets = np.arange(t_w)[None, :] * t_w + vals
    sets.setflags(write=False)
    design = WeakDesign(r, t_w, t_w * t_w, deg, sets, overlap_bound=float(2 ** deg))
    if r <= verify_limit:
        sums = design.overlap_sums()
        ratios = sums[1:] / np.arange(1, r) if r > 1 else np.zeros(0)
        maxint = 0
        for i in range(1, r):
            maxint = max(maxint, int((sets[:i] == sets[i][None, :]).sum(axis=1).max()))
        if maxint > deg:
            raise AssertionError("design overlap exceeds the degree bound")
        bound = float(ratios.max()) if ratios.size else 1.0
        design = WeakDesign(r, t_w, t_w * t_w, deg, sets, overlap_bound=max(bound, 1.0),
                            max_intersection=maxint, exhaustive=True)
    return design


# ---------------------------------------------------------------------------
# one-bit extractors


def _bits_int(bits: np.ndarray) -> int:
    v = 0
    for b in bits.tolist():
        v = (v << 1) | b
    return v


def _rs_symbols(x_bits: np.ndarray, a: int) -> np.ndarray:
    m = -(-x_bits.size // a)
    padded = np.zeros(m * a, dtype=np.int64)
    padded[: x_bits.size] = x_bits
    return padded.reshape(m, a) @ (1 << np.arange(a - 1, -1, -1))


def _parity(v: int) -> int:
    return bin(v).count("1") & 1


def one_bit_extract(x: BitString, y: BitString, index: int = 0, mode: str = "parity_of_selected",
                    code: str = "random_linear") -> int:
    xb = x.bits
    if mode == "parity_of_selected":
        if code == "identity":
            if len(y) != len(x):
                raise InputError(f"identity code needs |y| = |x| = {len(x)}, got {len(y)}")
            return int(np.bitwise_xor.reduce(xb & y.bits)) if len(x) else 0
        if code != "random_linear":
            raise InputError(f"unknown code {code!r}")
        if not 1 <= len(y) <= 64:
            raise InputError("seed chunk must hold 1..64 bits")
        return int(_kernels.mask_parities(pack_words(xb), np.array([_bits_int(y.bits)], dtype=np.uint64),
                                          len(x), index)[0])
    if mode == "rs_hadamard":
        if len(y) < 2 or len(y) % 2:
            raise InputError("rs_hadamard needs an even seed chunk of >= 2 bits")
        a = len(y) // 2
        gf = get_field(1 << a)
        exp, log = gf.log_exp()
        alpha, beta = _bits_int(y.bits[:a]), _bits_int(y.bits[a:])
        vals = _kernels.rs_eval_all(_rs_symbols(xb, a), exp, log, 1 << a)
        return _parity(int(vals[alpha]) & beta)
    raise InputError(f"unknown one-bit mode {mode!r}")


# ---------------------------------------------------------------------------
# full extractor


@dataclass(frozen=True)
class ExtractorSpec:
    n: int
    r: int
    epsilon: float
    d: int
    design: WeakDesign = field(repr=False)
    one_bit: str = "parity_of_selected"
    c0: float = DEFAULT_C0
    envelope: int = 0

    @property
    def t_w(self) -> int:
        return self.design.set_size

    def as_dict(self):
        return {"n": self.n, "r": self.r, "epsilon": self.epsilon, "d": self.d, "t_w": self.t_w,
                "degree": self.design.degree, "one_bit": self.one_bit, "c0": self.c0, "envelope": self.envelope}


def seed_envelope(n: int, r: int, epsilon: float, c0: float = DEFAULT_C0) -> int:
    return int(c0 * math.ceil(math.log2(n / epsilon)) ** 2 * math.ceil(math.log2(max(r, 2))))


def admissible_field_size(r: int, one_bit: str = "parity_of_selected") -> int:
    for t_w in range(2, MAX_FIELD + 1):
        pk = prime_power(t_w)
        if pk is None:
            continue
        if one_bit == "rs_hadamard" and pk[0] != 2:
            continue
        if design_capacity(t_w) >= r:
            return t_w
    raise ConfigError(f"r = {r} exceeds every design capacity up to field size {MAX_FIELD}")


def solve_spec(n: int, r: int, epsilon: float, one_bit: str = "parity_of_selected", c0: float = DEFAULT_C0) -> ExtractorSpec:
    """Smallest admissible field size t_w, design of r sets, d = t_w**2."""
    if r < 1:
        raise InputError("r must be >= 1")
    if n < 1:
        raise InputError("n must be >= 1")
    if r > n:
        raise ConfigError(f"cannot extract r={r} bits from an n={n}-bit source")
    if not 0 < epsilon < 1:
        raise InputError("epsilon must lie in (0,1)")
    if one_bit not in ("parity_of_selected", "rs_hadamard"):
        raise InputError(f"unknown one-bit mode {one_bit!r}")
    t_w = admissible_field_size(r, one_bit)
    d = t_w * t_w
    env = seed_envelope(n, r, epsilon, c0)
    if d > env:
        raise ConfigError(f"seed length d={d} exceeds the envelope {env} (c0={c0}) for n={n}, r={r}, eps={epsilon}")
    design = build_weak_design(r, t_w)
    return ExtractorSpec(n, r, float(epsilon), d, design, one_bit, c0, env)


def seed_chunks(seed: BitString, design: WeakDesign) -> np.ndarray:
    """Integer value (MSB first) of the seed restricted to each design set."""
    sel = seed.bits[design.sets].astype(np.uint64)
    w = np.uint64(1) << np.arange(design.set_size - 1, -1, -1, dtype=np.uint64)
    return (sel * w[None, :]).sum(axis=1, dtype=np.uint64)


def extract(x: BitString, seed: BitString, spec: ExtractorSpec) -> BitString:
    if len(x) != spec.n:
        raise InputError(f"source has {len(x)} bits, spec expects {spec.n}")
    if len(seed) != spec.d:
        raise InputError(f"seed has {len(seed)} bits, spec expects {spec.d}")
    ys = seed_chunks(seed, spec.design)
    if spec.one_bit == "parity_of_selected":
        out = _kernels.mask_parities(pack_words(x.bits), ys, spec.n, 0)
        return BitString(out)
    a = spec.t_w // 2
    gf = get_field(1 << a)
    exp, log = gf.log_exp()
    vals = _kernels.rs_eval_all(_rs_symbols(x.bits, a), exp, log, 1 << a)
    ys = ys.astype(np.int64)
    alpha = ys >> a
    beta = ys & ((1 << a) - 1)
    prod = vals[alpha] & beta
    bits = np.zeros(prod.size, dtype=np.uint8)
    for sh in range(a):
        bits ^= ((prod >> sh) & 1).astype(np.uint8)
    return BitString(bits)


def h_check(h: int, r: int, epsilon: float, c1: float = 1.0, c2: float = 1.0) -> bool:
    """Whether h >= r + c1 log2 r + c2 log2(1/epsilon)."""
    return h >= r + c1 * math.log2(max(r, 1)) + c2 * math.log2(1 / epsilon)
