"""Hot loops, each in a numba flavour and a pure-numpy flavour.

Public names (``measure_batch``, ``pauli_batch``, ``mask_parities``,
``rs_eval_all``) resolve to the numba versions unless numba is disabled; the
``*_nb`` / ``*_np`` names stay importable so tests and the benchmark can
compare both paths on identical inputs.
"""
import numpy as np

from ._accel import USE_NUMBA, jit

# ---------------------------------------------------------------------------
# state-vector measurement
#
# amps has shape (B, D) with D = 2**q: B independent blocks of q qubits each.
# Qubit j of a block is bit (q-1-j) of the amplitude index (qubit 0 leftmost).
# Measuring at angle theta projects onto the eigenbasis of cos(th) Z + sin(th) X:
#   outcome 0 -> (cos th/2, sin th/2),  outcome 1 -> (-sin th/2, cos th/2).


def _measure_one_py(amps, q, b, j, theta, u):
    half = amps.shape[1] // 2
    shift = q - 1 - j
    low = (1 << shift) - 1
    c = np.cos(0.5 * theta)
    s = np.sin(0.5 * theta)
    p0 = 0.0
    for m in range(half):
        i0 = ((m >> shift) << (shift + 1)) | (m & low)
        i1 = i0 | (1 << shift)
        a = c * amps[b, i0] + s * amps[b, i1]
        p0 += a.real * a.real + a.imag * a.imag
    if u < p0:
        outcome = 0
        norm = np.sqrt(p0)
    else:
        outcome = 1
        norm = np.sqrt(max(1.0 - p0, 1e-300))
    for m in range(half):
        i0 = ((m >> shift) << (shift + 1)) | (m & low)
        i1 = i0 | (1 << shift)
        if outcome == 0:
            a = (c * amps[b, i0] + s * amps[b, i1]) / norm
            amps[b, i0] = c * a
            amps[b, i1] = s * a
        else:
            a = (-s * amps[b, i0] + c * amps[b, i1]) / norm
            amps[b, i0] = -s * a
            amps[b, i1] = c * a
    return outcome


_measure_one_jit = jit(_measure_one_py)


def _measure_batch_py(amps, q, blocks, locals_, angles, u, out):
    for k in range(blocks.shape[0]):
        out[k] = _measure_one_jit(amps, q, blocks[k], locals_[k], angles[k], u[k])


def _pair_index(q, j):
    D = 1 << q
    idx = np.arange(D)
    bit = (idx >> (q - 1 - j)) & 1
    return idx[bit == 0], idx[bit == 1]


def _occurrence_rank(blocks):
    """rank[k] = number of earlier k' with blocks[k'] == blocks[k]."""
    order = np.argsort(blocks, kind="stable")
    sb = blocks[order]
    start = np.r_[True, sb[1:] != sb[:-1]]
    grp_start = np.maximum.accumulate(np.where(start, np.arange(sb.size), 0))
    rank = np.empty_like(blocks)
    rank[order] = np.arange(sb.size) - grp_start
    return rank


def measure_batch_np(amps, q, blocks, locals_, angles, u):
    blocks = np.asarray(blocks, dtype=np.int64)
    locals_ = np.asarray(locals_, dtype=np.int64)
    angles = np.asarray(angles, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    out = np.empty(blocks.size, dtype=np.uint8)
    if blocks.size == 0:
        return out
    rank = _occurrence_rank(blocks)
    tables = [_pair_index(q, j) for j in range(q)]
    for level in range(int(rank.max()) + 1):
        sel_level = np.nonzero(rank == level)[0]
        for j in range(q):
            sel = sel_level[locals_[sel_level] == j]
            if sel.size == 0:
                continue
            i0, i1 = tables[j]
            b = blocks[sel][:, None]
            a0 = amps[b, i0[None, :]]
            a1 = amps[b, i1[None, :]]
            c = np.cos(0.5 * angles[sel])[:, None]
            s = np.sin(0.5 * angles[sel])[:, None]
            proj0 = c * a0 + s * a1
            proj1 = -s * a0 + c * a1
            p0 = np.sum(proj0.real ** 2 + proj0.imag ** 2, axis=1)
            res = (u[sel] >= p0).astype(np.uint8)
            norm = np.sqrt(np.where(res == 0, p0, np.maximum(1.0 - p0, 1e-300)))[:, None]
            pr = np.where(res[:, None] == 0, proj0, proj1) / norm
            amps[b, i0[None, :]] = np.where(res[:, None] == 0, c * pr, -s * pr)
            amps[b, i1[None, :]] = np.where(res[:, None] == 0, s * pr, c * pr)
            out[sel] = res
    return out


_measure_batch_jit = jit(_measure_batch_py)


def measure_batch_nb(amps, q, blocks, locals_, angles, u):
    out = np.empty(len(blocks), dtype=np.uint8)
    _measure_batch_jit(amps, np.int64(q), np.asarray(blocks, dtype=np.int64),
                       np.asarray(locals_, dtype=np.int64), np.asarray(angles, dtype=np.float64),
                       np.asarray(u, dtype=np.float64), out)
    return out


# ---------------------------------------------------------------------------
# Pauli application (0 = I, 1 = X, 2 = Y, 3 = Z)

def _pauli_batch_py(amps, q, blocks, locals_, codes):
    D = amps.shape[1]
    half = D // 2
    for k in range(blocks.shape[0]):
        code = codes[k]
        if code == 0:
            continue
        b = blocks[k]
        shift = q - 1 - locals_[k]
        for m in range(half):
            lo = m & ((1 << shift) - 1)
            i0 = ((m >> shift) << (shift + 1)) | lo
            i1 = i0 | (1 << shift)
            a0 = amps[b, i0]
            a1 = amps[b, i1]
            if code == 1:
                amps[b, i0] = a1
                amps[b, i1] = a0
            elif code == 2:
                amps[b, i0] = -1j * a1
                amps[b, i1] = 1j * a0
            else:
                amps[b, i1] = -a1


def pauli_batch_np(amps, q, blocks, locals_, codes):
    blocks = np.asarray(blocks, dtype=np.int64)
    locals_ = np.asarray(locals_, dtype=np.int64)
    codes = np.asarray(codes, dtype=np.int64)
    if blocks.size == 0:
        return
    rank = _occurrence_rank(blocks)
    for level in range(int(rank.max()) + 1):
        lvl = np.nonzero((rank == level) & (codes != 0))[0]
        for j in range(q):
            sel = lvl[locals_[lvl] == j]
            if sel.size == 0:
                continue
            i0, i1 = _pair_index(q, j)
            b = blocks[sel][:, None]
            a0 = amps[b, i0[None, :]]
            a1 = amps[b, i1[None, :]]
            cd = codes[sel][:, None]
            n0 = np.where(cd == 1, a1, np.where(cd == 2, -1j * a1, a0))
            n1 = np.where(cd == 1, a0, np.where(cd == 2, 1j * a0, -a1))
            amps[b, i0[None, :]] = n0
            amps[b, i1[None, :]] = n1


_pauli_batch_jit = jit(_pauli_batch_py)


def pauli_batch_nb(amps, q, blocks, locals_, codes):
    _pauli_batch_jit(amps, np.int64(q), np.asarray(blocks, dtype=np.int64),
                     np.asarray(locals_, dtype=np.int64), np.asarray(codes, dtype=np.int64))


# ---------------------------------------------------------------------------
# counter-based mask generator for the parity one-bit extractor
#
# mask(i, y, n) is an n-bit string drawn from splitmix64 keyed by (i, y, attempt).
# Attempts repeat until the mask is nonzero with Hamming-weight parity
# (i + 1) mod 2, so masks for indices 0 and 1 are always distinct and nonzero.

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TAG = np.uint64(0x63657274692D6D6B)


def _splitmix_np(z):
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def _tail_mask(n):
    rem = n % 64
    if rem == 0:
        return np.uint64(0xFFFFFFFFFFFFFFFF)
    return np.uint64(((1 << rem) - 1) << (64 - rem))


def mask_words_np(i, y, n):
    """The accepted mask for (i, y) as uint64 words, MSB-first bit order."""
    nw = (n + 63) // 64
    tail = _tail_mask(n)
    want = (i + 1) % 2
    attempt = 0
    while True:
        key = _splitmix_np(np.array([_TAG ^ np.uint64(i)], dtype=np.uint64))
        key = _splitmix_np(key ^ np.uint64(y))
        key = _splitmix_np(key ^ np.uint64(attempt))
        with np.errstate(over="ignore"):
            ctr = key + np.arange(1, nw + 1, dtype=np.uint64) * _GOLDEN
        w = _splitmix_np(ctr)
        w[-1] &= tail
        if n == 1:
            w[-1] = tail
            return w
        weight = int(np.bitwise_count(w).sum())
        if weight > 0 and weight % 2 == want:
            return w
        attempt += 1


def mask_parities_np(xw, ys, n, index_offset=0):
    """Bit i = <x, mask(index_offset + i, ys[i])> mod 2."""
    ys = np.asarray(ys, dtype=np.uint64)
    out = np.empty(ys.size, dtype=np.uint8)
    for k in range(ys.size):
        w = mask_words_np(index_offset + k, int(ys[k]), n)
        out[k] = int(np.bitwise_count(np.bitwise_and(xw, w)).sum()) & 1
    return out


def _splitmix_s(z):
    z = z + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _popcount(x):
    x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return (x * np.uint64(0x0101010101010101)) >> np.uint64(56)


_splitmix_jit = jit(_splitmix_s)
_popcount_jit = jit(_popcount)


def _mask_parities_py(xw, ys, n, index_offset, tail, out):
    nw = xw.shape[0]
    golden = np.uint64(0x9E3779B97F4A7C15)
    tag = np.uint64(0x63657274692D6D6B)
    for k in range(ys.shape[0]):
        i = index_offset + k
        want = (i + 1) % 2
        attempt = 0
        while True:
            key = _splitmix_jit(tag ^ np.uint64(i))
            key = _splitmix_jit(key ^ ys[k])
            key = _splitmix_jit(key ^ np.uint64(attempt))
            weight = np.uint64(0)
            acc = np.uint64(0)
            for w in range(nw):
                word = _splitmix_jit(key + np.uint64(w + 1) * golden)
                if w == nw - 1:
                    word = word & tail
                    if n == 1:
                        word = tail
                weight += _popcount_jit(word)
                acc ^= word & xw[w]
            if n == 1 or (weight > 0 and weight % np.uint64(2) == np.uint64(want)):
                out[k] = np.uint8(_popcount_jit(acc) & np.uint64(1))
                break
            attempt += 1


_mask_parities_jit = jit(_mask_parities_py)


def mask_parities_nb(xw, ys, n, index_offset=0):
    ys = np.asarray(ys, dtype=np.uint64)
    out = np.empty(ys.size, dtype=np.uint8)
    _mask_parities_jit(np.asarray(xw, dtype=np.uint64), ys, np.int64(n), np.int64(index_offset),
                       _tail_mask(n), out)
    return out


# ---------------------------------------------------------------------------
# Reed-Solomon evaluation over GF(2^a): value(alpha) = sum_k sym[k] alpha^k,
# for every alpha in the field, by Horner's rule with log/exp tables.

def _gf_mul_tab(a, b, exp, log, order):
    if a == 0 or b == 0:
        return 0
    return exp[(log[a] + log[b]) % order]


def _rs_eval_all_py(sym, exp, log, q, out):
    order = q - 1
    for al in range(q):
        acc = 0
        for k in range(sym.shape[0] - 1, -1, -1):
            if acc != 0 and al != 0:
                acc = exp[(log[acc] + log[al]) % order]
            else:
                acc = 0
            acc ^= sym[k]
        out[al] = acc


def rs_eval_all_np(sym, exp, log, q):
    sym = np.asarray(sym, dtype=np.int64)
    al = np.arange(q, dtype=np.int64)
    acc = np.zeros(q, dtype=np.int64)
    order = q - 1
    log_al = log[al]
    for k in range(sym.size - 1, -1, -1):
        nz = (acc != 0) & (al != 0)
        prod = np.zeros(q, dtype=np.int64)
        prod[nz] = exp[(log[acc[nz]] + log_al[nz]) % order]
        acc = prod ^ sym[k]
    return acc


_rs_eval_all_jit = jit(_rs_eval_all_py)


def rs_eval_all_nb(sym, exp, log, q):
    out = np.empty(q, dtype=np.int64)
    _rs_eval_all_jit(np.asarray(sym, dtype=np.int64), np.asarray(exp, dtype=np.int64),
                     np.asarray(log, dtype=np.int64), np.int64(q), out)
    return out


# ---------------------------------------------------------------------------

if USE_NUMBA:
    measure_one = _measure_one_jit
    measure_batch = measure_batch_nb
    pauli_batch = pauli_batch_nb
    mask_parities = mask_parities_nb
    rs_eval_all = rs_eval_all_nb
else:  # pragma: no cover - exercised with CERTIRAND_DISABLE_NUMBA=1
    measure_one = _measure_one_py  # scalar loop over 2**(q-1) amplitude pairs
    measure_batch = measure_batch_np
    pauli_batch = pauli_batch_np
    mask_parities = mask_parities_np
    rs_eval_all = rs_eval_all_np
