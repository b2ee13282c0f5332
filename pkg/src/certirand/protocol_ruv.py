"""Referee side of RUV: N sequential CHSH games, the win-count threshold, and
seeded selection of one sub-block of the outputs.

Inputs: a = first N bits of S1, b = last N bits of S1.

Index selection. The choice space is num_blocks * subs_per_block (row-major,
0-based value v -> block i = v // subs + 1, sub-block j = v % subs + 1).
S2 is read as consecutive big-endian chunks of c = ceil(log2(space)) bits; the
first chunk whose value is below the space size is accepted. When S2 runs out
first, the last complete chunk (or, if S2 is shorter than one chunk, all of
S2) is reduced modulo the space size and the fallback is flagged.

z is the 1-based bit range [(i-1)t + (j-1)L + 1, (i-1)t + jL] of x, with
L = sub_block_len.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bits import BitString
from .devices import DeviceFault, play_pair_round
from .errors import ConfigError, InputError, InvalidSeedLength
from .params import ProtocolConstants, RuvParams, ruv_params
from .transcript import ProtocolTranscript


@dataclass
class Selection:
    i: int
    j: int
    z: BitString
    chunks_used: int
    fallback: bool
    fallback_probability: float


@dataclass
class RuvRun:
    params: RuvParams
    s1: BitString
    s2: BitString
    a: BitString
    b: BitString
    x: BitString | None
    y: BitString | None
    w: int
    aborted: bool
    cause: str
    transcript: ProtocolTranscript
    chosen_block: int | None = None
    chosen_sub: int | None = None
    z: BitString | None = None
    selection: Selection | None = None
    flags: list = field(default_factory=list)

    @property
    def output(self):
        return self.z


def run_games(dev_a, dev_b, a: BitString, b: BitString, transcript: ProtocolTranscript | None = None):
    """Play len(a) rounds strictly in sequence; returns (x, y, w)."""
    if len(a) != len(b):
        raise InputError("input strings differ in length")
    n = len(a)
    x = np.zeros(n, dtype=np.uint8)
    y = np.zeros(n, dtype=np.uint8)
    al, bl = a.bits.tolist(), b.bits.tolist()
    w = 0
    for k in range(n):
        xk, yk = play_pair_round(dev_a, dev_b, al[k], bl[k], k, transcript)
        x[k], y[k] = xk, yk
        w += (xk ^ yk) == (al[k] & bl[k])
        if transcript is not None:
            transcript.add_round(k, al[k], bl[k], xk, yk)
    return BitString(x), BitString(y), int(w)


def check_threshold(w: int, params: RuvParams) -> bool:
    """True = pass (w >= threshold)."""
    if not 0 <= w <= params.n_games:
        raise InputError(f"win count {w} outside [0, {params.n_games}]")
    return w >= params.win_threshold


def selection_space(params: RuvParams) -> int:
    return params.num_blocks * params.subs_per_block


def select_index(s2: BitString, space: int):
    """(value in [0, space), chunks used, fallback flag, fallback probability)."""
    if space < 1:
        raise ConfigError("empty selection space")
    if space == 1:
        return 0, 0, False, 0.0
    c = math.ceil(math.log2(space))
    nchunks = len(s2) // c
    bits = s2.bits
    for k in range(nchunks):
        v = 0
        for bit in bits[k * c:(k + 1) * c].tolist():
            v = (v << 1) | bit
        if v < space:
            return v, k + 1, False, (1 - space / 2 ** c) ** nchunks
    if len(s2) == 0:
        raise ConfigError("selection seed is empty")
    tail = bits[(nchunks - 1) * c: nchunks * c] if nchunks else bits
    v = 0
    for bit in tail.tolist():
        v = (v << 1) | bit
    return v % space, nchunks, True, (1 - space / 2 ** c) ** nchunks if nchunks else 1.0


def select_sub_block(x: BitString, s2: BitString, params: RuvParams) -> Selection:
    v, used, fallback, pf = select_index(s2, selection_space(params))
    i, j = v // params.subs_per_block + 1, v % params.subs_per_block + 1
    L = params.sub_block_len
    start = (i - 1) * params.t + (j - 1) * L
    return Selection(i, j, x[start:start + L], used, fallback, pf)


def ruv_header(params: RuvParams, consts: ProtocolConstants, seed: BitString) -> dict:
    return {"seed_bits": len(seed), "seed_hex": seed.to_hex(), "mode": consts.mode, "log_base": consts.log_base,
            "params": {"N": params.n_games, "t": params.t, "num_blocks": params.num_blocks,
                       "sub_block_len": params.sub_block_len, "subs_per_block": params.subs_per_block,
                       "r": params.r, "nu": params.nu, "zeta": params.zeta,
                       "win_threshold": params.win_threshold, "t_constraint_ok": params.t_constraint_ok}}


def run_ruv(dev_a, dev_b, seed: BitString, consts: ProtocolConstants,
            transcript: ProtocolTranscript | None = None) -> RuvRun:
    if len(seed) < 16:
        raise InvalidSeedLength(f"RUV needs at least 16 seed bits, got {len(seed)}")
    params = ruv_params(len(seed), consts)
    if consts.mode == "paper" and not params.t_constraint_ok:
        raise ConfigError(f"paper mode refuses to run RUV with t={params.t} <= 85")
    s1, s2 = seed.split_halves()
    N = params.n_games
    a, b = s1[:N], s1[len(s1) - N:]
    tr = transcript if transcript is not None else ProtocolTranscript("ruv")
    tr.dev_a, tr.dev_b = dev_a.index, dev_b.index
    tr.header.update(ruv_header(params, consts, seed))
    run = RuvRun(params, s1, s2, a, b, None, None, 0, False, "", tr)
    if not params.t_constraint_ok:
        run.flags.append("t<=85")
    try:
        x, y, w = run_games(dev_a, dev_b, a, b, tr)
    except DeviceFault as exc:
        run.aborted, run.cause = True, f"device fault: {exc}"
        tr.event("abort", stage="games", cause=run.cause)
        tr.summary = ruv_summary(run)
        return run
    run.x, run.y, run.w = x, y, w
    if not check_threshold(w, params):
        run.aborted, run.cause = True, f"win count {w} below threshold {params.win_threshold:.4f}"
        tr.event("abort", stage="threshold", cause=run.cause)
        tr.summary = ruv_summary(run)
        return run
    sel = select_sub_block(x, s2, params)
    run.selection = sel
    run.chosen_block, run.chosen_sub, run.z = sel.i, sel.j, sel.z
    if sel.fallback:
        run.flags.append("selection-fallback")
    tr.event("select", i=sel.i, j=sel.j, chunks=sel.chunks_used, fallback=sel.fallback,
             fallback_probability=sel.fallback_probability)
    tr.summary = ruv_summary(run)
    return run


def ruv_summary(run: RuvRun) -> dict:
    p = run.params
    return {"protocol": "ruv", "w": run.w, "N": p.n_games, "threshold": p.win_threshold,
            "log_base": p.log_base, "decision": "abort" if run.aborted else "pass", "aborted": run.aborted,
            "cause": run.cause, "i": run.chosen_block, "j": run.chosen_sub,
            "z_hex": run.z.to_hex() if run.z is not None else None,
            "z_bits": len(run.z) if run.z is not None else 0, "r_paper": p.r, "flags": list(run.flags)}
