"""Referee side of VV: split the seed, run a spot-checking entropy source on S1,
then extract from its output with S2 as the extractor seed.

The spot-checking source (``SpotCheckSource``) plays n rounds. A sparse,
seed-chosen subset of rounds are test rounds with uniformly random inputs;
every other round uses inputs (0, 0). It aborts when the win fraction on the
test rounds falls below cos^2(pi/8) - margin, and otherwise returns dev_a's
n outputs.

Seed layout inside S1 (MSB-first):
  bits [0, key_bits)                 key of the test-position permutation
  bits [key_bits + 2j, +2)           inputs (a, b) of the j-th test round
The positions are the first T entries of a Philox permutation of range(n)
keyed by the integer value of the key bits, sorted ascending.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .bits import BitString
from .devices import DeviceEndpoint, DeviceFault, chsh_win, play_pair_batch
from .errors import ConfigError, InvalidSeedLength
from .extractor import ExtractorSpec, extract, h_check, solve_spec
from .params import COS2_PI8, ProtocolConstants, VvParams, vv_params
from .rng import stream
from .transcript import ProtocolTranscript


@dataclass
class EntropyResult:
    y: BitString | None
    aborted: bool
    cause: str = ""
    consumed: int = 0
    tests: int = 0
    test_wins: int = 0
    threshold: float = 0.0
    flags: tuple = ()


class EntropySource(Protocol):
    def run(self, dev_a: DeviceEndpoint, dev_b: DeviceEndpoint, s1: BitString, n: int,
            consts: ProtocolConstants, transcript: ProtocolTranscript) -> EntropyResult:
        ...


def num_test_rounds(n: int, consts: ProtocolConstants) -> int:
    return int(np.floor(n * consts.vv_test_density))


def test_layout(s1: BitString, n: int, consts: ProtocolConstants):
    """(sorted test positions, test inputs a, test inputs b, bits consumed)."""
    T = num_test_rounds(n, consts)
    kb = consts.vv_key_bits
    need = kb + 2 * T
    if need > len(s1):
        raise ConfigError(f"seed exhaustion: {T} test rounds need {need} bits of S1, only {len(s1)} available")
    if T == 0:
        z = np.zeros(0, dtype=np.int64)
        return z, z.astype(np.uint8), z.astype(np.uint8), 0
    key = s1[:kb].to_int()
    perm = stream("protocol-b-positions", key, n).permutation(n)
    pos = np.sort(perm[:T])
    raw = s1.bits[kb:need]
    return pos, raw[0::2].copy(), raw[1::2].copy(), need


class SpotCheckSource:
    name = "spot-check"

    def run(self, dev_a, dev_b, s1, n, consts, transcript) -> EntropyResult:
        pos, ta, tb, consumed = test_layout(s1, n, consts)
        T = pos.size
        a = np.zeros(n, dtype=np.uint8)
        b = np.zeros(n, dtype=np.uint8)
        a[pos] = ta
        b[pos] = tb
        test = np.zeros(n, dtype=bool)
        test[pos] = True
        threshold = COS2_PI8 - consts.vv_margin
        batch = consts.dispatch_batch
        xs, ys = [], []
        try:
            for k0 in range(0, n, batch):
                x, y = play_pair_batch(dev_a, dev_b, a[k0:k0 + batch], b[k0:k0 + batch], k0, transcript)
                transcript.add_rounds(k0, a[k0:k0 + batch], b[k0:k0 + batch], x, y, test[k0:k0 + batch])
                xs.append(x)
                ys.append(y)
        except DeviceFault as exc:
            return EntropyResult(None, True, f"device fault: {exc}", consumed, T, 0, threshold)
        x = np.concatenate(xs) if xs else np.zeros(0, dtype=np.uint8)
        y = np.concatenate(ys) if ys else np.zeros(0, dtype=np.uint8)
        wins = int(chsh_win(ta, tb, x[pos], y[pos]).sum())
        flags = ()
        if T == 0:
            flags = ("no-test-rounds",)
            return EntropyResult(BitString(x), False, "", consumed, 0, 0, threshold, flags)
        if wins / T < threshold:
            return EntropyResult(None, True, f"test win fraction {wins}/{T} below {threshold:.6f}",
                                 consumed, T, wins, threshold)
        return EntropyResult(BitString(x), False, "", consumed, T, wins, threshold, flags)


@dataclass
class VvRun:
    params: VvParams
    s1: BitString
    s2: BitString
    y: BitString | None
    x: BitString | None
    aborted: bool
    cause: str
    transcript: ProtocolTranscript
    spec: ExtractorSpec | None = None
    source: EntropyResult | None = None
    consumed: int = 0
    flags: list = field(default_factory=list)

    @property
    def output(self):
        return self.x


def run_protocol_b(dev_a, dev_b, s1: BitString, params: VvParams, consts: ProtocolConstants,
                   transcript: ProtocolTranscript | None = None, source: EntropySource | None = None):
    """Returns the n-bit output, or None on abort (details in the transcript)."""
    transcript = transcript if transcript is not None else ProtocolTranscript("protocol-b")
    res = (source or SpotCheckSource()).run(dev_a, dev_b, s1, params.n, consts, transcript)
    _record_source(transcript, res)
    return res.y


def _record_source(transcript, res: EntropyResult):
    transcript.event("protocol-b", tests=res.tests, test_wins=res.test_wins, threshold=res.threshold,
                     aborted=res.aborted, cause=res.cause, consumed=res.consumed, flags=list(res.flags))


def vv_header(params: VvParams, consts: ProtocolConstants, seed: BitString, spec: ExtractorSpec | None) -> dict:
    return {
        "seed_bits": len(seed), "seed_hex": seed.to_hex(), "mode": consts.mode, "log_base": consts.log_base,
        "params": {"s": params.s, "h": params.h, "n": params.n, "n_formula": str(params.n_formula),
                   "d_formula": params.d, "v": params.v, "epsilon": params.epsilon, "flags": list(params.flags)},
        "claimed_min_entropy": params.h,
        "test_density": consts.vv_test_density, "margin": consts.vv_margin, "key_bits": consts.vv_key_bits,
        "placeholder_constants": True,
        "extractor": spec.as_dict() if spec is not None else None,
    }


def run_vv(dev_a, dev_b, seed: BitString, consts: ProtocolConstants,
           source: EntropySource | None = None, transcript: ProtocolTranscript | None = None) -> VvRun:
    if len(seed) < 8:
        raise InvalidSeedLength(f"VV needs at least 8 seed bits, got {len(seed)}")
    params = vv_params(len(seed), consts)
    s1, s2 = seed.split_halves()
    tr = transcript if transcript is not None else ProtocolTranscript("vv")
    tr.dev_a, tr.dev_b = dev_a.index, dev_b.index

    spec, problem = None, ""
    if params.v < 1:
        problem = f"VV output length v={params.v}"
    else:
        try:
            spec = solve_spec(params.n, params.v, params.epsilon, consts.one_bit)
            if spec.d > len(s2):
                problem = f"extractor seed d={spec.d} exceeds |S2|={len(s2)}"
        except ConfigError as exc:
            problem = str(exc)
    tr.header.update(vv_header(params, consts, seed, spec))
    run = VvRun(params, s1, s2, None, None, False, "", tr, spec)
    if not params.feasible:
        run.flags.extend(params.flags)
    if problem:
        run.aborted, run.cause = True, f"infeasible parameters: {problem}"
        tr.event("abort", stage="preflight", cause=run.cause)
        tr.summary = vv_summary(run)
        return run
    if not h_check(params.h, params.v, params.epsilon, consts.ext_c1, consts.ext_c2):
        run.flags.append("h-check-failed")

    res = (source or SpotCheckSource()).run(dev_a, dev_b, s1, params.n, consts, tr)
    _record_source(tr, res)
    run.source = res
    run.consumed = res.consumed
    run.flags.extend(res.flags)
    if res.aborted:
        run.aborted, run.cause = True, f"protocol B: {res.cause}"
        tr.event("abort", stage="protocol-b", cause=run.cause)
        tr.summary = vv_summary(run)
        return run
    run.y = res.y
    run.x = extract(res.y, s2[: spec.d], spec)
    run.consumed += spec.d
    tr.event("extract", d=spec.d, output_hex=run.x.to_hex(), output_bits=len(run.x))
    tr.summary = vv_summary(run)
    return run


def vv_summary(run: VvRun) -> dict:
    res = run.source
    return {
        "protocol": "vv", "aborted": run.aborted, "cause": run.cause,
        "tests": res.tests if res else 0, "test_wins": res.test_wins if res else 0,
        "threshold": res.threshold if res else None,
        "output_bits": len(run.x) if run.x is not None else 0,
        "output_hex": run.x.to_hex() if run.x is not None else None,
        "consumed": run.consumed, "flags": list(run.flags),
    }
