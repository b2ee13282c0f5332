"""Simulated non-signaling devices.

Each device is an actor: the referee drops messages in its inbox, ``step``
processes them using only the device's own state, its own random streams and
(for quantum strategies) measurements on qubits it owns, and replies land in
its outbox. Devices never address each other; the only shared object is the
backend, which serializes measurements and enforces qubit ownership.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, InputError, NonSignalingViolation
from .qsim import QuantumBackend
from .rng import RunStreams
from .transcript import REFEREE, ProtocolTranscript

ROLES = ("vv_a", "vv_b", "ruv_a", "ruv_b")
PARTNER = {"vv_a": "vv_b", "vv_b": "vv_a", "ruv_a": "ruv_b", "ruv_b": "ruv_a"}
SIDE = {"vv_a": 0, "vv_b": 1, "ruv_a": 0, "ruv_b": 1}
# Ideal CHSH measurement angles in the X-Z plane, indexed by input bit.
IDEAL_ANGLES = {0: (0.0, math.pi / 2), 1: (math.pi / 4, -math.pi / 4)}
EVE_INDEX = 9


class DeviceFault(Exception):
    """A device failed to answer properly; the protocol aborts with the cause."""


@dataclass(frozen=True)
class DeviceId:
    index: int
    cluster: int
    role: str

    @classmethod
    def of(cls, cluster: int, role: str) -> "DeviceId":
        if cluster not in (0, 1) or role not in ROLES:
            raise ConfigError(f"no device for cluster {cluster}, role {role!r}")
        return cls(4 * cluster + ROLES.index(role) + 1, cluster, role)

    @classmethod
    def from_index(cls, index: int) -> "DeviceId":
        if not 1 <= index <= 8:
            raise InputError(f"device index {index} outside 1..8")
        c, r = divmod(index - 1, 4)
        return cls(index, c, ROLES[r])

    def __str__(self):
        return f"D{self.index}(c{self.cluster}.{self.role})"


# ---------------------------------------------------------------------------
# strategies


@dataclass(frozen=True)
class Automaton:
    """Deterministic Mealy machine over the device's own input bits."""

    outputs: tuple  # outputs[state][input]
    next: tuple     # next[state][input]
    start: int = 0

    def __post_init__(self):
        n = len(self.outputs)
        if n == 0 or len(self.next) != n:
            raise ConfigError("automaton needs matching, non-empty output and next tables")
        for row_o, row_n in zip(self.outputs, self.next):
            if len(row_o) != 2 or len(row_n) != 2:
                raise ConfigError("automaton rows need one entry per input bit")
            if any(o not in (0, 1) for o in row_o) or any(not 0 <= s < n for s in row_n):
                raise ConfigError("automaton entries out of range")
        if not 0 <= self.start < n:
            raise ConfigError("automaton start state out of range")

    @classmethod
    def constant(cls, bit: int) -> "Automaton":
        return cls(((bit, bit),), ((0, 0),))

    @classmethod
    def from_table(cls, table) -> "Automaton":
        return cls(((int(table[0]), int(table[1])),), ((0, 0),))

    @classmethod
    def from_json(cls, text: str) -> "Automaton":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad automaton JSON: {exc}") from exc
        if "constant" in data:
            return cls.constant(int(data["constant"]))
        try:
            return cls(tuple(tuple(int(v) for v in row) for row in data["outputs"]),
                       tuple(tuple(int(v) for v in row) for row in data["next"]),
                       int(data.get("start", 0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad automaton description: {exc}") from exc

    def run(self, state: int, inputs: np.ndarray):
        """Outputs for ``inputs`` starting from ``state``; returns (outputs, new_state)."""
        out = np.empty(inputs.size, dtype=np.uint8)
        if len(self.outputs) == 1:
            table = np.asarray(self.outputs[0], dtype=np.uint8)
            return table[inputs], 0
        o, nx = self.outputs, self.next
        for k, bit in enumerate(inputs.tolist()):
            out[k] = o[state][bit]
            state = nx[state][bit]
        return out, state


@dataclass(frozen=True)
class Strategy:
    kind: str                   # ideal_chsh | noisy_ideal | classical_deterministic | scripted | quantum
    p: float = 0.0              # depolarizing probability before each measurement
    table: tuple | None = None  # classical_deterministic: output per input bit
    program: Automaton | None = None
    angles: tuple | None = None  # quantum: measurement angle per input bit
    resource: str = "pair"      # quantum: "pair" (EPR with partner) or a shared-resource name

    @property
    def quantum(self) -> bool:
        return self.kind in ("ideal_chsh", "noisy_ideal", "quantum")

    def describe(self) -> str:
        if self.kind == "ideal_chsh":
            return "ideal"
        if self.kind == "noisy_ideal":
            return f"noisy:{self.p}"
        if self.kind == "classical_deterministic":
            return f"classical:{self.table[0]}{self.table[1]}"
        if self.kind == "scripted":
            return "script"
        return f"quantum:{self.resource}"


def ideal_chsh() -> Strategy:
    return Strategy("ideal_chsh")


def noisy_ideal(p: float) -> Strategy:
    if not 0 <= p <= 1:
        raise ConfigError(f"noise probability {p} outside [0,1]")
    return Strategy("noisy_ideal", p=float(p))


def classical_deterministic(table) -> Strategy:
    table = tuple(int(v) for v in table)
    if len(table) != 2 or any(v not in (0, 1) for v in table):
        raise ConfigError("classical table needs one output bit per input bit")
    return Strategy("classical_deterministic", table=table)


def scripted(program: Automaton) -> Strategy:
    return Strategy("scripted", program=program)


def quantum_measure(angles, resource: str, p: float = 0.0) -> Strategy:
    """Measure the next owned qubit of ``resource`` at ``angles[input]``."""
    return Strategy("quantum", p=float(p), angles=tuple(float(a) for a in angles), resource=resource)


def parse_strategy(text: str, base_dir: str | Path | None = None) -> Strategy:
    """``ideal``, ``noisy:<p>``, ``classical:<o0><o1>``, ``zeros``, ``ones``,
    ``const:<bit>`` or ``script:<path to automaton JSON>``."""
    text = text.strip()
    kind, _, arg = text.partition(":")
    if kind == "ideal" and not arg:
        return ideal_chsh()
    if kind == "noisy":
        try:
            return noisy_ideal(float(arg))
        except ValueError as exc:
            raise ConfigError(f"bad noise level in {text!r}") from exc
    if kind == "classical" and len(arg) == 2:
        return classical_deterministic(arg)
    if kind in ("zeros", "ones") and not arg:
        return scripted(Automaton.constant(0 if kind == "zeros" else 1))
    if kind == "const" and arg in ("0", "1"):
        return scripted(Automaton.constant(int(arg)))
    if kind == "script" and arg:
        path = Path(arg)
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        try:
            return scripted(Automaton.from_json(path.read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read script {path}: {exc}") from exc
    raise ConfigError(f"unknown strategy {text!r}")


def parse_strategy_file(text: str, base_dir=None) -> dict:
    """Lines ``strategy.cluster<c>.<role> = <strategy>``; unspecified roles are ideal."""
    out = {(c, r): ideal_chsh() for c in (0, 1) for r in ROLES}
    seen = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, val = line.partition("=")
        parts = key.strip().split(".")
        if not eq or len(parts) != 3 or parts[0] != "strategy" or parts[1] not in ("cluster0", "cluster1") \
                or parts[2] not in ROLES:
            raise ConfigError(f"line {lineno}: expected 'strategy.cluster<0|1>.<role> = ...'")
        slot = (int(parts[1][-1]), parts[2])
        if slot in seen:
            raise ConfigError(f"line {lineno}: duplicate role {parts[1]}.{parts[2]}")
        seen.add(slot)
        out[slot] = parse_strategy(val, base_dir)
    return out


# ---------------------------------------------------------------------------
# entanglement


class PairSource:
    """Lazily allocated stream of EPR pairs between two devices.

    Pair k feeds round k of whichever protocol the two devices run; the A-side
    device owns qubit 0 of every pair, the B-side qubit 1."""

    def __init__(self, backend: QuantumBackend, owner_a, owner_b, batch: int = 4096):
        self.backend = backend
        self.owner_a, self.owner_b = owner_a, owner_b
        self.batch = batch
        self.registers = []

    def ensure(self, count: int):
        while len(self.registers) * self.batch < count:
            self.registers.append(self.backend.allocate_epr_pairs(self.batch, self.owner_a, self.owner_b))

    def segments(self, start: int, count: int, side: int):
        """Yield (register, global qubit indices, slice into the request)."""
        self.ensure(start + count)
        k = start
        end = start + count
        while k < end:
            reg_i, off = divmod(k, self.batch)
            take = min(end - k, self.batch - off)
            qubits = 2 * np.arange(off, off + take, dtype=np.int64) + side
            yield self.registers[reg_i], qubits, slice(k - start, k - start + take)
            k += take


class SharedSource:
    """GHZ blocks across an arbitrary device subset (optionally with an
    eavesdropper endpoint holding one qubit of every block)."""

    def __init__(self, backend: QuantumBackend, owners, batch: int = 1024):
        self.backend = backend
        self.owners = list(owners)
        self.batch = batch
        self.registers = []

    def ensure(self, count):
        while len(self.registers) * self.batch < count:
            self.registers.append(self.backend.allocate_ghz(self.batch, self.owners))

    def segments(self, start, count, side):
        q = len(self.owners)
        self.ensure(start + count)
        k, end = start, start + count
        while k < end:
            reg_i, off = divmod(k, self.batch)
            take = min(end - k, self.batch - off)
            qubits = q * np.arange(off, off + take, dtype=np.int64) + side
            yield self.registers[reg_i], qubits, slice(k - start, k - start + take)
            k += take

    def position(self, owner) -> int:
        codes = [getattr(o, "index", o) for o in self.owners]
        return codes.index(getattr(owner, "index", owner))


# ---------------------------------------------------------------------------
# endpoints


class DeviceEndpoint:
    def __init__(self, dev_id: DeviceId, strategy: Strategy, streams: RunStreams, source=None, side: int = 0):
        self.id = dev_id
        self.strategy = strategy
        self.inbox: deque = deque()
        self.outbox: deque = deque()
        self.rng_meas = streams.get("device", dev_id.index, "measure")
        self.rng_noise = streams.get("device", dev_id.index, "noise")
        self.source = source
        self.side = side
        self.used = 0            # entangled resources consumed so far
        self.state = program_start(strategy)
        self.history: list = []  # every message this device ever received

    @property
    def index(self) -> int:
        return self.id.index

    def deliver(self, msg):
        self.history.append(msg)
        self.inbox.append(msg)

    def step(self):
        """Process every pending message (one actor turn)."""
        while self.inbox:
            msg = self.inbox.popleft()
            if msg.recipient != self.index:
                raise DeviceFault(f"{self.id} received a message addressed to device {msg.recipient}")
            bits = msg.payload
            if msg.kind == "input":
                out = self._respond_one(bits)
                self.outbox.append(("output", msg.round, 1, out))
            elif msg.kind == "inputs":
                out = self._respond(np.asarray(bits, dtype=np.uint8))
                self.outbox.append(("outputs", msg.round, len(out), out))
            else:
                raise DeviceFault(f"{self.id} cannot handle message kind {msg.kind!r}")

    def _respond_one(self, bit) -> int:
        st = self.strategy
        if bit not in (0, 1):
            raise DeviceFault(f"{self.id} received a non-bit input")
        if not st.quantum or st.p > 0 or not isinstance(self.source, PairSource):
            return int(self._respond(np.asarray([bit], dtype=np.uint8))[0])
        src = self.source
        src.ensure(self.used + 1)
        reg_i, off = divmod(self.used, src.batch)
        angle = (st.angles if st.angles is not None else IDEAL_ANGLES[self.side])[bit]
        out = src.registers[reg_i].measure_one(2 * off + self.side, angle, self.id, self.rng_meas)
        self.used += 1
        return out

    def _respond(self, inputs: np.ndarray) -> np.ndarray:
        st = self.strategy
        if inputs.size and inputs.max() > 1:
            raise DeviceFault(f"{self.id} received a non-bit input")
        if st.kind == "classical_deterministic":
            return np.asarray(st.table, dtype=np.uint8)[inputs]
        if st.kind == "scripted":
            out, self.state = st.program.run(self.state, inputs)
            return out
        if self.source is None:
            raise DeviceFault(f"{self.id} has a quantum strategy but no entanglement")
        angles = np.asarray(st.angles if st.angles is not None else IDEAL_ANGLES[self.side], dtype=np.float64)[inputs]
        out = np.empty(inputs.size, dtype=np.uint8)
        for reg, qubits, sl in self.source.segments(self.used, inputs.size, self.side):
            if st.p > 0:
                reg.depolarize_many(qubits, st.p, self.rng_noise, requester=self.id)
            out[sl] = reg.measure_many(qubits, angles[sl], self.id, self.rng_meas)
        self.used += inputs.size
        return out


def program_start(strategy: Strategy) -> int:
    return strategy.program.start if strategy.kind == "scripted" else 0


class Eavesdropper:
    """Passive ninth endpoint holding purifying qubits; receives no protocol messages."""

    def __init__(self, streams: RunStreams):
        self.index = EVE_INDEX
        self.rng = streams.get("device", EVE_INDEX, "measure")
        self.sources = []

    def measure_all(self, source: SharedSource, count: int, angle: float = 0.0, start: int = 0):
        side = source.position(self)
        out = np.empty(count, dtype=np.uint8)
        for reg, qubits, sl in source.segments(start, count, side):
            out[sl] = reg.measure_many(qubits, angle, self, self.rng)
        return out


@dataclass
class Cluster:
    cluster_id: int
    endpoints: dict = field(default_factory=dict)
    strategies: dict = field(default_factory=dict)

    def __getitem__(self, role) -> DeviceEndpoint:
        return self.endpoints[role]

    @property
    def device_indices(self) -> set:
        return {e.index for e in self.endpoints.values()}


def spawn_cluster(cluster_id: int, strategies, backend: QuantumBackend, streams: RunStreams,
                  shared=None, eve: Eavesdropper | None = None, pair_batch: int = 4096) -> Cluster:
    """Create the four devices of one cluster.

    ``strategies`` maps role -> Strategy (or is a sequence of such pairs).
    Honest quantum strategies get EPR pairs with their protocol partner only.
    ``shared`` optionally lists role tuples that share GHZ blocks (plus the
    eavesdropper when given); strategies of kind ``quantum`` name such a
    resource as ``"shared0"``, ``"shared1"``, ... by position in that list.
    """
    items = list(strategies.items()) if isinstance(strategies, dict) else list(strategies)
    roles = [r for r, _ in items]
    if len(set(roles)) != len(roles):
        raise ConfigError(f"duplicate roles in cluster {cluster_id}")
    if set(roles) != set(ROLES):
        raise ConfigError(f"cluster {cluster_id} needs exactly the roles {ROLES}")
    strat = dict(items)
    ids = {r: DeviceId.of(cluster_id, r) for r in ROLES}
    cl = Cluster(cluster_id, strategies=strat)

    shared_sources = {}
    for n, group in enumerate(shared or ()):
        owners = [ids[r] for r in group] + ([eve] if eve is not None else [])
        shared_sources[f"shared{n}"] = (SharedSource(backend, owners), list(group))
        if eve is not None:
            eve.sources.append(shared_sources[f"shared{n}"][0])

    pair_sources = {}
    for a_role in ("vv_a", "ruv_a"):
        b_role = PARTNER[a_role]
        need = any(strat[r].quantum and strat[r].resource == "pair" for r in (a_role, b_role))
        if need:
            src = PairSource(backend, ids[a_role], ids[b_role], batch=pair_batch)
            pair_sources[a_role] = pair_sources[b_role] = src

    for r in ROLES:
        st = strat[r]
        source, side = None, SIDE[r]
        if st.quantum:
            if st.resource == "pair":
                source = pair_sources[r]
            elif st.resource in shared_sources:
                source, group = shared_sources[st.resource]
                if r not in group:
                    raise ConfigError(f"role {r} is not part of {st.resource}")
                side = group.index(r)
                if st.angles is None:
                    raise ConfigError("shared-resource strategies need explicit angles")
            else:
                raise ConfigError(f"unknown entanglement resource {st.resource!r}")
        cl.endpoints[r] = DeviceEndpoint(ids[r], st, streams.child("cluster", cluster_id), source, side)
    return cl


# ---------------------------------------------------------------------------
# referee side helpers


def _collect(endpoint: DeviceEndpoint, transcript, expect_kind, k, count):
    if not endpoint.outbox:
        raise DeviceFault(f"{endpoint.id} produced no output for round {k}")
    kind, rnd, cnt, out = endpoint.outbox.popleft()
    if kind != expect_kind or rnd != k or cnt != count:
        raise DeviceFault(f"{endpoint.id} answered out of order at round {k}")
    if transcript is not None:
        transcript.log_message(endpoint.index, REFEREE, kind, k, count, (endpoint.index,), out)
    return out


def _send(endpoint, transcript, kind, k, count, payload):
    if transcript is not None:
        msg = transcript.log_message(REFEREE, endpoint.index, kind, k, count, (endpoint.index,), payload)
    else:
        from .transcript import Message
        msg = Message(-1, REFEREE, endpoint.index, kind, k, count, (endpoint.index,), payload)
    endpoint.deliver(msg)


def play_round(endpoint: DeviceEndpoint, bit: int, k: int = 0, transcript: ProtocolTranscript | None = None) -> int:
    _send(endpoint, transcript, "input", k, 1, int(bit))
    endpoint.step()
    return int(_collect(endpoint, transcript, "output", k, 1))


def play_pair_round(dev_a, dev_b, a: int, b: int, k: int, transcript=None):
    """One CHSH round, deterministic round-robin order: send A, send B, step A,
    step B, collect A, collect B."""
    _send(dev_a, transcript, "input", k, 1, int(a))
    _send(dev_b, transcript, "input", k, 1, int(b))
    dev_a.step()
    dev_b.step()
    return int(_collect(dev_a, transcript, "output", k, 1)), int(_collect(dev_b, transcript, "output", k, 1))


def play_pair_batch(dev_a, dev_b, a: np.ndarray, b: np.ndarray, k0: int, transcript=None):
    """Rounds k0 .. k0+len(a)-1 dispatched as one message per device; each
    device still answers its own inputs strictly in order."""
    n = len(a)
    _send(dev_a, transcript, "inputs", k0, n, np.asarray(a, dtype=np.uint8))
    _send(dev_b, transcript, "inputs", k0, n, np.asarray(b, dtype=np.uint8))
    dev_a.step()
    dev_b.step()
    return (np.asarray(_collect(dev_a, transcript, "outputs", k0, n), dtype=np.uint8),
            np.asarray(_collect(dev_b, transcript, "outputs", k0, n), dtype=np.uint8))


def chsh_win(a, b, x, y):
    a, b, x, y = (np.asarray(v, dtype=np.uint8) for v in (a, b, x, y))
    return (x ^ y) == (a & b)


def classical_win_probability(table_a, table_b) -> float:
    """Exact uniform-input win probability of two deterministic tables."""
    wins = sum(((table_a[a] ^ table_b[b]) == (a & b)) for a in (0, 1) for b in (0, 1))
    return wins / 4


def all_classical_pairs():
    tables = [(o0, o1) for o0 in (0, 1) for o1 in (0, 1)]
    return [(ta, tb, classical_win_probability(ta, tb)) for ta in tables for tb in tables]


# ---------------------------------------------------------------------------
# audit


@dataclass
class AuditReport:
    violations: list
    messages_checked: int

    @property
    def ok(self) -> bool:
        return not self.violations


def audit_transcript(transcript: ProtocolTranscript, extra_messages=()) -> AuditReport:
    """Check message discipline: every message to device d references only d's
    data, and no message travels between two devices."""
    violations = []
    msgs = list(transcript.messages) + list(extra_messages)
    for m in msgs:
        if m.sender != REFEREE and m.recipient != REFEREE:
            violations.append({"round": m.round, "kind": "channel",
                               "detail": f"device {m.sender} -> device {m.recipient} message"})
            continue
        dev = m.recipient if m.sender == REFEREE else m.sender
        foreign = [r for r in m.refs if r != dev]
        if foreign:
            violations.append({"round": m.round, "kind": "leak",
                               "detail": f"message for device {dev} references device(s) {foreign}"})
    return AuditReport(violations, len(msgs))


def audit_endpoint(endpoint: DeviceEndpoint) -> AuditReport:
    """Same discipline, checked on what the device actually received."""
    return audit_transcript(ProtocolTranscript("endpoint"), extra_messages=endpoint.history)


__all__ = [
    "ROLES", "DeviceId", "Strategy", "Automaton", "DeviceEndpoint", "DeviceFault", "Cluster", "Eavesdropper",
    "PairSource", "SharedSource", "spawn_cluster", "play_round", "play_pair_round", "play_pair_batch",
    "audit_transcript", "audit_endpoint", "ideal_chsh", "noisy_ideal", "classical_deterministic", "scripted",
    "quantum_measure", "parse_strategy", "parse_strategy_file", "chsh_win", "classical_win_probability",
    "all_classical_pairs", "NonSignalingViolation",
]
