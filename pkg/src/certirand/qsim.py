"""Minimal state-vector backend for the simulated devices.

A register is a product of equal-sized dense blocks: ``amps[b]`` is the state
vector of block ``b`` (``block_qubits`` qubits). EPR pairs are 2-qubit blocks,
so a register of many pairs costs 4 amplitudes per pair instead of 4**pairs.
Only single-qubit projective measurements in the X-Z plane and Pauli noise are
supported. Global qubit ``g`` lives in block ``g // q`` at local position
``g % q``; local qubit 0 is the leftmost tensor factor.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import CapacityError, InvalidProbability, NonSignalingViolation, ProtocolError

MAX_BLOCK_QUBITS = 20
MAX_DENSE_QUBITS = 20
MAX_AMPLITUDES = 1 << 23


def owner_code(owner) -> int:
    return int(getattr(owner, "index", owner))


@dataclass(frozen=True)
class MeasurementRequest:
    qubit: int
    angle: float
    requester: object


class QuantumRegister:
    """Product of ``num_blocks`` dense blocks of ``block_qubits`` qubits."""

    def __init__(self, block_qubits: int, amps: np.ndarray, owners, backend: "QuantumBackend | None" = None):
        if block_qubits > MAX_BLOCK_QUBITS:
            raise CapacityError(f"entangled block of {block_qubits} qubits exceeds cap {MAX_BLOCK_QUBITS}")
        amps = np.ascontiguousarray(amps, dtype=np.complex128)
        if amps.ndim != 2 or amps.shape[1] != 1 << block_qubits:
            raise ValueError("amplitude array must have shape (blocks, 2**block_qubits)")
        if amps.size > MAX_AMPLITUDES:
            raise CapacityError(f"register needs {amps.size} amplitudes, cap is {MAX_AMPLITUDES}")
        self.q = int(block_qubits)
        self.amps = amps
        self.owners = np.asarray(owners, dtype=np.int64)
        if self.owners.shape != (amps.shape[0] * self.q,):
            raise ValueError("need exactly one owner per qubit")
        self.consumed = np.zeros(self.owners.size, dtype=bool)
        self.outcomes = np.full(self.owners.size, -1, dtype=np.int8)
        self.backend = backend
        self._lock = backend.lock if backend is not None else threading.RLock()

    # -- views ------------------------------------------------------------
    @property
    def num_blocks(self) -> int:
        return self.amps.shape[0]

    @property
    def num_qubits(self) -> int:
        return self.owners.size

    @property
    def ownership_map(self) -> dict:
        return {g: int(o) for g, o in enumerate(self.owners)}

    @property
    def amplitudes(self) -> np.ndarray:
        """Full state vector (tensor product of blocks); small registers only."""
        if self.num_qubits > MAX_DENSE_QUBITS:
            raise CapacityError(f"{self.num_qubits} qubits is beyond the dense cap {MAX_DENSE_QUBITS}")
        psi = np.ones(1, dtype=np.complex128)
        for b in range(self.num_blocks):
            psi = np.kron(psi, self.amps[b])
        return psi

    def norm_error(self) -> float:
        norms = np.sum(np.abs(self.amps) ** 2, axis=1)
        return float(np.max(np.abs(norms - 1.0))) if norms.size else 0.0

    def reduced_density(self, qubit: int) -> np.ndarray:
        """2x2 reduced state of one qubit."""
        b, j = divmod(int(qubit), self.q)
        psi = self.amps[b].reshape([2] * self.q)
        psi = np.moveaxis(psi, j, 0).reshape(2, -1)
        return psi @ psi.conj().T

    # -- operations ---------------------------------------------------------
    def _check(self, qubits, requester):
        qubits = np.asarray(qubits, dtype=np.int64)
        if qubits.size and (qubits.min() < 0 or qubits.max() >= self.num_qubits):
            raise ProtocolError("qubit index out of range")
        code = owner_code(requester)
        bad = self.owners[qubits] != code
        if bad.any():
            g = int(qubits[np.argmax(bad)])
            msg = f"device {code} requested qubit {g} owned by device {int(self.owners[g])}"
            if self.backend is not None:
                self.backend.violations.append(msg)
            raise NonSignalingViolation(msg)
        if self.consumed[qubits].any() or np.unique(qubits).size != qubits.size:
            g = int(qubits[np.argmax(self.consumed[qubits])])
            raise ProtocolError(f"qubit {g} measured twice")
        return qubits

    def measure(self, request: MeasurementRequest, rng: np.random.Generator) -> int:
        return self.measure_one(int(request.qubit), request.angle, request.requester, rng)

    def measure_one(self, qubit: int, angle: float, requester, rng: np.random.Generator) -> int:
        """Scalar fast path of ``measure_many`` (same random draw order)."""
        with self._lock:
            if not 0 <= qubit < self.owners.size:
                raise ProtocolError("qubit index out of range")
            if self.owners[qubit] != owner_code(requester):
                self._check(np.array([qubit]), requester)
            if self.consumed[qubit]:
                raise ProtocolError(f"qubit {qubit} measured twice")
            u = rng.random()
            b, j = divmod(qubit, self.q)
            out = _kernels.measure_one(self.amps, self.q, b, j, float(angle), u)
            self.consumed[qubit] = True
            self.outcomes[qubit] = out
            return int(out)

    def measure_many(self, qubits, angles, requester, rng: np.random.Generator) -> np.ndarray:
        """Measure several owned qubits in order; one uniform draw per qubit."""
        with self._lock:
            qubits = self._check(qubits, requester)
            angles = np.broadcast_to(np.asarray(angles, dtype=np.float64), qubits.shape)
            u = rng.random(qubits.size)
            out = _kernels.measure_batch(self.amps, self.q, qubits // self.q, qubits % self.q, angles, u)
            self.consumed[qubits] = True
            self.outcomes[qubits] = out
            return out

    def apply_pauli(self, qubits, codes, requester=None):
        with self._lock:
            qubits = np.asarray(qubits, dtype=np.int64)
            if requester is not None:
                code = owner_code(requester)
                if (self.owners[qubits] != code).any():
                    raise NonSignalingViolation(f"device {code} touched a qubit it does not own")
            if self.consumed[qubits].any():
                raise ProtocolError("noise applied to an already measured qubit")
            _kernels.pauli_batch(self.amps, self.q, qubits // self.q, qubits % self.q,
                                 np.asarray(codes, dtype=np.int64))

    def depolarize(self, qubit: int, p: float, rng: np.random.Generator, requester=None):
        self.depolarize_many([qubit], p, rng, requester)

    def depolarize_many(self, qubits, p: float, rng: np.random.Generator, requester=None):
        """Each qubit independently: with probability p apply a uniform Pauli from {I,X,Y,Z}."""
        if not 0 <= p <= 1:
            raise InvalidProbability(f"depolarizing probability {p} outside [0,1]")
        qubits = np.asarray(qubits, dtype=np.int64)
        if p == 0 or qubits.size == 0:
            return
        hit = rng.random(qubits.size) < p
        codes = rng.integers(0, 4, size=qubits.size)
        codes[~hit] = 0
        self.apply_pauli(qubits, codes, requester)


class QuantumBackend:
    """Registry and serialization point for all registers of a run."""

    def __init__(self):
        self.lock = threading.RLock()
        self.registers: list[QuantumRegister] = []
        self.violations: list[str] = []

    def allocate_epr_pairs(self, count: int, owner_a, owner_b) -> QuantumRegister:
        if count < 1:
            raise ValueError("need at least one pair")
        if 4 * count > MAX_AMPLITUDES:
            raise CapacityError(f"{count} EPR pairs exceed the register cap of {MAX_AMPLITUDES // 4}")
        amps = np.zeros((count, 4), dtype=np.complex128)
        amps[:, 0] = amps[:, 3] = np.sqrt(0.5)
        owners = np.tile([owner_code(owner_a), owner_code(owner_b)], count)
        reg = QuantumRegister(2, amps, owners, self)
        with self.lock:
            self.registers.append(reg)
        return reg

    def allocate_ghz(self, count: int, owners) -> QuantumRegister:
        """``count`` copies of (|0..0> + |1..1>)/sqrt(2) shared by ``owners`` (one qubit each)."""
        q = len(owners)
        if q < 2:
            raise ValueError("GHZ blocks need at least two parties")
        if q > MAX_BLOCK_QUBITS:
            raise CapacityError(f"GHZ block of {q} qubits exceeds cap {MAX_BLOCK_QUBITS}")
        if count * (1 << q) > MAX_AMPLITUDES:
            raise CapacityError("GHZ allocation exceeds the register cap")
        amps = np.zeros((count, 1 << q), dtype=np.complex128)
        amps[:, 0] = amps[:, -1] = np.sqrt(0.5)
        codes = np.tile([owner_code(o) for o in owners], count)
        reg = QuantumRegister(q, amps, codes, self)
        with self.lock:
            self.registers.append(reg)
        return reg

    def allocate_state(self, psi, owners) -> QuantumRegister:
        """Single-block register holding an arbitrary normalized state."""
        psi = np.asarray(psi, dtype=np.complex128).ravel()
        q = int(np.log2(psi.size))
        if psi.size != 1 << q or len(owners) != q:
            raise ValueError("state length must be 2**len(owners)")
        if not np.isclose(np.vdot(psi, psi).real, 1.0, atol=1e-10):
            raise ValueError("state is not normalized")
        reg = QuantumRegister(q, psi[None, :].copy(), [owner_code(o) for o in owners], self)
        with self.lock:
            self.registers.append(reg)
        return reg


_default_backend = QuantumBackend()


def allocate_epr_pairs(count: int, owner_a, owner_b, backend: QuantumBackend | None = None) -> QuantumRegister:
    return (backend or _default_backend).allocate_epr_pairs(count, owner_a, owner_b)


def measure(register: QuantumRegister, request: MeasurementRequest, rng) -> int:
    return register.measure(request, rng)


def depolarize(register: QuantumRegister, qubit: int, p: float, rng) -> None:
    register.depolarize(qubit, p, rng)


def basis_vector(angle: float, outcome: int) -> np.ndarray:
    """Eigenvector of cos(a) Z + sin(a) X for eigenvalue +1 (outcome 0) or -1."""
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    return np.array([c, s]) if outcome == 0 else np.array([-s, c])
