"""Fixed-length bit strings with MSB-first hex I/O.

Bit 0 of a string is its leftmost bit. ``to_hex`` writes the bits left to
right, padding the last nibble with zero bits; the length travels separately.
"""
from __future__ import annotations

import numpy as np

from .errors import InputError


class BitString:
    __slots__ = ("_bits",)

    def __init__(self, bits):
        arr = np.asarray(bits)
        if arr.ndim != 1:
            raise InputError("bit string must be one-dimensional")
        if arr.size and (arr.min() < 0 or arr.max() > 1):
            raise InputError("bit string entries must be 0 or 1")
        self._bits = arr.astype(np.uint8, copy=True)
        self._bits.setflags(write=False)

    # construction
    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n, dtype=np.uint8))

    @classmethod
    def from_str(cls, s: str):
        s = s.strip()
        if any(c not in "01" for c in s):
            raise InputError(f"not a binary string: {s!r}")
        return cls(np.frombuffer(s.encode(), dtype=np.uint8) - ord("0"))

    @classmethod
    def from_hex(cls, text: str, nbits: int | None = None):
        text = text.strip().lower()
        if text.startswith("0x"):
            text = text[2:]
        try:
            raw = bytes.fromhex(text if len(text) % 2 == 0 else text + "0")
        except ValueError as exc:
            raise InputError(f"bad hex string {text!r}") from exc
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="big")[: 4 * len(text)]
        if nbits is not None:
            if nbits > bits.size or nbits < 0:
                raise InputError(f"hex string holds {bits.size} bits, {nbits} requested")
            bits = bits[:nbits]
        return cls(bits)

    @classmethod
    def from_int(cls, value: int, nbits: int):
        if nbits < 0 or value < 0 or value >= (1 << nbits):
            raise InputError(f"{value} does not fit in {nbits} bits")
        return cls([(value >> (nbits - 1 - k)) & 1 for k in range(nbits)])

    @classmethod
    def random(cls, n, rng: np.random.Generator):
        return cls(rng.integers(0, 2, size=n, dtype=np.uint8))

    # views
    @property
    def bits(self) -> np.ndarray:
        return self._bits

    def __len__(self):
        return int(self._bits.size)

    def __getitem__(self, item):
        if isinstance(item, slice):
            return BitString(self._bits[item])
        return int(self._bits[item])

    def __iter__(self):
        return iter(self._bits.tolist())

    def __eq__(self, other):
        if not isinstance(other, BitString):
            return NotImplemented
        return len(self) == len(other) and bool(np.array_equal(self._bits, other._bits))

    def __hash__(self):
        return hash((len(self), self._bits.tobytes()))

    def __add__(self, other: "BitString"):
        return BitString(np.concatenate([self._bits, other._bits]))

    def __repr__(self):
        if len(self) <= 64:
            return f"BitString('{self.to_str()}')"
        return f"BitString(len={len(self)}, hex={self.to_hex()[:16]}...)"

    def to_str(self) -> str:
        return (self._bits + ord("0")).tobytes().decode()

    def to_hex(self) -> str:
        n = len(self)
        if n == 0:
            return ""
        packed = np.packbits(self._bits, bitorder="big").tobytes().hex()
        return packed[: (n + 3) // 4]

    def to_int(self) -> int:
        return int(self.to_str(), 2) if len(self) else 0

    def split_halves(self):
        """(first floor(s/2) bits, last floor(s/2) bits); a middle bit of an odd
        string is left unused."""
        h = len(self) // 2
        return self[:h], self[len(self) - h:]

    def hamming_weight(self) -> int:
        return int(self._bits.sum())


def pack_words(bits: np.ndarray) -> np.ndarray:
    """Pack a 0/1 vector into uint64 words, bit k at word k//64, MSB first."""
    bits = np.asarray(bits, dtype=np.uint8)
    nwords = (bits.size + 63) // 64
    padded = np.zeros(nwords * 64, dtype=np.uint8)
    padded[: bits.size] = bits
    by = np.packbits(padded, bitorder="big")
    return by.view(">u8").astype(np.uint64)


def unpack_words(words: np.ndarray, n: int) -> np.ndarray:
    by = np.asarray(words, dtype=np.uint64).astype(">u8").view(np.uint8)
    return np.unpackbits(by, bitorder="big")[:n]
