"""Parameter functions and error bounds for the expansion protocols.

Two constant regimes exist. ``mode="paper"`` enforces the asymptotic
constraints (gamma <= 1/(10+8 alpha), alpha = ceil(16 kappa*^2)), which makes
every desk-scale run infeasible. ``mode="test"`` relaxes them so small seeds
exercise every code path; all outputs carry the mode.
"""
from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError, InputError, InvalidProbability, InvalidSeedLength

COS2_PI8 = math.cos(math.pi / 8) ** 2

CONSTS_ENV = "CERTIRAND_CONSTS"

_LOG_BASES = ("two", "natural")
_MODES = ("paper", "test")
_ONE_BIT = ("parity_of_selected", "rs_hadamard")


@dataclass(frozen=True)
class ProtocolConstants:
    alpha: int = 2
    gamma: float = 0.5
    kappa_star: float = 1.1
    big_c: int = 200
    k1: float = 1.0
    k4: float = 1.0
    c_prime: float = 1.0
    c_dprime: float = 1.0
    log_base: str = "two"
    mode: str = "test"
    # Knobs below are not part of the parameter calculus proper; they configure
    # the simulated sub-protocols and are recorded alongside the constants.
    n_cap: int | None = 4096          # test mode: Protocol-B length = min(n(s), n_cap)
    vv_test_density: float = 1 / 16   # fraction of Protocol-B rounds that are test rounds
    vv_margin: float = 0.05           # allowed shortfall below cos^2(pi/8) on test rounds
    vv_key_bits: int = 16             # S1 bits keying the test-position permutation
    one_bit: str = "parity_of_selected"
    ext_c1: float = 1.0               # h >= r + c1 log r + c2 log(1/eps) check
    ext_c2: float = 1.0
    lambda_reps: int = 0              # extra shadow runs per iteration for the pass-rate estimate
    dispatch_batch: int = 8192        # Protocol-B inputs per referee message

    def __post_init__(self):
        self.validate()

    # -- validation -------------------------------------------------------
    def validate(self):
        if int(self.alpha) != self.alpha or self.alpha < 1:
            raise ConfigError(f"alpha must be a positive integer, got {self.alpha}")
        if not 0 < self.gamma < 1:
            raise ConfigError(f"gamma must lie in (0,1), got {self.gamma}")
        if not self.kappa_star > 1:
            raise ConfigError(f"kappa_star must exceed 1, got {self.kappa_star}")
        if int(self.big_c) != self.big_c or self.big_c < 1:
            raise ConfigError(f"big_c must be a positive integer, got {self.big_c}")
        for name in ("k1", "k4", "c_prime", "c_dprime"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.log_base not in _LOG_BASES:
            raise ConfigError(f"log_base must be one of {_LOG_BASES}")
        if self.mode not in _MODES:
            raise ConfigError(f"mode must be one of {_MODES}")
        if self.one_bit not in _ONE_BIT:
            raise ConfigError(f"one_bit must be one of {_ONE_BIT}")
        if not 0 <= self.vv_test_density <= 1:
            raise ConfigError("vv_test_density must lie in [0,1]")
        if not 0 <= self.vv_margin < 1:
            raise ConfigError("vv_margin must lie in [0,1)")
        if self.vv_key_bits < 0 or self.lambda_reps < 0 or self.dispatch_batch < 1:
            raise ConfigError("vv_key_bits, lambda_reps must be >= 0 and dispatch_batch >= 1")
        if self.mode == "paper":
            want_alpha = math.ceil(16 * self.kappa_star ** 2)
            if self.alpha != want_alpha:
                raise ConfigError(f"paper mode requires alpha = ceil(16 kappa*^2) = {want_alpha}")
            if self.gamma > 1 / (10 + 8 * self.alpha):
                raise ConfigError(f"paper mode requires gamma <= 1/(10+8 alpha) = {1 / (10 + 8 * self.alpha):.6g}")
            if self.big_c != math.ceil(100 * self.alpha):
                raise ConfigError("paper mode requires big_c = ceil(100 alpha)")
            if self.n_cap is not None:
                raise ConfigError("n_cap is a test-mode override")
        else:
            if self.n_cap is not None and self.n_cap < 1:
                raise ConfigError("n_cap must be positive")

    # -- constructors -----------------------------------------------------
    @classmethod
    def paper(cls, kappa_star: float = 1.1, **kw):
        alpha = math.ceil(16 * kappa_star ** 2)
        base = dict(alpha=alpha, gamma=1 / (10 + 8 * alpha), kappa_star=kappa_star,
                    big_c=math.ceil(100 * alpha), mode="paper", n_cap=None)
        base.update(kw)
        return cls(**base)

    @classmethod
    def test(cls, **kw):
        base = dict(mode="test")
        base.update(kw)
        if "alpha" in kw and "big_c" not in kw:
            base["big_c"] = math.ceil(100 * base["alpha"])
        return cls(**base)

    def replace(self, **kw) -> "ProtocolConstants":
        return dataclasses.replace(self, **kw)

    def log(self, x: float) -> float:
        return math.log2(x) if self.log_base == "two" else math.log(x)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {_fmt_value(v)}")
        return "\n".join(lines) + "\n"


def _fmt_value(v):
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ProtocolConstants)}


def _parse_value(key, raw):
    raw = raw.strip()
    kind = _FIELD_TYPES[key]
    if raw.lower() == "none":
        if "None" in str(kind):
            return None
        raise ConfigError(f"{key} may not be none")
    try:
        if kind in ("int", "int | None"):
            return int(raw, 0)
        if kind == "float":
            if "/" in raw:
                num, den = raw.split("/", 1)
                return float(num) / float(den)
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return raw


def parse_constants(text: str, base: ProtocolConstants | None = None) -> ProtocolConstants:
    """Parse a flat ``key = value`` file. ``#`` starts a comment.

    Keys that are absent keep the defaults of the declared ``mode`` (test
    defaults unless ``mode = paper``). Unknown keys are errors.
    """
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (p.strip() for p in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown constant {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw)
    if base is not None:
        return base.replace(**values)
    if values.get("mode") == "paper":
        return ProtocolConstants.paper(**{k: v for k, v in values.items() if k != "mode"})
    return ProtocolConstants.test(**values)


PRESET_DIR = Path(__file__).parent / "presets"


def preset_names() -> list:
    return sorted(p.stem for p in PRESET_DIR.glob("*.txt"))


def load_constants(path: str | os.PathLike | None = None) -> ProtocolConstants:
    """Load constants from ``path``, else from ``$CERTIRAND_CONSTS``, else defaults.
    ``preset:<name>`` selects a bundled constants file."""
    if path is None:
        path = os.environ.get(CONSTS_ENV)
    if not path:
        return ProtocolConstants.test()
    if str(path).startswith("preset:"):
        name = str(path)[7:]
        if name not in preset_names():
            raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
        path = PRESET_DIR / f"{name}.txt"
    try:
        with open(path) as fh:
            return parse_constants(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read constants file {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# integer helpers

def _pow2_floor(e: float) -> int:
    """floor(2**e) for e >= 0, exact while 2**e fits a double's mantissa."""
    if e < 52:
        return math.floor(2.0 ** e)
    ip = math.floor(e)
    mant = math.floor(2.0 ** (e - ip) * (1 << 52))
    return (mant << ip) >> 52


def _ceil_pow2_times(e: float) -> int:
    """ceil(2**e) for e >= 0 (approximate beyond double precision)."""
    if e < 52:
        return math.ceil(2.0 ** e)
    return _pow2_floor(e) + 1


def iroot(n: int, k: int) -> int:
    """Largest integer x with x**k <= n."""
    if n < 0 or k < 1:
        raise ValueError("iroot needs n >= 0, k >= 1")
    if n < 2 or k == 1:
        return n
    x = int(round(n ** (1.0 / k))) if n < 2 ** 1000 else 1 << (n.bit_length() // k + 1)
    while x ** k > n:
        x -= 1
    while (x + 1) ** k <= n:
        x += 1
    return x


# ---------------------------------------------------------------------------
# VV

@dataclass(frozen=True)
class VvParams:
    s: int
    s1_len: int
    s2_len: int
    h: int
    n: int
    n_formula: int
    d: int
    v: int
    epsilon: float
    log2_t: float
    mode: str
    flags: tuple = ()

    @property
    def feasible(self) -> bool:
        return not any(f.startswith("infeasible") for f in self.flags)


def vv_params(s: int, consts: ProtocolConstants) -> VvParams:
    if s < 8:
        raise InvalidSeedLength(f"VV needs at least 8 seed bits, got {s}")
    half = s // 2
    expo = consts.gamma * (half / consts.k1) ** (1.0 / 3.0)
    h = _pow2_floor(expo)
    # t := h^(1/gamma); work in log2 to survive astronomic sizes
    log2_t = math.log2(h) / consts.gamma if h > 1 else 0.0
    log_t = log2_t if consts.log_base == "two" else log2_t * math.log(2)
    l2 = log_t * log_t
    first = math.ceil(10 * l2)
    if l2 == 0:
        second = 0
    else:
        second = _ceil_pow2_times(log2_t + math.log2(consts.big_c * l2))
    n_formula = first * second
    flags = []
    n = n_formula
    if consts.mode == "test" and consts.n_cap is not None and n_formula > consts.n_cap:
        n = consts.n_cap
        flags.append("n-capped")
    d = math.ceil((consts.k4 / consts.k1) * consts.gamma ** 3 * half)
    v = h // 2
    if d > half:
        flags.append("infeasible:d>s2")
    if v < 1:
        flags.append("infeasible:v=0")
    if n < 1:
        flags.append("infeasible:n=0")
    return VvParams(s=s, s1_len=half, s2_len=half, h=h, n=n, n_formula=n_formula, d=d, v=v,
                    epsilon=1.0 / h, log2_t=log2_t, mode=consts.mode, flags=tuple(flags))


# ---------------------------------------------------------------------------
# RUV

@dataclass(frozen=True)
class RuvParams:
    s: int
    n_games: int
    t: int
    num_blocks: int
    sub_block_len: int
    subs_per_block: int
    r: int
    nu: float
    zeta: float
    win_threshold: float
    t_constraint_ok: bool
    log_base: str
    mode: str


def ruv_params(s: int, consts: ProtocolConstants) -> RuvParams:
    if s < 16:
        raise InvalidSeedLength(f"RUV needs at least 16 seed bits, got {s}")
    N = s // 4
    a = consts.alpha
    t = iroot(N, a)
    sub = math.isqrt(t)
    # r = floor((s/4)^(1/(2a))): largest r with 4 r^(2a) <= s
    r = iroot(s // 4, 2 * a)
    while 4 * (r + 1) ** (2 * a) <= s:
        r += 1
    logN = consts.log(N) if N > 1 else 0.0
    nu = (12 / math.sqrt(2)) * math.sqrt(logN) * t / N ** 0.25
    zeta = consts.kappa_star * t ** (-consts.kappa_star)
    threshold = COS2_PI8 * N - math.sqrt(N * logN) / (2 * math.sqrt(2))
    return RuvParams(s=s, n_games=N, t=t, num_blocks=N // t, sub_block_len=sub, subs_per_block=sub,
                     r=r, nu=nu, zeta=zeta, win_threshold=threshold, t_constraint_ok=t > 85,
                     log_base=consts.log_base, mode=consts.mode)


# ---------------------------------------------------------------------------
# composition g(s) = r(v(s))

@dataclass(frozen=True)
class ChainStage:
    stage: int
    m: int            # input seed length
    v: int            # VV output length
    r: int            # paper output length r(v)
    realized: int     # realized slice length floor(sqrt(t))
    reason: str = ""

    @property
    def ok(self) -> bool:
        return not self.reason

    @property
    def runnable(self) -> bool:
        """The stage itself can run; its output may still be too short to chain."""
        return not self.reason.startswith("infeasible")


@dataclass(frozen=True)
class GChain:
    m: int
    stages: tuple
    feasible: bool

    @property
    def lengths(self) -> list:
        """Paper lengths g^(i)(m), i = 1..k (stops at the first infeasible stage)."""
        return [st.r for st in self.stages]

    @property
    def realized_lengths(self) -> list:
        return [st.realized for st in self.stages]

    @property
    def value(self) -> int:
        return self.stages[-1].r if self.stages else self.m

    def failing_stage(self):
        for st in self.stages:
            if not st.ok:
                return st
        return None


def _stage(i, m, consts, use_realized):
    if m < 8:
        return ChainStage(i, m, 0, 0, 0, "infeasible: seed < 8 bits for VV")
    vv = vv_params(m, consts)
    if not vv.feasible:
        return ChainStage(i, m, vv.v, 0, 0, "infeasible: " + ",".join(f for f in vv.flags if f.startswith("infeasible")))
    if vv.v < 16:
        return ChainStage(i, m, vv.v, 0, 0, f"infeasible: v={vv.v} < 16 bits for RUV")
    ruv = ruv_params(vv.v, consts)
    reason = ""
    if consts.mode == "paper" and not ruv.t_constraint_ok:
        reason = f"infeasible: t={ruv.t} <= 85 (paper mode)"
    out = ruv.sub_block_len if use_realized else ruv.r
    if not reason and out < 8:
        reason = f"short: output {out} < 8 bits, cannot seed another stage"
    return ChainStage(i, m, vv.v, ruv.r, ruv.sub_block_len, reason)


def g(s: int, consts: ProtocolConstants) -> int:
    if s < 8:
        raise InvalidSeedLength(f"g needs s >= 8, got {s}")
    v = vv_params(s, consts).v
    if v < 16:
        return 0
    return ruv_params(v, consts).r


def g_iter(k: int, m: int, consts: ProtocolConstants, realized: bool = False) -> GChain:
    """Compose g k times from m. ``realized=True`` feeds each stage the realized
    slice length floor(sqrt(t)) instead of r(v). A stage whose output cannot
    seed another stage (< 8 bits) is flagged and composition stops there."""
    if k < 1:
        raise InputError("k must be >= 1")
    stages = []
    cur = m
    for i in range(1, k + 1):
        st = _stage(i, cur, consts, use_realized=realized)
        stages.append(st)
        if not st.ok:
            break
        cur = st.realized if realized else st.r
    feasible = len(stages) == k and all(st.ok for st in stages)
    return GChain(m=m, stages=tuple(stages), feasible=feasible)


# ---------------------------------------------------------------------------
# error bounds and the ledger

@dataclass(frozen=True)
class ErrorBounds:
    eps_vv: float
    eps_ruv: float
    eps_ec: float
    raw: tuple
    clamped: bool


def _clamp(x):
    return (min(1.0, max(0.0, x)), x > 1.0 or x < 0.0)


def _check_prob(lam):
    if not (0 < lam <= 1):
        raise InvalidProbability(f"probability must lie in (0,1], got {lam}")


def eps_ec(m: float, lam: float, consts: ProtocolConstants) -> float:
    _check_prob(lam)
    return min(1.0, math.exp(-consts.c_dprime * m ** (1 / 3)) / lam)


def error_bounds(m: float, lam: float, consts: ProtocolConstants) -> ErrorBounds:
    if m < 1:
        raise InputError(f"m must be >= 1, got {m}")
    _check_prob(lam)
    e_vv = math.sqrt(3 * math.exp(-consts.c_prime * m ** (1 / 3)))
    e_ruv = math.sqrt(192 * (m / 4) ** (-1 / (8 * consts.alpha)) / lam)
    e_ec = math.exp(-consts.c_dprime * m ** (1 / 3)) / lam
    vals = [_clamp(x) for x in (e_vv, e_ruv, e_ec)]
    return ErrorBounds(vals[0][0], vals[1][0], vals[2][0], (e_vv, e_ruv, e_ec), any(c for _, c in vals))


@dataclass
class LedgerEntry:
    iteration: int
    m: int
    p: float
    eps_vv: float
    eps_ruv: float
    eps_ec: float
    delta: float
    p_label: str = "given"

    def as_dict(self):
        return dataclasses.asdict(self)


@dataclass
class ErrorLedger:
    entries: list = field(default_factory=list)

    @property
    def k(self):
        return len(self.entries)

    @property
    def lam(self) -> float:
        return math.prod(e.p for e in self.entries) if self.entries else 1.0

    @property
    def delta(self) -> float:
        return self.entries[-1].delta if self.entries else 0.0

    @property
    def closed_bound(self) -> float:
        """2 eps_1 / lambda, the closed form valid when the eps_i halve."""
        if not self.entries:
            return 0.0
        return 2 * self.entries[0].eps_ec / self.lam

    @property
    def final_bound(self) -> float:
        return 2 * self.delta

    def halving_regime(self) -> bool:
        e = [x.eps_ec for x in self.entries]
        return all(e[i] <= e[i - 1] / 2 for i in range(1, len(e)))

    def as_dict(self):
        return {"entries": [e.as_dict() for e in self.entries], "lambda": self.lam,
                "delta": self.delta, "closed_bound": self.closed_bound,
                "final_bound": self.final_bound}


def delta_ledger(history: Sequence, consts: ProtocolConstants, labels: Iterable[str] | None = None) -> ErrorLedger:
    """Fold the recursion delta(i) = eps_EC(m_i, p_i) + delta(i-1)/p_i.

    ``history`` holds (m_i, p_i) with m_i the seed length entering iteration i
    (so m_i = g^(i-1)(m) along an ideal chain)."""
    history = list(history)
    if not history:
        raise InputError("ledger history is empty")
    labels = list(labels) if labels is not None else ["given"] * len(history)
    ledger = ErrorLedger()
    delta = 0.0
    for i, ((m_i, p_i), lab) in enumerate(zip(history, labels), 1):
        _check_prob(p_i)
        b = error_bounds(max(m_i, 1), p_i, consts)
        delta = b.eps_ec + delta / p_i
        ledger.entries.append(LedgerEntry(i, int(m_i), float(p_i), b.eps_vv, b.eps_ruv, b.eps_ec, delta, lab))
    return ledger


def history_along_chain(m: int, ps: Sequence[float], consts: ProtocolConstants, realized: bool = True):
    """(m_i, p_i) pairs with m_i the i-th seed length of the g-chain from m."""
    chain = g_iter(len(ps), m, consts, realized=realized)
    if not chain.feasible:
        raise ConfigError(f"chain from m={m} infeasible at stage {chain.failing_stage()}")
    ms = [m] + (chain.realized_lengths if realized else chain.lengths)[:-1]
    return list(zip(ms, ps))


# ---------------------------------------------------------------------------
# tabular rendering for the CLI

def param_table(s: int, consts: ProtocolConstants) -> dict:
    out = {"s": s, "mode": consts.mode, "log_base": consts.log_base}
    if s >= 8:
        vv = vv_params(s, consts)
        out["vv"] = {k: getattr(vv, k) for k in ("s1_len", "h", "n", "n_formula", "d", "v", "epsilon", "flags")}
        out["vv"]["flags"] = list(vv.flags)
    if s >= 16:
        ru = ruv_params(s, consts)
        out["ruv"] = dataclasses.asdict(ru)
        del out["ruv"]["s"]
    if s >= 8:
        out["g"] = g(s, consts)
    return out
