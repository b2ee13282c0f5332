"""ClusterExpansion / InfiniteExpansion composition, the error ledger,
persistence of run directories, and replay.

Iteration i (1-based) uses cluster i mod 2. The only datum passed from one
iteration to the next is the output string, which becomes the next seed.

Run directory layout:
  run.json               kind, seed, k, run seed, flags
  constants.txt          constants snapshot (flat key = value)
  strategies.txt         strategy snapshot
  iter<i>_vv.jsonl       VV transcript of iteration i
  iter<i>_ruv.jsonl      RUV transcript of iteration i (absent if VV aborted)
  iter<i>.json           iteration record: cluster, pass-rate estimate, outcome
  summary.json           machine-readable report
  summary.txt            human-readable report
The report is rebuilt from these files alone by ``replay``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bits import BitString
from .devices import ROLES, Cluster, Strategy, ideal_chsh, spawn_cluster
from .errors import ConfigError, InputError
from .extractor import extract, solve_spec
from .params import (ErrorLedger, ProtocolConstants, delta_ledger, parse_constants, ruv_params, vv_params)
from .protocol_ruv import RuvRun, check_threshold, run_ruv, select_sub_block
from .protocol_vv import VvRun, run_vv, test_layout
from .qsim import QuantumBackend
from .rng import RunStreams
from .transcript import ProtocolTranscript, dumps


# ---------------------------------------------------------------------------
# devices for a run


class DeviceFarm:
    """Owns the backend, the streams and the eight devices of a run."""

    def __init__(self, strategies: dict | None = None, run_seed=0, fresh_devices: bool = False):
        self.strategies = dict(strategies or {(c, r): ideal_chsh() for c in (0, 1) for r in ROLES})
        self.streams = RunStreams(run_seed)
        self.run_seed = run_seed
        self.fresh_devices = fresh_devices
        self.backend = QuantumBackend()
        self.clusters = {c: self._spawn(c, ("main",)) for c in (0, 1)}

    def _spawn(self, c, label) -> Cluster:
        strat = {r: self.strategies[(c, r)] for r in ROLES}
        return spawn_cluster(c, strat, self.backend, self.streams.child(*label))

    def cluster_for(self, iteration: int) -> Cluster:
        c = iteration % 2
        if self.fresh_devices and iteration > 1:
            self.clusters[c] = self._spawn(c, ("fresh", iteration))
        return self.clusters[c]

    def shadow(self, iteration: int, rep: int) -> Cluster:
        """A fresh copy of the iteration's cluster for pass-rate estimation."""
        return self._spawn(iteration % 2, ("shadow", iteration, rep))

    def describe(self) -> str:
        return "".join(f"strategy.cluster{c}.{r} = {self.strategies[(c, r)].describe()}\n"
                       for c in (0, 1) for r in ROLES)


# ---------------------------------------------------------------------------
# runs


@dataclass
class ClusterRun:
    cluster: int
    input_seed: BitString
    vv_run: VvRun
    ruv_run: RuvRun | None
    output: BitString | None
    aborted: bool
    cause: str = ""
    iteration: int = 1
    p_hat: float | None = None
    p_label: str = ""


@dataclass
class StagePlan:
    stage: int
    m: int
    h: int = 0
    n: int = 0
    v: int = 0
    d_ext: int = 0
    s2: int = 0
    N: int = 0
    t: int = 0
    out: int = 0
    reason: str = ""

    @property
    def ok(self):
        return not self.reason


@dataclass
class ExpansionState:
    k: int
    seed: BitString
    consts: ProtocolConstants
    iteration: int = 0
    current_seed: BitString | None = None
    cluster_runs: list = field(default_factory=list)
    ledger: ErrorLedger = field(default_factory=ErrorLedger)
    halted: bool = False
    cause: str = ""
    preflight: list = field(default_factory=list)
    fresh_devices: bool = False
    run_seed: object = 0

    @property
    def completed(self) -> bool:
        return not self.halted and self.iteration == self.k


def preflight(m: int, k: int, consts: ProtocolConstants) -> list:
    """Stage-by-stage plan of a k-iteration chain from an m-bit seed. Every
    stage must be runnable and every non-final stage must emit >= 8 bits."""
    plan = []
    cur = m
    for i in range(1, k + 1):
        st = StagePlan(i, cur)
        plan.append(st)
        if cur < 8:
            st.reason = f"seed of {cur} bits is below the VV minimum of 8"
            break
        vv = vv_params(cur, consts)
        st.h, st.n, st.v, st.s2 = vv.h, vv.n, vv.v, vv.s2_len
        if vv.v < 16:
            st.reason = f"VV output v={vv.v} is below the RUV minimum of 16"
            break
        try:
            spec = solve_spec(vv.n, vv.v, vv.epsilon, consts.one_bit)
            st.d_ext = spec.d
        except (ConfigError, InputError) as exc:
            st.reason = f"extractor: {exc}"
            break
        if spec.d > vv.s2_len:
            st.reason = f"extractor seed d={spec.d} exceeds |S2|={vv.s2_len}"
            break
        if consts.vv_key_bits + 2 * int(math.floor(vv.n * consts.vv_test_density)) > vv.s1_len:
            st.reason = "Protocol B test rounds exhaust S1"
            break
        ru = ruv_params(vv.v, consts)
        st.N, st.t, st.out = ru.n_games, ru.t, ru.sub_block_len
        if consts.mode == "paper" and not ru.t_constraint_ok:
            st.reason = f"t={ru.t} <= 85 (paper mode)"
            break
        if i < k and ru.sub_block_len < 8:
            st.reason = f"output of {ru.sub_block_len} bits cannot seed the next iteration"
            break
        cur = ru.sub_block_len
    return plan


def format_plan(plan) -> str:
    head = f"{'stage':>5} {'m':>7} {'h':>9} {'n':>8} {'v':>8} {'d_ext':>6} {'|S2|':>6} {'N':>8} {'t':>7} {'out':>5}  status"
    rows = [head]
    for st in plan:
        rows.append(f"{st.stage:>5} {st.m:>7} {st.h:>9} {st.n:>8} {st.v:>8} {st.d_ext:>6} {st.s2:>6} "
                    f"{st.N:>8} {st.t:>7} {st.out:>5}  {'ok' if st.ok else 'FAIL: ' + st.reason}")
    return "\n".join(rows)


def cluster_expansion(cluster: Cluster, seed: BitString, consts: ProtocolConstants, iteration: int = 1) -> ClusterRun:
    vv = run_vv(cluster["vv_a"], cluster["vv_b"], seed, consts,
                transcript=ProtocolTranscript("vv", {"iteration": iteration, "cluster": cluster.cluster_id}))
    if vv.aborted:
        return ClusterRun(cluster.cluster_id, seed, vv, None, None, True, f"vv: {vv.cause}", iteration)
    if len(vv.x) < 16:
        return ClusterRun(cluster.cluster_id, seed, vv, None, None, True,
                          f"ruv: VV output of {len(vv.x)} bits is below 16", iteration)
    ruv = run_ruv(cluster["ruv_a"], cluster["ruv_b"], vv.x, consts,
                  transcript=ProtocolTranscript("ruv", {"iteration": iteration, "cluster": cluster.cluster_id}))
    if ruv.aborted:
        return ClusterRun(cluster.cluster_id, seed, vv, ruv, None, True, f"ruv: {ruv.cause}", iteration)
    return ClusterRun(cluster.cluster_id, seed, vv, ruv, ruv.z, False, "", iteration)


def estimate_pass_rate(farm: DeviceFarm, iteration: int, seed_len: int, consts: ProtocolConstants, reps: int,
                       main_passed: bool = True):
    """Fraction of passes among the main run and ``reps`` shadow runs on fresh
    device copies with fresh referee seeds of the same length."""
    passes = int(main_passed)
    for rep in range(reps):
        rng = farm.streams.get("shadow-seed", iteration, rep)
        run = cluster_expansion(farm.shadow(iteration, rep), BitString.random(seed_len, rng), consts, iteration)
        passes += not run.aborted
    trials = reps + 1
    return passes / trials, f"estimate from {trials} trial{'s' if trials > 1 else ''}"


def infinite_expansion(farm: DeviceFarm, seed: BitString, k: int, consts: ProtocolConstants,
                       lambda_reps: int | None = None) -> ExpansionState:
    if k < 1:
        raise InputError("k must be >= 1")
    reps = consts.lambda_reps if lambda_reps is None else lambda_reps
    state = ExpansionState(k, seed, consts, current_seed=seed, fresh_devices=farm.fresh_devices,
                           run_seed=farm.run_seed)
    state.preflight = preflight(len(seed), k, consts)
    bad = [st for st in state.preflight if not st.ok]
    if bad:
        state.halted = True
        state.cause = f"infeasible: stage {bad[0].stage}: {bad[0].reason}"
        return state
    history, labels = [], []
    for i in range(1, k + 1):
        run = cluster_expansion(farm.cluster_for(i), state.current_seed, consts, i)
        state.cluster_runs.append(run)
        if run.aborted:
            state.halted = True
            state.cause = f"iteration-{i}: {run.cause}"
            break
        run.p_hat, run.p_label = estimate_pass_rate(farm, i, len(state.current_seed), consts, reps)
        history.append((len(state.current_seed), run.p_hat))
        labels.append(run.p_label)
        state.ledger = delta_ledger(history, consts, labels)
        state.current_seed = run.output
        state.iteration = i
    return state


# ---------------------------------------------------------------------------
# reports (pure functions of iteration records)


def iteration_record(run: ClusterRun) -> dict:
    vv, ru = run.vv_run, run.ruv_run
    rec = {
        "iteration": run.iteration, "cluster": run.cluster, "seed_bits": len(run.input_seed),
        "aborted": run.aborted, "cause": run.cause, "p_hat": run.p_hat, "p_label": run.p_label,
        "vv": dict(vv.transcript.summary),
        "ruv": dict(ru.transcript.summary) if ru is not None else None,
        "output_bits": len(run.output) if run.output is not None else 0,
        "output_hex": run.output.to_hex() if run.output is not None else None,
    }
    return rec


def _overrides(consts: ProtocolConstants) -> dict:
    base = ProtocolConstants.paper() if consts.mode == "paper" else ProtocolConstants.test()
    return {k: v for k, v in consts.as_dict().items() if base.as_dict()[k] != v}


def build_report(seed: BitString, k: int, consts: ProtocolConstants, records: list, halted: bool, cause: str,
                 plan: list | None = None) -> dict:
    passed = [r for r in records if not r["aborted"]]
    rep = {
        "input": {"seed_bits": len(seed), "seed_hex": seed.to_hex(), "k": k, "mode": consts.mode,
                  "log_base": consts.log_base, "overrides": _overrides(consts)},
        "iterations": records,
        "completed_iterations": len(passed),
        "halted": halted, "cause": cause,
        "final_seed_bits": passed[-1]["output_bits"] if passed else len(seed),
        "final_seed_hex": passed[-1]["output_hex"] if passed else seed.to_hex(),
    }
    if plan is not None:
        rep["preflight"] = [st.__dict__ for st in plan]
    if passed:
        ledger = delta_ledger([(r["seed_bits"], r["p_hat"]) for r in passed], consts, [r["p_label"] for r in passed])
        rep["ledger"] = ledger.as_dict()
    else:
        rep["ledger"] = {"entries": [], "lambda": 1.0, "delta": 0.0, "closed_bound": 0.0, "final_bound": 0.0}
    return rep


def report(state: ExpansionState) -> tuple:
    """(human-readable text, machine-readable dict)."""
    records = [iteration_record(r) for r in state.cluster_runs]
    rep = build_report(state.seed, state.k, state.consts, records, state.halted, state.cause, state.preflight)
    return render_report(rep), rep


def _short(h: str, keep: int = 64) -> str:
    return h if len(h) <= keep else f"{h[:keep]}... ({len(h)} hex digits)"


def render_report(rep: dict) -> str:
    inp = rep["input"]
    lines = [
        f"seed: {inp['seed_bits']} bits, k = {inp['k']}, mode = {inp['mode']}, log base = {inp['log_base']}",
        "constant overrides: " + (", ".join(f"{k}={v}" for k, v in sorted(inp["overrides"].items())) or "none"),
    ]
    if inp["mode"] == "test":
        lines.append("NOTE: test-mode constants; the rigidity guarantees do not formally apply.")
    lines.append(f"{'it':>3} {'cl':>2} {'m':>7} {'tests':>6} {'wins':>6} {'vv out':>7} {'N':>7} {'w':>7} "
                 f"{'thresh':>10} {'(i,j)':>9} {'out':>5} {'p_hat':>7}  status")
    for r in rep["iterations"]:
        vv, ru = r["vv"], r["ruv"] or {}
        ij = f"({ru.get('i')},{ru.get('j')})" if ru.get("i") is not None else "-"
        thr = f"{ru['threshold']:.2f}" if ru.get("threshold") is not None else "-"
        ph = f"{r['p_hat']:.4f}" if r["p_hat"] is not None else "-"
        lines.append(f"{r['iteration']:>3} {r['cluster']:>2} {r['seed_bits']:>7} {vv.get('tests', 0):>6} "
                     f"{vv.get('test_wins', 0):>6} {vv.get('output_bits', 0):>7} {ru.get('N', '-'):>7} "
                     f"{ru.get('w', '-'):>7} {thr:>10} {ij:>9} {r['output_bits']:>5} {ph:>7}  "
                     f"{'abort: ' + r['cause'] if r['aborted'] else 'pass'}")
    led = rep["ledger"]
    if led["entries"]:
        lines.append("error ledger:")
        lines.append(f"{'it':>3} {'m_i':>7} {'p_i':>8} {'eps_vv':>12} {'eps_ruv':>12} {'eps_ec':>12} {'delta':>12}")
        for e in led["entries"]:
            lines.append(f"{e['iteration']:>3} {e['m']:>7} {e['p']:>8.4f} {e['eps_vv']:>12.5e} "
                         f"{e['eps_ruv']:>12.5e} {e['eps_ec']:>12.5e} {e['delta']:>12.5e}")
        lines.append(f"lambda = {led['lambda']:.6g}; closed bound 2 eps_1/lambda = {led['closed_bound']:.6e}; "
                     f"final bound 2 delta(k) = {led['final_bound']:.6e}")
        lines.append("p_i are measured pass-rate estimates, not true pass probabilities.")
    status = "halted: " + rep["cause"] if rep["halted"] else "completed"
    lines.append(f"result: {status}; {rep['completed_iterations']} iteration(s); "
                 f"final seed {rep['final_seed_bits']} bits = {_short(rep['final_seed_hex'])}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# persistence and replay


def write_run_dir(state: ExpansionState, out_dir, strategies_text: str = "") -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "constants.txt").write_text(state.consts.to_text())
    (out / "strategies.txt").write_text(strategies_text)
    meta = {"kind": "infinite", "seed_hex": state.seed.to_hex(), "seed_bits": len(state.seed), "k": state.k,
            "run_seed": str(state.run_seed), "fresh_devices": state.fresh_devices}
    (out / "run.json").write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")
    for run in state.cluster_runs:
        i = run.iteration
        run.vv_run.transcript.write_jsonl(out / f"iter{i}_vv.jsonl", running="test")
        if run.ruv_run is not None:
            run.ruv_run.transcript.write_jsonl(out / f"iter{i}_ruv.jsonl")
        rec = {"iteration": i, "cluster": run.cluster, "p_hat": run.p_hat, "p_label": run.p_label}
        (out / f"iter{i}.json").write_text(json.dumps(rec, sort_keys=True) + "\n")
    text, rep = report(state)
    (out / "summary.json").write_text(dumps(rep) + "\n")
    (out / "summary.txt").write_text(text)
    return out


@dataclass
class ReplayResult:
    summary_text: str
    summary_json: str
    identical: bool
    mismatches: list


def replay_vv(tr: ProtocolTranscript, consts: ProtocolConstants) -> tuple:
    """Recompute a VV transcript; returns (summary dict, output BitString | None, problems)."""
    problems = []
    seed = BitString.from_hex(tr.header["seed_hex"], tr.header["seed_bits"])
    params = vv_params(len(seed), consts)
    s1, s2 = seed.split_halves()
    flags = []
    if not params.feasible:
        flags.extend(params.flags)
    spec = None
    try:
        spec = solve_spec(params.n, params.v, params.epsilon, consts.one_bit) if params.v >= 1 else None
    except ConfigError:
        spec = None
    summ = {"protocol": "vv", "tests": 0, "test_wins": 0, "threshold": None, "output_bits": 0,
            "output_hex": None, "consumed": 0}
    if spec is None or spec.d > len(s2):
        summ.update(aborted=True, cause=tr.summary.get("cause", ""), flags=flags)
        return summ, None, problems
    from .extractor import h_check
    from .params import COS2_PI8
    if not h_check(params.h, params.v, params.epsilon, consts.ext_c1, consts.ext_c2):
        flags.append("h-check-failed")
    pos, ta, tb, consumed = test_layout(s1, params.n, consts)
    r = tr.rounds
    threshold = COS2_PI8 - consts.vv_margin
    summ.update(tests=int(pos.size), threshold=threshold, consumed=consumed)
    n_rec = r["k"].size
    a = np.zeros(params.n, dtype=np.uint8)
    b = np.zeros(params.n, dtype=np.uint8)
    a[pos], b[pos] = ta, tb
    if n_rec != params.n:
        problems.append(f"vv: {n_rec} rounds recorded, {params.n} expected")
        summ.update(aborted=True, cause=tr.summary.get("cause", ""), flags=flags)
        return summ, None, problems
    if not (np.array_equal(a, r["a"]) and np.array_equal(b, r["b"])):
        problems.append("vv: recorded inputs differ from the seed-derived inputs")
    test = np.zeros(params.n, dtype=bool)
    test[pos] = True
    if not np.array_equal(test, r["test"]):
        problems.append("vv: recorded test flags differ from the seed-derived positions")
    wins = int((((r["x"] ^ r["y"]) == (a & b)) & test).sum())
    summ["test_wins"] = wins
    if pos.size == 0:
        flags.append("no-test-rounds")
    if pos.size and wins / pos.size < threshold:
        summ.update(aborted=True, cause=f"protocol B: test win fraction {wins}/{pos.size} below {threshold:.6f}",
                    flags=flags)
        return summ, None, problems
    x = extract(BitString(r["x"]), s2[: spec.d], spec)
    summ.update(aborted=False, cause="", output_bits=len(x), output_hex=x.to_hex(), consumed=consumed + spec.d,
                flags=flags)
    return summ, x, problems


def replay_ruv(tr: ProtocolTranscript, consts: ProtocolConstants) -> tuple:
    problems = []
    seed = BitString.from_hex(tr.header["seed_hex"], tr.header["seed_bits"])
    params = ruv_params(len(seed), consts)
    s1, s2 = seed.split_halves()
    N = params.n_games
    a, b = s1[:N], s1[len(s1) - N:]
    r = tr.rounds
    flags = [] if params.t_constraint_ok else ["t<=85"]
    if r["k"].size != N:
        problems.append(f"ruv: {r['k'].size} rounds recorded, {N} expected")
    if not (np.array_equal(a.bits, r["a"][:N]) and np.array_equal(b.bits, r["b"][:N])):
        problems.append("ruv: recorded inputs differ from the seed-derived inputs")
    if r["order"].size and np.any(np.diff(r["order"]) <= 0):
        problems.append("ruv: round order is not strictly increasing")
    w = int(((r["x"] ^ r["y"]) == (r["a"] & r["b"])).sum())
    summ = {"protocol": "ruv", "w": w, "N": N, "threshold": params.win_threshold, "log_base": params.log_base,
            "r_paper": params.r}
    if r["k"].size != N or not check_threshold(w, params):
        cause = tr.summary.get("cause", "") if r["k"].size != N else \
            f"win count {w} below threshold {params.win_threshold:.4f}"
        summ.update(decision="abort", aborted=True, cause=cause, i=None, j=None, z_hex=None, z_bits=0, flags=flags)
        return summ, None, problems
    sel = select_sub_block(BitString(r["x"]), s2, params)
    if sel.fallback:
        flags.append("selection-fallback")
    summ.update(decision="pass", aborted=False, cause="", i=sel.i, j=sel.j, z_hex=sel.z.to_hex(),
                z_bits=len(sel.z), flags=flags)
    return summ, sel.z, problems


def _compare(recorded: dict, recomputed: dict, label: str, keys) -> list:
    out = []
    for k in keys:
        if recorded.get(k) != recomputed.get(k):
            out.append(f"{label}: {k} recorded {recorded.get(k)!r} recomputed {recomputed.get(k)!r}")
    return out


def write_single_run(kind: str, run, consts: ProtocolConstants, out_dir, strategies_text: str = "") -> Path:
    """Persist a standalone VV or RUV run: run.json, constants, strategies,
    transcript.jsonl and summary.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tr = run.transcript
    (out / "constants.txt").write_text(consts.to_text())
    (out / "strategies.txt").write_text(strategies_text)
    meta = {"kind": kind, "seed_hex": tr.header["seed_hex"], "seed_bits": tr.header["seed_bits"]}
    (out / "run.json").write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")
    tr.write_jsonl(out / "transcript.jsonl", running="test" if kind == "vv" else "all")
    (out / "summary.json").write_text(dumps(tr.summary) + "\n")
    return out


def _replay_single(d: Path, kind: str, consts: ProtocolConstants) -> ReplayResult:
    tr = ProtocolTranscript.read_jsonl(d / "transcript.jsonl")
    summ, _, problems = (replay_vv if kind == "vv" else replay_ruv)(tr, consts)
    # fields the recomputation cannot know (device-fault causes) come from the record
    full = dict(tr.summary)
    full.update(summ)
    problems += _compare(tr.summary, full, kind, full.keys())
    js = dumps(full) + "\n"
    path = d / "summary.json"
    if not path.exists() or path.read_text() != js:
        problems.append("summary.json differs from the replayed summary")
    return ReplayResult(json.dumps(full, indent=1, sort_keys=True, default=str) + "\n", js, not problems, problems)


def replay(run_dir) -> ReplayResult:
    d = Path(run_dir)
    try:
        meta = json.loads((d / "run.json").read_text())
        consts = parse_constants((d / "constants.txt").read_text())
    except OSError as exc:
        raise ConfigError(f"{d} is not a run directory: {exc}") from exc
    if meta.get("kind") in ("vv", "ruv"):
        return _replay_single(d, meta["kind"], consts)
    seed = BitString.from_hex(meta["seed_hex"], meta["seed_bits"])
    k = meta["k"]
    mismatches = []
    records = []
    cur = seed
    halted, cause = False, ""
    plan = preflight(len(seed), k, consts)
    bad = [st for st in plan if not st.ok]
    if bad:
        halted, cause = True, f"infeasible: stage {bad[0].stage}: {bad[0].reason}"
    for i in range(1, k + 1):
        if halted:
            break
        vv_path = d / f"iter{i}_vv.jsonl"
        if not vv_path.exists():
            mismatches.append(f"iteration {i}: missing VV transcript")
            break
        it = json.loads((d / f"iter{i}.json").read_text())
        vtr = ProtocolTranscript.read_jsonl(vv_path)
        if vtr.header.get("seed_hex") != cur.to_hex() or vtr.header.get("seed_bits") != len(cur):
            mismatches.append(f"iteration {i}: VV seed is not the previous iteration's output")
        if it["cluster"] != i % 2 or vtr.header.get("cluster") != i % 2:
            mismatches.append(f"iteration {i}: cluster is not {i % 2}")
        vsum, vx, probs = replay_vv(vtr, consts)
        mismatches += probs
        mismatches += _compare(vtr.summary, vsum, f"iteration {i} vv", vsum.keys())
        rec = {"iteration": i, "cluster": it["cluster"], "seed_bits": len(cur), "aborted": False, "cause": "",
               "p_hat": None, "p_label": "", "vv": vsum, "ruv": None, "output_bits": 0, "output_hex": None}
        if vsum["aborted"]:
            rec.update(aborted=True, cause=f"vv: {vsum['cause']}")
        elif vsum["output_bits"] < 16:
            rec.update(aborted=True, cause=f"ruv: VV output of {vsum['output_bits']} bits is below 16")
        else:
            rtr = ProtocolTranscript.read_jsonl(d / f"iter{i}_ruv.jsonl")
            if rtr.header.get("seed_hex") != vsum["output_hex"]:
                mismatches.append(f"iteration {i}: RUV seed is not the VV output")
            rsum, z, probs = replay_ruv(rtr, consts)
            mismatches += probs
            mismatches += _compare(rtr.summary, rsum, f"iteration {i} ruv", rsum.keys())
            rec["ruv"] = rsum
            if rsum["aborted"]:
                rec.update(aborted=True, cause=f"ruv: {rsum['cause']}")
            else:
                rec.update(p_hat=it["p_hat"], p_label=it["p_label"], output_bits=len(z), output_hex=z.to_hex())
                cur = z
        records.append(rec)
        if rec["aborted"]:
            halted, cause = True, f"iteration-{i}: {rec['cause']}"
    rep = build_report(seed, k, consts, records, halted, cause, plan)
    text = render_report(rep)
    js = dumps(rep) + "\n"
    identical = True
    for name, content in (("summary.txt", text), ("summary.json", js)):
        path = d / name
        if not path.exists() or path.read_text() != content:
            identical = False
            mismatches.append(f"{name} differs from the replayed report")
    return ReplayResult(text, js, identical and not mismatches, mismatches)
