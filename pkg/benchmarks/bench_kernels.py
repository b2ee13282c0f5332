"""Compare the numba and numpy kernel paths.

    python benchmarks/bench_kernels.py [--repeat 5] [--end-to-end]

Each kernel is timed on identical inputs; outputs are checked for equality
before timing. ``--end-to-end`` also times one VV run in a subprocess under
each backend (selected with CERTIRAND_DISABLE_NUMBA).
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from certirand import _accel, _kernels as K
from certirand.extractor import get_field


def _best(fn, repeat):
    fn()  # warm-up (numba compile, caches)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def _cases(rng):
    # measurement: 8192 two-qubit blocks, every qubit measured once
    blocks, q = 8192, 2
    a = rng.normal(size=(blocks, 1 << q)) + 1j * rng.normal(size=(blocks, 1 << q))
    amps = a / np.linalg.norm(a, axis=1, keepdims=True)
    g = rng.permutation(blocks * q)
    ang = rng.uniform(-np.pi, np.pi, g.size)
    u = rng.random(g.size)

    def measure(kern):
        return lambda: kern(amps.copy(), q, g // q, g % q, ang, u)

    codes = rng.integers(0, 4, g.size)

    def pauli(kern):
        return lambda: kern(amps.copy(), q, g // q, g % q, codes)

    # extractor masks: 16384-bit source, 512 output bits
    n = 16384
    xw = rng.integers(0, 2 ** 63, n // 64, dtype=np.uint64)
    ys = rng.integers(0, 2 ** 16, 512).astype(np.uint64)

    def masks(kern):
        return lambda: kern(xw, ys, n, 0)

    # Reed-Solomon evaluation over GF(256), 2048 symbols
    gf = get_field(256)
    exp, log = gf.log_exp()
    sym = rng.integers(0, 256, 2048)

    def rs(kern):
        return lambda: kern(sym, exp, log, 256)

    return [("measure_batch", measure, K.measure_batch_nb, K.measure_batch_np),
            ("pauli_batch", pauli, K.pauli_batch_nb, K.pauli_batch_np),
            ("mask_parities", masks, K.mask_parities_nb, K.mask_parities_np),
            ("rs_eval_all", rs, K.rs_eval_all_nb, K.rs_eval_all_np)]


_E2E = ("import time, numpy as np;"
        "from certirand.bits import BitString;"
        "from certirand.orchestrator import DeviceFarm;"
        "from certirand.params import load_constants;"
        "from certirand.protocol_vv import run_vv;"
        "c = load_constants('preset:vv_accept'); cl = DeviceFarm(run_seed=0).clusters[0];"
        "s = BitString.random(4224, np.random.default_rng(0));"
        "run_vv(cl['vv_a'], cl['vv_b'], s, c);"
        "t0 = time.perf_counter(); run_vv(cl['vv_a'], cl['vv_b'], s, c);"
        "print(time.perf_counter() - t0)")


def end_to_end():
    out = {}
    for name, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, CERTIRAND_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", _E2E], env=env, capture_output=True, text=True, check=True)
        out[name] = float(res.stdout.strip().splitlines()[-1])
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        print("numba unavailable (or disabled); only the numpy path can run")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}")
    for name, make, nb, np_ in _cases(rng):
        r1, r2 = make(nb)(), make(np_)()
        assert np.array_equal(r1, r2), f"{name}: paths disagree"
        t_nb, t_np = _best(make(nb), args.repeat), _best(make(np_), args.repeat)
        print(f"{name:<16} {1e3 * t_nb:>10.2f} {1e3 * t_np:>10.2f} {t_np / t_nb:>7.1f}x")
    if args.end_to_end:
        e = end_to_end()
        print(f"{'vv run s=4224':<16} {1e3 * e['numba']:>10.1f} {1e3 * e['numpy']:>10.1f} "
              f"{e['numpy'] / e['numba']:>7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
