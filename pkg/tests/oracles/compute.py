"""Independent oracle for the frozen constants in oracle_values.json.

Uses mpmath at 50 digits and brute-force enumeration only; it imports nothing
from certirand. Re-run with ``python3 tests/oracles/compute.py`` to regenerate.
"""
import itertools
import json
from pathlib import Path

import mpmath as mp

mp.mp.dps = 50
out = {}

# VV parameters at s = 2048 with gamma = 1/2, K1 = 1
half = 1024
h = int(mp.floor(mp.power(2, mp.mpf(1) / 2 * mp.cbrt(half))))
out["vv_s2048"] = {"h": h, "v": h // 2}

# RUV with alpha = 2 on v = 16: N = 4, t = floor(4^(1/2)) = 2, r = floor(16/4)^(1/4)
out["g_s2048"] = int(mp.floor(mp.power(mp.mpf(16) / 4, mp.mpf(1) / 4)))

# RUV threshold at N = 4096, base-2 log
N = 4096
c2 = mp.cos(mp.pi / 8) ** 2
thr = c2 * N - mp.sqrt(N * mp.log(N, 2)) / (2 * mp.sqrt(2))
out["ruv_threshold_4096"] = float(thr)
out["ruv_abort_iff_w_le"] = int(mp.floor(thr))

# error terms at m = 1000, C' = C'' = 1, lambda = 1
out["eps_vv_1000"] = float(mp.sqrt(3 * mp.exp(-mp.cbrt(1000))))
out["eps_ec_1000"] = float(mp.exp(-mp.cbrt(1000)))

# CHSH values
out["cos2_pi8"] = float(c2)
out["chsh_depolarized_0.01"] = float(c2 * (1 - mp.mpf("0.01")) + mp.mpf("0.01") / 2)
best = mp.mpf(0)
for fa in itertools.product((0, 1), repeat=2):
    for fb in itertools.product((0, 1), repeat=2):
        wins = sum((fa[a] ^ fb[b]) == (a & b) for a in (0, 1) for b in (0, 1))
        best = max(best, mp.mpf(wins) / 4)
out["classical_max"] = float(best)

# binomial tails
def binom_cdf(k, n, p):
    p = mp.mpf(p)
    return mp.fsum(mp.binomial(n, i) * p ** i * (1 - p) ** (n - i) for i in range(0, k + 1))

# Protocol B at n = 2048, density 1/16 -> T = 128, threshold cos^2 - 0.05
T = 128
kmax = int(mp.ceil((c2 - mp.mpf("0.05")) * T)) - 1
out["vv_ideal_abort_prob_T128"] = float(binom_cdf(kmax, T, c2))
# classical 3/4 devices pass probability at T = 256, margins 0.05 and 0.02
for T, margin in ((256, "0.05"), (256, "0.02"), (1024, "0.05")):
    kmin = int(mp.ceil((c2 - mp.mpf(margin)) * T))
    out[f"vv_classical_pass_prob_T{T}_m{margin}"] = float(1 - binom_cdf(kmin - 1, T, mp.mpf(3) / 4))
    out[f"vv_ideal_abort_prob_T{T}_m{margin}"] = float(binom_cdf(kmin - 1, T, c2))
# RUV classical pass probability at N = 4096
out["ruv_classical_pass_prob_4096"] = float(1 - binom_cdf(int(mp.ceil(thr)) - 1, N, mp.mpf(3) / 4))
out["ruv_ideal_abort_prob_4096"] = float(binom_cdf(int(mp.ceil(thr)) - 1, N, c2))

# guessing |0> vs |+> with equal priors: 1/2 (1 + 1/2 ||rho0 - rho1||_1) = 1/2 (1 + sin(pi/4))
pg = (1 + mp.sin(mp.pi / 4)) / 2
out["p_guess_0_plus"] = float(pg)
out["hmin_0_plus"] = float(-mp.log(pg, 2))

# weak design r = 2, t_w = 2: polynomials of degree <= 1 over GF(2) with coefficients from index digits
sets = []
for i in range(2):
    coeffs = [(i >> 0) & 1, 0]
    sets.append(sorted(a * 2 + (coeffs[0] + coeffs[1] * a) % 2 for a in range(2)))
out["design_r2_t2"] = {"sets": sets, "max_intersection": len(set(sets[0]) & set(sets[1]))}

# min-entropy of a deficient source: uniform on {0,1}^n minus one point
for n in (8, 10, 12):
    out[f"hmin_uniform_minus_one_n{n}"] = float(mp.log(2 ** n - 1, 2))

Path(__file__).with_name("oracle_values.json").write_text(json.dumps(out, indent=1, sort_keys=True) + "\n")
print(json.dumps(out, indent=1, sort_keys=True))
