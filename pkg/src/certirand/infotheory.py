"""Small-dimension density-matrix toolkit.

Conventions: the trace distance is the 1/2-normalized trace norm, so
orthogonal pure states are at distance 1. Entropies and mutual information are
in bits. Factors are named by labels; a state's ``dims`` is a tuple of
(label, dimension) pairs in tensor order.

Plain-text matrix format (``load_matrix`` / ``dump_matrix``):

    # comments start with '#'
    dims A:2 B:2
    0.5 0 0 0.5
    0 0 0 0
    0 0 0 0
    0.5 0 0 0.5

Entries are Python complex literals (``1``, ``-0.5j``, ``(0.25+0.1j)``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import CapacityError, CertirandError, InputError

MAX_TOTAL_DIM = 64
MAX_GUESS_DIM = 8


@dataclass(frozen=True)
class Tolerances:
    herm: float = 1e-10
    eig_floor: float = 1e-12
    cert: float = 1e-6


TOL = Tolerances()


# ---------------------------------------------------------------------------
# states


def _norm_dims(dims) -> tuple:
    out = []
    for k, d in enumerate(dims):
        if isinstance(d, (tuple, list)):
            lab, dim = d
        else:
            lab, dim = f"S{k}", d
        out.append((str(lab), int(dim)))
    labels = [l for l, _ in out]
    if len(set(labels)) != len(labels):
        raise InputError(f"duplicate factor labels {labels}")
    return tuple(out)


class DensityMatrix:
    def __init__(self, entries, dims=None, check: bool = True, tol: Tolerances = TOL):
        m = np.array(entries, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InputError("density matrix must be square")
        self.dims = _norm_dims(dims if dims is not None else [("A", m.shape[0])])
        if math.prod(d for _, d in self.dims) != m.shape[0]:
            raise InputError(f"dims {self.dims} do not match matrix size {m.shape[0]}")
        self.m = m
        self.m.setflags(write=False)
        if check:
            self.validate(tol)

    # -- constructors --
    @classmethod
    def from_pure(cls, psi, dims=None):
        psi = np.asarray(psi, dtype=np.complex128).ravel()
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()), dims if dims is not None else [("A", psi.size)])

    @classmethod
    def diag(cls, probs, dims=None):
        p = np.asarray(probs, dtype=float)
        return cls(np.diag(p), dims if dims is not None else [("A", p.size)])

    @classmethod
    def maximally_mixed(cls, dims):
        dims = _norm_dims(dims)
        n = math.prod(d for _, d in dims)
        return cls(np.eye(n) / n, dims)

    # -- views --
    @property
    def labels(self) -> list:
        return [l for l, _ in self.dims]

    @property
    def dim(self) -> int:
        return self.m.shape[0]

    def dim_of(self, labels) -> int:
        return math.prod(self._dim(l) for l in _as_list(labels))

    def _dim(self, label) -> int:
        for l, d in self.dims:
            if l == label:
                return d
        raise InputError(f"factor label {label!r} not found in {self.labels}")

    def validate(self, tol: Tolerances = TOL):
        m = self.m
        if np.max(np.abs(m - m.conj().T), initial=0.0) > tol.herm:
            raise InputError("matrix is not Hermitian")
        if abs(np.trace(m).real - 1) > tol.herm:
            raise InputError(f"trace {np.trace(m).real} is not 1")
        if np.linalg.eigvalsh(_herm(m)).min(initial=0.0) < -tol.herm:
            raise InputError("matrix has negative eigenvalues")
        return self

    def eigvals(self) -> np.ndarray:
        return np.linalg.eigvalsh(_herm(self.m))

    def __repr__(self):
        return f"DensityMatrix(dims={self.dims})"

    # -- operations --
    def ptrace(self, keep) -> "DensityMatrix":
        """Reduced state on the labels in ``keep`` (kept in this state's order)."""
        keep = _as_list(keep)
        for l in keep:
            self._dim(l)
        idx = [k for k, (l, _) in enumerate(self.dims) if l in keep]
        return DensityMatrix(_ptrace(self.m, [d for _, d in self.dims], idx),
                             [self.dims[k] for k in idx], check=False)

    def permute(self, order) -> "DensityMatrix":
        order = _as_list(order)
        if sorted(order) != sorted(self.labels):
            raise InputError("permutation must list every label once")
        perm = [self.labels.index(l) for l in order]
        ds = [d for _, d in self.dims]
        n = len(ds)
        t = self.m.reshape(ds + ds).transpose(perm + [p + n for p in perm])
        return DensityMatrix(t.reshape(self.dim, self.dim), [self.dims[p] for p in perm], check=False)

    def kron(self, other: "DensityMatrix") -> "DensityMatrix":
        return DensityMatrix(np.kron(self.m, other.m), self.dims + other.dims, check=False)

    def dephase(self, label) -> "DensityMatrix":
        """Measure factor ``label`` in the computational basis and forget the outcome."""
        ds = [d for _, d in self.dims]
        self._dim(label)
        k = self.labels.index(label)
        n = len(ds)
        t = self.m.reshape(ds + ds).copy()
        i = np.arange(ds[k])
        mask = (i[:, None] == i[None, :])
        shape = [1] * (2 * n)
        shape[k], shape[k + n] = ds[k], ds[k]
        t = t * mask.reshape(shape)
        return DensityMatrix(t.reshape(self.dim, self.dim), self.dims, check=False)


def _as_list(labels) -> list:
    return [labels] if isinstance(labels, str) else list(labels)


def _herm(m):
    return (m + m.conj().T) / 2


def _ptrace(m, ds, keep_idx):
    n = len(ds)
    t = m.reshape(ds + ds)
    trace_idx = [k for k in range(n) if k not in keep_idx]
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = list(letters[:n])
    col = list(letters[n:2 * n])
    for k in trace_idx:
        col[k] = row[k]
    out_r = "".join(row[k] for k in keep_idx)
    out_c = "".join(col[k] for k in keep_idx)
    t = np.einsum("".join(row) + "".join(col) + "->" + out_r + out_c, t)
    dk = math.prod(ds[k] for k in keep_idx)
    return t.reshape(dk, dk)


def _mat(x):
    return x.m if isinstance(x, DensityMatrix) else np.asarray(x, dtype=np.complex128)


def random_density(dims, rng: np.random.Generator, rank: int | None = None) -> DensityMatrix:
    """Ginibre-distributed state of the given rank (full rank by default)."""
    dims = _norm_dims(dims)
    n = math.prod(d for _, d in dims)
    k = rank or n
    g = rng.normal(size=(n, k)) + 1j * rng.normal(size=(n, k))
    m = g @ g.conj().T
    return DensityMatrix(m / np.trace(m).real, dims)


def random_pure(dims, rng) -> DensityMatrix:
    return random_density(dims, rng, rank=1)


# ---------------------------------------------------------------------------
# cq-states


@dataclass
class CqState:
    base: DensityMatrix
    classical_label: str
    tol: Tolerances = TOL

    def __post_init__(self):
        lab = self.classical_label
        self.base._dim(lab)
        rest = [l for l in self.base.labels if l != lab]
        st = self.base.permute([lab] + rest)
        dx = st.dims[0][1]
        de = st.dim // dx
        t = st.m.reshape(dx, de, dx, de)
        off = t.copy()
        off[np.arange(dx), :, np.arange(dx), :] = 0
        if np.max(np.abs(off), initial=0.0) > self.tol.herm:
            raise InputError(f"factor {lab!r} is not classical (off-diagonal blocks present)")
        self._ordered = st
        self._ens = np.ascontiguousarray(t[np.arange(dx), :, np.arange(dx), :])

    @classmethod
    def from_ensemble(cls, sigmas, e_dims=None, x_label: str = "X") -> "CqState":
        """sum_x |x><x| (x) sigma_x from sub-normalized operators sigma_x."""
        s = np.asarray(sigmas, dtype=np.complex128)
        dx, de = s.shape[0], s.shape[1]
        e_dims = _norm_dims(e_dims if e_dims is not None else [("E", de)])
        m = np.zeros((dx * de, dx * de), dtype=np.complex128)
        for x in range(dx):
            m[x * de:(x + 1) * de, x * de:(x + 1) * de] = s[x]
        return cls(DensityMatrix(m, ((x_label, dx),) + tuple(e_dims)), x_label)

    @property
    def ensemble(self) -> np.ndarray:
        """Sub-normalized E-operators sigma_x = p_x rho_E^x, shape (|X|, dE, dE)."""
        return self._ens

    @property
    def e_labels(self) -> list:
        return [l for l in self._ordered.labels[1:]]

    @property
    def e_dim(self) -> int:
        return self._ens.shape[1]

    def probs(self) -> np.ndarray:
        return np.trace(self._ens, axis1=1, axis2=2).real


def random_cq(nx: int, de: int, rng, rank: int | None = None) -> CqState:
    p = rng.dirichlet(np.ones(nx))
    sig = np.stack([p[x] * random_density([("E", de)], rng, rank).m for x in range(nx)])
    return CqState.from_ensemble(sig)


# ---------------------------------------------------------------------------
# distances


def trace_norm_dist(rho, sigma) -> float:
    """1/2 ||rho - sigma||_1 from the singular values of the difference."""
    a, b = _mat(rho), _mat(sigma)
    if isinstance(rho, DensityMatrix) and isinstance(sigma, DensityMatrix) and \
            [d for _, d in rho.dims] != [d for _, d in sigma.dims]:
        raise InputError(f"dimension mismatch {rho.dims} vs {sigma.dims}")
    if a.shape != b.shape:
        raise InputError(f"dimension mismatch {a.shape} vs {b.shape}")
    return float(0.5 * np.linalg.svd(a - b, compute_uv=False).sum())


def _psd_sqrt(m):
    w, v = np.linalg.eigh(_herm(m))
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def fidelity(rho, sigma) -> float:
    """Root fidelity ||sqrt(rho) sqrt(sigma)||_1."""
    a, b = _psd_sqrt(_mat(rho)), _psd_sqrt(_mat(sigma))
    return float(np.linalg.svd(a @ b, compute_uv=False).sum())


def security_distance(state: CqState) -> float:
    """|| rho_XE - U_X (x) rho_E ||_tr. Block diagonal, so it is the sum of
    per-outcome distances."""
    if not isinstance(state, CqState):
        raise InputError("security distance needs a cq-state")
    s = state.ensemble
    rho_e = s.sum(axis=0)
    diff = s - rho_e[None] / s.shape[0]
    return float(0.5 * sum(np.abs(np.linalg.eigvalsh(_herm(d))).sum() for d in diff))


# ---------------------------------------------------------------------------
# entropies


def _h_eig(w, floor=TOL.eig_floor) -> float:
    w = w[w > floor]
    return float(-(w * np.log2(w)).sum())


def von_neumann(rho, floor: float = TOL.eig_floor) -> float:
    m = _mat(rho)
    return _h_eig(np.linalg.eigvalsh(_herm(m)), floor)


def _H(rho: DensityMatrix, labels) -> float:
    labels = _as_list(labels)
    if not labels:
        return 0.0
    return von_neumann(rho.ptrace(labels))


def entropies(rho: DensityMatrix, a, b, c=None) -> dict:
    """von_neumann = H(rho); conditional = H(A|B); mutual_info = I(A:B);
    conditional_mutual_info = I(A:C|B) when ``c`` is given."""
    a, b = _as_list(a), _as_list(b)
    for l in a + b + (_as_list(c) if c is not None else []):
        rho._dim(l)
    hab, hb, ha = _H(rho, a + b), _H(rho, b), _H(rho, a)
    out = {"von_neumann": von_neumann(rho), "conditional": hab - hb, "mutual_info": ha + hb - hab,
           "conditional_mutual_info": None, "base": 2}
    if c is not None:
        c = _as_list(c)
        out["conditional_mutual_info"] = _H(rho, a + b) + _H(rho, b + c) - _H(rho, a + b + c) - hb
    return out


def mutual_info(rho: DensityMatrix, a, b) -> float:
    return entropies(rho, a, b)["mutual_info"]


def conditional_mutual_info(rho: DensityMatrix, a, c, b) -> float:
    """I(A:C|B)."""
    return entropies(rho, a, b, c)["conditional_mutual_info"]


# ---------------------------------------------------------------------------
# guessing probability and min-entropy


@dataclass
class GuessResult:
    p_guess: float
    upper: float
    gap: float
    iterations: int
    povm: np.ndarray
    certified: bool


def guessing_probability(sigmas, max_iter: int = 20000, gap_tol: float = TOL.cert) -> GuessResult:
    """Optimal discrimination of the sub-normalized ensemble ``sigmas``.

    Fixed-point iteration Pi_x <- G^-1/2 sigma_x Pi_x sigma_x G^-1/2 with
    G = sum_x sigma_x Pi_x sigma_x, started from the pretty-good measurement.
    After each sweep the dual point Y = Herm(sum_x sigma_x Pi_x) + c I, with c
    the smallest shift making Y >= sigma_x for all x, gives an upper bound;
    stop once upper - lower < gap_tol."""
    s = np.asarray(sigmas, dtype=np.complex128)
    nx, de = s.shape[0], s.shape[1]
    rho = s.sum(axis=0)
    w, v = np.linalg.eigh(_herm(rho))
    inv = np.where(w > TOL.eig_floor, 1 / np.sqrt(np.clip(w, TOL.eig_floor, None)), 0.0)
    r = (v * inv) @ v.conj().T
    povm = np.einsum("ij,xjk,kl->xil", r, s, r)
    # kernel of rho: give it to the first outcome so the POVM sums to identity
    povm[0] += np.eye(de) - r @ _herm(rho) @ r
    best, upper, it = 0.0, np.inf, 0
    for it in range(1, max_iter + 1):
        lower = float(np.einsum("xij,xji->", s, povm).real)
        y = _herm(np.einsum("xij,xjk->ik", s, povm))
        shift = max(float(np.linalg.eigvalsh(_herm(s[x] - y)).max()) for x in range(nx))
        upper = min(upper, float(np.trace(y).real) + max(shift, 0.0) * de)
        best = max(best, lower)
        if upper - best < gap_tol:
            break
        g = np.einsum("xij,xjk,xkl->il", s, povm, s)
        wg, vg = np.linalg.eigh(_herm(g))
        ginv = np.where(wg > TOL.eig_floor * 1e-3, 1 / np.sqrt(np.clip(wg, 1e-300, None)), 0.0)
        gi = (vg * ginv) @ vg.conj().T
        new = np.einsum("ij,xjk,xkl,xlm,mn->xin", gi, s, povm, s, gi)
        # restore completeness on the kernel of G
        new[0] += np.eye(de) - gi @ _herm(g) @ gi
        povm = new
    gap = upper - best
    return GuessResult(best, upper, gap, it, povm, gap < gap_tol)


def min_entropy_cq(state: CqState, max_dim: int = MAX_GUESS_DIM, strict: bool = True) -> float:
    """H_min(X|E) = -log2 p_guess in bits."""
    if not isinstance(state, CqState):
        raise InputError("min-entropy needs a cq-state")
    if state.e_dim > max_dim:
        raise CapacityError(f"dim(E) = {state.e_dim} exceeds {max_dim}")
    res = guessing_probability(state.ensemble)
    if strict and not res.certified:
        raise CertirandError(f"guessing-probability solver did not certify (gap {res.gap:.2e})")
    return -math.log2(res.p_guess)


def helstrom_guess(s0, s1) -> float:
    """Closed form for two sub-normalized operators: 1/2 (tr s0 + tr s1 + ||s0 - s1||_1)."""
    a, b = _mat(s0), _mat(s1)
    return float(0.5 * (np.trace(a).real + np.trace(b).real + np.abs(np.linalg.eigvalsh(_herm(a - b))).sum()))


def grid_guess_qubit(s0, s1, step: float = 1e-3) -> float:
    """Brute force over projective qubit measurements {P, I - P}, P = |n><n|,
    on a (theta, phi) grid with spacing ``step`` radians; also tries the
    trivial measurements."""
    a, b = _mat(s0), _mat(s1)
    d = a - b
    # tr(P d) for P = (I + n.sigma)/2: (tr d + n . r) / 2 with r the Bloch vector of d
    rx = 2 * d[0, 1].real
    ry = -2 * d[0, 1].imag
    rz = (d[0, 0] - d[1, 1]).real
    trd = np.trace(d).real
    th = np.arange(0, np.pi + step, step)
    ph = np.arange(0, 2 * np.pi, step)
    best = -np.inf
    for chunk in np.array_split(th, max(1, th.size // 256)):
        T, P = np.meshgrid(chunk, ph, indexing="ij")
        val = np.sin(T) * np.cos(P) * rx + np.sin(T) * np.sin(P) * ry + np.cos(T) * rz
        best = max(best, float(val.max()))
    base = np.trace(b).real
    cand = max(base + (trd + best) / 2, np.trace(a).real, base)
    return float(cand)


def smoothed_min_entropy_lb(state: CqState, eps: float, levels: int = 64) -> dict:
    """Lower bound on H_min^eps(X|E): the best H_min over a finite family of
    sub-normalized states within generalized trace distance eps of the input.

    Family: uniform down-scaling by (1 - eps), and eigenvalue capping of all
    sigma_x at a common level chosen by bisection to spend the eps budget.
    This is a bound, not the exact smoothed value."""
    if not 0 <= eps < 1:
        raise InputError("eps must lie in [0, 1)")
    if state.e_dim > MAX_GUESS_DIM:
        raise CapacityError(f"dim(E) = {state.e_dim} exceeds {MAX_GUESS_DIM}")
    s = state.ensemble
    cands = {"unsmoothed": s}
    if eps > 0:
        cands["scaled"] = s * (1 - eps)
        ws = [np.linalg.eigh(_herm(x)) for x in s]
        top = max(float(w.max()) for w, _ in ws)

        def capped(c):
            return np.stack([(v * np.minimum(np.clip(w, 0, None), c)) @ v.conj().T for w, v in ws])

        lo, hi = 0.0, top
        for _ in range(levels):
            mid = (lo + hi) / 2
            cut = sum(np.clip(w - mid, 0, None).sum() for w, _ in ws)
            # removing positive mass: generalized distance equals the removed trace
            if cut <= eps:
                hi = mid
            else:
                lo = mid
        cands["capped"] = capped(hi)
    best_name, best_val = None, -np.inf
    for name, ens in cands.items():
        res = guessing_probability(ens)
        val = -math.log2(res.upper) if res.upper > 0 else np.inf
        if val > best_val:
            best_name, best_val = name, val
    return {"lower_bound": best_val, "family_member": best_name, "eps": eps, "exact": False}


def generalized_trace_distance(a, b) -> float:
    d = _mat(a) - _mat(b)
    return float(0.5 * np.abs(np.linalg.eigvalsh(_herm(d))).sum() + 0.5 * abs(np.trace(d).real))


# ---------------------------------------------------------------------------
# inequality checks


def check_pinsker(state: DensityMatrix, partition) -> dict:
    """||rho_AB - rho_A (x) rho_B||_tr^2 <= 2 I(A:B), I in bits."""
    a, b = (_as_list(p) for p in partition)
    rab = state.ptrace(a + b)
    prod = state.ptrace(a).kron(state.ptrace(b))
    # bring the product to rho_AB's factor order
    prod = prod.permute(rab.labels)
    lhs = trace_norm_dist(rab, prod) ** 2
    rhs = 2 * mutual_info(state, a, b)
    return {"lhs": lhs, "rhs": rhs, "holds": lhs <= rhs + TOL.cert, "base": 2}


def condition_on(state: CqState, event) -> tuple:
    """(post-measurement state conditioned on the classical outcome being in
    ``event``, probability of the event)."""
    ev = sorted(set(int(e) for e in event))
    s = state.ensemble
    if any(e < 0 or e >= s.shape[0] for e in ev):
        raise InputError("event outcome out of range")
    keep = np.zeros(s.shape[0], dtype=bool)
    keep[ev] = True
    p = float(np.trace(s[keep], axis1=1, axis2=2).real.sum()) if ev else 0.0
    if p <= 0:
        return None, 0.0
    return np.where(keep[:, None, None], s, 0) / p, p


def conditioning_bound_check(rho: CqState, sigma: CqState, event) -> dict:
    """||rho|E - sigma|E||_tr <= ||rho - sigma||_tr / max(Pr_rho(E), Pr_sigma(E))."""
    if rho.ensemble.shape != sigma.ensemble.shape:
        raise InputError("states have different shapes")
    rc, pr = condition_on(rho, event)
    sc, ps = condition_on(sigma, event)
    if pr <= 0 or ps <= 0:
        raise InputError(f"event has zero probability (Pr_rho={pr}, Pr_sigma={ps}); conditioned state undefined")
    lhs = float(sum(0.5 * np.abs(np.linalg.eigvalsh(_herm(a - b))).sum() for a, b in zip(rc, sc)))
    full = float(sum(0.5 * np.abs(np.linalg.eigvalsh(_herm(a - b))).sum()
                     for a, b in zip(rho.ensemble, sigma.ensemble)))
    rhs = full / max(pr, ps)
    return {"lhs": lhs, "rhs": rhs, "holds": lhs <= rhs + TOL.cert, "p_rho": pr, "p_sigma": ps}


# ---------------------------------------------------------------------------
# purification / Uhlmann construction


def _is_classical(rho: DensityMatrix, label: str, tol: float) -> bool:
    return np.max(np.abs(rho.m - rho.dephase(label).m), initial=0.0) <= tol


@dataclass
class FidelityTrick:
    tau: DensityMatrix
    distance: float
    marginal_error: float
    fidelity: float
    eps: float
    sqrt_eps_bound: float
    purified_bound: float
    marginal_ok: bool
    distance_ok: bool
    provable_ok: bool

    @property
    def ok(self) -> bool:
        return self.marginal_ok and self.distance_ok


def fidelity_trick_construct(rho: DensityMatrix, sigma: DensityMatrix, eps: float, a1: str = "A1", a2: str = "A2",
                             b: str = "B", tol: Tolerances = TOL) -> FidelityTrick:
    """Given a cqq-state rho_{A1 A2 B} and a cq-state sigma_{A1 A2} with
    ||rho_{A1A2} - sigma_{A1A2}||_tr <= eps, build tau_{A1 A2 B} with
    tau_{A1A2} = sigma_{A1A2} close to rho:

      1. canonical purifications of rho_A and sigma_A on Q = A, aligned by the
         polar part of sqrt(rho_A) sqrt(sigma_A) so <psi|phi> = F(rho_A, sigma_A);
      2. a purification theta of rho_AB on A B R and the isometry V: Q -> B R
         with (1 (x) V) psi = theta (Schmidt vectors matched, completed on the
         kernel);
      3. tau' = tr_R (1 (x) V) phi, then dephase A1.

    Certificates: the A-marginal error and ||rho - tau||_tr <= sqrt(eps). The
    provable purified-distance bound sqrt(2 eps - eps^2) is also reported."""
    if set(rho.labels) != {a1, a2, b} or set(sigma.labels) != {a1, a2}:
        raise InputError(f"expected rho over {a1},{a2},{b} and sigma over {a1},{a2}")
    if rho.dim > MAX_TOTAL_DIM:
        raise CapacityError(f"total dimension {rho.dim} exceeds {MAX_TOTAL_DIM}")
    rho = rho.permute([a1, a2, b])
    sigma = sigma.permute([a1, a2])
    if [d for _, d in sigma.dims] != [d for _, d in rho.dims[:2]]:
        raise InputError("sigma and rho disagree on the A dimensions")
    if not _is_classical(rho, a1, tol.herm) or not _is_classical(sigma, a1, tol.herm):
        raise InputError(f"factor {a1} must be classical in both states")
    rho_a = rho.ptrace([a1, a2])
    dist_a = trace_norm_dist(rho_a, sigma)
    if dist_a > eps + tol.herm:
        raise InputError(f"precondition violated: ||rho_A - sigma_A||_tr = {dist_a:.3e} > eps = {eps:.3e}")
    da = rho_a.dim
    db = rho.dim // da
    sr, ss = _psd_sqrt(rho_a.m), _psd_sqrt(sigma.m)
    # Uhlmann alignment
    u, sv, vh = np.linalg.svd(sr @ ss)
    w = vh.conj().T @ u.conj().T
    m_psi = sr
    m_phi = ss @ w
    fid = float(abs(np.trace(m_psi.conj().T @ m_phi)))
    # purification of rho_AB on A B R with R = A B
    lam, ev = np.linalg.eigh(_herm(rho.m))
    lam = np.clip(lam, 0, None)
    theta = ev * np.sqrt(lam)[None, :]                      # ((a,b), r)
    m_theta = theta.reshape(da, db * theta.shape[1])         # (a, (b,r))
    # isometry V with m_theta = m_psi V^T
    p, avec = np.linalg.eigh(_herm(rho_a.m))
    cols = []
    support = p > tol.eig_floor
    for k in np.nonzero(support)[0]:
        cols.append((k, m_theta.T @ avec[:, k].conj() / np.sqrt(p[k])))
    dbr = m_theta.shape[1]
    bmat = np.zeros((dbr, da), dtype=np.complex128)
    for k, bk in cols:
        bmat[:, k] = bk
    missing = np.nonzero(~support)[0]
    if missing.size:
        span = np.stack([bk for _, bk in cols], axis=1) if cols else np.zeros((dbr, 0))
        comp = scipy.linalg.null_space(span.conj().T) if span.shape[1] else np.eye(dbr, dtype=np.complex128)
        bmat[:, missing] = comp[:, : missing.size]
    v = bmat @ avec.T                                        # V = sum_k b_k a_k^T
    m_tau = m_phi @ v.T                                      # (a, (b,r))
    t3 = m_tau.reshape(da, db, -1)
    tau_ab = np.einsum("abr,cdr->abcd", t3, t3.conj()).reshape(da * db, da * db)
    tau = DensityMatrix(_herm(tau_ab), rho.dims, check=False).dephase(a1)
    marg = float(np.max(np.abs(tau.ptrace([a1, a2]).m - sigma.m)))
    dist = trace_norm_dist(rho, tau)
    sq = math.sqrt(max(eps, 0.0))
    pur = math.sqrt(max(2 * eps - eps * eps, 0.0))
    return FidelityTrick(tau, dist, marg, fid, eps, sq, pur, marg <= 1e-8, dist <= sq + tol.cert,
                         dist <= pur + tol.cert)


# ---------------------------------------------------------------------------
# sub-block chain check


def _subblock_marginals(s: np.ndarray, t: int, j: int, width: int) -> np.ndarray:
    """Marginal ensemble of bits [j*width, (j+1)*width) of a t-bit classical X."""
    de = s.shape[1]
    r = s.reshape((2,) * t + (de, de))
    keep = list(range(j * width, (j + 1) * width))
    axes = tuple(k for k in range(t) if k not in keep)
    return r.sum(axis=axes).reshape(1 << width, de, de)


def _dist_to_uniform(s: np.ndarray) -> float:
    rho_e = s.sum(axis=0)
    return float(sum(0.5 * np.abs(np.linalg.eigvalsh(_herm(x - rho_e / s.shape[0]))).sum() for x in s))


def subblock_chain_check(state: CqState, t: int) -> dict:
    """For X of t bits split into sqrt(t) sub-blocks of sqrt(t) bits, with
    zeta = ||rho_XE - U (x) rho_E||_tr: at least a 1 - t^(-1/4) fraction of
    sub-blocks j must satisfy ||rho_{X_j E} - U (x) rho_E||_tr <= 2(sqrt(zeta) + t^(-1/8))."""
    s = state.ensemble
    if s.shape[0] != 1 << t:
        raise InputError(f"X must have 2^{t} outcomes")
    width = math.isqrt(t)
    if width * width != t:
        raise InputError("t must be a perfect square")
    zeta = _dist_to_uniform(s)
    mu = 2 * (math.sqrt(zeta) + t ** -0.125)
    dists = [_dist_to_uniform(_subblock_marginals(s, t, j, width)) for j in range(width)]
    good = sum(d <= mu + TOL.cert for d in dists) / width
    need = 1 - t ** -0.25
    return {"zeta": zeta, "mu": mu, "subblock_distances": dists, "good_fraction": good, "required": need,
            "holds": good >= need, "vacuous": mu >= 1}


# ---------------------------------------------------------------------------
# text format


def load_matrix(text_or_path) -> DensityMatrix:
    p = Path(text_or_path) if not isinstance(text_or_path, str) or "\n" not in text_or_path else None
    text = p.read_text() if p is not None else text_or_path
    dims, rows = None, []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("dims"):
            dims = []
            for tok in line.split()[1:]:
                lab, _, d = tok.partition(":")
                if not d:
                    raise InputError(f"line {lineno}: dims entries must be label:dim")
                dims.append((lab, int(d)))
            continue
        try:
            rows.append([complex(tok) for tok in line.split()])
        except ValueError as exc:
            raise InputError(f"line {lineno}: {exc}") from exc
    if not rows or any(len(r) != len(rows) for r in rows):
        raise InputError("matrix rows must form a square")
    return DensityMatrix(np.array(rows), dims if dims is not None else [("A", len(rows))])


def _fmt_c(z: complex) -> str:
    if z.imag == 0:
        return repr(float(z.real))
    return repr(complex(z))


def dump_matrix(rho: DensityMatrix) -> str:
    head = "dims " + " ".join(f"{l}:{d}" for l, d in rho.dims)
    return head + "\n" + "\n".join(" ".join(_fmt_c(z) for z in row) for row in rho.m) + "\n"
