"""Approximate solution of the fiber linearized equation by diagonally
dominant per-mode systems.

The truncated equation

    d_omega h + rho d_theta h + T_K(g d_theta h) = T_K f,        mean_theta f = 0

splits over the fiber index l into finite linear systems
``(A_l + G_l) hbar_l = fbar_l / (2 pi)`` on the lattice ``|k| < K - |l|``,
with ``A_l = diag(i(<k, omega> + l rho))`` and ``G_l = (i l ghat(p - q))``
(the ``2 pi`` of the derivative convention is folded into the right-hand
side, so dominance ratios and divisor margins are the unscaled ones).
Conjugating by the exponential weight ``Omega_{l,r'} = diag(e^{|k| r'})``
turns coefficient decay into row-sum dominance: when the direct dominance
inequality

    |<k, omega> + l rho|  >  (|l| (K - |l|)^2 ||g||_r)^(1/2)

holds for every mode in range, the row-sum functional C of the weighted
``A^{-1} G`` stays below 1/2, the Neumann iteration converges, and the
constructive bound ``1 / (1 - C) < 2`` certifies the inverse.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundViolationError, DominanceError, NeumannError
from .spectral import TWO_PI, PhiFunction, TorusFunction, multiply

ORACLE_LATTICE_CAP = 5000


def _lattice(border):
    """All k in Z^2 with |k|_1 < border, in canonical (|k|, k1, k2) order."""
    if border < 1:
        return np.zeros((0, 2), dtype=np.int64)
    rng = np.arange(-border + 1, border)
    k1, k2 = np.meshgrid(rng, rng, indexing="ij")
    k = np.stack([k1.ravel(), k2.ravel()], axis=1)
    k = k[np.abs(k).sum(axis=1) < border]
    order = np.lexsort((k[:, 1], k[:, 0], np.abs(k).sum(axis=1)))
    return k[order]


@dataclass
class ModeSystem:
    """One fiber mode's linear system on its k-lattice.

    ``divisors`` holds the unscaled ``<k, omega> + l rho``; the matrix
    entries of record are ``A_l = 2 pi i (<k, omega> + l rho)`` on the
    diagonal and ``G_l[p, q] = 2 pi i l ghat(p - q)``, exposed through
    :meth:`a_diagonal` and :meth:`dense_matrix`.
    """

    l: int
    K: int
    lattice: np.ndarray
    divisors: np.ndarray
    g_modes: tuple  # ((k1, k2), coefficient) pairs of the coefficient field
    r_prime: float
    g_norm_r: float
    index_of: dict = field(repr=False, default_factory=dict)

    def __post_init__(self):
        self.index_of = {(int(k[0]), int(k[1])): i for i, k in enumerate(self.lattice)}

    @property
    def size(self):
        return len(self.lattice)

    def a_diagonal(self):
        return TWO_PI * 1j * self.divisors

    def dense_matrix(self, weighted=False, include_two_pi=True):
        """Dense (A_l + G_l), optionally weight-conjugated by Omega_{l, r'}."""
        n = self.size
        scale = TWO_PI if include_two_pi else 1.0
        m = np.diag(scale * 1j * self.divisors)
        absk = np.abs(self.lattice).sum(axis=1)
        for (j1, j2), c in self.g_modes:
            for q in range(n):
                p = self.index_of.get((int(self.lattice[q, 0] + j1), int(self.lattice[q, 1] + j2)))
                if p is not None:
                    m[p, q] += scale * 1j * self.l * c
        if weighted:
            w = np.exp(absk * self.r_prime)
            m = (w[:, None] * m) / w[None, :]
        return m

    def row_sum_contraction(self):
        """C(Atilde^{-1} Gtilde) = sum_p max_q of the weighted ratio matrix.

        Computed from the sparse coefficient data; the exponential weights
        enter only through differences |p| - |p - j|, so nothing overflows.
        """
        if not self.g_modes or self.size == 0:
            return 0.0
        absk = np.abs(self.lattice).sum(axis=1)
        best = np.zeros(self.size)
        for (j1, j2), c in self.g_modes:
            shifted = self.lattice - np.array([j1, j2])
            inside = np.abs(shifted).sum(axis=1) < (self.K - abs(self.l))
            entry = np.zeros(self.size)
            absq = np.abs(shifted).sum(axis=1)
            entry[inside] = abs(self.l) * abs(c) * np.exp((absk[inside] - absq[inside]) * self.r_prime)
            np.maximum(best, entry, out=best)
        return float(np.sum(best / np.abs(self.divisors)))

    def weighted_l1_opnorm_g(self):
        """Exact max column sum of the weighted G (2 pi excluded)."""
        if not self.g_modes or self.size == 0:
            return 0.0
        absk = np.abs(self.lattice).sum(axis=1)
        col = np.zeros(self.size)
        for (j1, j2), c in self.g_modes:
            target = self.lattice + np.array([j1, j2])
            inside = np.abs(target).sum(axis=1) < (self.K - abs(self.l))
            abst = np.abs(target).sum(axis=1)
            col[inside] += abs(self.l) * abs(c) * np.exp((abst[inside] - absk[inside]) * self.r_prime)
        return float(col.max())

    def paper_g_bound(self):
        """The asserted ceiling |l| (K - |l|)^2 ||g||_r for the weighted G."""
        return abs(self.l) * (self.K - abs(self.l)) ** 2 * self.g_norm_r

    def min_dominance_margin(self):
        """min |divisor| - sqrt(|l| (K - |l|)^2 ||g||_r) over the lattice."""
        if self.size == 0:
            return math.inf
        threshold = math.sqrt(abs(self.l) * (self.K - abs(self.l)) ** 2 * self.g_norm_r)
        return float(np.abs(self.divisors).min() - threshold)


def build_mode_system(l, K, omega, rho, g, r_prime):
    border = K - abs(l)
    lattice = _lattice(border)
    omega = np.asarray(omega, dtype=float)
    divisors = lattice @ omega + l * rho
    g_modes = tuple(((int(k[0]), int(k[1])), complex(c)) for k, c in zip(g.ks, g.cs))
    system = ModeSystem(int(l), int(K), lattice, divisors, g_modes, float(r_prime), g.norm())
    if system.size and system.weighted_l1_opnorm_g() > system.paper_g_bound() * (1 + 1e-12):
        raise BoundViolationError(
            f"weighted coefficient operator exceeds its ceiling at l={l}"
        )
    return system


@dataclass
class PreconditionReport:
    """Audit of the solvability conditions for one solve."""

    K: int
    K_formula: int
    truncation_ok: bool
    truncation_slack: float
    dominance_margin: float
    dominance_witness: tuple
    dominance_ok: bool
    params: dict

    @property
    def passed(self):
        return self.truncation_ok and self.dominance_ok

    def to_json_dict(self):
        return {
            "K": self.K,
            "K_formula": self.K_formula,
            "truncation_ok": bool(self.truncation_ok),
            "truncation_slack": self.truncation_slack,
            "dominance_margin": self.dominance_margin,
            "dominance_witness": {
                "k": list(self.dominance_witness[0]),
                "l": int(self.dominance_witness[1]),
            },
            "dominance_ok": bool(self.dominance_ok),
            "params": self.params,
            "passed": bool(self.passed),
        }


def check_preconditions(eta, eta_tilde, sigma, gamma, tau, K, omega, rho):
    """Audit the truncation budget and the direct dominance inequality.

    The budget condition requires ``K = [ln(1/eta_tilde) / sigma]`` to stay
    below ``(gamma^2 / eta)^(1/(2 tau + 3))``; the dominance condition is
    checked directly for every ``0 < |k| + |l| < K`` with ``l != 0``:
    ``|<k, omega> + l rho| > (|l| (K - |l|)^2 eta)^(1/2)``.  Pure audit: a
    failed condition is reported, never raised.
    """
    if tau <= 2:
        raise ValueError("tau must exceed 2")
    if not (0 < eta_tilde <= eta):
        raise ValueError("need 0 < eta_tilde <= eta")
    omega = np.asarray(omega, dtype=float)
    K_formula = int(math.floor(math.log(1.0 / eta_tilde) / sigma))
    ceiling = (gamma**2 / eta) ** (1.0 / (2 * tau + 3))
    truncation_ok = (K == K_formula) and (K < ceiling)
    truncation_slack = ceiling - K
    worst = math.inf
    witness = ((0, 0), 0)
    for l in range(-(K - 1), K):
        if l == 0:
            continue
        lattice = _lattice(K - abs(l))
        if len(lattice) == 0:
            continue
        divisors = np.abs(lattice @ omega + l * rho)
        threshold = math.sqrt(abs(l) * (K - abs(l)) ** 2 * eta)
        margins = divisors - threshold
        idx = int(np.argmin(margins))
        if margins[idx] < worst:
            worst = float(margins[idx])
            witness = ((int(lattice[idx, 0]), int(lattice[idx, 1])), int(l))
    dominance_ok = worst > 0
    return PreconditionReport(
        K,
        K_formula,
        truncation_ok,
        truncation_slack,
        worst,
        witness,
        dominance_ok,
        {
            "eta": eta,
            "eta_tilde": eta_tilde,
            "sigma": sigma,
            "gamma": gamma,
            "tau": tau,
            "ceiling": ceiling,
        },
    )


@dataclass
class ModeDiagnostics:
    l: int
    lattice_size: int
    min_margin: float
    c_value: float
    neumann_iters: int
    h_norm: float

    def csv_row(self):
        return [self.l, self.lattice_size, self.min_margin, self.c_value, self.neumann_iters, self.h_norm]


@dataclass
class HomologicalSolution:
    """Solver output: shift ``h``, tail error, and the certification record."""

    h: TorusFunction
    error_term: TorusFunction
    residual_norm: float
    h_norm: float
    error_norm: float
    h_bound: float | None
    error_bound: float | None
    preconditions: PreconditionReport | None
    diagnostics: list

    def bound_ratios(self):
        hr = None if not self.h_bound else self.h_norm / self.h_bound
        er = None if not self.error_bound else self.error_norm / self.error_bound
        return hr, er


def _solve_mode(system, rhs, tol=1e-14, max_iters=400):
    """Neumann iteration for (A + G) h = rhs / (2 pi) on one lattice.

    The iteration runs in unweighted coordinates (identical to the weighted
    one, since the diagonal weight commutes with A); convergence is governed
    by the weighted row-sum contraction, which the caller has checked.
    """
    a_inv = 1.0 / (1j * system.divisors)
    target = rhs / TWO_PI
    h = target * a_inv
    if not system.g_modes:
        return h, 1
    absk = np.abs(system.lattice).sum(axis=1)
    weights = np.exp(absk * system.r_prime)
    border = system.K - abs(system.l)
    side = 2 * border - 1
    box = np.zeros((side, side), dtype=complex)
    ix = system.lattice[:, 0] + border - 1
    iy = system.lattice[:, 1] + border - 1
    for it in range(1, max_iters + 1):
        box[:] = 0.0
        box[ix, iy] = h
        conv = np.zeros(system.size, dtype=complex)
        for (j1, j2), c in system.g_modes:
            sx = ix - j1
            sy = iy - j2
            valid = (sx >= 0) & (sx < side) & (sy >= 0) & (sy < side)
            contrib = np.zeros(system.size, dtype=complex)
            contrib[valid] = box[sx[valid], sy[valid]]
            conv += c * contrib
        new = (target - 1j * system.l * conv) * a_inv
        update = float(np.abs(new - h) @ weights)
        scale = float(np.abs(new) @ weights)
        h = new
        if update <= tol * max(scale, 1e-300):
            return h, it
    raise NeumannError(f"no convergence in {max_iters} iterations at l={system.l}")


def solve_homological(
    f,
    g,
    rho,
    omega,
    K,
    s,
    r,
    delta,
    sigma,
    preconditions=None,
    waive=False,
    threads=1,
):
    """Solve the truncated equation and certify the output bounds.

    ``f`` must have zero theta-mean (no l = 0 modes).  ``preconditions`` is
    the report from :func:`check_preconditions`; when it passed, the norms of
    ``h`` and of the tail error at the shrunk strips ``(s - delta, r - sigma)``
    are certified against ``2 eta_tilde / (gamma sigma^(2+tau))`` and
    ``4 eta_tilde^2 / (gamma sigma^(3+tau))``, and any violation is a defect,
    not a report.  Without a passing report the caller must ``waive``
    explicitly; the direct dominance margins must still be positive.
    """
    if f.n_modes and np.any(f.ls == 0):
        raise ValueError("f must have zero theta-mean; absorb it into g first")
    if not (0 < sigma <= delta / 2 <= s / 2):
        raise ValueError("need 0 < sigma <= delta/2 <= s/2")
    if preconditions is None and not waive:
        raise ValueError("pass a precondition report or waive explicitly")
    certified = preconditions is not None and preconditions.passed
    if preconditions is not None and not preconditions.passed and not waive:
        raise DominanceError("preconditions failed and the caller did not waive")
    omega = np.asarray(omega, dtype=float)
    g = PhiFunction.from_torus(g) if not isinstance(g, PhiFunction) else g
    r_prime = r - sigma

    systems = []
    for l in range(-(K - 1), K):
        if l == 0:
            continue
        system = build_mode_system(l, K, omega, rho, g, r_prime)
        if system.size == 0:
            continue
        margin = system.min_dominance_margin()
        if margin <= 0:
            raise DominanceError(f"dominance margin {margin:.3e} <= 0 at l={l}")
        systems.append(system)

    trunc = f.truncate(K)
    rhs_by_l = {}
    for l, k, c in zip(trunc.ls, trunc.ks, trunc.cs):
        rhs_by_l.setdefault(int(l), []).append(((int(k[0]), int(k[1])), complex(c)))

    def run(system):
        c_value = system.row_sum_contraction()
        if c_value >= 0.5:
            raise NeumannError(
                f"row-sum contraction {c_value:.3f} >= 1/2 at l={system.l} despite positive margins"
            )
        rhs = np.zeros(system.size, dtype=complex)
        for k, c in rhs_by_l.get(system.l, ()):
            rhs[system.index_of[k]] = c
        if not np.any(rhs):
            diag = ModeDiagnostics(system.l, system.size, system.min_dominance_margin(), c_value, 0, 0.0)
            return system.l, None, diag
        h_vec, iters = _solve_mode(system, rhs)
        hn = float(
            np.abs(h_vec)
            @ np.exp(np.abs(system.lattice).sum(axis=1) * (r - sigma) + abs(system.l) * (s - delta))
        )
        diag = ModeDiagnostics(system.l, system.size, system.min_dominance_margin(), c_value, iters, hn)
        return system.l, h_vec, diag

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, systems))
    else:
        results = [run(sy) for sy in systems]
    results.sort(key=lambda t: t[0])

    ls, ks, cs = [], [], []
    diagnostics = []
    for l, h_vec, diag in results:
        diagnostics.append(diag)
        if h_vec is None:
            continue
        system = next(sy for sy in systems if sy.l == l)
        keep = np.abs(h_vec) > 0
        ls.append(np.full(int(keep.sum()), l, dtype=np.int64))
        ks.append(system.lattice[keep])
        cs.append(h_vec[keep])
    if ls:
        h = TorusFunction(s - delta, r - sigma, np.concatenate(ls), np.vstack(ks), np.concatenate(cs))
    else:
        h = TorusFunction(s - delta, r - sigma)

    # error term R_K(f - g dh/dtheta), assembled exactly in coefficients
    dh = h.derive_theta()
    gdh, _ = multiply(g, dh, cutoff=_product_cutoff(g, dh))
    error_term = f.tail(K) - gdh.tail(K)

    # residual of the truncated equation itself
    residual = h.derive_omega(omega) + dh * rho + gdh.truncate(K) - f.truncate(K)
    residual_norm = residual.norm(s=s - delta, r=r - sigma)
    fn = max(f.norm(s=s, r=r), 1e-300)
    if residual_norm > 1e-10 * fn:
        raise NeumannError(f"truncated-equation residual {residual_norm:.3e} above 1e-10 * N(f)")

    h_norm = h.norm()
    error_norm = error_term.norm(s=s - delta, r=r - sigma)
    h_bound = error_bound = None
    if certified:
        p = preconditions.params
        h_bound = 2.0 * p["eta_tilde"] / (p["gamma"] * sigma ** (2.0 + p["tau"]))
        error_bound = 4.0 * p["eta_tilde"] ** 2 / (p["gamma"] * sigma ** (3.0 + p["tau"]))
        if h_norm > h_bound:
            raise BoundViolationError(f"certified shift bound exceeded: {h_norm:.3e} > {h_bound:.3e}")
        if error_norm > error_bound:
            raise BoundViolationError(
                f"certified error bound exceeded: {error_norm:.3e} > {error_bound:.3e}"
            )
    return HomologicalSolution(
        h, error_term, residual_norm, h_norm, error_norm, h_bound, error_bound, preconditions, diagnostics
    )


def _product_cutoff(a, b):
    da = int(a.degrees().max(initial=0))
    db = int(b.degrees().max(initial=0))
    return da + db + 2


def dense_oracle_solve(system, rhs, include_two_pi=True):
    """Direct elimination solve of the unweighted per-mode system (tests only)."""
    if system.size > ORACLE_LATTICE_CAP:
        raise ValueError(f"oracle capped at {ORACLE_LATTICE_CAP} unknowns")
    m = system.dense_matrix(weighted=False, include_two_pi=include_two_pi)
    if system.size == 0:
        return np.zeros(0, dtype=complex)
    return np.linalg.solve(m, np.asarray(rhs, dtype=complex))
