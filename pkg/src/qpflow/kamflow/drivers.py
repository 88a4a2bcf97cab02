"""Iteration drivers: full-step reducibility toward rotations, and the
(a, b)-only almost-reducibility ladder whose conjugations are retained.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

from ..spectral import PhiFunction
from .chain import ConjugationChain, FiberTranslation
from .steps import step_a_eliminate, step_b_reduce, step_c_conjugate_back


@dataclass
class RunRecord:
    n: int
    Q: float
    s: float
    r: float
    g_norm: float
    f_norm: float
    cumulative_shift_norm: float
    derivative_product: float
    step_gap_functional: float
    wall_seconds: float
    details: dict = field(default_factory=dict)

    CSV_COLUMNS = [
        "n", "Q", "s", "r", "g_norm", "f_norm",
        "cumulative_shift_norm", "derivative_product", "step_gap_functional", "wall_seconds",
    ]

    def csv_row(self):
        return [self.n, self.Q, self.s, self.r, self.g_norm, self.f_norm,
                self.cumulative_shift_norm, self.derivative_product,
                self.step_gap_functional, self.wall_seconds]


def _q_float(sched, n):
    q = sched.Q(n)
    return float(q) if q.bit_length() < 900 else math.inf


def run_rotations_reducibility(sys0, sched, n_max, rho_audit=None, jmax=2):
    """Iterate full reduction steps; the first step skips parts (a) and (c).

    Returns (chain, g_limit, records, report).  The chain conjugates the
    input system to the final one (deepest coordinates last); per step the
    record carries the measured class norms, the cumulative transformation
    data, and the convergence diagnostics: the derivative product (expected
    below 2), the successive-map gap against 8 eps^{3/4}, and the smoothness
    criterion margins for derivative orders up to ``jmax``.
    """
    chain = ConjugationChain()
    records = []
    eps_meas = [max(sys0.f_norm(), 1e-300)]
    sys = sys0
    for n in range(1, n_max + 1):
        t0 = time.perf_counter()
        sys = sys.restricted(s=min(sys.s, sched.sbar(n)), r=min(sys.r, sched.rbar(n)))
        if n == 1:
            b = step_b_reduce(sys, n, sched, rho_audit=rho_audit)
            element_norm = b.report["h_tilde_norm"]
            chain.append(_as_element(b.h_tilde))
            sys = b.system
            details = {"b": b.report, "passes": b.passes}
        else:
            a = step_a_eliminate(sys, n, sched)
            b = step_b_reduce(a.system, n, sched, rho_audit=rho_audit)
            c = step_c_conjugate_back(a.h, b.h_tilde, b.system, n, sched)
            chain.append(c.element)
            element_norm = c.report["element_norm"]
            sys = c.system
            details = {"a": a.report, "b": b.report, "c": c.report, "passes": b.passes}
        sys = sys.restricted(s=min(sys.s, sched.s(n)), r=min(sys.r, sched.r(n)))
        eps_meas.append(max(sys.f_norm(), 0.0))
        deriv_prod = chain.derivative_product_bound()
        gap_functional = 8.0 * eps_meas[-2] ** 0.75
        details["element_norm"] = element_norm
        details["gap_bound"] = deriv_prod * element_norm
        details["cinf"] = _cinf_margins(sched, n, eps_meas[-1], jmax)
        records.append(RunRecord(
            n, _q_float(sched, n), sys.s, sys.r, sys.g_norm(), sys.f_norm(),
            chain.cumulative_shift_norm(), deriv_prod, gap_functional,
            time.perf_counter() - t0, details,
        ))
    report = {
        "eps_measured": eps_meas,
        "derivative_product": chain.derivative_product_bound(),
        "derivative_product_below_2": chain.derivative_product_bound() < 2.0,
        "class_memberships": [
            {"n": rec.n, "g_norm": rec.g_norm, "f_norm": rec.f_norm,
             "g_budget_functional": 4.0 * sum(eps_meas[: rec.n]),
             "f_budget_functional": eps_meas[rec.n]}
            for rec in records
        ],
    }
    return chain, PhiFunction.from_torus(sys.g), records, report


def _as_element(h_tilde):
    from .chain import NearIdentity

    return NearIdentity(h_tilde)


def _cinf_margins(sched, n, eps_n, jmax):
    """Measured smoothness-criterion margins Q_{n+1}^{4j} eps_n^{3/4} vs eps_n^{1/2}."""
    out = []
    if eps_n <= 0:
        return [{"j": j, "holds": True, "log_margin": math.inf} for j in range(1, jmax + 1)]
    try:
        q = sched.Q(n + 1)
        logq = math.log(float(q)) if q.bit_length() < 900 else q.bit_length() * math.log(2.0)
    except Exception:
        return out
    for j in range(1, jmax + 1):
        log_margin = -0.25 * math.log(eps_n) - 16.0 * j * logq
        out.append({"j": j, "holds": log_margin > 0, "log_margin": log_margin})
    return out


def run_almost_reducibility(sys0, sched, n_max, rho_audit=None):
    """Iterate (a, b)-only steps, retaining both conjugations per step.

    The cumulative chain norm is recorded and asserted nondecreasing (the
    retained translations are expected to grow without bound as the ladder
    climbs; that is the point, not an error), while the perturbation norms
    decay and the per-step class memberships are measured.
    """
    chain = ConjugationChain()
    records = []
    eps_meas = [max(sys0.f_norm(), 1e-300)]
    cumulative = [0.0]
    sys = sys0
    for n in range(1, n_max + 1):
        t0 = time.perf_counter()
        sys = sys.restricted(s=min(sys.s, sched.sbar(n)), r=min(sys.r, sched.rbar(n)))
        a = step_a_eliminate(sys, n, sched)
        if a.h.n_modes:
            chain.append(FiberTranslation(a.h))
        b = step_b_reduce(a.system, n, sched, rho_audit=rho_audit)
        if b.h_tilde.n_modes:
            chain.append(_as_element(b.h_tilde))
        s_next = min(b.system.s, sched.s(n))
        r_next = min(b.system.r, sched.r(n))
        sys = b.system.restricted(s=s_next, r=r_next)
        eps_meas.append(max(sys.f_norm(), 0.0))
        cumulative.append(chain.cumulative_shift_norm())
        if cumulative[-1] < cumulative[-2] - 1e-15:
            raise AssertionError("cumulative chain norm decreased")
        step_norm = a.report["h_norm"] + b.report["h_tilde_norm"]
        records.append(RunRecord(
            n, _q_float(sched, n), sys.s, sys.r, sys.g_norm(), sys.f_norm(),
            cumulative[-1], chain.derivative_product_bound(),
            step_norm, time.perf_counter() - t0,
            {"a": a.report, "b": b.report, "passes": b.passes,
             "step_norm_functional": _step_norm_functional(sched, n)},
        ))
    report = {
        "eps_measured": eps_meas,
        "cumulative_shift_norms": cumulative,
        "cumulative_nondecreasing": all(b >= a - 1e-15 for a, b in zip(cumulative, cumulative[1:])),
        "class_memberships": [
            {"n": rec.n, "g_norm": rec.g_norm, "f_norm": rec.f_norm,
             "g_budget_functional": 2.0 * math.sqrt(eps_meas[rec.n - 1]),
             "f_budget_functional": eps_meas[rec.n]}
            for rec in records
        ],
    }
    return chain, sys, records, report


def _step_norm_functional(sched, n):
    """Q_{n+1}^2 eps0, the scheduled ceiling for one retained step map."""
    try:
        q = sched.Q(n + 1)
    except Exception:
        return math.inf
    qf = float(q) if q.bit_length() < 500 else math.inf
    return qf**2 * sched.eps0
