"""Exact continued-fraction machinery and arithmetic audits.

A frequency ``alpha`` in (0, 1) is specified exactly as a quadratic surd
``(a + b sqrt(d)) / c``, as an explicit partial-quotient list, or as a decimal
literal with declared uncertainty.  Partial quotients, convergents and the
best-approximation inequalities are handled in exact integer arithmetic;
quadratic surds expand through the periodic ``(P + sqrt(D)) / Q`` recursion,
correct at any depth, and exact value comparisons stay inside the field
``Q(sqrt(d))``.

On top of the expansion sit the CD-bridge subsequence selection (greedy, with
construction-independent post-validation of every clause), the growth
exponents ``u_tilde`` and ``u``, and the resonance-margin audit for a
candidate fibered rotation number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from math import isqrt

import numpy as np

from .errors import (
    ConstructionFailedError,
    DepthInsufficientError,
    PrecisionExhaustedError,
    RationalInputError,
)

LOG_GUARD = 1e-6  # relative slack below which power comparisons go exact
EXACT_BITS_CAP = 20_000_000  # refuse exact big-int powers beyond this size


# -- exact values in Q(sqrt(d)) --------------------------------------------------


class SurdValue:
    """Exact ``(a + b sqrt(d)) / c`` with integers, c > 0, d > 0 nonsquare.

    Supports the handful of exact operations the audits need: integer
    shifts, scaling, floor, sign and comparisons within a common radicand.
    """

    __slots__ = ("a", "b", "c", "d")

    def __init__(self, a, b, c, d):
        if c == 0:
            raise ZeroDivisionError("zero denominator")
        if d <= 0 or isqrt(d) ** 2 == d:
            raise ValueError("d must be positive and not a perfect square")
        if c < 0:
            a, b, c = -a, -b, -c
        g = math.gcd(math.gcd(abs(a), abs(b)), c)
        if g > 1:
            a, b, c = a // g, b // g, c // g
        self.a, self.b, self.c, self.d = a, b, c, d

    def scale(self, k):
        return SurdValue(k * self.a, k * self.b, self.c, self.d)

    def shift(self, m):
        """self - m for an integer m."""
        return SurdValue(self.a - m * self.c, self.b, self.c, self.d)

    def _irr_floor(self):
        # floor of a + b sqrt(d) over c, using s < b sqrt(d) < s + 1 brackets
        if self.b == 0:
            return self.a // self.c
        t = isqrt(self.b * self.b * self.d)
        if self.b > 0:
            return (self.a + t) // self.c
        return (self.a - t - 1) // self.c

    def floor(self):
        return self._irr_floor()

    def sign(self):
        a, b = self.a, self.b
        if b == 0:
            return (a > 0) - (a < 0)
        if a >= 0 and b > 0:
            return 1
        if a <= 0 and b < 0:
            return -1
        if a >= 0:  # b < 0
            return 1 if a * a > b * b * self.d else -1
        return -1 if a * a > b * b * self.d else 1

    def __sub__(self, other):
        if isinstance(other, SurdValue):
            if other.d != self.d:
                raise ArithmeticError("mixed radicands")
            return SurdValue(
                self.a * other.c - other.a * self.c,
                self.b * other.c - other.b * self.c,
                self.c * other.c,
                self.d,
            )
        if isinstance(other, (int, Fraction)):
            fr = Fraction(other)
            return SurdValue(
                self.a * fr.denominator - fr.numerator * self.c,
                self.b * fr.denominator,
                self.c * fr.denominator,
                self.d,
            )
        return NotImplemented

    def __lt__(self, other):
        return (self - other).sign() < 0

    def __le__(self, other):
        return (self - other).sign() <= 0

    def __float__(self):
        return (self.a + self.b * math.sqrt(self.d)) / self.c

    def __repr__(self):
        return f"SurdValue(({self.a} + {self.b} sqrt({self.d})) / {self.c})"


def _cf_quotients_of_surd(a, b, c, d, limit=200_000):
    """Partial quotients a_1, a_2, ... of (a + b sqrt d)/c in (0, 1).

    Returns (quotients, preperiod, period).  The value is rewritten as
    (P + sqrt D) / Q with Q | (D - P^2); the state (P, Q) eventually cycles.
    The leading quotient of the value itself (zero, since alpha < 1) is
    dropped, matching the convention a_k = floor(1 / alpha_{k-1}).
    """
    if b == 0:
        raise RationalInputError("b = 0 is a rational value")
    if b < 0:
        a, b, c = -a, -b, -c
    P, D, Q = a, b * b * d, c
    if (D - P * P) % Q != 0:
        P, D, Q = P * abs(Q), D * Q * Q, Q * abs(Q)
    quots = []
    seen = {}
    step = 0
    while True:
        key = (P, Q)
        if key in seen:
            pre, per = seen[key], step - seen[key]
            # drop a_0 = 0 (alpha in (0,1)); the cycle never revisits index 0
            return quots[1:], max(pre - 1, 0), per
        seen[key] = step
        s = isqrt(D)
        a_k = (P + s) // Q if Q > 0 else (P + s + 1) // Q
        # x_next = 1 / (x - a_k):  P' = a_k Q - P, Q' = (D - P'^2) / Q
        quots.append(a_k)
        P = a_k * Q - P
        Q = (D - P * P) // Q
        step += 1
        if step > limit:
            raise ConstructionFailedError("period detection runaway")


def _matmul2(m1, m2):
    (a, b), (c, d) = m1
    (e, f), (g, h) = m2
    return ((a * e + b * g, a * f + b * h), (c * e + d * g, c * f + d * h))


_ID2 = ((1, 0), (0, 1))


# -- frequency -------------------------------------------------------------------


@dataclass
class Frequency:
    """Continued-fraction data for alpha in (0, 1).

    ``partial_quotients[i]`` is a_{i+1}; convergents follow q_0 = 1,
    q_1 = a_1, q_k = a_k q_{k-1} + q_{k-2} (and p_0 = 0, p_1 = 1), all exact
    big integers.  ``cd_indices`` select the bridge subsequence
    Q_k = q[cd_indices[k]].  Quadratic surds additionally carry the periodic
    quotient structure, which makes q_n reachable at any index by matrix
    powering without materializing the whole ladder.
    """

    spec: dict
    partial_quotients: list
    p_list: list
    q_list: list
    rational_terminated: bool = False
    precision_exhausted: bool = False
    surd: SurdValue | None = None
    period_data: tuple | None = field(default=None, repr=False)  # (quots_prefix, preperiod, period)
    interval: tuple | None = None  # exact rational bracket (lo, hi) for alpha
    cd_indices: list | None = None
    bridge_param: int = 8
    u_tilde: float | None = None
    u: float | None = None

    @property
    def depth(self):
        return len(self.partial_quotients)

    @property
    def is_lazy(self):
        return self.period_data is not None

    def quotient(self, i):
        """a_{i+1} (0-based), extending through the period when available."""
        if i < len(self.partial_quotients):
            return self.partial_quotients[i]
        if self.period_data is not None:
            quots, pre, per = self.period_data
            return quots[pre + (i - pre) % per]
        raise DepthInsufficientError(f"quotient index {i} beyond depth {self.depth}")

    def _extend_to(self, n):
        while len(self.q_list) <= n:
            k = len(self.q_list)
            a = self.quotient(k - 1)
            self.q_list.append(a * self.q_list[-1] + self.q_list[-2])
            self.p_list.append(a * self.p_list[-1] + self.p_list[-2])

    def q(self, n):
        if n >= len(self.q_list):
            if self.period_data is None:
                raise DepthInsufficientError(f"q_{n} beyond expanded depth {self.depth}")
            if n <= 4096:
                self._extend_to(n)
            else:
                return self._pq_at(n)[1]
        return self.q_list[n]

    def p(self, n):
        if n >= len(self.p_list):
            if self.period_data is None:
                raise DepthInsufficientError(f"p_{n} beyond expanded depth {self.depth}")
            if n <= 4096:
                self._extend_to(n)
            else:
                return self._pq_at(n)[0]
        return self.p_list[n]

    def _pq_at(self, n):
        """(p_n, q_n) by fast powering of the periodic quotient block."""
        if not hasattr(self, "_pq_cache"):
            object.__setattr__(self, "_pq_cache", {})
        if n in self._pq_cache:
            return self._pq_cache[n]
        quots, pre, per = self.period_data

        def block(start, count):
            m = _ID2
            for i in range(start, start + count):
                a = self.quotient(i)
                m = _matmul2(m, ((a, 1), (1, 0)))
            return m

        if n <= pre:
            m = block(0, n)
        else:
            reps, rem = divmod(n - pre, per)
            m = block(0, pre)
            if reps:
                base = block(pre, per)
                acc = _ID2
                e = reps
                while e:
                    if e & 1:
                        acc = _matmul2(acc, base)
                    e >>= 1
                    if e:
                        base = _matmul2(base, base)
                m = _matmul2(m, acc)
            if rem:
                m = _matmul2(m, block(pre, rem))
        # product M(a_1) ... M(a_n) carries (q_n, q_{n-1}) in its top row
        result = (m[1][0], m[0][0])
        self._pq_cache[n] = result
        return result

    def alpha_float(self):
        if self.surd is not None:
            return float(self.surd)
        n = min(self.depth, 40)
        return self.p_list[n] / self.q_list[n]

    def alpha_fraction(self, n=None):
        n = self.depth if n is None else n
        self._extend_to(n) if self.period_data is not None else None
        return Fraction(self.p_list[n], self.q_list[n])

    def circle_norm_exact(self, k):
        """Exact ||k alpha||_T as a SurdValue (quadratic inputs only)."""
        if self.surd is None:
            raise ValueError("exact circle norms need a quadratic surd value")
        x = self.surd.scale(k)
        frac = x.shift(x.floor())
        half = frac - Fraction(1, 2)
        if half.sign() <= 0:
            return frac
        return SurdValue(frac.c - frac.a, -frac.b, frac.c, frac.d)  # 1 - frac

    def circle_norm_interval(self, k):
        """Certified [lo, hi] bracket of ||k alpha||_T from the rational interval."""
        lo, hi = self.interval
        vals = []
        for v in (k * lo, k * hi):
            m = round(v)
            vals.append(abs(v - m))
        m_lo, m_hi = round(k * lo), round(k * hi)
        if m_lo != m_hi:
            raise PrecisionExhaustedError(f"||{k} alpha|| is not determined at this precision")
        return min(vals), max(vals)

    def to_json_dict(self, max_quotients=200):
        return {
            "spec": self.spec,
            "partial_quotients": [int(a) for a in self.partial_quotients[:max_quotients]],
            "convergents": [
                [int(p), int(q)]
                for p, q in zip(self.p_list[: max_quotients + 1], self.q_list[: max_quotients + 1])
            ],
            "cd_indices": None if self.cd_indices is None else [int(i) for i in self.cd_indices],
            "bridge_param": self.bridge_param,
            "u_tilde": self.u_tilde,
            "u": self.u,
            "rational_terminated": self.rational_terminated,
            "precision_exhausted": self.precision_exhausted,
        }


def expand_continued_fraction(value, depth):
    """Expand a frequency spec to ``depth`` partial quotients.

    ``value`` is one of::

        {"kind": "quadratic", "a": .., "b": .., "c": .., "d": ..}
        {"kind": "quotients", "a": [..]}
        {"kind": "decimal", "value": "...", "uncertainty": "..."}

    Rational inputs terminate and come back flagged; a decimal input whose
    next quotient is uncertain raises ``PrecisionExhaustedError`` unless the
    certain prefix already reaches ``depth``.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    kind = value.get("kind")
    if kind == "quadratic":
        a, b, c, d = (int(value[key]) for key in ("a", "b", "c", "d"))
        surd = SurdValue(a, b, c, d)
        if surd.sign() <= 0 or (surd - 1).sign() >= 0:
            raise ValueError("alpha must lie in (0, 1)")
        # enough explicit quotients to cover the preperiod + one period
        quots, pre, per = _cf_quotients_of_surd(a, b, c, d)
        explicit = [quots[i] if i < len(quots) else quots[pre + (i - pre) % per] for i in range(depth)]
        freq = Frequency(dict(value), explicit, [0, 1], [1, explicit[0]], surd=surd, period_data=(quots, pre, per))
        freq._extend_to(depth)
        lo = min(freq.alpha_fraction(depth - 1), freq.alpha_fraction(depth))
        hi = max(freq.alpha_fraction(depth - 1), freq.alpha_fraction(depth))
        freq.interval = (lo, hi)
        return freq
    if kind == "quotients":
        quots = [int(x) for x in value["a"]]
        if any(x < 1 for x in quots):
            raise ValueError("partial quotients must be positive")
        if len(quots) < depth:
            raise DepthInsufficientError(f"{len(quots)} quotients supplied, {depth} requested")
        return _freq_from_quotients(dict(value), quots[:depth])
    if kind == "decimal":
        val = Fraction(value["value"])
        unc = Fraction(value.get("uncertainty", "0"))
        lo, hi = val - unc, val + unc
        if not (0 < lo and hi < 1):
            raise ValueError("alpha must lie in (0, 1)")
        quots, terminated = _interval_quotients(lo, hi, depth)
        if not terminated and len(quots) < depth:
            raise PrecisionExhaustedError(
                f"only {len(quots)} quotients certain at uncertainty {value.get('uncertainty')}"
            )
        freq = _freq_from_quotients(dict(value), quots)
        freq.rational_terminated = terminated
        freq.interval = (lo, hi)
        return freq
    raise ValueError(f"unknown frequency kind {kind!r}")


def _freq_from_quotients(spec, quots):
    p_list, q_list = [0, 1], [1, quots[0]]
    for a in quots[1:]:
        p_list.append(a * p_list[-1] + p_list[-2])
        q_list.append(a * q_list[-1] + q_list[-2])
    freq = Frequency(spec, list(quots), p_list, q_list)
    if len(q_list) >= 2:
        lo = Fraction(p_list[-2], q_list[-2])
        hi = Fraction(p_list[-1], q_list[-1])
        freq.interval = (min(lo, hi), max(lo, hi))
    return freq


def _interval_quotients(lo, hi, depth):
    """Certain common partial quotients of every alpha in [lo, hi]."""
    quots = []
    terminated = False
    while len(quots) < depth:
        if lo == hi:
            # exact rational: plain Euclid
            x = lo
            if x == 0:
                terminated = True
                break
            inv = 1 / x
            a = math.floor(inv)
            quots.append(int(a))
            lo = hi = inv - a
            if lo == 0:
                terminated = True
                break
            continue
        if lo <= 0:
            break  # interval touches a rational boundary: next quotient unbounded
        inv_small, inv_large = 1 / hi, 1 / lo
        a = math.floor(inv_small)
        if math.floor(inv_large) != a or inv_large == a:
            break
        if a < 1:
            break
        quots.append(int(a))
        lo, hi = inv_small - a, inv_large - a
    return quots, terminated


def invariants_report(freq, upto=None):
    """Exact recurrence / determinant checks for the expanded range."""
    upto = freq.depth if upto is None else upto
    ok = True
    for n in range(2, upto + 1):
        a = freq.quotient(n - 1)
        if freq.q(n) != a * freq.q(n - 1) + freq.q(n - 2):
            ok = False
        if freq.p(n) != a * freq.p(n - 1) + freq.p(n - 2):
            ok = False
    det_ok = all(
        freq.p(n) * freq.q(n - 1) - freq.p(n - 1) * freq.q(n) == (-1) ** (n - 1)
        for n in range(1, upto + 1)
    )
    increasing = all(freq.q(n + 1) > freq.q(n) for n in range(2, upto))
    return {"recurrences": ok, "determinant": det_ok, "q_increasing": increasing}


# -- best approximation audits ----------------------------------------------------


def verify_best_approx(freq, n):
    """Exhaustive best-approximation check at index n.

    Verifies ||k alpha|| >= ||q_{n-1} alpha|| for all 1 <= k < q_n and the
    sandwich 1/(q_n + q_{n+1}) <= ||q_n alpha|| <= 1/q_{n+1}; exact for
    quadratic surds, interval-certified otherwise.  Returns (passed, info).
    """
    if n + 1 > freq.depth and freq.period_data is None:
        raise DepthInsufficientError(f"need convergents through {n + 1}")
    qn, qn1 = freq.q(n), freq.q(n + 1)
    qprev = freq.q(n - 1) if n >= 1 else 1
    info = {"vacuous": qn <= 1, "n": n, "q_n": int(qn)}
    if freq.surd is not None:
        ref = freq.circle_norm_exact(qprev)
        tight = None
        for k in range(1, qn):
            cur = freq.circle_norm_exact(k)
            if (cur - ref).sign() < 0:
                info["failing_k"] = k
                return False, info
            if tight is None or (cur - tight).sign() < 0:
                tight = cur
        mid = freq.circle_norm_exact(qn)
        lower_ok = (mid - Fraction(1, qn + qn1)).sign() >= 0
        upper_ok = (mid - Fraction(1, qn1)).sign() <= 0
        info["scan_slack"] = None if tight is None else float(tight) - float(ref)
        info["sandwich_slack"] = (float(mid) - 1.0 / (qn + qn1), 1.0 / qn1 - float(mid))
        return bool(lower_ok and upper_ok), info
    ref_lo, ref_hi = freq.circle_norm_interval(qprev)
    tight = math.inf
    for k in range(1, qn):
        cur_lo, cur_hi = freq.circle_norm_interval(k)
        if cur_hi < ref_lo:
            info["failing_k"] = k
            return False, info
        tight = min(tight, cur_lo)
    mid_lo, mid_hi = freq.circle_norm_interval(qn)
    ok = (Fraction(1, qn + qn1) <= mid_hi) and (mid_lo <= Fraction(1, qn1))
    info["scan_slack"] = None if tight is math.inf else float(tight - ref_hi)
    info["sandwich_slack"] = (float(mid_lo - Fraction(1, qn + qn1)), float(Fraction(1, qn1) - mid_hi))
    return ok, info


# -- CD bridges --------------------------------------------------------------------


def _pow_leq(x, base, exponent):
    """x <= base**exponent for nonnegative big ints, log-guarded then exact."""
    if x <= 1:
        return True
    if base <= 1:
        return False
    lx, lb = _big_log(x), _big_log(base)
    margin = lx - exponent * lb
    scale = max(lx, exponent * lb, 1.0)
    if abs(margin) > LOG_GUARD * scale:
        return margin < 0
    if base.bit_length() * exponent > EXACT_BITS_CAP:
        raise ConstructionFailedError("power comparison too large to settle exactly")
    return x <= base**exponent


def _pow_geq(x, base, exponent):
    if base <= 1:
        return x >= 1
    if x <= 1:
        return False
    lx, lb = _big_log(x), _big_log(base)
    margin = lx - exponent * lb
    scale = max(lx, exponent * lb, 1.0)
    if abs(margin) > LOG_GUARD * scale:
        return margin > 0
    if base.bit_length() * exponent > EXACT_BITS_CAP:
        raise ConstructionFailedError("power comparison too large to settle exactly")
    return x >= base**exponent


def _big_log(x):
    if x.bit_length() <= 512:
        return math.log(x)
    shift = x.bit_length() - 64
    return math.log(x >> shift) + shift * math.log(2)


class _QView:
    """Uniform q_n access plus growth predicates over a selection window."""

    def __init__(self, freq, max_index):
        self.freq = freq
        if freq.period_data is not None:
            self.max_index = max_index
            quots, pre, per = freq.period_data
            self.quotient_max = max(quots[: pre + per])
        else:
            self.max_index = min(max_index, freq.depth - 1)
            self.quotient_max = max(freq.partial_quotients) if freq.partial_quotients else 1

    def q(self, n):
        return self.freq.q(n)

    def slow_growth(self, i0, i1, A):
        """q_{i+1} <= q_i^A for every i in [i0, i1] (inclusive)."""
        threshold = self.quotient_max + 1
        i = i0
        while i <= i1:
            qi = self.q(i)
            # bounded quotients: q_{i+1} <= threshold * q_i <= q_i^A once
            # q_i^(A-1) >= threshold; then the property persists upward
            if qi >= 2 and (A - 1) * (qi.bit_length() - 1) >= threshold.bit_length():
                return True
            if not _pow_leq(self.q(i + 1), qi, A):
                return False
            i += 1
        return True


def is_cd_bridge(freq, l, n, A, B, C, view=None):
    """Is (q_l, q_n), l < n, a CD(A, B, C) bridge?

    Requires q_{i+1} <= q_i^A on [l, n-1] and q_l^B <= q_n <= q_l^C.
    """
    if l >= n:
        return False
    view = view or _QView(freq, n + 1)
    if not view.slow_growth(l, n - 1, A):
        return False
    ql, qn = view.q(l), view.q(n)
    return _pow_geq(qn, ql, B) and _pow_leq(qn, ql, C)


def select_cd_sequence(freq, A=8, max_count=32, max_index=None):
    """Greedy selection of the bridge subsequence indices, post-validated.

    Picks the smallest feasible next index (keeping the ladder inside the
    available depth as long as possible), then re-checks every clause with
    ``validate_cd_sequence`` before returning; the construction is never
    trusted.  Raises ``ConstructionFailedError`` when no valid extension
    exists or validation fails.
    """
    if A < 2:
        raise ValueError("bridge parameter must be >= 2")
    if max_index is None:
        max_index = 2_000_000 if freq.period_data is not None else freq.depth - 1
    view = _QView(freq, max_index)
    indices = [0]
    while len(indices) < max_count:
        nk = indices[-1]
        if nk + 1 > view.max_index:
            break
        m = _next_cd_index(view, nk, A)
        if m is None:
            break
        indices.append(m)
    if len(indices) < 2:
        raise ConstructionFailedError("no CD subsequence extension within depth")
    report = validate_cd_sequence(freq, indices, A, view=view)
    if not report["ok"]:
        raise ConstructionFailedError(f"post-validation failed: {report['failures']}")
    freq.cd_indices = indices
    freq.bridge_param = A
    return indices


def _first_q_at_least(view, x_log, lo):
    """Smallest index n >= lo with log q_n >= x_log, None if out of range.

    For periodic quotients the growth rate per index is asymptotically linear
    in log q, so the crossing index is predicted from two samples and then
    pinned down by a short monotone walk; this keeps the number of exact
    big-integer evaluations O(1) per call.
    """
    if _big_log(view.q(lo)) >= x_log:
        return lo
    per = view.freq.period_data[2] if view.freq.period_data else 1
    window = per * max(1, -(-64 // per))  # multiple of the period
    base = max(lo, window)
    if base + window > view.max_index:
        return _first_q_bisect(view, x_log, lo)
    l0, l1 = _big_log(view.q(base)), _big_log(view.q(base + window))
    rate = max((l1 - l0) / window, 1e-9)
    n = min(view.max_index, max(lo + 1, base + int((x_log - l0) / rate) - 2))
    # the periodic-average rate pins the crossing to within a few indices
    while n > lo and _big_log(view.q(n - 1)) >= x_log:
        n -= 1
    while n <= view.max_index and _big_log(view.q(n)) < x_log:
        n += 1
    if n > view.max_index:
        return None
    return n


def _first_q_bisect(view, x_log, lo):
    if _big_log(view.q(view.max_index)) < x_log:
        return None
    hi = view.max_index
    while lo < hi:
        mid = (lo + hi) // 2
        if _big_log(view.q(mid)) >= x_log:
            hi = mid
        else:
            lo = mid + 1
    return lo


def _next_cd_index(view, nk, A):
    Qbark = view.q(nk + 1)
    if view.max_index <= nk + 1:
        return None
    if view.freq.period_data is not None and Qbark >= 2 and (A - 1) >= (view.quotient_max + 1).bit_length():
        # periodic quotients, denominators >= 2: growth is uniformly slow, so
        # no jumps occur ahead and the smallest feasible index is the first
        # one clearing the bridge lower window Qbar_k^A
        m = _first_q_at_least(view, A * _big_log(Qbark) * (1 - 1e-12), nk + 2)
        if m is None:
            return None
        return m if _candidate_ok(view, nk, m, A) else None
    for m in range(nk + 1, view.max_index + 1):
        if not _pow_leq(view.q(m), Qbark, A**4):
            return None
        if _candidate_ok(view, nk, m, A):
            return m
    return None


def _candidate_ok(view, nk, m, A):
    """Clause-k feasibility of choosing index m, with clause-(k+1) lookahead."""
    A3, A4 = A**3, A**4
    Qk, Qbark, qm = view.q(nk), view.q(nk + 1), view.q(m)
    if not _pow_leq(qm, Qbark, A4):
        return False
    if not _pow_geq(Qbark, Qk, A):
        # clause k runs through its bridge pair (Q_k, Q_{k+1})
        if not (_pow_geq(qm, Qk, A) and _pow_leq(qm, Qk, A3)):
            return False
        if not view.slow_growth(nk, m - 1, A):
            return False
    # lookahead: clause k+1 needs a jump at m or the left bridge (Qbar_k, q_m)
    if m + 1 <= view.max_index and _pow_geq(view.q(m + 1), qm, A):
        return True
    if m == nk + 1:
        return False  # left bridge would be a degenerate pair
    if not (_pow_geq(qm, Qbark, A) and _pow_leq(qm, Qbark, A3)):
        return False
    return view.slow_growth(nk + 1, m - 1, A)


def validate_cd_sequence(freq, indices, A=8, view=None):
    """Construction-independent check of every selection clause.

    For each k with a successor: Q_{k+1} <= Qbar_k^{A^4}, and either
    Qbar_k >= Q_k^A or both (Qbar_{k-1}, Q_k) and (Q_k, Q_{k+1}) are
    CD(A, A, A^3) bridges.  Also requires Q_0 = 1 and strictly increasing
    indices.
    """
    view = view or _QView(freq, indices[-1] + 1)
    failures = []
    if view.q(indices[0]) != 1:
        failures.append("Q_0 != 1")
    if any(b <= a for a, b in zip(indices, indices[1:])):
        failures.append("indices not strictly increasing")
    for k in range(len(indices) - 1):
        nk, nk1 = indices[k], indices[k + 1]
        Qk, Qbark, Qk1 = view.q(nk), view.q(nk + 1), view.q(nk1)
        if not _pow_leq(Qk1, Qbark, A**4):
            failures.append(f"growth cap fails at k={k}")
        if _pow_geq(Qbark, Qk, A):
            continue
        if k == 0:
            failures.append("clause 0 requires a jump")
            continue
        if not is_cd_bridge(freq, indices[k - 1] + 1, nk, A, A, A**3, view=view):
            failures.append(f"left bridge fails at k={k}")
        if not is_cd_bridge(freq, nk, nk1, A, A, A**3, view=view):
            failures.append(f"right bridge fails at k={k}")
    return {"ok": not failures, "failures": failures, "indices": list(indices)}


# -- growth exponents ----------------------------------------------------------------


def compute_liouville_exponents(freq, A=None):
    """sup ln ln q_{n+1} / ln q_n over admissible n, and its bridged variant.

    Indices with q_n < 2 or q_{n+1} < 3 are excluded (the ratio is undefined
    or nonpositive there; this admissibility convention is documented).
    ``u = u_tilde + 4 ln A / ln 2``.  When a CD subsequence is attached the
    two consequences are verified on the computed range: Q_k >= Q_{k-1}^A,
    and sup ln ln Q_{k+1} / ln Q_k <= u (same admissibility rule).
    Returns (u_tilde, u, attaining_index, checks).
    """
    if freq.depth < 3:
        raise DepthInsufficientError("need at least 3 quotients")
    A = A if A is not None else freq.bridge_param
    best, best_n = -math.inf, None
    for n in range(freq.depth):
        qn, qn1 = freq.q(n), freq.q(n + 1)
        if qn < 2 or qn1 < 3:
            continue
        val = math.log(_big_log(qn1)) / _big_log(qn)
        if val > best:
            best, best_n = val, n
    u_tilde = best if best > -math.inf else 0.0
    u = u_tilde + 4.0 * math.log(A) / math.log(2.0)
    checks = {"growth_ok": True, "subsequence_sup_ok": True, "subsequence_sup": None}
    if freq.cd_indices:
        view = _QView(freq, freq.cd_indices[-1] + 1)
        sup_sub = -math.inf
        for k in range(1, len(freq.cd_indices)):
            Qp, Qc = view.q(freq.cd_indices[k - 1]), view.q(freq.cd_indices[k])
            if not _pow_geq(Qc, Qp, A):
                checks["growth_ok"] = False
        for k in range(len(freq.cd_indices) - 1):
            Qc = view.q(freq.cd_indices[k])
            Qn1 = view.q(freq.cd_indices[k + 1])
            if Qc < 2 or Qn1 < 3:
                continue
            sup_sub = max(sup_sub, math.log(_big_log(Qn1)) / _big_log(Qc))
        if sup_sub > -math.inf:
            checks["subsequence_sup"] = sup_sub
            checks["subsequence_sup_ok"] = sup_sub <= u * (1 + 1e-12)
    freq.u_tilde, freq.u = u_tilde, u
    return u_tilde, u, best_n, checks


# -- resonance audit ------------------------------------------------------------------


@dataclass
class DiophantineReport:
    gamma: float
    tau: float
    scan_bound: int
    min_margin: float
    witness: tuple
    passed: bool

    def to_json_dict(self):
        return {
            "gamma": self.gamma,
            "tau": self.tau,
            "scan_bound": self.scan_bound,
            "min_margin": self.min_margin,
            "witness": {"k": list(self.witness[0]), "l": int(self.witness[1])},
            "passed": bool(self.passed),
        }


def audit_diophantine(rho_f, freq, gamma, tau, l_max):
    """Scan min |<k, omega> + l rho| (|k| + |l|)^tau over 0 < |k|+|l| <= l_max, l != 0.

    ``|k|`` is the l^1 norm on Z^2 and omega = (1, alpha).  The report
    certifies non-resonance up to the scan bound iff min_margin >= gamma; a
    failed certificate is a valid report, not an error.  Increasing l_max can
    only lower (never raise) min_margin.
    """
    if tau <= 2 or gamma <= 0 or l_max < 1:
        raise ValueError("need tau > 2, gamma > 0, l_max >= 1")
    alpha = freq.alpha_float() if isinstance(freq, Frequency) else float(freq)
    best = math.inf
    witness = ((0, 0), 0)
    # scan ordered by |l| then |k2| so the reported witness is minimal
    for labs in range(1, l_max + 1):
        for l in (labs, -labs):
            rem = l_max - labs
            for k2abs in range(rem + 1):
                for k2 in {k2abs, -k2abs}:
                    base = k2 * alpha + l * rho_f
                    k1_budget = rem - k2abs
                    k1 = np.arange(-k1_budget, k1_budget + 1)
                    margins = np.abs(k1 + base) * (np.abs(k1) + k2abs + labs).astype(float) ** tau
                    order = np.lexsort((np.abs(k1), margins))
                    idx = int(order[0])
                    if margins[idx] < best:
                        best = float(margins[idx])
                        witness = ((int(k1[idx]), int(k2)), int(l))
    return DiophantineReport(float(gamma), float(tau), int(l_max), best, witness, best >= gamma)
