"""Sparse Fourier representation of analytic functions on T^1 x T^2.

Conventions used throughout the package:

* Both tori are R/Z and modes are ``e^{2 pi i (l theta + <k, phi>)}`` with
  ``l`` the fiber index and ``k`` a pair of integers.
* The weighted majorant norm is ``N_{s,r}(f) = sum |c_{l,k}| e^{|l| s + |k| r}``
  with ``|k|`` the l^1 norm on Z^2.  It dominates the sup of ``|f|`` on the
  complex strip ``|Im theta| < s / (2 pi)``, ``|Im phi|_inf < r / (2 pi)``;
  strip widths ``s, r`` are therefore carried in "nat" units while function
  values live on the unit torus, and the factor ``2 pi`` appears explicitly
  whenever a function value is traded against a strip width.
* Derivatives carry their ``2 pi``: d/dtheta multiplies a coefficient by
  ``2 pi i l`` and the directional derivative along ``phi' = omega`` by
  ``2 pi i <k, omega>``.  Small divisors ``<k, omega> + l rho`` are always
  handled unscaled.
* The degree of a mode is ``|l| + |k|``; the truncation ``T_N`` keeps
  ``0 < degree < N`` (never the mean) and the tail ``R_N`` keeps
  ``degree >= N``.
"""

from __future__ import annotations

import json
import math

import mpmath
import numpy as np

from .errors import (
    HermitianSymmetryError,
    InsufficientGridError,
    StripOverflowError,
    ZeroDivisorError,
)

TWO_PI = 2.0 * math.pi

_HERMITIAN_RTOL = 1e-14


def _canonicalize(ls, ks, cs):
    """Sort modes by (degree, l, k1, k2) and merge duplicate indices."""
    ls = np.asarray(ls, dtype=np.int64).reshape(-1)
    ks = np.asarray(ks, dtype=np.int64).reshape(-1, 2)
    cs = np.asarray(cs, dtype=np.complex128).reshape(-1)
    if ls.size == 0:
        return ls, ks.reshape(0, 2), cs
    deg = np.abs(ls) + np.abs(ks[:, 0]) + np.abs(ks[:, 1])
    order = np.lexsort((ks[:, 1], ks[:, 0], ls, deg))
    ls, ks, cs = ls[order], ks[order], cs[order]
    key = np.stack([ls, ks[:, 0], ks[:, 1]], axis=1)
    new_group = np.ones(len(ls), dtype=bool)
    new_group[1:] = np.any(key[1:] != key[:-1], axis=1)
    starts = np.flatnonzero(new_group)
    merged = np.add.reduceat(cs, starts)
    return ls[starts], ks[starts], merged


class TorusFunction:
    """Finite Fourier sum on T^1 x T^2 with strip widths ``(s, r)``.

    Instances are treated as immutable; all operations return new objects.
    """

    __slots__ = ("s", "r", "ls", "ks", "cs")

    def __init__(self, s, r, ls=(), ks=(), cs=()):
        self.s = float(s)
        self.r = float(r)
        ls, ks, cs = _canonicalize(ls, ks, cs)
        self.ls = ls
        self.ks = ks
        self.cs = cs
        for arr in (self.ls, self.ks, self.cs):
            arr.setflags(write=False)

    # -- construction helpers ------------------------------------------------

    @classmethod
    def zero(cls, s, r):
        return TorusFunction(s, r)

    @classmethod
    def constant(cls, value, s, r):
        return TorusFunction(s, r, [0], [(0, 0)], [value])

    @classmethod
    def from_modes(cls, s, r, modes):
        """Build from an iterable of ``(l, (k1, k2), coefficient)`` triples."""
        ls, ks, cs = [], [], []
        for l, k, c in modes:
            ls.append(l)
            ks.append(tuple(k))
            cs.append(c)
        return TorusFunction(s, r, ls, ks, cs)

    @classmethod
    def real_cosine(cls, amp, l, k, s, r):
        """amp * cos(2 pi (l theta + <k, phi>)) as a Hermitian pair."""
        return TorusFunction(s, r, [l, -l], [k, (-k[0], -k[1])], [amp / 2.0, amp / 2.0])

    @classmethod
    def real_sine(cls, amp, l, k, s, r):
        """amp * sin(2 pi (l theta + <k, phi>)) as a Hermitian pair."""
        c = amp / 2.0j
        return TorusFunction(s, r, [l, -l], [k, (-k[0], -k[1])], [c, -c])

    # -- basic queries -------------------------------------------------------

    @property
    def n_modes(self):
        return len(self.ls)

    def degrees(self):
        if self.n_modes == 0:
            return np.zeros(0, dtype=np.int64)
        return np.abs(self.ls) + np.abs(self.ks).sum(axis=1)

    def theta_bandwidth(self):
        return 0 if self.n_modes == 0 else int(np.abs(self.ls).max())

    def phi_bandwidth(self):
        return 0 if self.n_modes == 0 else int(np.abs(self.ks).max())

    def norm(self, s=None, r=None):
        """Weighted-l^1 majorant ``N_{s,r}``; defaults to the stored strips."""
        if self.n_modes == 0:
            return 0.0
        s = self.s if s is None else float(s)
        r = self.r if r is None else float(r)
        # phi-only functions carry an unconstrained (infinite) theta strip
        labs = np.abs(self.ls)
        term = labs * s if math.isfinite(s) else np.where(labs == 0, 0.0, math.inf)
        w = np.exp(term + np.abs(self.ks).sum(axis=1) * r)
        return float(np.abs(self.cs) @ w)

    def norm_mp(self, s=None, r=None, dps=40):
        """Majorant evaluated in software floats (audit-grade summation)."""
        s = self.s if s is None else s
        r = self.r if r is None else r
        with mpmath.workdps(dps):
            total = mpmath.mpf(0)
            for l, k, c in zip(self.ls, self.ks, self.cs):
                sterm = mpmath.mpf(0) if l == 0 else abs(int(l)) * mpmath.mpf(s)
                total += abs(mpmath.mpc(c)) * mpmath.e ** (
                    sterm + (abs(int(k[0])) + abs(int(k[1]))) * mpmath.mpf(r)
                )
            return total

    def hermitian_defect(self):
        """Max relative violation of c(-l,-k) = conj(c(l,k))."""
        if self.n_modes == 0:
            return 0.0
        table = {(int(l), int(k[0]), int(k[1])): c for l, k, c in zip(self.ls, self.ks, self.cs)}
        scale = float(np.abs(self.cs).max())
        if scale == 0.0:
            return 0.0
        worst = 0.0
        for (l, k1, k2), c in table.items():
            mirror = table.get((-l, -k1, -k2), 0.0)
            worst = max(worst, abs(mirror - np.conj(c)) / scale)
        return worst

    def require_hermitian(self, rtol=_HERMITIAN_RTOL):
        defect = self.hermitian_defect()
        if defect > rtol:
            raise HermitianSymmetryError(
                f"hermitian symmetry violated: relative defect {defect:.3e} > {rtol:.1e}"
            )
        return self

    def coefficient(self, l, k):
        mask = (self.ls == l) & (self.ks[:, 0] == k[0]) & (self.ks[:, 1] == k[1])
        idx = np.flatnonzero(mask)
        return complex(self.cs[idx[0]]) if idx.size else 0.0j

    # -- arithmetic ----------------------------------------------------------

    def _like(self, ls, ks, cs, s=None, r=None):
        return type(self)(self.s if s is None else s, self.r if r is None else r, ls, ks, cs)

    def __add__(self, other):
        if not isinstance(other, TorusFunction):
            return NotImplemented
        s = min(self.s, other.s)
        r = min(self.r, other.r)
        return TorusFunction(
            s,
            r,
            np.concatenate([self.ls, other.ls]),
            np.concatenate([self.ks, other.ks]),
            np.concatenate([self.cs, other.cs]),
        )

    def __sub__(self, other):
        return self + (other * -1.0)

    def __mul__(self, scalar):
        if isinstance(scalar, TorusFunction):
            return NotImplemented
        return self._like(self.ls, self.ks, self.cs * complex(scalar))

    __rmul__ = __mul__

    def restrict(self, s=None, r=None):
        """Narrow the stored strips (restriction of the analytic domain)."""
        s = self.s if s is None else float(s)
        r = self.r if r is None else float(r)
        if s > self.s + 1e-15 or r > self.r + 1e-15:
            raise ValueError("restrict() cannot widen strips")
        return self._like(self.ls, self.ks, self.cs, s=s, r=r)

    def prune(self, rel_tol=0.0):
        """Drop coefficients below ``rel_tol * max|c|``; returns (fn, dropped)."""
        if self.n_modes == 0 or rel_tol <= 0.0:
            return self, 0.0
        cutoff = rel_tol * float(np.abs(self.cs).max())
        keep = np.abs(self.cs) > cutoff
        dropped = self._like(self.ls[~keep], self.ks[~keep], self.cs[~keep])
        return self._like(self.ls[keep], self.ks[keep], self.cs[keep]), dropped.norm()

    # -- projections ---------------------------------------------------------

    def mean(self):
        """Coefficient of the (0, 0) mode."""
        return self.coefficient(0, (0, 0))

    def truncate(self, n):
        """T_N: keep modes with 0 < degree < N."""
        if n < 1:
            raise ValueError("truncation degree must be >= 1")
        deg = self.degrees()
        keep = (deg > 0) & (deg < n)
        return self._like(self.ls[keep], self.ks[keep], self.cs[keep])

    def tail(self, n):
        """R_N: keep modes with degree >= N."""
        if n < 1:
            raise ValueError("truncation degree must be >= 1")
        keep = self.degrees() >= n
        return self._like(self.ls[keep], self.ks[keep], self.cs[keep])

    def without_mean(self):
        keep = self.degrees() > 0
        return self._like(self.ls[keep], self.ks[keep], self.cs[keep])

    def theta_mean(self):
        """The l = 0 part, a function of phi alone."""
        keep = self.ls == 0
        return PhiFunction(self.r, self.ks[keep], self.cs[keep], s=self.s)

    def without_theta_mean(self):
        keep = self.ls != 0
        return self._like(self.ls[keep], self.ks[keep], self.cs[keep])

    # -- derivatives ---------------------------------------------------------

    def derive_theta(self):
        """d/dtheta: coefficient times 2 pi i l."""
        return self._like(self.ls, self.ks, self.cs * (TWO_PI * 1j * self.ls))

    def derive_omega(self, omega):
        """Directional derivative along phi' = omega: times 2 pi i <k, omega>."""
        omega = np.asarray(omega, dtype=float)
        dot = self.ks @ omega
        return self._like(self.ls, self.ks, self.cs * (TWO_PI * 1j * dot))

    # -- evaluation ----------------------------------------------------------

    def evaluate(self, theta, phi):
        """Pointwise complex value; accepts real or complex coordinates.

        ``theta`` has shape (...,) and ``phi`` shape (..., 2); broadcasting over
        leading axes.  The modes are summed directly, so this is meant for a
        moderate number of evaluation points.
        """
        theta = np.asarray(theta)
        phi = np.asarray(phi)
        if self.n_modes == 0:
            return np.zeros(np.broadcast(theta, phi[..., 0]).shape, dtype=complex)
        phase = (
            theta[..., None] * self.ls[None, :]
            + phi[..., 0, None] * self.ks[None, :, 0]
            + phi[..., 1, None] * self.ks[None, :, 1]
        )
        return np.exp(TWO_PI * 1j * phase) @ self.cs

    # -- serialization -------------------------------------------------------

    def to_json_dict(self):
        return {
            "s": self.s if math.isfinite(self.s) else None,
            "r": self.r,
            "modes": [
                {"l": int(l), "k": [int(k[0]), int(k[1])], "re": float(c.real), "im": float(c.imag)}
                for l, k, c in zip(self.ls, self.ks, self.cs)
            ],
        }

    @classmethod
    def from_json_dict(cls, data, validate=True):
        modes = data.get("modes", [])
        s = data.get("s")
        fn = TorusFunction(
            math.inf if s is None else s,
            data["r"],
            [m["l"] for m in modes],
            [tuple(m["k"]) for m in modes],
            [complex(m.get("re", 0.0), m.get("im", 0.0)) for m in modes],
        )
        if validate:
            fn.require_hermitian(rtol=1e-12)
        if issubclass(cls, PhiFunction):
            return PhiFunction.from_torus(fn)
        return fn

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)

    @classmethod
    def load_json(cls, path, validate=True):
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh), validate=validate)

    def __repr__(self):
        return f"{type(self).__name__}(s={self.s:.4g}, r={self.r:.4g}, n_modes={self.n_modes})"


class PhiFunction(TorusFunction):
    """A function of phi alone (every fiber index l is zero).

    The theta strip is unconstrained, stored as ``inf`` so that strip
    intersections in mixed products keep the partner's width.
    """

    def __init__(self, r, ks=(), cs=(), s=math.inf):
        ks = np.asarray(ks, dtype=np.int64).reshape(-1, 2)
        super().__init__(s, r, np.zeros(len(ks), dtype=np.int64), ks, cs)

    @classmethod
    def zero_phi(cls, r):
        return cls(r)

    @classmethod
    def from_k_modes(cls, r, modes, s=math.inf):
        """Build from ``((k1, k2), coefficient)`` pairs."""
        ks = [tuple(k) for k, _ in modes]
        cs = [c for _, c in modes]
        return cls(r, ks, cs, s=s)

    @classmethod
    def from_torus(cls, fn):
        if fn.n_modes and np.any(fn.ls != 0):
            raise ValueError("function has theta-dependent modes")
        return cls(fn.r, fn.ks, fn.cs, s=fn.s)

    def _like(self, ls, ks, cs, s=None, r=None):
        ls = np.asarray(ls, dtype=np.int64)
        if ls.size and np.any(ls != 0):
            return TorusFunction(self.s if s is None else s, self.r if r is None else r, ls, ks, cs)
        return PhiFunction(self.r if r is None else r, ks, cs, s=self.s if s is None else s)


def multiply(f, g, cutoff):
    """Coefficient convolution of ``f * g`` with a degree cutoff.

    Returns ``(product, dropped)`` where ``dropped`` is the majorant norm of
    the discarded modes (degree >= cutoff) at the intersected strips.  The
    majorant is submultiplicative, so ``N(fg) <= N(f) N(g)`` always holds.
    """
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    s = min(f.s, g.s)
    r = min(f.r, g.r)
    if f.n_modes == 0 or g.n_modes == 0:
        return TorusFunction(s, r), 0.0
    ls = (f.ls[:, None] + g.ls[None, :]).reshape(-1)
    k1 = (f.ks[:, 0][:, None] + g.ks[:, 0][None, :]).reshape(-1)
    k2 = (f.ks[:, 1][:, None] + g.ks[:, 1][None, :]).reshape(-1)
    cs = (f.cs[:, None] * g.cs[None, :]).reshape(-1)
    full = TorusFunction(s, r, ls, np.stack([k1, k2], axis=1), cs)
    deg = full.degrees()
    keep = deg < cutoff
    kept = TorusFunction(s, r, full.ls[keep], full.ks[keep], full.cs[keep])
    dropped = TorusFunction(s, r, full.ls[~keep], full.ks[~keep], full.cs[~keep]).norm()
    return kept, dropped


def solve_constant_coefficient(g, omega, n):
    """Antiderivative along ``phi' = omega``: h with h' = T_n g.

    Coefficientwise ``h(k) = g(k) / (2 pi i <k, omega>)`` for 0 < |k| < n.
    """
    omega = np.asarray(omega, dtype=float)
    g = PhiFunction.from_torus(g) if not isinstance(g, PhiFunction) else g
    deg = np.abs(g.ks).sum(axis=1)
    keep = (deg > 0) & (deg < n)
    ks = g.ks[keep]
    cs = g.cs[keep]
    if len(ks) == 0:
        return PhiFunction(g.r, s=g.s)
    dots = ks @ omega
    if np.any(dots == 0.0):
        bad = ks[np.flatnonzero(dots == 0.0)[0]]
        raise ZeroDivisorError(f"<k, omega> vanishes at k={tuple(int(x) for x in bad)}")
    return PhiFunction(g.r, ks, cs / (TWO_PI * 1j * dots), s=g.s)


def split_real_imaginary_shift(h, r_target):
    """Certified bound on the imaginary part of ``h`` on a narrower strip.

    For ``h`` with Hermitian coefficients the restriction to real arguments is
    exactly real, so the imaginary part on the strip of width ``r_target`` is
    controlled by ``sum |h(k)| (e^{|k| r_target} - 1)``, the majorant of
    ``h(phi) - h(Re phi)``.  Returns ``(h_real_part, bound)`` where the bound
    is a function-value bound (torus units).
    """
    h = PhiFunction.from_torus(h) if not isinstance(h, PhiFunction) else h
    if h.n_modes == 0:
        return h, 0.0
    absk = np.abs(h.ks).sum(axis=1)
    bound = float(np.abs(h.cs) @ (np.exp(absk * float(r_target)) - 1.0))
    return h, bound


# -- composition with fiber shifts -------------------------------------------


class CompositionResult:
    """Outcome of a collocation composition: function plus error accounting."""

    __slots__ = ("fn", "alias_residual", "dropped")

    def __init__(self, fn, alias_residual, dropped):
        self.fn = fn
        self.alias_residual = alias_residual
        self.dropped = dropped


def _grid_sizes(f, h, grid_factor):
    bw_l = f.theta_bandwidth() + h.theta_bandwidth() + 2
    bw_k = f.phi_bandwidth() + h.phi_bandwidth() + 2
    n_theta = max(8, int(grid_factor * bw_l))
    n_phi = max(8, int(grid_factor * bw_k))
    return n_theta, n_phi


def _coefficient_grid(fn, n_theta, n_phi):
    grid = np.zeros((n_theta, n_phi, n_phi), dtype=complex)
    if fn.n_modes:
        if 2 * np.abs(fn.ls).max() >= n_theta or 2 * np.abs(fn.ks).max() >= n_phi:
            raise ValueError("grid too small for the declared bandwidth")
        grid[fn.ls % n_theta, fn.ks[:, 0] % n_phi, fn.ks[:, 1] % n_phi] = fn.cs
    return grid


def _values_on_grid(fn, n_theta, n_phi):
    """Exact values of a trig polynomial on the regular product grid."""
    grid = _coefficient_grid(fn, n_theta, n_phi)
    return np.fft.ifftn(grid) * grid.size


def _signed_freqs(n):
    return np.where(np.arange(n) < (n + 1) // 2, np.arange(n), np.arange(n) - n)


def _compose_on_grid(f, h, n_theta, n_phi):
    """Grid values of ``f(theta + h(theta, phi), phi)``."""
    if isinstance(h, PhiFunction) or h.theta_bandwidth() == 0:
        hvals = _values_on_grid(PhiFunction.from_torus(h), 1, n_phi)[0]  # (n_phi, n_phi)
        hvals = np.broadcast_to(hvals, (n_theta, n_phi, n_phi))
    else:
        hvals = _values_on_grid(h, n_theta, n_phi)
    shift = np.exp(TWO_PI * 1j * hvals)
    shift_inv = 1.0 / shift
    theta = np.arange(n_theta) / n_theta
    vals = np.zeros((n_theta, n_phi, n_phi), dtype=complex)
    pos = {}
    for l in sorted({int(v) for v in f.ls}):
        sel = f.ls == l
        fl = PhiFunction(f.r, f.ks[sel], f.cs[sel], s=f.s)
        fl_vals = _values_on_grid(fl, 1, n_phi)[0]
        if l >= 0:
            power = pos.get(l)
            if power is None:
                power = np.ones_like(shift) if l == 0 else shift**l
        else:
            power = shift_inv ** (-l)
        pos[l] = power
        vals += fl_vals[None, :, :] * np.exp(TWO_PI * 1j * l * theta)[:, None, None] * power
    return vals


def _extract_modes(vals, s, r, cutoff, prune_rel):
    n_theta, n_phi, _ = vals.shape
    coefs = np.fft.fftn(vals) / vals.size
    lf = _signed_freqs(n_theta)
    kf = _signed_freqs(n_phi)
    L = np.broadcast_to(lf[:, None, None], vals.shape)
    K1 = np.broadcast_to(kf[None, :, None], vals.shape)
    K2 = np.broadcast_to(kf[None, None, :], vals.shape)
    deg = np.abs(L) + np.abs(K1) + np.abs(K2)
    scale = float(np.abs(coefs).max()) or 1.0
    mask = np.abs(coefs) > prune_rel * scale
    in_range = mask & (deg < cutoff)
    out_range = mask & ~in_range
    fn = TorusFunction(s, r, L[in_range], np.stack([K1[in_range], K2[in_range]], axis=1), coefs[in_range])
    dropped = TorusFunction(s, r, L[out_range], np.stack([K1[out_range], K2[out_range]], axis=1), coefs[out_range]).norm()
    return fn, dropped


def imaginary_part_bound(h, s=None, r=None):
    """Value bound on ``|Im h|`` over the strip ``(s, r)``.

    For Hermitian-symmetric ``h`` the real-argument restriction is real, so
    ``|Im h| <= sum |c| (e^{|l| s + |k| r} - 1)``; otherwise the full majorant
    is the only available bound.
    """
    if h.n_modes == 0:
        return 0.0
    s = h.s if s is None else float(s)
    r = h.r if r is None else float(r)
    labs = np.abs(h.ls)
    term = labs * s if math.isfinite(s) else np.where(labs == 0, 0.0, math.inf)
    if h.hermitian_defect() < 1e-9:
        return float(np.abs(h.cs) @ (np.exp(term + np.abs(h.ks).sum(axis=1) * r) - 1.0))
    return h.norm(s=s, r=r)


def compose_fiber_shift(
    f,
    h,
    out_s=None,
    out_r=None,
    cutoff=None,
    grid_factor=4,
    alias_tol=1e-12,
    prune_rel=3e-14,
    enforce_margin=None,
):
    """Fourier expansion of ``(theta, phi) -> f(theta + h(theta, phi), phi)``.

    Collocation on a regular grid followed by a discrete transform; the same
    computation on a 1.5x finer grid provides the aliasing residual, which has
    to come in below ``alias_tol`` relative to the result.  When output strips
    are supplied, the analyticity margin ``f.s - out_s`` must absorb twice-pi
    times the imaginary part of the shift, else ``StripOverflowError``; with
    default strips the margin check is skipped (best-effort mode, truncation
    tails still reported).  Raises ``InsufficientGridError`` when the two-grid
    check fails.
    """
    if enforce_margin is None:
        enforce_margin = out_s is not None
    out_s = f.s if out_s is None else float(out_s)
    out_r = min(f.r, h.r) if out_r is None else float(out_r)
    if cutoff is None:
        cutoff = int(max(f.degrees().max(initial=1), h.degrees().max(initial=1))) * 2 + 8
    if h.n_modes == 0:
        kept = TorusFunction(out_s, out_r, f.ls, f.ks, f.cs)
        return CompositionResult(kept, 0.0, 0.0)
    if enforce_margin and f.theta_bandwidth() > 0:
        margin = f.s - out_s
        imag_size = imaginary_part_bound(h, s=out_s, r=out_r)
        if TWO_PI * imag_size >= margin:
            raise StripOverflowError(
                f"imaginary shift bound {imag_size:.3e} exceeds strip margin {margin:.3e} / 2pi"
            )
    # Pure constant shift: exact phase rotation.
    if h.n_modes == 1 and h.degrees()[0] == 0:
        c = complex(h.cs[0])
        kept = TorusFunction(out_s, out_r, f.ls, f.ks, f.cs * np.exp(TWO_PI * 1j * f.ls * c))
        return CompositionResult(kept, 0.0, 0.0)
    n_theta, n_phi = _grid_sizes(f, h, grid_factor)
    vals = _compose_on_grid(f, h, n_theta, n_phi)
    fn, dropped = _extract_modes(vals, out_s, out_r, cutoff, prune_rel)
    n_theta2 = int(math.ceil(1.5 * n_theta))
    n_phi2 = int(math.ceil(1.5 * n_phi))
    vals2 = _compose_on_grid(f, h, n_theta2, n_phi2)
    fn2, dropped2 = _extract_modes(vals2, out_s, out_r, cutoff, prune_rel)
    # Grid agreement is judged in the flat coefficient norm; strip-weighted
    # truncation losses are tracked separately through `dropped`.
    diff = fn - fn2
    denom = max(fn2.norm(s=0.0, r=0.0), 1e-300)
    residual = diff.norm(s=0.0, r=0.0) / denom
    if residual > alias_tol:
        raise InsufficientGridError(
            f"aliasing residual {residual:.3e} above {alias_tol:.1e}; increase grid_factor"
        )
    return CompositionResult(fn2, residual, max(dropped, dropped2))


def invert_near_identity(h, cutoff=None, tol=1e-13, max_iter=60, grid_factor=6):
    """Inverse shift of ``theta -> theta + h(theta, phi)``.

    Returns ``h_inv`` with ``theta_old = theta_new + h(theta_new)`` inverted as
    ``theta_new = theta_old + h_inv(theta_old)``; requires the contraction
    bound ``N(d h / d theta) < 1`` to hold.
    """
    if h.n_modes == 0:
        return h
    dh = h.derive_theta().norm()
    if dh >= 1.0:
        raise StripOverflowError(f"shift is not invertible on its strip: N(dh/dtheta) = {dh:.3f}")
    if cutoff is None:
        cutoff = int(h.degrees().max(initial=1)) * 3 + 12
    h_inv = h * -1.0
    for _ in range(max_iter):
        comp = compose_fiber_shift(
            h, h_inv, out_s=h.s, out_r=h.r, cutoff=cutoff, grid_factor=grid_factor, enforce_margin=False
        )
        new = comp.fn * -1.0
        delta = (new - h_inv).norm()
        h_inv = new
        if delta <= tol * max(1.0, h_inv.norm()):
            break
    residual = (
        h_inv
        + compose_fiber_shift(
            h, h_inv, out_s=h.s, out_r=h.r, cutoff=cutoff, grid_factor=grid_factor, enforce_margin=False
        ).fn
    ).norm()
    if residual > 100 * tol * max(1.0, h.norm()):
        raise StripOverflowError(f"near-identity inversion stalled: residual {residual:.3e}")
    return h_inv
