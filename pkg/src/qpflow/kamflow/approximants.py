"""Constructive approximants: nearby analytically linearizable systems and
nearby mode-locked systems.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import SearchBudgetExceededError
from ..spectral import (
    PhiFunction,
    TorusFunction,
    compose_fiber_shift,
    multiply,
    solve_constant_coefficient,
)
from .chain import ConjugationChain, FiberTranslation
from .drivers import run_almost_reducibility
from .steps import QpfSystem


def pull_back_field(field, chain, omega, cutoff, grid_factor=4):
    """Transport a fiber field from the deepest chain level to the original.

    For each element ``theta_prev = theta_next + h`` the field one level up
    is ``[F (1 + d_theta h) + d_omega h]`` composed with the inverse shift.
    Fiber translations invert exactly; near-identity elements use their
    certified fixed-point inverses.  The result lives on the deepest strips;
    returns (field, dropped_majorant).
    """
    drops = 0.0
    for element in reversed(chain.elements):
        h = element.h
        prod, d1 = multiply(field, h.derive_theta(), cutoff)
        upstairs = field + prod + h.derive_omega(omega)
        drops += d1
        inv = element.inverse_shift()
        if inv.n_modes:
            comp = compose_fiber_shift(upstairs, inv, out_s=field.s, out_r=field.r,
                                       cutoff=cutoff, grid_factor=grid_factor,
                                       enforce_margin=False)
            field = comp.fn
            drops += comp.dropped
        else:
            field = upstairs
    return field, drops


@dataclass
class LinearizableApproximant:
    system: QpfSystem
    witness: ConjugationChain
    rotation: float
    distance: float
    steps_used: int
    report: dict


def linearizable_approximant(sys, sched, eps_target, n_cap=4, rho_audit=None):
    """A nearby system conjugate to a rigid rotation, with its witness chain.

    Runs the retained-conjugation ladder until the reduced data are small
    enough, freezes the reference system (constant plus the surviving
    trigonometric polynomial in phi, which a finite antiderivative
    linearizes exactly), and transports it back through the chain.  The
    returned distance is the majorant distance between the original field
    and the approximant on the deepest strips.  The witness chain maps
    rotation coordinates to the approximant's coordinates.  Raises
    ``SearchBudgetExceededError`` when the target distance is out of reach
    within ``n_cap`` steps.
    """
    omega = sys.omega
    best = None
    for n_steps in range(1, n_cap + 1):
        chain, reduced, records, _ = run_almost_reducibility(sys, sched, n_steps, rho_audit=rho_audit)
        rho_ref = reduced.rho + complex(reduced.g.mean()).real
        g_ref = PhiFunction.from_torus(reduced.g.without_mean().truncate(sched.max_degree))
        leftover = reduced.g.without_mean().tail(sched.max_degree)
        reference = TorusFunction.constant(rho_ref, reduced.s, reduced.r) + g_ref
        ref_back, d_ref = pull_back_field(reference, chain, omega, sched.max_degree + 8)
        original = sys.fiber_field().restrict(s=ref_back.s, r=ref_back.r)
        distance = (original - ref_back).norm()
        h_lin = solve_constant_coefficient(g_ref, omega, sched.max_degree + 1)
        residual = (h_lin.derive_omega(omega) - g_ref).norm()
        witness = ConjugationChain(list(chain.elements) + [FiberTranslation(h_lin)])
        const = complex(ref_back.mean()).real
        sys_lin = QpfSystem(
            const,
            PhiFunction.from_torus(ref_back.theta_mean().without_mean()),
            ref_back.without_theta_mean(),
            sys.freq,
            ref_back.s,
            ref_back.r,
            {"origin": "linearizable_approximant", "rotation": rho_ref},
        )
        result = LinearizableApproximant(
            sys_lin, witness, rho_ref, distance, n_steps,
            {
                "reduced_f_norm": reduced.f_norm(),
                "reduced_g_tail_norm": leftover.norm(),
                "linearization_residual": residual,
                "pullback_drops": d_ref,
                "ladder": [rec.csv_row() for rec in records],
            },
        )
        if distance < eps_target:
            return result
        best = result
    raise SearchBudgetExceededError(
        f"distance {best.distance:.3e} after {n_cap} steps exceeds target {eps_target:.3e}"
    )


@dataclass
class ModeLockedApproximant:
    system: QpfSystem
    k: tuple
    rotation_target: float
    deviation: float
    eps: float
    strip: tuple
    norm_bound: float
    sl2_rate: float

    def to_json_dict(self):
        return {
            "k": list(self.k),
            "rotation_target": self.rotation_target,
            "deviation": self.deviation,
            "eps": self.eps,
            "strip": list(self.strip),
            "norm_bound": self.norm_bound,
            "sl2_rate": self.sl2_rate,
        }


def mode_locked_approximant(rho, freq, eps, k_cap=64):
    """A mode-locked system within eps/2 of the rigid rotation at rho.

    Searches k in Z^2 by increasing l^1 size for ``<k, omega>`` close to
    ``rho`` (tolerance reserved so the certified strip bound closes), then
    translates the pinned flow ``(eps / 4 pi) sin(4 pi theta)`` by
    ``<k, phi>``.  The result is the projective action of a constant
    hyperbolic traceless linear flow with rates ``+- eps/2``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    alpha = freq.alpha_float()
    target = 0.38 * eps
    found = None
    for size in range(0, k_cap + 1):
        for k1 in range(-size, size + 1):
            rem = size - abs(k1)
            for k2 in {rem, -rem}:
                dev = abs(k1 + k2 * alpha - rho)
                if dev < target:
                    found = ((k1, k2), dev)
                    break
            if found:
                break
        if found:
            break
    if not found:
        raise SearchBudgetExceededError(
            f"no k with |<k, omega> - rho| < {target:.3e} within |k| <= {k_cap}"
        )
    (k1, k2), dev = found
    base = k1 + k2 * alpha
    amp = eps / (4.0 * math.pi)
    s_star = 0.1
    k_size = abs(k1) + abs(k2)
    r_star = 0.1 / max(1, 2 * k_size)
    f = TorusFunction.real_sine(amp, 2, (-2 * k1, -2 * k2), s_star, r_star)
    norm_bound = dev + f.norm()
    assert norm_bound < eps / 2.0, "certified strip bound failed to close"
    sys = QpfSystem(base, PhiFunction.zero_phi(r_star), f, freq, s_star, r_star,
                    {"origin": "mode_locked_approximant"})
    return ModeLockedApproximant(sys, (k1, k2), rho, dev, eps, (s_star, r_star), norm_bound, eps / 2.0)
