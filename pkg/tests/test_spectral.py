import math

import numpy as np
import pytest

from qpflow.errors import HermitianSymmetryError, StripOverflowError
from qpflow.spectral import (
    PhiFunction,
    TorusFunction,
    compose_fiber_shift,
    imaginary_part_bound,
    invert_near_identity,
    multiply,
    solve_constant_coefficient,
    split_real_imaginary_shift,
)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
OMEGA = np.array([1.0, GOLDEN])


def random_function(seed, n=20, span=3, s=0.5, r=0.7, hermitian=False):
    rng = np.random.default_rng(seed)
    idx = rng.integers(-span, span + 1, size=(n, 3))
    cs = rng.normal(size=n) + 1j * rng.normal(size=n)
    modes = [(int(a), (int(b), int(c)), z) for (a, b, c), z in zip(idx, cs)]
    if hermitian:
        modes += [(-l, (-k[0], -k[1]), np.conj(z)) for l, k, z in modes]
    return TorusFunction.from_modes(s, r, modes)


# -- truncation / tail ---------------------------------------------------------


def test_truncate_boundary_degree():
    f = TorusFunction.from_modes(1.0, 1.0, [(2, (1, 0), 1.0)])  # degree 3
    assert f.truncate(3).n_modes == 0
    assert (f.tail(3) - f).norm() == 0.0


def test_truncate_drops_constant():
    c = TorusFunction.constant(4.2, 1.0, 1.0)
    for n in (1, 2, 10):
        assert c.truncate(n).n_modes == 0


def test_partition_identity_bit_exact():
    for seed in range(5):
        f = random_function(seed)
        for n in (1, 2, 4):
            back = TorusFunction.constant(f.mean(), f.s, f.r) + f.truncate(n) + f.tail(n)
            if abs(f.mean()) == 0.0:
                back = f.truncate(n) + f.tail(n)
            diff = back - f
            assert diff.norm() == 0.0


# -- derivatives ---------------------------------------------------------------


def test_derive_omega_single_mode():
    # h = -cos(2 pi phi_1) / (2 pi)  ->  d_omega h = sin(2 pi phi_1) for omega = (1, alpha)
    h = TorusFunction.real_cosine(-1.0 / (2 * math.pi), 0, (1, 0), 1.0, 1.0)
    target = TorusFunction.real_sine(1.0, 0, (1, 0), 1.0, 1.0)
    assert (h.derive_omega(OMEGA) - target).norm() < 1e-15


def test_derive_constant_is_zero():
    c = TorusFunction.constant(3.0, 1.0, 1.0)
    assert c.derive_omega(OMEGA).norm() == 0.0
    assert c.derive_theta().norm() == 0.0


def test_derive_matches_per_mode_oracle():
    f = random_function(7)
    df = f.derive_omega(OMEGA)
    for l, k, c in zip(f.ls, f.ks, f.cs):
        expected = c * 2j * math.pi * (k[0] * OMEGA[0] + k[1] * OMEGA[1])
        got = df.coefficient(int(l), (int(k[0]), int(k[1])))
        assert abs(got - expected) <= 1e-13 * max(abs(expected), abs(c))


def test_derive_theta_sine():
    f = TorusFunction.real_sine(1.0, 1, (0, 0), 1.0, 1.0)
    target = TorusFunction.real_cosine(2 * math.pi, 1, (0, 0), 1.0, 1.0)
    assert (f.derive_theta() - target).norm() < 1e-12
    g = PhiFunction.from_k_modes(1.0, [((1, 1), 0.3)])
    assert g.derive_theta().norm() == 0.0


def test_cauchy_estimate_modewise():
    # |2 pi l| e^{-|l| delta} <= 2 pi / (e delta) per mode
    delta = 0.2
    for seed in range(4):
        f = random_function(seed, hermitian=True)
        df = f.derive_theta()
        lhs = df.norm(s=f.s - delta, r=f.r)
        rhs = (2 * math.pi / (math.e * delta)) * f.norm()
        assert lhs <= rhs + 1e-12


# -- products ------------------------------------------------------------------


def test_multiply_identity():
    one = TorusFunction.constant(1.0, 1.0, 1.0)
    g = random_function(3)
    prod, dropped = multiply(one, g, cutoff=200)
    assert dropped == 0.0
    assert (prod - g).norm() < 1e-14 * g.norm()


def test_multiply_single_modes():
    a = TorusFunction.from_modes(1.0, 1.0, [(1, (2, 0), 2.0)])
    b = TorusFunction.from_modes(1.0, 1.0, [(2, (-1, 1), 0.5j)])
    prod, _ = multiply(a, b, cutoff=100)
    assert prod.n_modes == 1
    assert prod.coefficient(3, (1, 1)) == pytest.approx(1.0j)


def test_multiply_matches_dense_convolution():
    for seed in range(6):
        a = random_function(seed, n=8, span=2)
        b = random_function(seed + 100, n=7, span=2)
        prod, dropped = multiply(a, b, cutoff=1000)
        assert dropped == 0.0
        acc = {}
        for l1, k1, c1 in zip(a.ls, a.ks, a.cs):
            for l2, k2, c2 in zip(b.ls, b.ks, b.cs):
                key = (int(l1 + l2), int(k1[0] + k2[0]), int(k1[1] + k2[1]))
                acc[key] = acc.get(key, 0.0) + c1 * c2
        for (l, k1, k2), v in acc.items():
            assert prod.coefficient(l, (k1, k2)) == pytest.approx(v, abs=1e-13)


def test_submultiplicativity():
    for seed in range(6):
        a = random_function(seed, n=10)
        b = random_function(seed + 50, n=10)
        prod, dropped = multiply(a, b, cutoff=10_000)
        assert prod.norm() <= a.norm() * b.norm() * (1 + 1e-13)


# -- composition ---------------------------------------------------------------


def test_compose_zero_shift():
    f = random_function(11)
    res = compose_fiber_shift(f, PhiFunction.zero_phi(f.r))
    assert (res.fn - f).norm() == 0.0


def test_compose_constant_shift_phase():
    f = TorusFunction.from_modes(1.0, 1.0, [(1, (0, 0), 1.0)])
    c = PhiFunction.from_k_modes(1.0, [((0, 0), 0.25)])
    res = compose_fiber_shift(f, c)
    assert res.fn.coefficient(1, (0, 0)) == pytest.approx(np.exp(0.5j * math.pi), abs=1e-15)


def test_compose_matches_pointwise_evaluation():
    f = random_function(21, n=10, span=2, s=0.8, r=0.8, hermitian=True) * 1e-2
    h = TorusFunction.real_sine(2e-3, 1, (0, 1), 0.8, 0.8)
    res = compose_fiber_shift(f, h, out_s=0.6, out_r=0.6, cutoff=30)
    rng = np.random.default_rng(0)
    for _ in range(20):
        th = rng.uniform()
        ph = rng.uniform(size=2)
        shift = h.evaluate(th, ph).real
        lhs = res.fn.evaluate(th, ph)
        rhs = f.evaluate(th + shift, ph)
        assert abs(lhs - rhs) < 1e-12 * max(1.0, abs(rhs))


def test_compose_mean_value_bound():
    # N(f o (id + h) - f) <= N(d_theta f on a larger strip) * N(h)
    for seed in range(4):
        f = random_function(seed, n=8, span=2, s=1.0, r=1.0, hermitian=True) * 1e-2
        h = TorusFunction.real_sine(1e-3, 0, (1, 1), 1.0, 1.0)
        res = compose_fiber_shift(f, h, out_s=0.7, out_r=0.7, cutoff=40)
        lhs = (res.fn - f).norm(s=0.7, r=0.7) - res.dropped
        rhs = f.derive_theta().norm(s=0.75, r=0.75) * h.norm(s=0.7, r=0.7)
        assert lhs <= rhs * (1 + 1e-10)


def test_compose_preserves_hermitian_symmetry():
    f = random_function(31, n=12, span=2, hermitian=True) * 1e-2
    h = TorusFunction.real_sine(1e-3, 1, (1, 0), 0.5, 0.7)
    res = compose_fiber_shift(f, h, out_s=0.4, out_r=0.6, cutoff=30)
    assert res.fn.hermitian_defect() < 1e-13


def test_compose_strip_overflow():
    f = TorusFunction.real_sine(1.0, 1, (1, 0), 1.0, 1.0)
    h = TorusFunction.real_sine(0.5, 0, (0, 1), 1.0, 1.0)  # huge shift
    with pytest.raises(StripOverflowError):
        compose_fiber_shift(f, h, out_s=0.99, out_r=0.99)


def test_invert_near_identity_roundtrip():
    h = TorusFunction.real_sine(3e-3, 1, (1, 1), 0.8, 0.8)
    hinv = invert_near_identity(h)
    rng = np.random.default_rng(5)
    for _ in range(10):
        th = rng.uniform()
        ph = rng.uniform(size=2)
        fwd = th + h.evaluate(th, ph).real
        back = fwd + hinv.evaluate(fwd, ph).real
        assert abs(back - th) < 1e-12


# -- constant-coefficient solve -------------------------------------------------


def test_solve_constant_coefficient_divisor_one():
    g = TorusFunction.real_sine(1.0, 0, (1, 0), 1.0, 1.0)
    h = solve_constant_coefficient(g, OMEGA, 10)
    target = TorusFunction.real_cosine(-1.0 / (2 * math.pi), 0, (1, 0), 1.0, 1.0)
    assert (h - target).norm() < 1e-14
    assert (h.derive_omega(OMEGA) - g).norm() < 1e-14


def test_solve_constant_coefficient_above_cutoff():
    g = PhiFunction.from_k_modes(1.0, [((5, 5), 1.0), ((-5, -5), 1.0)])
    h = solve_constant_coefficient(g, OMEGA, 10)
    assert h.n_modes == 0


def test_solve_constant_coefficient_per_mode_oracle():
    # divisor <(-1, 1), omega> = alpha - 1 amplifies by 1/(1 - alpha)
    g = TorusFunction.real_sine(1.0, 0, (-1, 1), 1.0, 1.0)
    h = solve_constant_coefficient(g, OMEGA, 10)
    for l, k, c in zip(g.ls, g.ks, g.cs):
        dot = k[0] * OMEGA[0] + k[1] * OMEGA[1]
        expected = c / (2j * math.pi * dot)
        assert h.coefficient(0, (int(k[0]), int(k[1]))) == pytest.approx(expected, rel=1e-14)
    assert h.norm(r=0.0) == pytest.approx(g.norm(r=0.0) / (2 * math.pi * (1 - GOLDEN)), rel=1e-12)


def test_split_real_imaginary_realness():
    rng = np.random.default_rng(9)
    ks = [(1, 0), (0, 1), (2, -1)]
    modes = []
    for k in ks:
        c = complex(rng.normal(), rng.normal())
        modes += [(k, c), ((-k[0], -k[1]), np.conj(c))]
    g = PhiFunction.from_k_modes(1.0, modes)
    h = solve_constant_coefficient(g, OMEGA, 10)
    h1, bound = split_real_imaginary_shift(h, 0.3)
    phis = rng.uniform(size=(50, 2))
    vals = h1.evaluate(np.zeros(50), phis)
    assert np.abs(vals.imag).max() < 1e-14 * max(1.0, np.abs(vals.real).max())
    # bound dominates sampled imaginary parts on the narrower strip
    offsets = rng.uniform(-1, 1, size=(50, 2)) * (0.3 / (2 * math.pi))
    cvals = h1.evaluate(np.zeros(50), phis + 1j * offsets)
    assert np.abs(cvals.imag).max() <= bound * (1 + 1e-9) + 1e-15


def test_split_zero_shift():
    h = PhiFunction.zero_phi(1.0)
    _, bound = split_real_imaginary_shift(h, 0.5)
    assert bound == 0.0


def test_imaginary_bound_single_mode():
    h = PhiFunction.from_k_modes(1.0, [((1, 0), 0.5), ((-1, 0), 0.5)])
    r = 0.4
    assert imaginary_part_bound(h, r=r) == pytest.approx(1.0 * (math.exp(r) - 1.0), rel=1e-12)


# -- majorant and symmetry invariants -------------------------------------------


def test_majorant_dominates_samples():
    rng = np.random.default_rng(13)
    for seed in range(3):
        f = random_function(seed, n=15, span=3, s=0.5, r=0.5, hermitian=True)
        bound = f.norm()
        for _ in range(200):
            th = rng.uniform() + 1j * rng.uniform(-1, 1) * f.s / (2 * math.pi)
            ph = rng.uniform(size=2) + 1j * rng.uniform(-1, 1, size=2) * f.r / (2 * math.pi)
            assert abs(f.evaluate(th, ph)) <= bound + 1e-12


def test_canonical_ordering_deterministic():
    f = TorusFunction.from_modes(1.0, 1.0, [(1, (0, 0), 1.0), (0, (1, 0), 2.0), (-1, (0, 0), 3.0)])
    g = TorusFunction.from_modes(1.0, 1.0, [(-1, (0, 0), 3.0), (1, (0, 0), 1.0), (0, (1, 0), 2.0)])
    assert np.array_equal(f.ls, g.ls) and np.array_equal(f.ks, g.ks)
    assert np.array_equal(f.cs, g.cs)
    deg = f.degrees()
    assert np.all(np.diff(deg) >= 0)


def test_duplicate_modes_merge():
    f = TorusFunction.from_modes(1.0, 1.0, [(1, (0, 0), 1.0), (1, (0, 0), 2.0)])
    assert f.n_modes == 1
    assert f.coefficient(1, (0, 0)) == pytest.approx(3.0)


def test_json_roundtrip_and_validation(tmp_path):
    f = random_function(17, hermitian=True)
    path = tmp_path / "f.json"
    f.save_json(path)
    g = TorusFunction.load_json(path)
    assert (f - g).norm() < 1e-14 * f.norm()
    bad = {"s": 1.0, "r": 1.0, "modes": [{"l": 1, "k": [0, 0], "re": 1.0, "im": 0.0}]}
    with pytest.raises(HermitianSymmetryError):
        TorusFunction.from_json_dict(bad)


def test_phi_function_rejects_theta_modes():
    f = TorusFunction.from_modes(1.0, 1.0, [(1, (0, 0), 1.0)])
    with pytest.raises(ValueError):
        PhiFunction.from_torus(f)
