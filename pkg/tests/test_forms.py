import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybrid_irs import forms as F
from hybrid_irs.model import (
    ReflectionState,
    irs_power_slot1,
    irs_power_slot2,
    relay_input,
    relay_output_row,
    relay_power,
    snr_direct,
)

from conftest import crandn, random_instance


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


class TestLinearAlgebra:
    def test_vec_column_major(self):
        np.testing.assert_array_equal(F.vec(np.array([[1, 3], [2, 4]])), [1, 2, 3, 4])

    def test_unvec_inverts_vec(self):
        X = crandn(np.random.default_rng(0), 3, 2)
        np.testing.assert_array_equal(F.unvec(F.vec(X), 3, 2), X)

    def test_vec_kron_identity(self):
        rng = np.random.default_rng(1)
        X, Y, Z = crandn(rng, 2, 3), crandn(rng, 3, 2), crandn(rng, 2, 2)
        np.testing.assert_allclose(F.kron(Z.T, X) @ F.vec(Y), F.vec(X @ Y @ Z), rtol=1e-12, atol=1e-14)

    def test_kron_identities(self):
        np.testing.assert_array_equal(F.kron(np.eye(2), np.eye(3)), np.eye(6))

    def test_hadamard(self):
        X = np.arange(6).reshape(2, 3)
        np.testing.assert_array_equal(F.hadamard(X, X), X * X)
        with pytest.raises(ValueError):
            F.hadamard(np.ones((2, 3)), np.ones((3, 2)))


class TestQuadForm:
    def test_symmetrized(self):
        M0 = np.array([[1.0, 2.0], [0.0, 3.0]])
        f = F.QuadForm(M0, np.zeros(2), 0.0)
        np.testing.assert_allclose(f.M0, f.M0.conj().T)

    @given(st.integers(0, 2**31))
    def test_value_is_real_expansion(self, seed):
        rng = np.random.default_rng(seed)
        P, y, x = crandn(rng, 3, 4), crandn(rng, 3), crandn(rng, 4)
        f = F.QuadForm.norm_sq(P, y, weight=2.5)
        assert f.value(x) == pytest.approx(2.5 * np.linalg.norm(P @ x + y) ** 2, rel=1e-10)
        w, c = crandn(rng, 4), complex(*rng.standard_normal(2))
        g = F.QuadForm.affine_sq(w, c)
        assert g.value(x) == pytest.approx(abs(np.vdot(w, x) + c) ** 2, rel=1e-10)

    @settings(max_examples=50)
    @given(st.integers(0, 2**31))
    def test_minorant_touches_and_lies_below(self, seed):
        rng = np.random.default_rng(seed)
        f = F.QuadForm.norm_sq(crandn(rng, 3, 3), crandn(rng, 3))
        xt = crandn(rng, 3)
        lin = f.minorant(xt)
        assert lin.value(xt) == pytest.approx(f.value(xt), rel=1e-12)
        for x in crandn(rng, 20, 3):
            assert lin.value(x) <= f.value(x) + 1e-9 * max(1.0, abs(f.value(x)))

    def test_arithmetic(self):
        rng = np.random.default_rng(2)
        f = F.QuadForm.norm_sq(crandn(rng, 2, 2), crandn(rng, 2))
        g = F.QuadForm.diagonal([1.0, 2.0], 3.0)
        x = crandn(rng, 2)
        assert (f - g.scaled(0.5)).value(x) == pytest.approx(f.value(x) - 0.5 * g.value(x))
        assert f.shifted(4.0).value(x) == pytest.approx(f.value(x) + 4.0)
        assert F.QuadForm.constant(2, 7.0).is_constant()


class TestAStep:
    def test_signal_form(self):
        ch, cfg, A, refl = random_instance(11, M=2, N=3, K=1)
        sf = F.build_a_step(ch, refl.u1, refl.u2, cfg)
        a = F.vec(A)
        direct = abs(relay_output_row(ch, refl.u2) @ A @ relay_input(ch, refl.u1)) ** 2
        assert _rel(np.real(a.conj() @ sf.parts["B1"] @ a), direct) <= 1e-10

    def test_zero_reflection_all_passive(self):
        ch, cfg, A, _ = random_instance(12, M=2, N=3, K=0)
        sf = F.build_a_step(ch, np.zeros(3), np.zeros(3), cfg)
        for name in ("B2", "D1", "D2", "D3"):
            assert not np.any(sf.parts[name]), name

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31), st.sampled_from([3, 8]), st.integers(0, 2))
    def test_psd(self, seed, N, K):
        ch, cfg, _, refl = random_instance(seed, N=N, K=K)
        sf = F.build_a_step(ch, refl.u1, refl.u2, cfg)
        for name in ("B1", "B2", "B3", "C1", "C2", "D1", "D2", "D3"):
            X = sf.parts[name]
            np.testing.assert_allclose(X, X.conj().T, atol=1e-12 * max(np.abs(X).max(), 1e-300))
            ev = np.linalg.eigvalsh(X)
            assert ev.min() >= -1e-10 * max(np.abs(np.trace(X)), 1e-300), name

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31), st.sampled_from([3, 8]), st.integers(0, 2))
    def test_equivalence(self, seed, N, K):
        ch, cfg, A, refl = random_instance(seed, N=N, K=K)
        sf = F.build_a_step(ch, refl.u1, refl.u2, cfg)
        a = F.vec(A)
        assert _rel(sf.ratio(a), snr_direct(ch, A, refl, cfg).snr) <= 1e-10
        relay_form, gamma_r = sf.constraints["relay"]
        assert gamma_r == cfg.gamma_r
        assert _rel(relay_form.value(a), relay_power(A, refl, ch, cfg)) <= 1e-10
        irs_form, bound = sf.constraints["irs_slot2"]
        assert bound == cfg.gamma_i - sf.parts["irs_slot2_fixed"]
        used = irs_form.value(a) + sf.parts["irs_slot2_fixed"]
        assert _rel(used, irs_power_slot2(refl.u2, A, refl.u1, ch, cfg)) <= 1e-10


class TestU1Step:
    def test_zero_u1_numerator(self):
        ch, cfg, A, refl = random_instance(21, N=3, K=1)
        sf = F.build_u1_step(ch, A, refl.u2, cfg)
        a = relay_output_row(ch, refl.u2) @ A @ ch.h_sr
        assert sf.parts["a"] == pytest.approx(a, rel=1e-12)
        assert _rel(sf.numerator.value(np.zeros(3)), cfg.gamma_s * abs(a) ** 2) <= 1e-12

    def test_gamma_i_tilde(self):
        ch, cfg, A, refl = random_instance(22, N=8, K=2)
        sf = F.build_u1_step(ch, A, refl.u2, cfg)
        EK = np.diag(cfg.E)
        F2 = EK @ np.diag(refl.u2) @ ch.H_ir.conj().T
        expected = cfg.gamma_i - np.linalg.norm(F2 @ A, "fro") ** 2 - np.linalg.norm(EK @ np.diag(refl.u2), "fro") ** 2
        assert _rel(sf.parts["gamma_i_tilde"], expected) <= 1e-12

    def test_no_passive_elements(self):
        ch, cfg, A, refl = random_instance(23, N=3, K=3)
        assert F.build_u1_step(ch, A, refl.u2, cfg).modulus_indices.size == 0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31), st.sampled_from([3, 8]), st.integers(0, 2))
    def test_equivalence(self, seed, N, K):
        ch, cfg, A, refl = random_instance(seed, N=N, K=K)
        sf = F.build_u1_step(ch, A, refl.u2, cfg)
        x = refl.u1
        assert _rel(sf.ratio(x), snr_direct(ch, A, refl, cfg).snr) <= 1e-10
        signal = abs(np.vdot(sf.parts["h1"], x) + sf.parts["a"]) ** 2
        assert _rel(signal, abs(relay_output_row(ch, refl.u2) @ A @ relay_input(ch, x)) ** 2) <= 1e-10
        f1, b1 = sf.constraints["irs_slot1"]
        assert b1 == cfg.gamma_i and _rel(f1.value(x), irs_power_slot1(refl, ch, cfg)) <= 1e-10
        fr, _ = sf.constraints["relay"]
        assert _rel(fr.value(x), relay_power(A, refl, ch, cfg)) <= 1e-10
        f2, b2 = sf.constraints["irs_slot2"]
        assert b2 == sf.parts["gamma_i_tilde"]
        used = f2.value(x) + sf.parts["irs_slot2_fixed"]
        assert _rel(used, irs_power_slot2(refl.u2, A, x, ch, cfg)) <= 1e-10
        np.testing.assert_array_equal(sf.modulus_indices, cfg.passive)


class TestU2Step:
    def test_zero_u2(self):
        ch, cfg, A, refl = random_instance(31, N=3, K=1)
        sf = F.build_u2_step(ch, A, refl.u1, cfg)
        x0 = np.zeros(3)
        rdA = ch.h_rd.conj() @ A
        c = rdA @ relay_input(ch, refl.u1)
        assert sf.parts["c"] == pytest.approx(c, rel=1e-12)
        assert _rel(sf.numerator.value(x0), cfg.gamma_s * abs(c) ** 2) <= 1e-12
        expected = np.linalg.norm(sf.parts["h4"]) ** 2 + np.linalg.norm(rdA) ** 2 + 1
        assert _rel(sf.denominator.value(x0), expected) <= 1e-12

    def test_variable_convention(self):
        u2 = np.array([1 + 2j, -0.5j])
        np.testing.assert_array_equal(F.u2_to_variable(u2), u2.conj())
        np.testing.assert_array_equal(F.u2_from_variable(F.u2_to_variable(u2)), u2)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31), st.sampled_from([3, 8]), st.integers(0, 2))
    def test_equivalence(self, seed, N, K):
        ch, cfg, A, refl = random_instance(seed, N=N, K=K)
        sf = F.build_u2_step(ch, A, refl.u1, cfg)
        x = F.u2_to_variable(refl.u2)
        assert _rel(sf.ratio(x), snr_direct(ch, A, refl, cfg).snr) <= 1e-10
        fp, bound = sf.constraints["irs_slot2"]
        assert bound == cfg.gamma_i
        direct = irs_power_slot2(refl.u2, A, refl.u1, ch, cfg)
        assert _rel(fp.value(x), direct) <= 1e-10
        M0 = sf.parts["power_matrix"]
        assert _rel(np.real(x.conj() @ M0 @ x), direct) <= 1e-10

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31), st.integers(0, 3))
    def test_quadratic_parts_psd(self, seed, K):
        ch, cfg, A, refl = random_instance(seed, N=6, K=K)
        for sf in (F.build_u1_step(ch, A, refl.u2, cfg), F.build_u2_step(ch, A, refl.u1, cfg)):
            forms = [sf.numerator, sf.denominator] + [f for f, _ in sf.constraints.values()]
            for f in forms:
                ev = np.linalg.eigvalsh(f.M0)
                assert ev.min() >= -1e-10 * max(np.abs(np.trace(f.M0)), 1e-300)
