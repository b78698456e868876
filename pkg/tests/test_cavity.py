import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from conftest import coefficients
from wdistill.cavity import (
    CAVITY,
    CavityParams,
    InteractionTimes,
    compare_with_abstract,
    cavity_final_state,
    jc_evolve,
    jc_propagator,
    optimal_times,
    prepare_atoms,
    run_cavity_protocol,
)
from wdistill.errors import ProtocolInputError, TruncationError
from wdistill.protocols import Classification, WCoefficients, w_state
from wdistill.statevec import PureState, fidelity, level_probabilities, make_basis_state, unitarity_error

INTERACTION = CavityParams()


def atom_field(occ, n_max=1):
    return make_basis_state([2, n_max + 1], occ, ["x", CAVITY])


def lab_oracle(k, omega, dt1, dt2):
    """Amplitudes of the lab-frame state after both passes, written out term by term.

    Keys are (atom1, atom2, atom3, photons) with e = 1, g = 0 and epsilon = 1.
    """
    a, b, c = k.a, k.b, k.c
    ph = lambda x: cmath.exp(0.5j * omega * x)
    s1, c1, s2, c2 = math.sin(dt1), math.cos(dt1), math.sin(dt2), math.cos(dt2)
    return {
        (0, 0, 1, 0): ph(dt2 - dt1) * a * c1,
        (1, 0, 0, 0): ph(dt2 + dt1) * c,
        (0, 1, 0, 0): ph(-(dt2 - dt1)) * b * c2 - ph(-(dt2 + dt1)) * a * s1 * s2,
        (0, 0, 0, 1): -1j * (ph(-(dt2 - dt1)) * b * s2 + ph(-(dt2 + dt1)) * a * s1 * c2),
    }


def first_pass_oracle(k, omega, dt1):
    a, b, c = k.a, k.b, k.c
    ph = lambda x: cmath.exp(0.5j * omega * x)
    return {
        (0, 0, 1, 0): ph(-dt1) * a * math.cos(dt1),
        (0, 1, 0, 0): ph(dt1) * b,
        (1, 0, 0, 0): ph(dt1) * c,
        (0, 0, 0, 1): -1j * ph(-dt1) * a * math.sin(dt1),
    }


def assert_matches_oracle(state, oracle, tol):
    total = 0.0
    for occ, value in oracle.items():
        assert abs(state.amplitude(occ) - value) < tol, occ
        total += abs(value) ** 2
    assert total == pytest.approx(1, abs=tol)


class TestParams:
    @pytest.mark.parametrize("kw", [{"epsilon": 0}, {"n_max": 0}, {"frame": "rotating"}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            CavityParams(**kw)

    def test_resonance(self):
        assert CavityParams(omega=3.0, omega0=3.0).resonant
        assert not CavityParams(omega=3.0, omega0=3.1).resonant


class TestEvolution:
    def test_full_rabi_transfer(self):
        out = jc_evolve(atom_field([1, 0]), "x", INTERACTION, math.pi / 2)
        assert out.amplitude([0, 1]) == pytest.approx(-1j, abs=1e-15)
        assert abs(out.amplitude([1, 0])) < 1e-15

    def test_rabi_cos_sin(self):
        out = jc_evolve(atom_field([1, 0]), "x", INTERACTION, 0.3)
        assert out.amplitude([1, 0]) == pytest.approx(math.cos(0.3), abs=1e-15)
        assert out.amplitude([0, 1]) == pytest.approx(-1j * math.sin(0.3), abs=1e-15)

    @pytest.mark.parametrize("frame", ["interaction", "lab"])
    def test_dark_state(self, frame):
        p = CavityParams(omega=1.7, omega0=1.7, frame=frame)
        out = jc_evolve(atom_field([0, 0]), "x", p, 2.9)
        assert abs(out.amplitude([0, 0])) == pytest.approx(1, abs=1e-15)
        expected = cmath.exp(0.5j * 1.7 * 2.9) if frame == "lab" else 1.0
        assert out.amplitude([0, 0]) == pytest.approx(expected, abs=1e-15)

    def test_higher_doublet_angle(self):
        out = jc_evolve(atom_field([1, 1], n_max=2), "x", CavityParams(n_max=2), 0.4)
        assert out.amplitude([1, 1]) == pytest.approx(math.cos(0.4 * math.sqrt(2)), abs=1e-15)
        assert out.amplitude([0, 2]) == pytest.approx(-1j * math.sin(0.4 * math.sqrt(2)), abs=1e-15)

    def test_truncation_guard(self):
        with pytest.raises(TruncationError):
            jc_evolve(atom_field([1, 1]), "x", INTERACTION, 0.1)

    def test_other_subsystems_untouched(self, k532):
        s = prepare_atoms(k532, INTERACTION)
        out = jc_evolve(s, "3", INTERACTION, 0.7)
        for occ in ([0, 1, 0, 0], [1, 0, 0, 0]):
            assert out.amplitude(occ) == pytest.approx(s.amplitude(occ), abs=1e-15)

    @settings(max_examples=60)
    @given(
        st.integers(1, 4),
        st.floats(0, 10),
        st.floats(0.1, 5),
        st.sampled_from(["interaction", "lab"]),
    )
    def test_closed_form_matches_expm(self, n_max, t, omega, frame):
        p = CavityParams(omega=omega, omega0=omega, epsilon=0.8, n_max=n_max, frame=frame)
        closed = jc_propagator(p, t)
        dense = jc_propagator(p, t, method="expm")
        # the top level |e, n_max> is never populated, so compare the reachable block only
        keep = [i for i in range(2 * (n_max + 1)) if i != 2 * (n_max + 1) - 1]
        np.testing.assert_allclose(closed[np.ix_(keep, keep)], dense[np.ix_(keep, keep)], atol=1e-12)
        assert unitarity_error(closed) < 1e-12

    def test_non_resonant_propagator_unitary(self):
        u = jc_propagator(CavityParams(omega=1.0, omega0=1.4, n_max=3), 2.5)
        assert unitarity_error(u) < 1e-12

    @settings(max_examples=60)
    @given(st.integers(1, 4), st.floats(0, 10), st.integers(0, 2**31))
    def test_excitation_conservation(self, n_max, t, seed):
        rng = np.random.default_rng(seed)
        dims = (2, n_max + 1)
        v = rng.normal(size=dims) + 1j * rng.normal(size=dims)
        v[1, n_max] = 0
        state = PureState((v / np.linalg.norm(v)).ravel(), dims, ("x", CAVITY))
        out = jc_evolve(state, "x", CavityParams(n_max=n_max), t)

        def sectors(s):
            p = np.abs(s.as_tensor()) ** 2
            return np.array([p[0, k] + (p[1, k - 1] if k >= 1 else 0.0) for k in range(n_max + 1)])

        np.testing.assert_allclose(sectors(out), sectors(state), atol=1e-12)
        assert abs(out.norm - 1) < 1e-12


class TestOptimalTimes:
    def test_worked(self, k532):
        t = optimal_times(k532)
        assert t.dt1 == pytest.approx(0.886077, abs=1e-6)
        assert t.dt2 == pytest.approx(0.169918, abs=1e-6)

    def test_uniform_is_zero(self):
        t = optimal_times(WCoefficients.uniform())
        assert (t.dt1, t.dt2) == pytest.approx((0, 0), abs=1e-7)

    def test_epsilon_scaling(self, k532):
        assert optimal_times(k532, 2.0).dt1 == pytest.approx(optimal_times(k532).dt1 / 2, abs=1e-15)

    def test_literal_closed_forms(self, coeff_sample):
        for k in coeff_sample:
            t = optimal_times(k)
            r = math.sqrt(1 - 2 * k.c**2)
            assert t.dt1 == pytest.approx(math.acos(k.c / k.a), abs=1e-7)
            assert t.dt2 == pytest.approx(math.asin(k.b / r) - math.asin(k.c / r), abs=1e-7)

    def test_root_finding_oracle(self, coeff_sample):
        for k in coeff_sample[:200]:
            if k.a - k.c < 1e-6 or k.b - k.c < 1e-6:
                continue
            t = optimal_times(k)
            dt1 = brentq(lambda x: k.a * math.cos(x) - k.c, 0, math.pi / 2, xtol=1e-15)
            # after the first pass the geg amplitude at photon 0 is b cos(x) - a sin(dt1) sin(x)
            A = k.a * math.sin(dt1)
            dt2 = brentq(lambda x: k.b * math.cos(x) - A * math.sin(x) - k.c, 0, math.pi / 2, xtol=1e-15)
            assert t.dt1 == pytest.approx(dt1, abs=1e-10)
            assert t.dt2 == pytest.approx(dt2, abs=1e-10)

    def test_first_pass_amplitude(self, k532):
        s = jc_evolve(prepare_atoms(k532, INTERACTION), "3", INTERACTION, optimal_times(k532).dt1)
        assert abs(s.amplitude([0, 0, 1, 0])) == pytest.approx(k532.c, abs=1e-12)

    def test_equal_magnitudes(self, coeff_sample):
        for k in coeff_sample:
            s = cavity_final_state(k, INTERACTION)
            mags = [abs(s.amplitude(o)) for o in ([0, 0, 1, 0], [0, 1, 0, 0], [1, 0, 0, 0])]
            assert max(mags) - min(mags) < 1e-9


class TestCavityProtocol:
    def test_worked(self, k532):
        out = run_cavity_protocol(k532, INTERACTION)
        assert [o.branch_label for o in out] == ["photon=0", "photon=1"]
        assert out[0].classification is Classification.W_SUCCESS
        assert out[0].probability == pytest.approx(0.6, abs=1e-12)
        assert fidelity(out[0].post_state, w_state()) == pytest.approx(1, abs=1e-12)

    def test_c_zero(self):
        out = run_cavity_protocol(WCoefficients.from_squares(0.6, 0.4, 0.0), INTERACTION)
        assert out[0].probability == pytest.approx(0, abs=1e-12)

    def test_uniform_no_interaction(self):
        k = WCoefficients.uniform()
        out = run_cavity_protocol(k, INTERACTION)
        assert out[0].probability == pytest.approx(1, abs=1e-12)

    def test_rejects_non_resonant(self, k532):
        with pytest.raises(ProtocolInputError):
            run_cavity_protocol(k532, CavityParams(omega=1.0, omega0=2.0))

    @settings(max_examples=200)
    @given(coefficients())
    def test_probability_equivalence(self, k):
        out = run_cavity_protocol(k, INTERACTION)
        assert abs(out[0].probability - 3 * k.c**2) < 1e-9
        if out[0].post_state is not None:
            assert abs(fidelity(out[0].post_state, w_state()) - 1) < 1e-9

    def test_custom_times(self, k532):
        out = run_cavity_protocol(k532, INTERACTION, InteractionTimes(0.0, 0.0))
        # no interaction: the cavity stays empty
        assert out[0].probability == pytest.approx(1, abs=1e-15)


class TestLabFrame:
    @pytest.mark.parametrize("omega", [0.0, 0.4, 2.3, 17.0])
    def test_reproduces_term_expressions(self, omega, coeff_sample):
        p = CavityParams(omega=omega, omega0=omega, frame="lab")
        for k in coeff_sample[:250]:
            t = optimal_times(k)
            s1 = jc_evolve(prepare_atoms(k, p), "3", p, t.dt1)
            assert_matches_oracle(s1, first_pass_oracle(k, omega, t.dt1), 1e-12)
            s2 = cavity_final_state(k, p)
            assert_matches_oracle(s2, lab_oracle(k, omega, t.dt1, t.dt2), 1e-12)

    @given(coefficients(), st.floats(0, 20))
    def test_single_pass_frame_consistency(self, k, omega):
        lab = CavityParams(omega=omega, omega0=omega, frame="lab")
        t = optimal_times(k).dt1
        p_lab = level_probabilities(jc_evolve(prepare_atoms(k, lab), "3", lab, t), CAVITY)
        p_int = level_probabilities(jc_evolve(prepare_atoms(k, INTERACTION), "3", INTERACTION, t), CAVITY)
        np.testing.assert_allclose(p_lab, p_int, atol=1e-12)

    def test_frame_consistency_when_phases_align(self, coeff_sample):
        for k in coeff_sample[:200]:
            t = optimal_times(k)
            if t.dt1 < 1e-3:
                continue
            omega = 2 * math.pi / t.dt1
            lab = CavityParams(omega=omega, omega0=omega, frame="lab")
            assert compare_with_abstract(k, lab).ok(1e-9)

    def test_generic_omega_photon_statistics_differ(self, k532):
        # the two lab-frame paths into |geg>|0> carry different free phases, so the
        # term expressions themselves give a photon-0 weight away from 3c^2
        t = optimal_times(k532)
        oracle = lab_oracle(k532, 2.3, t.dt1, t.dt2)
        p0_oracle = sum(abs(v) ** 2 for occ, v in oracle.items() if occ[3] == 0)
        p = CavityParams(omega=2.3, omega0=2.3, frame="lab")
        report = compare_with_abstract(k532, p)
        assert report.p_cavity == pytest.approx(p0_oracle, abs=1e-12)
        assert report.p_cavity == pytest.approx(0.745, abs=1e-3)
        assert not report.ok(1e-3)


class TestCompare:
    def test_uniform(self):
        r = compare_with_abstract(WCoefficients.uniform(), INTERACTION)
        assert r.max_diff < 1e-12

    def test_worked(self, k532):
        r = compare_with_abstract(k532, INTERACTION)
        assert r.p_abstract == pytest.approx(0.6)
        assert r.ok()

    def test_interaction_sample(self, coeff_sample):
        worst = max(compare_with_abstract(k, INTERACTION).max_diff for k in coeff_sample)
        assert worst < 1e-9
