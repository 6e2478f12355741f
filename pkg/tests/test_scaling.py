import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from porosurf.errors import InvalidInput, SingularParameter
from porosurf.scaling import (DimensionalParams, ScaleSet,
                              consolidation_scales, generic_scales,
                              nondimensionalize, redimensionalize,
                              subsidence_scales, volume_compressibility)


def consolidation_params(**kw):
    base = dict(E=1.0, nu=0.4, mu_f=1.0, k_star=1.0, L=1.0, t0=1.0)
    base.update(kw)
    return DimensionalParams(**base)


def subsidence_params(**kw):
    base = dict(E=1.0, nu=0.25, mu_f=1.0, k_star=1.0, W=1.0, H=0.1, q0=1.0)
    base.update(kw)
    return DimensionalParams(**base)


class TestConsolidationScales:
    def test_unit_parameter_values(self):
        # m_v = (1-2nu)(1+nu)/(E(1-nu)) = 0.2*1.4/0.6 = 7/15
        sc = consolidation_scales(consolidation_params())
        assert volume_compressibility(1.0, 0.4) == pytest.approx(7 / 15, rel=1e-12)
        assert sc.T_star == pytest.approx(7 / 15, rel=1e-12)
        assert sc.u_star == pytest.approx(7 / 15, rel=1e-12)
        assert sc.p_star == 1.0
        # c_v = 1/m_v for unit k*, mu_f
        assert 1.0 / sc.T_star == pytest.approx(15 / 7, rel=1e-12)

    def test_length_scaling(self):
        a = consolidation_scales(consolidation_params(L=1.0))
        b = consolidation_scales(consolidation_params(L=2.0))
        assert b.T_star == pytest.approx(4 * a.T_star, rel=1e-12)

    def test_load_scaling(self):
        a = consolidation_scales(consolidation_params(t0=1.0))
        b = consolidation_scales(consolidation_params(t0=2.0))
        assert b.u_star == pytest.approx(2 * a.u_star, rel=1e-12)
        assert b.p_star == pytest.approx(2 * a.p_star, rel=1e-12)
        assert b.T_star == pytest.approx(a.T_star, rel=1e-12)

    def test_nu_half_singular(self):
        with pytest.raises(SingularParameter):
            consolidation_params(nu=0.5)


class TestSubsidenceScales:
    def test_unit_parameter_values(self):
        sc = subsidence_scales(subsidence_params())
        # m_v' = 2*0.5*1.25 = 1.25, c_v' = 0.8, T* = 10 * 1/0.8 = 12.5
        assert sc.T_star == pytest.approx(12.5, rel=1e-12)
        assert sc.u_star == pytest.approx(1.25 * 0.1, rel=1e-12)
        assert sc.p_star == pytest.approx(1.0, rel=1e-12)
        assert sc.time_factor == pytest.approx(100.0)

    def test_displacement_pressure_ratio(self):
        sc = subsidence_scales(subsidence_params(q0=3.0, H=0.2))
        m_vp = 2 * (1 - 2 * 0.25) * (1 + 0.25)
        assert sc.u_star / sc.p_star == pytest.approx(m_vp * 0.2, rel=1e-12)

    def test_discharge_scaling(self):
        a = subsidence_scales(subsidence_params(q0=1.0))
        b = subsidence_scales(subsidence_params(q0=2.0))
        assert b.u_star == pytest.approx(2 * a.u_star, rel=1e-12)
        assert b.p_star == pytest.approx(2 * a.p_star, rel=1e-12)


class TestGenericScales:
    def test_equal_constants_cancel(self):
        sc = generic_scales("traction", 0.7, 0.7, consolidation_params())
        assert sc.T_star == pytest.approx(1.0, rel=1e-12)  # mu s^2/(k E) = 1

    @settings(max_examples=10, deadline=None)
    @given(E=st.floats(0.5, 50), nu=st.floats(0.05, 0.45),
           k=st.floats(1e-3, 10), L=st.floats(0.1, 10), t0=st.floats(0.1, 10))
    def test_reproduces_consolidation(self, E, nu, k, L, t0):
        params = DimensionalParams(E=E, nu=nu, mu_f=1.3, k_star=k, L=L, t0=t0)
        direct = consolidation_scales(params)
        a = volume_compressibility(E, nu) * E
        generic = generic_scales("traction", a, 1.0, params)
        for name in ("T_star", "s_star", "u_star", "p_star", "q_star"):
            assert getattr(generic, name) == pytest.approx(
                getattr(direct, name), rel=1e-12)

    @settings(max_examples=10, deadline=None)
    @given(E=st.floats(0.5, 50), nu=st.floats(0.05, 0.45),
           k=st.floats(1e-3, 10), W=st.floats(0.5, 10), q0=st.floats(0.1, 10))
    def test_reproduces_subsidence(self, E, nu, k, W, q0):
        # The flux-driven time scale carries the explicit (W/H)^2 stretch; with
        # that folded in, (A, B) = (m_v' E H / W, 1) matches every scale.
        params = DimensionalParams(E=E, nu=nu, mu_f=0.7, k_star=k,
                                   W=W, H=0.1 * W, q0=q0)
        direct = subsidence_scales(params)
        m_vp = 2 * (1 - 2 * nu) * (1 + nu) / E
        generic = generic_scales("flux", m_vp * E * 0.1, 1.0, params,
                                 time_factor=100.0)
        for name in ("T_star", "s_star", "u_star", "p_star", "q_star"):
            assert getattr(generic, name) == pytest.approx(
                getattr(direct, name), rel=1e-12)

    def test_invalid_constants(self):
        with pytest.raises(InvalidInput):
            generic_scales("traction", -1.0, 1.0, consolidation_params())
        with pytest.raises(InvalidInput):
            generic_scales("nonsense", 1.0, 1.0, consolidation_params())

    def test_time_scale_decreases_in_permeability(self):
        t_stars = [consolidation_scales(consolidation_params(k_star=k)).T_star
                   for k in (0.5, 1.0, 2.0, 4.0)]
        assert np.all(np.diff(t_stars) < 0)


class TestRedimensionalize:
    def setup_method(self):
        self.scale = consolidation_scales(consolidation_params(t0=5e4))

    def test_pressure_value(self):
        assert redimensionalize(1.0, self.scale, "p") == pytest.approx(5e4)

    def test_round_trip_identity(self):
        vals = np.linspace(-2, 2, 7)
        for which in ("u", "p", "t", "q", "time", "length"):
            back = nondimensionalize(
                redimensionalize(vals, self.scale, which), self.scale, which)
            assert np.allclose(back, vals, rtol=1e-15)

    def test_displacement_definition(self):
        m_v = volume_compressibility(1.0, 0.4)
        assert redimensionalize(1.0, self.scale, "u") == pytest.approx(
            m_v * 1.0 * 5e4, rel=1e-12)

    def test_unknown_kind(self):
        with pytest.raises(InvalidInput):
            redimensionalize(1.0, self.scale, "volume")


class TestScaleSetValidation:
    def test_positive_scales_enforced(self):
        with pytest.raises(InvalidInput):
            ScaleSet(T_star=0.0, s_star=1, k_star=1, u_star=1, p_star=1,
                     t_star=1, q_star=1, A=1, B=1)

    def test_dict_round_trip(self):
        sc = subsidence_scales(subsidence_params())
        assert ScaleSet.from_dict(sc.to_dict()) == sc
