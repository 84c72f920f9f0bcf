import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import erfinv

from fluxband import pulses
from fluxband import sideband_model as sm
from fluxband.device import DeviceSpec, TransmonSpec, harmonic_decomposition
from fluxband.dispersive import mls_model
from fluxband.hilbert import basis_index
from fluxband.pulses import (
    DIPOLE_SCALE,
    DerivativeEnvelope,
    Envelope,
    PulseError,
    PulseSchedule,
    PulseSegment,
    build_Uent_schedule,
    drag_correct,
    drive_hamiltonian,
    effective_amplitude,
    fc_segment,
)


def table_device():
    return DeviceSpec(
        transmons=(TransmonSpec(25.0, 0.25, 0.25), TransmonSpec(61.0, 0.3, 0.25)),
        omega_r=7.8,
        g_ge=(0.1, 0.1),
    )


@pytest.fixture(scope="module")
def device():
    return table_device()


@pytest.fixture(scope="module")
def model(device):
    return mls_model(device)


@pytest.fixture(scope="module")
def schedule(device, model):
    return build_Uent_schedule(device, model)


def equal_area_amplitude(env: Envelope) -> float:
    """Envelope value at the offset where the central area equals the two wings."""

    def shape(t):
        return math.exp(-(t**2) / (2 * env.sigma**2))

    def balance(a):
        centre = quad(shape, -a, a, epsabs=1e-14, epsrel=1e-13)[0]
        wings = 2 * quad(shape, a, env.tau, epsabs=1e-14, epsrel=1e-13)[0]
        return centre - wings

    a = brentq(balance, 0.0, env.tau, xtol=1e-14)
    return env.amplitude * shape(a)


class TestEnvelope:
    def test_peak_value(self):
        env = Envelope(0.07, 10.0, 3.0, 6.0)
        assert env(10.0) == pytest.approx(0.07)

    def test_zero_outside_support(self):
        env = Envelope(0.07, 10.0, 3.0, 6.0)
        assert env(3.99) == 0.0
        assert env(16.01) == 0.0
        assert env(4.0) == pytest.approx(0.07 * math.exp(-2.0))

    def test_bounded_jump_at_truncation(self):
        env = Envelope(1.0, 0.0, 1.0, 2.0)
        assert env(2.0) - env(2.0 + 1e-9) == pytest.approx(math.exp(-2.0))

    def test_derivative_matches_finite_difference(self):
        env = Envelope(0.5, 5.0, 2.0, 4.0)
        t = np.linspace(1.5, 8.5, 15)
        h = 1e-6
        fd = (env(t + h) - env(t - h)) / (2 * h)
        assert np.allclose(env.derivative(t), fd, atol=1e-8)

    def test_derivative_zero_outside(self):
        env = Envelope(0.5, 5.0, 2.0, 4.0)
        assert env.derivative(0.0) == 0.0

    def test_area_matches_quadrature(self):
        env = Envelope(0.3, 7.0, 2.0, 3.0)
        numeric = quad(env, env.start, env.end)[0]
        assert env.area() == pytest.approx(numeric, rel=1e-12)

    @pytest.mark.parametrize("sigma,tau", [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0)])
    def test_rejects_nonpositive_width(self, sigma, tau):
        with pytest.raises(PulseError):
            Envelope(1.0, 0.0, sigma, tau)


class TestEffectiveAmplitude:
    def test_long_pulse_limit(self):
        env = Envelope(1.0, 0.0, 1.0, 60.0)
        assert effective_amplitude(env) == pytest.approx(math.exp(-erfinv(0.5) ** 2), rel=1e-12)

    @pytest.mark.parametrize("ratio", [0.5, 1.0, 2.0, 3.0, 5.0])
    def test_equal_area_oracle(self, ratio):
        env = Envelope(0.075, 0.0, 6.6873, ratio * 6.6873)
        assert effective_amplitude(env) == pytest.approx(equal_area_amplitude(env), rel=1e-9)

    def test_equal_area_to_quadrature_precision(self):
        env = Envelope(0.07308, 16.0, 7.0, 14.0)
        amp = effective_amplitude(env)
        a = math.sqrt(2 * env.sigma**2 * math.log(env.amplitude / amp))
        centre = quad(env, env.mu - a, env.mu + a, epsabs=1e-15)[0]
        wings = 2 * quad(env, env.mu + a, env.end, epsabs=1e-15)[0]
        assert abs(centre - wings) < 1e-6 * env.area()

    def test_narrow_pulse_tends_to_equal_area_solution(self):
        env = Envelope(1.0, 0.0, 1e-3, 1.0)
        assert effective_amplitude(env) == pytest.approx(math.exp(-erfinv(0.5) ** 2), rel=1e-10)
        assert effective_amplitude(env) == pytest.approx(equal_area_amplitude(env), rel=1e-6)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.5, 20.0), st.floats(0.3, 4.0), st.floats(0.1, 10.0))
    def test_depends_only_on_width_ratio(self, sigma, ratio, scale):
        a = effective_amplitude(Envelope(0.05, 0.0, sigma, ratio * sigma))
        b = effective_amplitude(Envelope(0.05, 3.0, scale * sigma, ratio * scale * sigma))
        assert a == pytest.approx(b, rel=1e-12)

    def test_below_peak(self):
        env = Envelope(0.07, 0.0, 7.0, 14.0)
        assert 0 < effective_amplitude(env) < env.amplitude


def segment(kind="flux", drag=False, envelope=None, **kw):
    env = envelope or Envelope(0.05, 20.0, 5.0, 10.0)
    return PulseSegment(kind, 0, 2.0, env, drag=drag, anharmonicity=-0.3 if drag else 0.0, **kw)


class TestDrag:
    def test_quadrature_integrates_to_zero(self):
        _, corr = drag_correct(segment(drag=True))
        total = quad(corr.envelope, corr.start, corr.end, points=[20.0])[0]
        assert abs(total) < 1e-14

    def test_quadrature_is_scaled_derivative(self):
        seg = segment(drag=True, drag_scale=0.7)
        _, corr = drag_correct(seg)
        t = np.linspace(11, 29, 7)
        expected = 0.7 * seg.envelope.derivative(t) / (2 * np.pi * -0.3)
        assert np.allclose(corr.envelope(t), expected, rtol=1e-14)

    def test_constant_interior_gives_no_correction(self):
        flat = Envelope(0.05, 20.0, 1e9, 10.0)
        _, corr = drag_correct(segment(drag=True, envelope=flat))
        t = np.linspace(11, 29, 9)
        assert np.abs(corr.envelope(t)).max() < 1e-15 * flat.amplitude

    def test_quadrature_phase_shift(self):
        _, corr = drag_correct(segment(drag=True))
        assert corr.phase == pytest.approx(0.5 * np.pi)
        assert isinstance(corr.envelope, DerivativeEnvelope)

    def test_waveform_combines_in_phase_and_quadrature(self):
        seg = segment(drag=True)
        base, corr = drag_correct(seg)
        t = np.linspace(10, 30, 41)
        assert np.allclose(seg.waveform(t), base.waveform(t) + corr.waveform(t), atol=1e-16)

    def test_no_drag_no_quadrature(self):
        seg = segment()
        assert np.all(seg.quadrature(np.linspace(10, 30, 5)) == 0.0)

    def test_drag_requires_anharmonicity(self):
        with pytest.raises(PulseError):
            PulseSegment("flux", 0, 2.0, Envelope(0.05, 20.0, 5.0, 10.0), drag=True)


class TestSchedule:
    def test_overlap_rejected(self):
        a = segment(envelope=Envelope(0.05, 10.0, 2.0, 5.0))
        b = segment(envelope=Envelope(0.05, 14.0, 2.0, 5.0))
        with pytest.raises(PulseError):
            PulseSchedule((a, b))

    def test_out_of_order_rejected(self):
        a = segment(envelope=Envelope(0.05, 30.0, 2.0, 5.0))
        b = segment(envelope=Envelope(0.05, 10.0, 2.0, 5.0))
        with pytest.raises(PulseError):
            PulseSchedule((a, b))

    def test_touching_segments_allowed(self):
        a = segment(envelope=Envelope(0.05, 5.0, 2.0, 5.0))
        b = segment(envelope=Envelope(0.05, 15.0, 2.0, 5.0))
        assert PulseSchedule((a, b)).duration == pytest.approx(20.0)

    def test_total_before_last_segment_rejected(self):
        with pytest.raises(PulseError):
            PulseSchedule((segment(),), total=5.0)

    def test_empty_schedule(self):
        assert PulseSchedule().duration == 0.0

    def test_flux_offsets_and_dipole_coefficients(self):
        flux = PulseSegment("flux", 1, 1.0, Envelope(0.02, 5.0, 2.0, 5.0))
        dip = PulseSegment("dipole", 0, 3.0, Envelope(40.0, 15.0, 2.0, 5.0))
        sched = PulseSchedule((flux, dip))
        t = np.array([5.0, 15.0])
        off = sched.flux_offsets(t, 2)
        coef = sched.dipole_coefficients(t, 2)
        assert off[1][0] == pytest.approx(0.02 * math.cos(2 * np.pi * 5.0))
        assert off[0][0] == 0.0 and off[1][1] == 0.0
        assert coef[0][1] == pytest.approx(DIPOLE_SCALE * 40.0 * math.cos(2 * np.pi * 45.0))
        assert coef[1][1] == 0.0

    def test_json_round_trip(self, schedule, tmp_path):
        path = tmp_path / "schedule.json"
        schedule.to_json(path)
        restored = PulseSchedule.from_json(path)
        assert restored == schedule
        assert PulseSchedule.from_json(schedule.to_json()) == schedule

    def test_record_field_names(self, schedule):
        record = schedule.to_records()[0]
        for name in ("A", "mu", "sigma", "two_tau", "kind", "target", "carrier", "phase", "drag"):
            assert name in record

    def test_unknown_field_rejected(self, schedule):
        records = schedule.to_records()
        records[2]["amplitude"] = 1.0
        with pytest.raises(PulseError, match=r"segments\[2\]"):
            PulseSchedule.from_records(records)

    def test_missing_field_rejected(self, schedule):
        records = schedule.to_records()
        del records[0]["carrier"]
        with pytest.raises(PulseError, match="carrier"):
            PulseSchedule.from_records(records)

    def test_construction_is_reproducible(self, device, model, schedule):
        again = build_Uent_schedule(device, model)
        assert json.dumps(again.to_records()) == json.dumps(schedule.to_records())


class TestTableSequence:
    def test_total_duration(self, schedule):
        assert schedule.duration == pytest.approx(129.92, abs=1e-12)

    def test_segment_kinds_and_targets(self, schedule):
        kinds = [(s.kind, s.target, s.transition) for s in schedule.segments]
        assert kinds == [("flux", 0, 0), ("flux", 1, 1), ("dipole", 1, 1), ("flux", 1, 1), ("flux", 0, 0)]

    def test_first_row(self, schedule):
        env = schedule.segments[0].envelope
        assert (env.amplitude, env.mu, env.sigma, 2 * env.tau) == (0.07308, 16.0, 7.0, 28.0)

    def test_dipole_amplitude(self, schedule):
        assert schedule.segments[2].envelope.amplitude == 51.1412

    def test_supports(self, schedule):
        expected = [(2.0, 30.0), (34.0, 59.0), (63.0, 68.92), (72.92, 97.92), (101.92, 129.92)]
        got = [(s.start, s.end) for s in schedule.segments]
        assert np.allclose(got, expected, atol=1e-12)

    def test_drag_on_second_transmon_only(self, schedule):
        assert [s.drag for s in schedule.segments] == [False, True, True, True, False]

    def test_dipole_carrier_is_dressed_transition(self, schedule, model):
        wt = model.omega_tilde[1]
        assert schedule.segments[2].carrier == pytest.approx(wt[2] - wt[1], rel=1e-14)

    def test_mirror_pulses_share_carriers(self, schedule):
        s = schedule.segments
        assert s[0].carrier == s[4].carrier and s[1].carrier == s[3].carrier

    def test_anharmonicity_of_second_transmon(self, device):
        assert pulses.local_anharmonicity(device, 1, 1) == pytest.approx(-0.385, abs=0.01)

    def test_requires_two_transmons(self):
        single = DeviceSpec(transmons=(TransmonSpec(25.0, 0.25, 0.25),), omega_r=7.8, g_ge=(0.1,))
        with pytest.raises(PulseError):
            build_Uent_schedule(single)

    def test_requires_three_levels(self):
        dev = DeviceSpec(
            transmons=(TransmonSpec(25.0, 0.25, 0.25), TransmonSpec(61.0, 0.3, 0.25, levels=2)),
            omega_r=7.8,
            g_ge=(0.1, 0.1),
        )
        with pytest.raises(PulseError):
            build_Uent_schedule(dev)


class TestFluxSegment:
    def test_small_amplitude_gives_unshifted_detuning(self, device, model):
        env = Envelope(1e-7, 10.0, 3.0, 6.0)
        seg = fc_segment(model, device, 0, 0, env, strategy="resonant-on-ground")
        expected = abs(model.dressed_detuning(0, 0, 0, 0))
        assert seg.carrier == pytest.approx(expected, abs=1e-9)

    def test_carrier_uses_shift_at_effective_amplitude(self, device, model):
        env = Envelope(0.075, 20.0, 6.6873, 2 * 6.6873)
        seg = fc_segment(model, device, 0, 0, env)
        h = harmonic_decomposition(device.transmons[0], effective_amplitude(env))
        assert seg.carrier == pytest.approx(sm.carrier(model, h, 0, 0, 1, 0), rel=1e-14)

    def test_carrier_invariant_under_width_rescaling(self, device, model):
        a = fc_segment(model, device, 0, 0, Envelope(0.07, 20.0, 7.0, 14.0))
        b = fc_segment(model, device, 0, 0, Envelope(0.07, 40.0, 11.0, 22.0))
        assert a.carrier == pytest.approx(b.carrier, rel=1e-13)

    def test_unknown_strategy(self, device, model):
        with pytest.raises(sm.SidebandModelError):
            fc_segment(model, device, 0, 0, Envelope(0.07, 20.0, 7.0, 14.0), strategy="nearest")


class TestDriveHamiltonian:
    def test_zero_outside_support(self, device, schedule):
        for seg in schedule.segments:
            H = drive_hamiltonian(seg, seg.end + 0.5, device)
            assert np.all(H.data == 0.0)

    def test_flux_at_centre_displaces_by_full_amplitude(self, device):
        env = Envelope(0.05, 10.0, 3.0, 6.0)
        seg = PulseSegment("flux", 0, 0.0, env)
        H = drive_hamiltonian(seg, 10.0, device).data
        spec = device.transmons[0]
        levels = pulses.duffing_spectrum(spec, spec.josephson_energy(spec.phi + 0.05))
        rest = pulses.duffing_spectrum(spec, spec.josephson_energy(spec.phi))
        i = basis_index((1, 0, 0), device.dims)
        assert H[i, i] == pytest.approx(2 * np.pi * (levels[1] - rest[1]), rel=1e-12)
        assert np.count_nonzero(H - np.diag(np.diag(H))) == 0

    def test_dipole_term(self, device):
        seg = PulseSegment("dipole", 1, 0.0, Envelope(51.1412, 5.0, 1.48, 2.96))
        H = drive_hamiltonian(seg, 5.0, device).data
        i, j = basis_index((0, 1, 0), device.dims), basis_index((0, 2, 0), device.dims)
        assert H[i, j] == pytest.approx(DIPOLE_SCALE * 51.1412 * math.sqrt(2), rel=1e-12)
        assert np.allclose(H, H.conj().T)

    def test_matches_schedule_coefficients(self, device, schedule):
        seg = schedule.segments[2]
        t = 66.3
        H = drive_hamiltonian(seg, t, device).data
        i, j = basis_index((0, 0, 0), device.dims), basis_index((0, 1, 0), device.dims)
        assert H[i, j] == pytest.approx(schedule.dipole_coefficients(np.array([t]), 2)[1][0], rel=1e-12)

    def test_rejects_missing_transmon(self, device):
        seg = PulseSegment("flux", 3, 1.0, Envelope(0.05, 10.0, 3.0, 6.0))
        with pytest.raises(PulseError):
            drive_hamiltonian(seg, 10.0, device)
