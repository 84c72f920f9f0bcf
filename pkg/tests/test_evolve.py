import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from fluxband import evolve
from fluxband.device import DeviceSpec, TransmonSpec
from fluxband.evolve import (
    CollapseSet,
    DrivenHamiltonian,
    IntegrationError,
    IntegratorConfig,
    LabelingError,
    damping_kraus,
    dressed_states,
    extract_gate,
    propagate_density,
    propagate_state,
    propagator,
    schedule_hamiltonian,
    static_hamiltonian,
)
from fluxband.hilbert import basis_index, basis_state, embed, ladder
from fluxband.pulses import Envelope, PulseSchedule, PulseSegment, build_Uent_schedule

TWO_PI = 2 * np.pi
LABELS = ((0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0))


def small_device(kappa=0.0, T1=(math.inf,), levels=3, photons=3, g=0.1):
    return DeviceSpec(
        transmons=(TransmonSpec(25.0, 0.25, 0.25, levels=levels),),
        omega_r=7.8,
        resonator_levels=photons,
        g_ge=(g,),
        kappa=kappa,
        T1=T1,
    )


def table_device(**kw):
    return DeviceSpec(
        transmons=(TransmonSpec(25.0, 0.25, 0.25), TransmonSpec(61.0, 0.3, 0.25)),
        omega_r=7.8,
        g_ge=(0.1, 0.1),
        **kw,
    )


def driven_small():
    """Single transmon with one flux pulse and one dipole pulse."""
    dev = small_device()
    flux = PulseSegment("flux", 0, 2.1, Envelope(0.05, 3.0, 1.0, 2.0))
    dip = PulseSegment("dipole", 0, 5.6, Envelope(60.0, 7.0, 0.8, 1.6))
    return dev, PulseSchedule((flux, dip), total=9.0)


def jc_hamiltonian(omega, g, photons=4):
    """Resonant two-level system plus oscillator in the rotating-wave form, qubit slot first."""
    dims = (2, photons)
    a = embed(ladder(photons), 1, dims).data
    s = embed(ladder(2), 0, dims).data
    H = omega * (a.conj().T @ a + s.conj().T @ s) + g * (s.conj().T @ a + a.conj().T @ s)
    return DrivenHamiltonian(H, dims)


class TestConfig:
    def test_defaults(self):
        cfg = IntegratorConfig()
        assert cfg.method == "piecewise" and cfg.max_step > 0

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            IntegratorConfig(method="euler")

    @pytest.mark.parametrize("field", ["max_step", "tolerance", "chunk"])
    def test_nonpositive(self, field):
        with pytest.raises(ValueError):
            IntegratorConfig(**{field: 0})

    def test_unsupported_order(self):
        with pytest.raises(ValueError):
            IntegratorConfig(order=3)


class TestUnitaryEvolution:
    def test_static_matches_matrix_exponential(self):
        H = static_hamiltonian(small_device())
        U = propagator(H, 0.0, 3.7)
        assert np.allclose(U, expm(-1j * H.static * 3.7), atol=1e-10)

    def test_driven_propagator_unitary(self):
        dev, sched = driven_small()
        U = propagator(schedule_hamiltonian(dev, sched), 0.0, sched.duration)
        assert np.abs(U.conj().T @ U - np.eye(U.shape[0])).max() <= 1e-8

    def test_table_device_propagator_unitary(self):
        dev = table_device()
        sched = build_Uent_schedule(dev)
        U = propagator(schedule_hamiltonian(dev, sched), 60.0, 70.0)
        assert np.abs(U.conj().T @ U - np.eye(U.shape[0])).max() <= 1e-8

    def test_rk_matches_piecewise(self):
        dev, sched = driven_small()
        H = schedule_hamiltonian(dev, sched)
        psi0 = basis_state((1, 0), dev.dims).astype(complex)
        fine = propagate_state(H, psi0, 0.0, sched.duration, IntegratorConfig(max_step=0.0025))
        rk = propagate_state(H, psi0, 0.0, sched.duration, IntegratorConfig("rk", max_step=0.01, tolerance=1e-10))
        assert np.abs(fine - rk).max() < 1e-4

    @pytest.mark.parametrize("order,minimum", [(2, 1.8), (4, 3.6)])
    def test_convergence_order(self, order, minimum):
        dev, sched = driven_small()
        H = schedule_hamiltonian(dev, sched)
        psi0 = basis_state((1, 0), dev.dims).astype(complex)
        ref = propagate_state(H, psi0, 0.0, 5.0, IntegratorConfig("rk", max_step=0.005, tolerance=1e-12))
        errors = [
            np.linalg.norm(propagate_state(H, psi0, 0.0, 5.0, IntegratorConfig(max_step=dt, order=order)) - ref)
            for dt in (0.04, 0.02, 0.01)
        ]
        orders = [math.log2(errors[i] / errors[i + 1]) for i in range(2)]
        assert min(orders) >= minimum

    def test_grid_lands_on_pulse_edges(self):
        dev, sched = driven_small()
        H = schedule_hamiltonian(dev, sched)
        edges = evolve.time_grid(H, 0.0, sched.duration, 0.3)
        for seg in sched.segments:
            assert np.min(np.abs(edges - seg.start)) == 0.0
            assert np.min(np.abs(edges - seg.end)) == 0.0
        assert np.diff(edges).max() <= 0.3 + 1e-12
        assert edges[0] == 0.0 and edges[-1] == sched.duration

    def test_step_grid_covers_window_exactly(self):
        steps, dt = evolve._step_grid(0.0, 1.0, 0.3)
        assert steps == 4 and dt == pytest.approx(0.25)

    def test_batch_of_states(self):
        H = static_hamiltonian(small_device())
        cols = np.eye(H.static.shape[0], dtype=complex)[:, :3]
        out = propagate_state(H, cols, 0.0, 1.0)
        for k in range(3):
            assert np.allclose(out[:, k], propagate_state(H, cols[:, k], 0.0, 1.0))

    def test_callable_hamiltonian(self):
        H = static_hamiltonian(small_device())
        psi0 = np.eye(H.static.shape[0], dtype=complex)[:, 1]
        a = propagate_state(lambda t: H.static, psi0, 0.0, 2.0)
        b = propagate_state(H, psi0, 0.0, 2.0)
        assert np.allclose(a, b, atol=1e-12)

    def test_non_hermitian_rejected(self):
        H = np.array([[0.0, 1.0], [0.0, 0.0]])
        with pytest.raises(IntegrationError):
            propagate_state(lambda t: H, np.array([1.0, 0.0]), 0.0, 1.0)

    def test_non_hermitian_rejected_rk(self):
        H = np.array([[0.0, 1.0], [0.0, 0.0]])
        with pytest.raises(IntegrationError):
            propagate_state(lambda t: H, np.array([1.0, 0.0]), 0.0, 1.0, IntegratorConfig("rk"))

    def test_zero_window(self):
        psi = np.array([1.0, 0.0], dtype=complex)
        assert np.array_equal(propagate_state(lambda t: np.eye(2), psi, 1.0, 1.0), psi)

    def test_reversed_window(self):
        with pytest.raises(ValueError):
            propagate_state(lambda t: np.eye(2), np.array([1.0, 0.0]), 1.0, 0.0)


class TestJaynesCummingsSwap:
    @pytest.mark.parametrize("method", ["piecewise", "rk"])
    def test_full_swap_at_quarter_period(self, method):
        g = TWO_PI * 0.05
        H = jc_hamiltonian(TWO_PI * 5.0, g)
        psi0 = basis_state((1, 0), H.dims).astype(complex)
        t = math.pi / (2 * g)
        out = propagate_state(H, psi0, 0.0, t, IntegratorConfig(method, max_step=0.01, tolerance=1e-10))
        assert abs(out[basis_index((0, 1), H.dims)]) ** 2 == pytest.approx(1.0, abs=1e-8)


class TestKraus:
    @settings(max_examples=20, deadline=None)
    @given(st.integers(2, 6), st.floats(0.0, 5.0))
    def test_trace_preserving(self, levels, gt):
        K = damping_kraus(levels, 1.0, gt)
        total = sum(k.T @ k for k in K)
        assert np.allclose(total, np.eye(levels), atol=1e-12)

    def test_semigroup(self):
        K1 = damping_kraus(4, 0.7, 0.3)
        K2 = damping_kraus(4, 0.7, 0.5)
        K = damping_kraus(4, 0.7, 0.8)
        rho = np.diag([0.1, 0.2, 0.3, 0.4]).astype(complex)
        rho[0, 3] = rho[3, 0] = 0.05

        def apply(Ks, r):
            return sum(k @ r @ k.T for k in Ks)

        assert np.allclose(apply(K2, apply(K1, rho)), apply(K, rho), atol=1e-14)


class TestDissipation:
    def test_photon_number_decays_exponentially(self):
        dims = (2, 4)
        H = DrivenHamiltonian(np.zeros((8, 8)), dims)
        kappa = 0.3
        psi = basis_state((0, 2), dims)
        rho = np.outer(psi, psi).astype(complex)
        n_op = embed(ladder(4), 1, dims).data
        n_op = n_op.conj().T @ n_op
        for t in (0.5, 2.0, 5.0):
            out = propagate_density(H, rho, CollapseSet(kappa=kappa), 0.0, t, IntegratorConfig(max_step=0.05))
            assert np.real(np.trace(n_op @ out)) == pytest.approx(2 * math.exp(-kappa * t), rel=1e-10)

    def test_from_device_units(self):
        dev = small_device(kappa=5.0, T1=(2.0,))
        c = CollapseSet.from_device(dev)
        assert c.kappa == pytest.approx(TWO_PI * 5e-3)
        assert c.gamma == (pytest.approx(5e-4),)
        assert CollapseSet.from_device(small_device()).is_empty

    def test_negative_rate_rejected(self):
        with pytest.raises(ValueError):
            CollapseSet(kappa=-1.0)

    def test_trace_preserved(self):
        dev, sched = driven_small()
        dev = small_device(kappa=20.0, T1=(0.5,))
        H = schedule_hamiltonian(dev, sched)
        psi = basis_state((1, 1), dev.dims)
        rho = np.outer(psi, psi).astype(complex)
        out = propagate_density(H, rho, CollapseSet.from_device(dev), 0.0, sched.duration)
        assert abs(np.trace(out) - 1.0) <= 1e-8
        assert np.allclose(out, out.conj().T, atol=1e-12)
        assert np.linalg.eigvalsh(out).min() > -1e-10

    def test_unitary_limit_equivalence(self):
        dev, sched = driven_small()
        H = schedule_hamiltonian(dev, sched)
        psi0 = (basis_state((1, 0), dev.dims) + basis_state((0, 1), dev.dims)) / math.sqrt(2)
        psi = propagate_state(H, psi0.astype(complex), 0.0, sched.duration)
        rho = propagate_density(H, np.outer(psi0, psi0).astype(complex), CollapseSet(), 0.0, sched.duration)
        assert np.abs(rho - np.outer(psi, psi.conj())).max() < 1e-10

    def test_splitting_matches_adaptive_lindblad(self):
        dev, sched = driven_small()
        dev = small_device(kappa=30.0, T1=(0.2,))
        H = schedule_hamiltonian(dev, sched)
        psi = basis_state((1, 1), dev.dims)
        rho = np.outer(psi, psi).astype(complex)
        collapse = CollapseSet.from_device(dev)
        split = propagate_density(H, rho, collapse, 0.0, 6.0, IntegratorConfig(max_step=0.005))
        rk = propagate_density(H, rho, collapse, 0.0, 6.0, IntegratorConfig("rk", max_step=0.01, tolerance=1e-10))
        assert np.abs(split - rk).max() < 1e-4

    def test_stack_of_operators(self):
        dev = small_device(kappa=30.0)
        H = static_hamiltonian(dev)
        D = H.static.shape[0]
        stack = np.zeros((2, D, D), dtype=complex)
        stack[0, 1, 1] = 1.0
        stack[1, 1, 2] = 1.0
        out = propagate_density(H, stack, CollapseSet.from_device(dev), 0.0, 1.0)
        single = propagate_density(H, stack[1], CollapseSet.from_device(dev), 0.0, 1.0)
        assert np.allclose(out[1], single, atol=1e-14)

    def test_purcell_rate(self):
        kappa_mhz = 10.0
        dev = small_device(kappa=kappa_mhz, levels=2, photons=3)
        H = static_hamiltonian(dev)
        basis, _ = dressed_states(dev, [(1, 0)])
        rho = np.outer(basis[:, 0], basis[:, 0].conj())
        t = 1000.0
        out = propagate_density(H, rho, CollapseSet.from_device(dev), 0.0, t, IntegratorConfig(max_step=0.05))
        excited = embed(ladder(2), 0, dev.dims).data
        excited = excited.conj().T @ excited
        rate = -math.log(np.real(np.trace(excited @ out)) / np.real(np.trace(excited @ rho))) / t
        from fluxband.device import duffing_spectrum

        spec = dev.transmons[0]
        levels = duffing_spectrum(spec, spec.josephson_energy(spec.phi))
        delta = TWO_PI * (levels[1] - levels[0] - dev.omega_r)
        g = TWO_PI * dev.g_ge[0]
        expected = (g / delta) ** 2 * TWO_PI * kappa_mhz * 1e-3
        assert rate == pytest.approx(expected, rel=0.3)


class TestGateExtraction:
    def test_dressed_states_are_eigenvectors(self):
        dev = table_device()
        basis, energies = dressed_states(dev, LABELS)
        H = static_hamiltonian(dev).static
        assert np.allclose(H @ basis, basis * energies, atol=1e-9)

    def test_labeling_threshold(self, monkeypatch):
        dev = small_device(g=0.6)
        monkeypatch.setattr(evolve, "LABEL_THRESHOLD", 0.999)
        with pytest.raises(LabelingError):
            dressed_states(dev, [(1, 0)])

    def test_idle_schedule_is_identity(self):
        dev = table_device()
        V = extract_gate(dev, PulseSchedule((), total=20.0), LABELS)
        assert np.allclose(V, np.eye(4), atol=1e-10)

    @pytest.mark.slow
    def test_ground_state_invariant_under_sequence(self):
        dev = table_device()
        sched = build_Uent_schedule(dev)
        basis, energies = dressed_states(dev, LABELS[:1])
        out = propagate_state(schedule_hamiltonian(dev, sched), basis[:, 0], 0.0, sched.duration)
        assert abs(basis[:, 0].conj() @ out) ** 2 > 0.99
