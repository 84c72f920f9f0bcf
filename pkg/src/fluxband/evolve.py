"""Time-domain integration of driven Hamiltonians and Lindblad master equations.

The default integrator is a fourth-order commutator-free exponential
integrator (two exponentials of H sampled at Gauss points per step); order 2
uses a single midpoint exponential. Dissipation enters by
Strang splitting with the exact amplitude-damping channel of every decaying
mode, so each step is completely positive and trace preserving. An adaptive
Runge-Kutta integrator is available as an independent cross-check.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import comb

from .device import TWO_PI, DeviceSpec, SystemModel
from .hilbert import Operator, basis_index, embed, ladder
from .pulses import PulseSchedule

METHODS = ("piecewise", "rk")
HERMITIAN_TOL = 1e-12
LABEL_THRESHOLD = 0.5
LEAKAGE_WARN = 1e-2


class IntegrationError(RuntimeError):
    """Numerical failure: non-Hermitian input or tolerance not met."""


class LabelingError(IntegrationError):
    """A bare label has no dressed eigenstate with overlap above the threshold."""


@dataclass(frozen=True)
class IntegratorConfig:
    """Integrator selection.

    Attributes:
        method: ``"piecewise"`` (exact exponentials of sampled Hamiltonians)
            or ``"rk"`` (adaptive DOP853).
        max_step: Largest time step (ns).
        order: 2 (one midpoint exponential per step) or 4 (two exponentials
            of Gauss-point combinations per step, commutator free).
        tolerance: Relative error target of the adaptive method; also the
            norm-drift threshold reported as a failure.
        chunk: Number of steps whose Hamiltonians are built and diagonalized together.
    """

    method: str = "piecewise"
    max_step: float = 0.02
    tolerance: float = 1e-9
    chunk: int = 256
    order: int = 4

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown integrator {self.method!r}; choose from {METHODS}")
        if self.order not in (2, 4):
            raise ValueError("order must be 2 or 4")
        if self.max_step <= 0 or self.tolerance <= 0 or self.chunk < 1:
            raise ValueError("max_step, tolerance and chunk must be positive")


@dataclass(frozen=True)
class CollapseSet:
    """Decay channels in the bare basis.

    ``kappa`` is the resonator photon decay rate and ``gamma[k]`` the
    relaxation rate of transmon k through its ladder operator, both in 1/ns.
    Pure dephasing is not modelled.
    """

    kappa: float = 0.0
    gamma: tuple[float, ...] = ()

    def __post_init__(self):
        gamma = tuple(float(g) for g in self.gamma)
        if self.kappa < 0 or any(g < 0 for g in gamma):
            raise ValueError("decay rates must be non-negative")
        object.__setattr__(self, "gamma", gamma)

    @classmethod
    def from_device(cls, device: DeviceSpec) -> "CollapseSet":
        """kappa/2pi in MHz becomes 2 pi 1e-3 kappa per ns; T1 in us becomes 1e-3 / T1 per ns."""
        gamma = tuple(0.0 if math.isinf(t1) else 1e-3 / t1 for t1 in device.T1)
        return cls(kappa=TWO_PI * 1e-3 * device.kappa, gamma=gamma)

    def channels(self, dims: Sequence[int]) -> list[tuple[int, float]]:
        """(slot, rate) pairs with nonzero rate; the resonator is the last slot."""
        out = [(k, g) for k, g in enumerate(self.gamma) if g > 0]
        if self.kappa > 0:
            out.append((len(dims) - 1, self.kappa))
        return out

    @property
    def is_empty(self) -> bool:
        return self.kappa == 0 and all(g == 0 for g in self.gamma)


@dataclass
class DrivenHamiltonian:
    """H(t) = static + diag(diagonal(t)) + sum_k coefficient_k(t) operator_k (rad/ns)."""

    static: np.ndarray
    dims: tuple[int, ...]
    diagonal: Callable[[np.ndarray], np.ndarray] | None = None
    terms: tuple[tuple[np.ndarray, Callable[[np.ndarray], np.ndarray]], ...] = ()
    breakpoints: tuple[float, ...] = ()

    def batch(self, times: np.ndarray) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        out = np.broadcast_to(self.static, (len(times),) + self.static.shape).copy()
        if self.diagonal is not None:
            d = self.diagonal(times)
            idx = np.arange(self.static.shape[0])
            out[:, idx, idx] += d
        for op, coeff in self.terms:
            c = np.asarray(coeff(times))
            if np.any(c != 0):
                out = out + c[:, None, None] * op
        return out

    def __call__(self, t: float) -> np.ndarray:
        return self.batch(np.array([t]))[0]


def static_hamiltonian(device: DeviceSpec) -> DrivenHamiltonian:
    model = SystemModel(device)
    return DrivenHamiltonian(model.hamiltonian(model.static_fluxes), model.dims)


def schedule_hamiltonian(device: DeviceSpec, schedule: PulseSchedule) -> DrivenHamiltonian:
    """Lab-frame Hamiltonian of the device driven by a schedule.

    Flux pulses move the Duffing level energies of their target; dipole
    pulses couple through ``b + b^dag`` of their target.
    """
    model = SystemModel(device)
    n_tr = len(device.transmons)
    base = model.static
    flux_targets = sorted({s.target for s in schedule.segments if s.kind == "flux"})
    dip_targets = sorted({s.target for s in schedule.segments if s.kind == "dipole"})
    for k in flux_targets + dip_targets:
        if k >= n_tr:
            raise ValueError(f"schedule drives transmon {k}; the device has {n_tr}")

    def diagonal(times):
        offsets = schedule.flux_offsets(times, n_tr)
        fluxes = [model.static_fluxes[k] + offsets[k] for k in range(n_tr)]
        return model.diagonal(fluxes)

    terms = []
    for k in dip_targets:
        b = model.lowering[k]
        terms.append((b + b.conj().T, lambda times, k=k: schedule.dipole_coefficients(times, n_tr)[k]))
    edges = sorted({float(x) for seg in schedule.segments for x in (seg.start, seg.end)})
    return DrivenHamiltonian(base, model.dims, diagonal, tuple(terms), tuple(edges))


def _as_batch_callable(H):
    if hasattr(H, "batch"):
        return H.batch
    def batch(times):
        mats = [H(t) for t in times]
        return np.array([m.data if isinstance(m, Operator) else np.asarray(m) for m in mats])
    return batch


def _check_hermitian(Hs: np.ndarray):
    scale = max(np.abs(Hs).max(), 1e-300)
    err = np.abs(Hs - np.conj(np.swapaxes(Hs, -1, -2))).max()
    if err > HERMITIAN_TOL * scale:
        raise IntegrationError(f"non-Hermitian Hamiltonian sample (anti-Hermitian part {err:.3e})")


def _step_grid(t0: float, t1: float, max_step: float) -> tuple[int, float]:
    span = t1 - t0
    if span < 0:
        raise ValueError("t1 must not precede t0")
    steps = max(1, int(math.ceil(span / max_step - 1e-9))) if span > 0 else 0
    return steps, (span / steps if steps else 0.0)


def time_grid(H, t0: float, t1: float, max_step: float) -> np.ndarray:
    """Step edges from t0 to t1, splitting at the Hamiltonian's breakpoints.

    Pulse truncations are discontinuities; placing them on step edges keeps
    the integrator at its nominal order.
    """
    if t1 < t0:
        raise ValueError("t1 must not precede t0")
    cuts = [t0] + [b for b in getattr(H, "breakpoints", ()) if t0 < b < t1] + [t1]
    edges = [np.array([t0])]
    for a, b in zip(cuts, cuts[1:]):
        steps, dt = _step_grid(a, b, max_step)
        if steps:
            edges.append(a + dt * np.arange(1, steps + 1))
            edges[-1][-1] = b
    return np.concatenate(edges) if t1 > t0 else np.array([t0])


GAUSS_OFFSET = math.sqrt(3.0) / 6.0
CF4_WEIGHTS = ((3.0 + 2.0 * math.sqrt(3.0)) / 12.0, (3.0 - 2.0 * math.sqrt(3.0)) / 12.0)


def _exponentials(Hs: np.ndarray, dts: np.ndarray):
    _check_hermitian(Hs)
    if not np.iscomplexobj(Hs) or np.abs(Hs.imag).max() == 0.0:
        Hs = np.ascontiguousarray(Hs.real)
    w, v = np.linalg.eigh(Hs)
    return v, np.exp(-1j * w * dts[:, None])


def _step_propagators(H, edges: np.ndarray, config: IntegratorConfig):
    """Yield, per step, the exponential factors (v, phases) in the order they act."""
    batch = _as_batch_callable(H)
    for first in range(0, len(edges) - 1, config.chunk):
        left = edges[first : first + config.chunk]
        right = edges[first + 1 : first + config.chunk + 1]
        left = left[: len(right)]
        dts = right - left
        if config.order == 2:
            v, ph = _exponentials(batch(left + 0.5 * dts), dts)
            for i in range(len(dts)):
                yield ((v[i], ph[i]),)
        else:
            early = batch(left + (0.5 - GAUSS_OFFSET) * dts)
            late = batch(left + (0.5 + GAUSS_OFFSET) * dts)
            big, small = CF4_WEIGHTS
            v1, ph1 = _exponentials(big * early + small * late, dts)
            v2, ph2 = _exponentials(small * early + big * late, dts)
            for i in range(len(dts)):
                yield ((v1[i], ph1[i]), (v2[i], ph2[i]))


def _rk_state(H, psi0: np.ndarray, t0: float, t1: float, config: IntegratorConfig) -> np.ndarray:
    shape = psi0.shape

    def rhs(t, y):
        psi = (y[: y.size // 2] + 1j * y[y.size // 2 :]).reshape(shape)
        Ht = H(t)
        Ht = Ht.data if isinstance(Ht, Operator) else Ht
        d = (-1j * (Ht @ psi)).ravel()
        return np.concatenate([d.real, d.imag])

    y0 = np.concatenate([psi0.ravel().real, psi0.ravel().imag])
    sol = solve_ivp(rhs, (t0, t1), y0, method="DOP853", rtol=config.tolerance,
                    atol=config.tolerance * 1e-3, max_step=config.max_step)
    if sol.status < 0:
        raise IntegrationError(f"adaptive integrator failed: {sol.message}")
    y = sol.y[:, -1]
    return (y[: y.size // 2] + 1j * y[y.size // 2 :]).reshape(shape)


def propagate_state(H, psi0, t0: float, t1: float, config: IntegratorConfig = IntegratorConfig()) -> np.ndarray:
    """Evolve a state vector (or a matrix whose columns are states) from t0 to t1.

    ``H`` is a :class:`DrivenHamiltonian` or any callable returning the
    Hamiltonian matrix (rad/ns) at time t.
    """
    psi = np.array(psi0, dtype=complex)
    norms0 = np.linalg.norm(psi, axis=0)
    if config.method == "rk":
        if t1 > t0:
            H0 = H(0.5 * (t0 + t1))
            _check_hermitian(np.asarray(H0.data if isinstance(H0, Operator) else H0)[None])
            psi = _rk_state(H, psi, t0, t1, config)
        drift = np.abs(np.linalg.norm(psi, axis=0) - norms0).max()
        if drift > 100 * config.tolerance:
            raise IntegrationError(f"norm drift {drift:.2e} exceeds tolerance {config.tolerance:.1e}")
        return psi
    for factors in _step_propagators(H, time_grid(H, t0, t1, config.max_step), config):
        for v, ph in factors:
            psi = v @ (ph[:, None] * (v.conj().T @ psi)) if psi.ndim == 2 else v @ (ph * (v.conj().T @ psi))
    drift = np.abs(np.linalg.norm(psi, axis=0) - norms0).max()
    if drift > max(1e-8, config.tolerance):
        raise IntegrationError(f"norm drift {drift:.2e} exceeds tolerance")
    return psi


def propagator(H, t0: float, t1: float, config: IntegratorConfig = IntegratorConfig()) -> np.ndarray:
    """Full unitary U(t1, t0)."""
    order = H.static.shape[0] if hasattr(H, "static") else np.asarray(_as_matrix(H(t0))).shape[0]
    return propagate_state(H, np.eye(order, dtype=complex), t0, t1, config)


def _as_matrix(m):
    return m.data if isinstance(m, Operator) else m


# ---------------------------------------------------------------------------
# Open-system evolution


def damping_kraus(levels: int, rate: float, t: float) -> np.ndarray:
    """Kraus operators of ladder-operator damping exp(t D[sqrt(rate) b]) on ``levels`` states.

    Returns an array (levels, levels, levels) with K_l[n - l, n] =
    sqrt(C(n, l)) p^((n - l)/2) (1 - p)^(l/2), p = exp(-rate t).
    """
    p = math.exp(-rate * t)
    K = np.zeros((levels, levels, levels))
    for l in range(levels):
        for n in range(l, levels):
            K[l, n - l, n] = math.sqrt(comb(n, l) * p ** (n - l) * (1.0 - p) ** l)
    return K


def _apply_channel(rho: np.ndarray, kraus: np.ndarray, slot: int, dims: tuple[int, ...]) -> np.ndarray:
    """sum_l K_l rho K_l^dag with K acting on ``slot``; rho has shape (B, D, D)."""
    B = rho.shape[0]
    pre = int(np.prod(dims[:slot]))
    d = dims[slot]
    post = int(np.prod(dims[slot + 1 :]))
    r = rho.reshape(B, pre, d, post, pre, d, post)
    out = np.einsum("lij,bpjqrks,lmk->bpiqrms", kraus, r, kraus, optimize=True)
    return out.reshape(rho.shape)


def _dissipate(rho, channels, dims, t):
    for slot, rate in channels:
        rho = _apply_channel(rho, damping_kraus(dims[slot], rate, t), slot, dims)
    return rho


def _lindblad_rhs_factory(H, collapse: CollapseSet, dims, shape):
    ops = []
    for slot, rate in collapse.channels(dims):
        L = math.sqrt(rate) * embed(ladder(dims[slot]), slot, dims).data
        ops.append(L)
    LdL = sum((L.conj().T @ L for L in ops), np.zeros((shape[-1], shape[-1])))

    def rhs(t, y):
        rho = (y[: y.size // 2] + 1j * y[y.size // 2 :]).reshape(shape)
        Ht = _as_matrix(H(t))
        d = -1j * (Ht @ rho - rho @ Ht)
        for L in ops:
            d = d + L @ rho @ L.conj().T
        d = d - 0.5 * (LdL @ rho + rho @ LdL)
        d = d.ravel()
        return np.concatenate([d.real, d.imag])

    return rhs


def propagate_density(
    H,
    rho0,
    collapse: CollapseSet,
    t0: float,
    t1: float,
    config: IntegratorConfig = IntegratorConfig(),
    dims: Sequence[int] | None = None,
) -> np.ndarray:
    """Evolve a density matrix (or a stack of operators) under the Lindblad equation.

    ``rho0`` may have shape (D, D) or (B, D, D); each operator is mapped by
    the same channel, which is how Choi blocks are propagated.
    """
    dims = tuple(dims if dims is not None else getattr(H, "dims"))
    rho = np.array(rho0, dtype=complex)
    single = rho.ndim == 2
    if single:
        rho = rho[None]
    traces0 = np.einsum("bii->b", rho)
    if config.method == "rk":
        rhs = _lindblad_rhs_factory(H, collapse, dims, rho.shape[1:])
        out = []
        for block in rho:
            y0 = np.concatenate([block.ravel().real, block.ravel().imag])
            sol = solve_ivp(rhs, (t0, t1), y0, method="DOP853", rtol=config.tolerance,
                            atol=config.tolerance * 1e-3, max_step=config.max_step)
            if sol.status < 0:
                raise IntegrationError(f"adaptive integrator failed: {sol.message}")
            y = sol.y[:, -1]
            out.append((y[: y.size // 2] + 1j * y[y.size // 2 :]).reshape(block.shape))
        rho = np.array(out)
    else:
        channels = collapse.channels(dims)
        edges = time_grid(H, t0, t1, config.max_step)
        dts = np.diff(edges)
        if channels and len(dts):
            rho = _dissipate(rho, channels, dims, 0.5 * dts[0])
        for i, factors in enumerate(_step_propagators(H, edges, config)):
            U = None
            for v, ph in factors:
                step = (v * ph) @ v.conj().T
                U = step if U is None else step @ U
            rho = U @ rho @ U.conj().T
            if channels:
                span = 0.5 * (dts[i] + (dts[i + 1] if i + 1 < len(dts) else 0.0))
                rho = _dissipate(rho, channels, dims, span)
    drift = np.abs(np.einsum("bii->b", rho) - traces0).max()
    if drift > max(1e-8, 10 * config.tolerance) and config.method == "piecewise":
        raise IntegrationError(f"trace drift {drift:.2e} exceeds tolerance")
    return rho[0] if single else rho


# ---------------------------------------------------------------------------
# Dressed states and gate extraction


def dressed_states(device: DeviceSpec, labels: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvectors (columns) and energies (rad/ns) of the static Hamiltonian for bare labels.

    Each label is matched to the eigenvector with the largest weight on the
    bare basis state; a weight below 0.5 raises :class:`LabelingError`.
    """
    H = static_hamiltonian(device).static
    w, v = np.linalg.eigh(H)
    dims = device.dims
    vectors, energies, used = [], [], set()
    for lab in labels:
        i = basis_index(lab, dims)
        weights = np.abs(v[i]) ** 2
        j = int(np.argmax(weights))
        if weights[j] < LABEL_THRESHOLD or j in used:
            raise LabelingError(f"bare state {tuple(lab)} has no unique dressed partner (weight {weights[j]:.3f})")
        used.add(j)
        vec = v[:, j] * np.exp(-1j * np.angle(v[i, j]))
        vectors.append(vec)
        energies.append(w[j])
    return np.array(vectors).T, np.array(energies)


def rotating_frame_matrix(U_columns: np.ndarray, basis: np.ndarray, energies: np.ndarray, elapsed: float) -> np.ndarray:
    """<b_i| U |b_j> with the static dressed phases exp(-i E_i t) removed."""
    M = basis.conj().T @ U_columns
    return np.exp(1j * energies * elapsed)[:, None] * M


def leakage(matrix: np.ndarray) -> float:
    """Average population lost from the subspace, 1 - |M|_F^2 / d."""
    return float(1.0 - np.linalg.norm(matrix) ** 2 / matrix.shape[1])


def extract_gate(
    device: DeviceSpec,
    schedule: PulseSchedule,
    labels: Sequence[Sequence[int]],
    config: IntegratorConfig = IntegratorConfig(),
    t1: float | None = None,
) -> np.ndarray:
    """Gate realized by a schedule on dressed basis states, in the static rotating frame."""
    basis, energies = dressed_states(device, labels)
    t1 = schedule.duration if t1 is None else t1
    H = schedule_hamiltonian(device, schedule)
    out = propagate_state(H, basis, 0.0, t1, config)
    M = rotating_frame_matrix(out, basis, energies, t1)
    lost = leakage(M)
    if lost > LEAKAGE_WARN:
        warnings.warn(f"gate leaks {lost:.3e} of the subspace population", stacklevel=2)
    return M
