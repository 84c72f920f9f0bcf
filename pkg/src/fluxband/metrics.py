"""Gate and process fidelities, phase fitting of the entangling gate, Bell-state populations.

The two-qubit computational basis is ordered (00, 10, 01, 11), where the
first digit is transmon 1 and the second transmon 2.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .device import DeviceSpec
from .evolve import (
    CollapseSet,
    IntegratorConfig,
    dressed_states,
    propagate_density,
    schedule_hamiltonian,
)
from .pulses import PulseSchedule

COMPUTATIONAL_LABELS = ((0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0))
PHASE_GRID = 64
PHASE_TOL = 1e-4
CHANNEL_TOL = 1e-8
# U_ent sends column j to row PERMUTATION[j] with phase index PHASE_SLOT[j]
PERMUTATION = (0, 1, 3, 2)
PHASE_SLOT = (None, 0, 2, 1)


class MetricError(ValueError):
    """Invalid input to a fidelity or fitting routine."""


def gate_fidelity(U: np.ndarray, V: np.ndarray) -> tuple[float, float]:
    """Gate fidelity |tr(U^dag V)|^2 / d^2 and the average fidelity (dF + 1) / (d + 1)."""
    U, V = np.asarray(U), np.asarray(V)
    if U.shape != V.shape or U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise MetricError(f"dimension mismatch: {U.shape} vs {V.shape}")
    d = U.shape[0]
    F = float(abs(np.trace(U.conj().T @ V)) ** 2 / d**2)
    return F, average_fidelity(F, d)


def average_fidelity(F: float, d: int) -> float:
    """(d F + 1) / (d + 1)."""
    return (d * F + 1.0) / (d + 1.0)


# ---------------------------------------------------------------------------
# Choi matrices


@dataclass(frozen=True)
class ChoiMatrix:
    """Choi state (1/d) sum_ij |i><j| (x) M(|i><j|) with unit trace.

    ``blocks[i, j]`` holds M(|i><j|) expressed in the output basis.
    """

    blocks: np.ndarray

    @property
    def d(self) -> int:
        return self.blocks.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        d, out = self.blocks.shape[0], self.blocks.shape[2]
        return np.transpose(self.blocks, (0, 2, 1, 3)).reshape(d * out, d * out) / d

    def overlap(self, other: "ChoiMatrix") -> float:
        """tr[C_self C_other]."""
        return float(np.real(np.trace(self.matrix @ other.matrix)))


def choi_of(process, d: int | None = None) -> ChoiMatrix:
    """Choi matrix of a unitary (2-D array) or a channel (callable on d x d operators).

    Raises:
        MetricError: if a channel is trace-increasing or decreases the trace
            by more than ``CHANNEL_TOL`` on the diagonal inputs.
    """
    if callable(process):
        if d is None:
            raise MetricError("the dimension is required for a channel")
        blocks = np.empty((d, d, d, d), dtype=complex)
        for i in range(d):
            for j in range(d):
                unit = np.zeros((d, d), dtype=complex)
                unit[i, j] = 1.0
                blocks[i, j] = process(unit)
        for i in range(d):
            tr = np.trace(blocks[i, i]).real
            if abs(tr - 1.0) > CHANNEL_TOL:
                raise MetricError(f"map is not trace preserving (trace {tr:.3e} on input {i})")
        return ChoiMatrix(blocks)
    U = np.asarray(process, dtype=complex)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise MetricError("unitary must be a square matrix")
    blocks = np.einsum("ai,bj->ijab", U, U.conj())
    return ChoiMatrix(blocks)


# ---------------------------------------------------------------------------
# Entangling gate phases


def U_ent(phases: Sequence[float]) -> np.ndarray:
    """Ideal entangling gate: diag(1, e^{i phi1}) on (00, 10) and an anti-diagonal (01, 11) block."""
    p1, p2, p3 = phases
    U = np.zeros((4, 4), dtype=complex)
    U[0, 0] = 1.0
    U[1, 1] = np.exp(1j * p1)
    U[2, 3] = np.exp(1j * p2)
    U[3, 2] = np.exp(1j * p3)
    return U


def _phase_vector(phases) -> np.ndarray:
    """Phase exp(i theta_j) picked up by input column j under U_ent."""
    z = np.ones(4, dtype=complex)
    for j, slot in enumerate(PHASE_SLOT):
        if slot is not None:
            z[j] = np.exp(1j * phases[slot])
    return z


@dataclass(frozen=True)
class PhaseFit:
    """Best U_ent phases (each in [0, 2 pi)) and the gate fidelity reached.

    ``alternatives`` lists other phase triples within the fit tolerance of
    the maximum (empty unless the maximum is degenerate).
    """

    phases: tuple[float, float, float]
    fidelity: float
    average: float
    alternatives: tuple[tuple[float, float, float], ...] = ()


def _quadratic_form(matrix: np.ndarray) -> np.ndarray:
    """M with F(phi) = z^dag M z / 16 for the phase vector z of U_ent(phi)."""
    M = np.asarray(matrix)
    if M.shape == (4, 4):
        a = np.array([M[PERMUTATION[j], j] for j in range(4)])
        return np.outer(a, a.conj())
    if M.shape == (4, 4, 4, 4):
        # blocks[k, j] = E(|k><j|); entry <pi(k)| E(|k><j|) |pi(j)>
        Q = np.empty((4, 4), dtype=complex)
        for k in range(4):
            for j in range(4):
                Q[k, j] = M[k, j][PERMUTATION[k], PERMUTATION[j]]
        return 0.5 * (Q + Q.conj().T)
    raise MetricError(f"expected a 4x4 gate or 4x4x4x4 Choi blocks, got shape {M.shape}")


def _form_value(Q: np.ndarray, phases) -> float:
    z = _phase_vector(phases)
    return float(np.real(z.conj() @ Q @ z)) / 16.0


def fit_phases(measured: np.ndarray, grid: int = PHASE_GRID, tol: float = PHASE_TOL) -> PhaseFit:
    """Phases of U_ent maximizing the fidelity with a measured gate or process.

    ``measured`` is either the 4x4 subspace matrix of a (possibly leaky)
    unitary evolution or the Choi blocks E(|k><j|) of a channel restricted
    to the subspace. A dense grid seeds a local refinement; the returned
    phases are reduced to [0, 2 pi).
    """
    Q = _quadratic_form(measured)
    axis = np.arange(grid) * (2 * np.pi / grid)
    e = np.exp(1j * axis)
    # z = (1, e1, e3, e2) in column order (00, 10, 01, 11)
    base = Q[0, 0].real
    lin = {slot: 2 * (Q[0, j] * 1.0) for j, slot in enumerate(PHASE_SLOT) if slot is not None}
    z1, z2, z3 = e[:, None, None], e[None, :, None], e[None, None, :]
    zs = {0: z1, 1: z2, 2: z3}
    total = base + np.real(lin[0] * z1 + lin[1] * z2 + lin[2] * z3)
    cols = {j: zs[slot] for j, slot in enumerate(PHASE_SLOT) if slot is not None}
    for j, k in itertools.combinations(cols, 2):
        total = total + 2 * np.real(Q[j, k] * np.conj(cols[j]) * cols[k])
    for j in cols:
        total = total + Q[j, j].real
    flat = np.argsort(total, axis=None)[::-1][:8]
    seeds = [np.array(np.unravel_index(i, total.shape)) * (2 * np.pi / grid) for i in flat]
    results = []
    for seed in seeds:
        res = minimize(lambda p: -_form_value(Q, p), seed, method="BFGS", options={"gtol": 1e-12})
        results.append((-float(res.fun), tuple(float(p) for p in np.mod(res.x, 2 * np.pi))))
    best_val, phases = max(results, key=lambda r: r[0])
    alternatives = []
    for value, cand in results:
        if best_val - value < tol**2 and _angular_distance(cand, phases) > 10 * tol:
            if all(_angular_distance(cand, a) > 10 * tol for a in alternatives):
                alternatives.append(cand)
    F = float(min(max(best_val, 0.0), 1.0))
    return PhaseFit(phases, F, average_fidelity(F, 4), tuple(alternatives))


def _angular_distance(a, b) -> float:
    diff = np.mod(np.asarray(a) - np.asarray(b) + np.pi, 2 * np.pi) - np.pi
    return float(np.abs(diff).max())


def process_fidelity(blocks: np.ndarray, U: np.ndarray) -> float:
    """tr[C_U C_E] for subspace Choi blocks E(|k><j|) and a target unitary."""
    return choi_of(U).overlap(ChoiMatrix(np.asarray(blocks)))


# ---------------------------------------------------------------------------
# Local equivalence to CNOT


def single_qubit_phase(theta: float, qubit: int) -> np.ndarray:
    """diag(1, e^{i theta}) on one qubit in the (00, 10, 01, 11) ordering."""
    bits = [(0, 0), (1, 0), (0, 1), (1, 1)]
    return np.diag([np.exp(1j * theta) if b[qubit] else 1.0 for b in bits])


CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


def cnot_equivalence(phases: Sequence[float]) -> tuple[float, float, float]:
    """Single-qubit phase angles turning U_ent(phases) into a CNOT.

    Returns (theta1, theta2, theta3) with theta1 = (phi2 - phi1 - phi3)/2,
    theta2 = (phi1 - phi2 - phi3)/2, theta3 = (phi3 - phi1 - phi2)/2.
    """
    p1, p2, p3 = phases
    return ((p2 - p1 - p3) / 2, (p1 - p2 - p3) / 2, (p3 - p1 - p2) / 2)


def assemble_cnot(phases: Sequence[float]) -> np.ndarray:
    """U1(theta1) U_ent U2(theta2) U1(theta3), equal to a CNOT up to a global phase.

    U1 and U2 are phase gates on transmon 1 (control) and transmon 2.
    """
    t1, t2, t3 = cnot_equivalence(phases)
    return single_qubit_phase(t1, 0) @ U_ent(phases) @ single_qubit_phase(t2, 1) @ single_qubit_phase(t3, 0)


# ---------------------------------------------------------------------------
# Bell populations


BELL_INPUTS = ("phi+", "phi-", "psi+", "psi-")


def bell_inputs() -> np.ndarray:
    """Columns (|00> + |01>), (|00> - |01>), (|10> + |11>), (|10> - |11>), each / sqrt 2."""
    s = 1 / math.sqrt(2)
    return np.array(
        [[s, s, 0, 0], [0, 0, s, s], [s, -s, 0, 0], [0, 0, s, -s]],
        dtype=complex,
    )


def bell_populations(final_states: np.ndarray, phases: Sequence[float]) -> np.ndarray:
    """Table of |<target_r | out_c>|^2 for the four Bell inputs.

    ``final_states`` holds the evolved inputs as columns (subspace
    amplitudes, rotating frame). Target r is U_ent(phases) applied to input
    r, so the ideal table is the identity.
    """
    targets = U_ent(phases) @ bell_inputs()
    return np.abs(targets.conj().T @ np.asarray(final_states)) ** 2


def bell_populations_from_gate(V: np.ndarray, phases: Sequence[float]) -> np.ndarray:
    return bell_populations(np.asarray(V) @ bell_inputs(), phases)


def bell_populations_from_process(blocks: np.ndarray, phases: Sequence[float]) -> np.ndarray:
    """Bell table from subspace Choi blocks; entry (r, c) = <target_r| E(|in_c><in_c|) |target_r>."""
    targets = U_ent(phases) @ bell_inputs()
    inputs = bell_inputs()
    table = np.empty((4, 4))
    for c in range(4):
        rho = np.einsum("k,j,kjab->ab", inputs[:, c], inputs[:, c].conj(), blocks)
        for r in range(4):
            table[r, c] = np.real(targets[:, r].conj() @ rho @ targets[:, r])
    return table


# ---------------------------------------------------------------------------
# Process evolution on the dressed computational subspace


def evolve_subspace_blocks(
    device: DeviceSpec,
    schedule: PulseSchedule,
    collapse: CollapseSet,
    config: IntegratorConfig = IntegratorConfig(),
    labels: Sequence[Sequence[int]] = COMPUTATIONAL_LABELS,
) -> np.ndarray:
    """Subspace Choi blocks E(|k><j|) in the static rotating frame.

    Only the operators with k <= j are evolved; the others follow from
    E(|j><k|) = E(|k><j|)^dag.
    """
    basis, energies = dressed_states(device, labels)
    d = basis.shape[1]
    pairs = [(k, j) for k in range(d) for j in range(k, d)]
    stack = np.array([np.outer(basis[:, k], basis[:, j].conj()) for k, j in pairs])
    H = schedule_hamiltonian(device, schedule)
    t1 = schedule.duration
    out = propagate_density(H, stack, collapse, 0.0, t1, config, dims=device.dims)
    frame = np.exp(1j * energies * t1)
    sub = np.einsum("ai,pab,bj->pij", basis.conj(), out, basis)
    sub = frame[None, :, None] * sub * frame.conj()[None, None, :]
    blocks = np.empty((d, d, d, d), dtype=complex)
    for (k, j), block in zip(pairs, sub):
        blocks[k, j] = block
        blocks[j, k] = block.conj().T
    return blocks


def average_fidelity_via_choi_evolution(
    device: DeviceSpec,
    schedule: PulseSchedule,
    collapse: CollapseSet,
    config: IntegratorConfig = IntegratorConfig(),
) -> PhaseFit:
    """Phase-fitted process fidelity of a schedule against U_ent, with its d = 4 average.

    The returned :class:`PhaseFit` holds the raw overlap tr[C_U C_E] as
    ``fidelity`` and (4 F + 1) / 5 as ``average``.
    """
    blocks = evolve_subspace_blocks(device, schedule, collapse, config)
    return fit_phases(blocks)
