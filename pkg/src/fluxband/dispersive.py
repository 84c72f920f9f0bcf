"""Dispersive and diagonalizing frames for qubits and many-level systems.

Scalar parameters are kept in the units they are given in (GHz for the
public constructors). Operators are returned in angular units (rad/ns) on a
``[qubit/MLS 1, qubit/MLS 2, resonator]`` space; generators of unitary
frame changes are dimensionless and anti-Hermitian.

Two-level conventions: index 0 is the ground state, ``sigma_z = |1><1| -
|0><0|`` and ``sigma_minus = |0><1|``. The 4x4 blocks use the basis
``(|ee>, |eg>, |ge>, |gg>)`` with the first letter for qubit 1.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .device import DeviceSpec, TWO_PI, TransmonSpec, duffing_spectrum, harmonic_decomposition
from .hilbert import Operator, embed, ladder

DISPERSIVE_WARN = 0.5


class DegenerateConfigurationError(ValueError):
    """A denominator of the perturbative frame change vanishes."""


def _nonzero(value: float, what: str):
    if value == 0 or not np.isfinite(value):
        raise DegenerateConfigurationError(f"{what} vanishes")


# ---------------------------------------------------------------------------
# Two-level systems


@dataclass(frozen=True)
class TlsDispersiveParams:
    """Second-order dispersive parameters of two qubits sharing one mode."""

    omega_a: tuple[float, float]
    omega_r: float
    g: tuple[float, float]
    Delta: tuple[float, float]
    Sigma: tuple[float, float]
    lam: tuple[float, float]
    Lam: tuple[float, float]
    chi: tuple[float, float]
    mu: tuple[float, float]
    S: tuple[float, float]
    xi: tuple[float, float]
    omega_tilde: tuple[float, float]
    J: float
    Delta_Q: float
    Sigma_Q: float
    Delta_S: float
    Sigma_S: float
    S_J_plus: float
    S_J_minus: float


def tls_params(omega_a1, omega_a2, omega_r, g1, g2) -> TlsDispersiveParams:
    """Dispersive shifts, Lamb-shifted frequencies and the exchange coupling J."""
    omega_a = (float(omega_a1), float(omega_a2))
    g = (float(g1), float(g2))
    Delta = tuple(w - omega_r for w in omega_a)
    Sigma = tuple(w + omega_r for w in omega_a)
    for k in range(2):
        _nonzero(Delta[k], f"qubit {k + 1} detuning Delta")
        _nonzero(Sigma[k], f"qubit {k + 1} sum frequency Sigma")
    lam = tuple(gk / d for gk, d in zip(g, Delta))
    Lam = tuple(gk / s for gk, s in zip(g, Sigma))
    if max(abs(x) for x in lam + Lam) >= DISPERSIVE_WARN:
        warnings.warn("dispersive ratio g/Delta >= 0.5; expansion unreliable", stacklevel=2)
    chi = tuple(gk * l for gk, l in zip(g, lam))
    mu = tuple(gk * l for gk, l in zip(g, Lam))
    S = tuple(c + m for c, m in zip(chi, mu))
    xi = tuple(s / (4.0 * omega_r) for s in S)
    omega_tilde = tuple(w + s for w, s in zip(omega_a, S))
    J = g[0] * g[1] / 2.0 * sum(1.0 / d - 1.0 / s for d, s in zip(Delta, Sigma))
    Delta_Q = omega_tilde[0] - omega_tilde[1]
    Sigma_Q = omega_tilde[0] + omega_tilde[1]
    _nonzero(Delta_Q, "qubit-qubit detuning Delta_Q")
    return TlsDispersiveParams(
        omega_a=omega_a,
        omega_r=float(omega_r),
        g=g,
        Delta=Delta,
        Sigma=Sigma,
        lam=lam,
        Lam=Lam,
        chi=chi,
        mu=mu,
        S=S,
        xi=xi,
        omega_tilde=omega_tilde,
        J=J,
        Delta_Q=Delta_Q,
        Sigma_Q=Sigma_Q,
        Delta_S=S[0] - S[1],
        Sigma_S=S[0] + S[1],
        S_J_plus=J**2 * (1.0 / Sigma_Q + 1.0 / Delta_Q),
        S_J_minus=J**2 * (1.0 / Sigma_Q - 1.0 / Delta_Q),
    )


def _stark_sums(n, p: TlsDispersiveParams):
    return p.Delta_Q + 2.0 * n * p.Delta_S, p.Sigma_Q + 2.0 * n * p.Sigma_S


def block_hamiltonian(n: int, p: TlsDispersiveParams) -> np.ndarray:
    """Dispersive Hamiltonian restricted to photon number n (basis ee, eg, ge, gg)."""
    if n < 0:
        raise ValueError("photon number must be non-negative")
    dq, sq = _stark_sums(n, p)
    J = p.J
    return np.array(
        [
            [sq / 2, 0, 0, J],
            [0, dq / 2, J, 0],
            [0, J, -dq / 2, 0],
            [J, 0, 0, -sq / 2],
        ],
        dtype=float,
    )


@dataclass(frozen=True)
class MixingAngles:
    n: int
    alpha: float
    beta: float


def _mixing_angle(J: float, splitting: float) -> float:
    # arctan[(s/2 - sign(s) R)/J] rewritten as -J/(s/2 + sign(s) R): finite as
    # J -> 0 and keeps each eigenvector attached to its bare label when s < 0
    if J == 0 and splitting == 0:
        raise DegenerateConfigurationError("J and the block splitting both vanish")
    half = splitting / 2.0
    sign = 1.0 if splitting >= 0 else -1.0
    radius = np.hypot(J, half)
    return float(np.arctan(-J / (half + sign * radius)))


def mixing_angles(n: int, p: TlsDispersiveParams) -> MixingAngles:
    dq, sq = _stark_sums(n, p)
    return MixingAngles(n=n, alpha=_mixing_angle(p.J, dq), beta=_mixing_angle(p.J, sq))


def logical_states(n: int, p: TlsDispersiveParams) -> np.ndarray:
    """Columns |11>, |10>, |01>, |00> in the block basis (ee, eg, ge, gg)."""
    ang = mixing_angles(n, p)
    ca, sa = np.cos(ang.alpha), np.sin(ang.alpha)
    cb, sb = np.cos(ang.beta), np.sin(ang.beta)
    return np.array(
        [
            [cb, 0, 0, sb],
            [0, ca, sa, 0],
            [0, -sa, ca, 0],
            [-sb, 0, 0, cb],
        ]
    )


def block_energies(n: int, p: TlsDispersiveParams) -> np.ndarray:
    """Exact energies of the logical states |11>, |10>, |01>, |00> in block n."""
    dq, sq = _stark_sums(n, p)
    r_d = np.sign(dq or 1.0) * np.hypot(p.J, dq / 2)
    r_s = np.sign(sq or 1.0) * np.hypot(p.J, sq / 2)
    return np.array([r_s, r_d, -r_d, -r_s])


def _two_qubit_ops(n_levels: int):
    dims = (2, 2, n_levels)
    if n_levels == 1:
        a = np.zeros((4, 4), dtype=complex)
    else:
        a = embed(ladder(n_levels), 2, dims).data
    lower = [embed(ladder(2), k, dims).data for k in range(2)]
    z = [embed(Operator(np.diag([-1.0, 1.0]), (2,)), k, dims).data for k in range(2)]
    return dims, a, lower, z


def h_diag(p: TlsDispersiveParams, n_max: int, form: str = "exact", include_sj: bool = False) -> Operator:
    """Diagonal two-logical-qubit Hamiltonian on photon numbers 0..n_max.

    ``form="exact"`` uses the block square roots; ``form="expanded"`` the
    second-order expansion, optionally with the fourth-order S_J shifts.
    """
    dims, a, _, z = _two_qubit_ops(n_max + 1)
    n = np.arange(n_max + 1, dtype=float)
    if form == "exact":
        energies = np.array([block_energies(k, p) for k in range(n_max + 1)])
        c1 = energies[:, 0] + energies[:, 1]
        c2 = energies[:, 0] - energies[:, 1]
    elif form == "expanded":
        c1 = p.omega_tilde[0] + 2.0 * n * p.S[0] + (p.S_J_plus if include_sj else 0.0)
        c2 = p.omega_tilde[1] + 2.0 * n * p.S[1] + (p.S_J_minus if include_sj else 0.0)
    else:
        raise ValueError(f"unknown form {form!r}")
    number = np.tile(n, 4)
    c1_full = np.tile(c1, 4)
    c2_full = np.tile(c2, 4)
    diag = p.omega_r * number + c1_full * np.diag(z[0]).real / 2 + c2_full * np.diag(z[1]).real / 2
    return Operator(TWO_PI * np.diag(diag), dims)


@dataclass(frozen=True)
class FcTermDecomposition:
    """Frequency-control drive rewritten in the logical (diagonal) frame.

    Operator fields are in rad/ns on ``(2, 2, N)``; photon-number functions
    are arrays indexed by n.
    """

    H_z1: Operator
    H_z2: Operator
    H_SB1: Operator
    H_SB2: Operator
    H_PO: Operator
    H_QQ: Operator
    H_QQ_phi: Operator
    s_n: tuple[np.ndarray, np.ndarray]
    lambda_J: np.ndarray
    x0: float
    x1: float

    def total(self) -> Operator:
        return self.H_z1 + self.H_z2 + self.H_SB1 + self.H_SB2 + self.H_PO + self.H_QQ + self.H_QQ_phi


def fc_decomposition(
    p: TlsDispersiveParams,
    f1: float,
    f2: float,
    exact: bool = True,
    n_max: int = 4,
    x1_variant: str = "printed",
    s_n_variant: str = "derived",
) -> FcTermDecomposition:
    """Decompose ``f1/2 sigma_z^1 + f2/2 sigma_z^2`` in the logical frame.

    ``exact=False`` gives the leading forms valid for J much smaller than the
    qubit-qubit detuning; ``exact=True`` treats the mixing angles exactly.
    ``x1_variant`` selects the coefficient of the double-flip term in exact
    term: ``"printed"`` is 2 lam1 Lam2 and ``"antisymmetric"`` is
    lam1 Lam2 - Lam1 lam2, both weighted by -(f1 + f2)/2; ``"derived"``
    weights lam1 Lam2 - Lam1 lam2 by (f1 - f2)/2, which is what the
    second-order conjugation of the drive produces. ``s_n_variant`` selects the photon-number
    renormalization of the qubit splitting: ``"derived"`` is
    1 - 2 (lam^2 + Lam^2)(n + 1/2), ``"printed"`` drops the factor 2.
    Terms acting as the identity on both qubits are omitted.
    """
    dims, a, lower, z = _two_qubit_ops(n_max + 1)
    ad = a.conj().T
    sm = lower
    sp = [m.conj().T for m in lower]
    n = np.arange(n_max + 1, dtype=float)

    def photon_fn(values):
        return np.diag(np.tile(values, 4)).astype(complex)

    l1, l2 = p.lam
    L1, L2 = p.Lam
    if s_n_variant not in ("derived", "printed"):
        raise ValueError(f"unknown s_n_variant {s_n_variant!r}")
    weight = 2.0 if s_n_variant == "derived" else 1.0
    s_vals = tuple(1.0 - weight * (lk**2 + Lk**2) * (n + 0.5) for lk, Lk in zip(p.lam, p.Lam))
    lamJ_vals = p.J / (p.Delta_Q + 2.0 * n * p.Delta_S)
    s1, s2 = (photon_fn(v) for v in s_vals)
    lJ = photon_fn(lamJ_vals)
    x0 = l1 * l2 - L1 * L2
    if x1_variant == "printed":
        x1 = 2.0 * l1 * L2
        pair_x1 = (f1 + f2) * x1
    elif x1_variant == "antisymmetric":
        x1 = l1 * L2 - L1 * l2
        pair_x1 = (f1 + f2) * x1
    elif x1_variant == "derived":
        x1 = l1 * L2 - L1 * l2
        pair_x1 = (f2 - f1) * x1
    else:
        raise ValueError(f"unknown x1_variant {x1_variant!r}")
    flip = sm[0] @ sp[1] + sp[0] @ sm[1]
    double = sm[0] @ sm[1] + sp[0] @ sp[1]
    squeeze = a @ a + ad @ ad
    zero = np.zeros_like(a)

    def herm(op):
        return op + op.conj().T

    if not exact:
        h_z1 = ((np.eye(len(n) * 4) - lJ @ lJ) @ s1 * f1 + lJ @ lJ @ s2 * f2) @ z[0] / 2
        h_z2 = (lJ @ lJ @ s1 * f1 + (np.eye(len(n) * 4) - lJ @ lJ) @ s2 * f2) @ z[1] / 2
        h_sb1 = -f1 * herm(l1 * ad @ sm[0] + L1 * ad @ sp[0] + lJ @ z[0] @ (l1 * ad @ sm[1] - L1 * ad @ sp[1]))
        h_sb2 = -f2 * herm(l2 * ad @ sm[1] + L2 * ad @ sp[1] - lJ @ (l2 * ad @ sm[0] + L2 * ad @ sp[0]) @ z[1])
        h_po = -(l1 * L1 * f1 * z[0] + l2 * L2 * f2 * z[1]) @ squeeze
        h_qq = (-(f1 + f2) / 2 * x0 * np.eye(len(n) * 4) - lJ * (f1 - f2)) @ flip
        h_qq = h_qq - pair_x1 / 2 * double
        h_phi = zero
    else:
        ang = [mixing_angles(int(k), p) for k in n]
        al = photon_fn(np.array([x.alpha for x in ang]))
        be = photon_fn(np.array([x.beta for x in ang]))
        ca, sa = np.cos(np.diag(al)), np.sin(np.diag(al))
        cb, sb = np.cos(np.diag(be)), np.sin(np.diag(be))
        ca, sa, cb, sb = (np.diag(v) for v in (ca, sa, cb, sb))
        c2a = ca @ ca - sa @ sa
        c2b = cb @ cb - sb @ sb
        plus = c2a + c2b
        minus = c2a - c2b
        h_z1 = (s1 * f1 @ plus - s2 * f2 @ minus) @ z[0] / 4
        h_z2 = (-s1 * f1 @ minus + s2 * f2 @ plus) @ z[1] / 4
        h_sb1 = -f1 * herm(
            (l1 * ca @ cb - L1 * sa @ sb) @ ad @ sm[0]
            + (L1 * ca @ cb - l1 * sa @ sb) @ ad @ sp[0]
            - (l1 * ca @ sb + L1 * sa @ cb) @ ad @ z[0] @ sp[1]
            - (l1 * sa @ cb + L1 * ca @ sb) @ ad @ z[0] @ sm[1]
        )
        h_sb2 = -f2 * herm(
            (l2 * ca @ cb + L2 * sa @ sb) @ ad @ sm[1]
            + (L2 * ca @ cb + l2 * sa @ sb) @ ad @ sp[1]
            + (L2 * sa @ cb - l2 * ca @ sb) @ ad @ sp[0] @ z[1]
            + (l2 * sa @ cb - L2 * ca @ sb) @ ad @ sm[0] @ z[1]
        )
        po1, po2 = l1 * L1 * f1, l2 * L2 * f2
        # symmetric ordering of the squeezing operator and the angle functions
        h_po = herm(-a @ a @ (
            (po1 * plus - po2 * minus) @ z[0] / 2
            + (-po1 * minus + po2 * plus) @ z[1] / 2
            + 2 * sa @ ca * (po1 - po2) @ flip
            + 2 * sb @ cb * (po1 + po2) @ double
        ))
        h_qq = (-(f1 + f2) / 2 * x0 * c2a + (f1 * s1 - f2 * s2) @ sa @ ca) @ flip
        h_qq = h_qq + (-pair_x1 / 2 * c2b + (f1 * s1 + f2 * s2) @ sb @ cb) @ double
        up = [sp[k] @ sm[k] for k in range(2)]
        down = [sm[k] @ sp[k] for k in range(2)]
        h_phi = -(f1 + f2) * x0 * ca @ sa @ (
            (cb @ cb @ up[0] + sb @ sb @ down[0]) @ z[1] - z[0] @ (cb @ cb @ up[1] + sb @ sb @ down[1])
        )
        h_phi = h_phi + pair_x1 * cb @ sb @ (
            (sa @ sa @ up[0] + ca @ ca @ down[0]) @ z[1] - z[0] @ (ca @ ca @ up[1] + sa @ sa @ down[1])
        )

    def op(m):
        return Operator(TWO_PI * m, dims)

    return FcTermDecomposition(
        H_z1=op(h_z1),
        H_z2=op(h_z2),
        H_SB1=op(h_sb1),
        H_SB2=op(h_sb2),
        H_PO=op(h_po),
        H_QQ=op(h_qq),
        H_QQ_phi=op(h_phi),
        s_n=s_vals,
        lambda_J=lamJ_vals,
        x0=x0,
        x1=x1,
    )


def logical_paulis(p: TlsDispersiveParams, n_max: int) -> dict[str, Operator]:
    """Dispersive-frame qubit operators written in logical-frame operators.

    Returns ``sz1``, ``sz2``, ``sm1``, ``sm2`` as dimensionless operators on
    ``(2, 2, n_max + 1)`` built from the mixing angles per photon number.
    """
    dims, _, lower, z = _two_qubit_ops(n_max + 1)
    ang = [mixing_angles(k, p) for k in range(n_max + 1)]
    al = np.tile([x.alpha for x in ang], 4)
    be = np.tile([x.beta for x in ang], 4)
    ca, sa, cb, sb = (np.diag(f(v)) for f, v in ((np.cos, al), (np.sin, al), (np.cos, be), (np.sin, be)))
    tm = lower
    tp = [m.conj().T for m in lower]
    c2a = np.diag(np.cos(2 * al))
    c2b = np.diag(np.cos(2 * be))
    flip = tm[0] @ tp[1] + tp[0] @ tm[1]
    double = tm[0] @ tm[1] + tp[0] @ tp[1]
    sz1 = (c2a + c2b) / 2 @ z[0] - (c2a - c2b) / 2 @ z[1] + 2 * sa @ ca @ flip + 2 * sb @ cb @ double
    sz2 = -(c2a - c2b) / 2 @ z[0] + (c2a + c2b) / 2 @ z[1] - 2 * sa @ ca @ flip + 2 * sb @ cb @ double
    sm1 = ca @ cb @ tm[0] - sa @ sb @ tp[0] - ca @ sb @ z[0] @ tp[1] - sa @ cb @ z[0] @ tm[1]
    sm2 = ca @ cb @ tm[1] + sa @ sb @ tp[1] - ca @ sb @ tp[0] @ z[1] + sa @ cb @ tm[0] @ z[1]
    return {name: Operator(m, dims) for name, m in (("sz1", sz1), ("sz2", sz2), ("sm1", sm1), ("sm2", sm2))}


def cross_resonance_term(p: TlsDispersiveParams, drive_amplitude: float, n_max: int = 4) -> np.ndarray:
    """Coefficient of tau_z^1 tau_x^2 per photon number for a drive on qubit 1."""
    out = []
    for n in range(n_max + 1):
        ang = mixing_angles(n, p)
        out.append(-drive_amplitude * (np.cos(ang.alpha) * np.sin(ang.beta) + np.sin(ang.alpha) * np.cos(ang.beta)))
    return np.array(out)


def tls_lab_hamiltonian(p: TlsDispersiveParams, n_levels: int) -> Operator:
    """Two-qubit Rabi Hamiltonian (rad/ns) with the parameters' bare inputs."""
    dims, a, lower, z = _two_qubit_ops(n_levels)
    x = a + a.conj().T
    h = p.omega_r * a.conj().T @ a
    for k in range(2):
        h = h + p.omega_a[k] / 2 * z[k] + p.g[k] * x @ (lower[k] + lower[k].conj().T)
    return Operator(TWO_PI * h, dims)


def tls_generator(p: TlsDispersiveParams, n_levels: int) -> Operator:
    """Anti-Hermitian generator X of the dispersive frame, U_D = exp(X)."""
    dims, a, lower, z = _two_qubit_ops(n_levels)
    ad = a.conj().T
    x = np.zeros_like(a)
    for k in range(2):
        sm = lower[k]
        term = p.lam[k] * ad @ sm + p.Lam[k] * a @ sm + p.xi[k] * z[k] @ a @ a
        x = x + term - term.conj().T
    return Operator(x, dims)


def tls_logical_rotation(p: TlsDispersiveParams, n_levels: int) -> Operator:
    """Unitary whose columns are the logical states, photon block by block.

    Maps the computational labels |t1 t2; n> of the logical frame onto the
    dispersive-frame basis |s1 s2; n>.
    """
    dims = (2, 2, n_levels)
    w = np.zeros((4 * n_levels, 4 * n_levels))
    # block basis (ee, eg, ge, gg) and logical columns (11, 10, 01, 00)
    labels = [(1, 1), (1, 0), (0, 1), (0, 0)]
    for n in range(n_levels):
        vecs = logical_states(n, p)
        idx = [(q1 * 2 + q2) * n_levels + n for q1, q2 in labels]
        for col, dest in enumerate(idx):
            w[idx, dest] = vecs[:, col]
    return Operator(w, dims)


# ---------------------------------------------------------------------------
# Many-level systems


@dataclass(frozen=True)
class MlsDispersiveModel:
    """Dispersive parameters of one or two many-level systems (GHz)."""

    omega_r: float
    omega: tuple[np.ndarray, ...]
    g: tuple[np.ndarray, ...]
    lam: tuple[np.ndarray, ...]
    Lam: tuple[np.ndarray, ...]
    chi: tuple[np.ndarray, ...]
    mu: tuple[np.ndarray, ...]
    xi: tuple[np.ndarray, ...]
    xi_p: tuple[np.ndarray, ...]
    xi_pp: tuple[np.ndarray, ...]
    zeta: tuple[np.ndarray, ...]
    zeta_p: tuple[np.ndarray, ...]
    eta: tuple[np.ndarray, ...]
    eta_p: tuple[np.ndarray, ...]
    L: tuple[np.ndarray, ...]
    S: tuple[np.ndarray, ...]
    omega_tilde: tuple[np.ndarray, ...]
    J: np.ndarray | None = None
    J_p: np.ndarray | None = None
    lam_J: np.ndarray | None = None
    Lam_J: np.ndarray | None = None
    resonator_levels: int = 5
    meta: dict = field(default_factory=dict)

    @property
    def levels(self) -> tuple[int, ...]:
        return tuple(len(w) for w in self.omega)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.levels + (self.resonator_levels,)

    def dressed_detuning(self, k: int, j: int, n: int, spectator_level: int | None = None) -> float:
        """Lamb- and Stark-shifted detuning of |j+1; n> <-> |j; n+1> on MLS k.

        With ``spectator_level`` the pull of the resonator by the other MLS
        in that level is included.
        """
        wt, S = self.omega_tilde[k], self.S[k]
        value = wt[j + 1] - wt[j] - self.omega_r + n * (S[j + 1] - S[j]) - S[j]
        if spectator_level is not None:
            value += self.spectator_shift(k, spectator_level)
        return value

    def dressed_energy(self, levels: tuple[int, ...], n: int) -> float:
        return sum(self.omega_tilde[k][i] + n * self.S[k][i] for k, i in enumerate(levels)) + n * self.omega_r

    def spectator_shift(self, k: int, spectator_level: int) -> float:
        """Change of the MLS-k red-sideband detuning caused by the other MLS.

        Returns ``-S^(k')_level`` so the sideband frequency with the
        spectator in ``spectator_level`` is ``dressed_detuning + shift``.
        """
        other = 1 - k
        if len(self.omega) < 2:
            return 0.0
        return -float(self.S[other][spectator_level])


def _level_params(omega: np.ndarray, g: np.ndarray, omega_r: float, printed_signs: bool):
    M = len(omega)
    trans = np.diff(omega)
    Delta = trans - omega_r
    Sigma = trans + omega_r
    for i, (d, s) in enumerate(zip(Delta, Sigma)):
        _nonzero(d, f"detuning Delta_{i}")
        _nonzero(s, f"sum frequency Sigma_{i}")
    lam = g / Delta
    Lam = g / Sigma
    if np.any(np.abs(lam) >= DISPERSIVE_WARN):
        warnings.warn(f"dispersive ratio |lambda| >= {DISPERSIVE_WARN}: {lam}; expansion unreliable", stacklevel=3)
    chi = g * lam
    mu = g * Lam
    # chi_i, mu_i with chi_{-1} = mu_{-1} = 0 and no transition above the top level
    chi_ext = np.concatenate([[0.0], chi, [0.0]])
    mu_ext = np.concatenate([[0.0], mu, [0.0]])
    L = chi_ext[:M] - mu_ext[1 : M + 1]
    S = chi_ext[:M] + mu_ext[:M] - chi_ext[1 : M + 1] - mu_ext[1 : M + 1]
    xi = S / (4.0 * omega_r)
    eta = g[:-1] * lam[1:] - g[1:] * lam[:-1]
    eta_p = g[:-1] * Lam[1:] - g[1:] * Lam[:-1]
    gap2 = omega[2:] - omega[:-2]
    for i, d in enumerate(gap2):
        _nonzero(d, f"two-level gap omega_{i + 2} - omega_{i}")
        _nonzero(d - 2 * omega_r, f"two-photon detuning at level {i}")
    # second-neighbour corrections; the printed denominators (omega_i -
    # omega_{i+2}) leave an O(g^2) residual, the default is the sign that
    # cancels it
    denom = omega[:-2] - omega[2:] if printed_signs else gap2
    xi_p = (eta + eta_p) / (2.0 * denom)
    xi_pp = (g[:-1] * lam[1:] - g[1:] * Lam[:-1]) / (2.0 * denom)
    zeta = eta / (2.0 * (gap2 - 2.0 * omega_r))
    zeta_p = eta_p / (2.0 * (gap2 + 2.0 * omega_r))
    return dict(
        lam=lam, Lam=Lam, chi=chi, mu=mu, xi=xi, xi_p=xi_p, xi_pp=xi_pp,
        zeta=zeta, zeta_p=zeta_p, eta=eta, eta_p=eta_p, L=L, S=S, omega_tilde=omega + L,
    )


def mls_model_from_levels(
    omega: list[np.ndarray],
    g_ge: list[float],
    omega_r: float,
    resonator_levels: int = 5,
    printed_signs: bool = False,
) -> MlsDispersiveModel:
    """Dispersive model from bare level energies (GHz, ground at 0).

    ``g_ge`` sets ``g_i = g_ge sqrt(i+1)``.
    """
    omega = [np.asarray(w, dtype=float) for w in omega]
    g = [gk * np.sqrt(np.arange(1, len(w))) for gk, w in zip(g_ge, omega)]
    per = [_level_params(w, gk, omega_r, printed_signs) for w, gk in zip(omega, g)]
    fields = {key: tuple(p[key] for p in per) for key in per[0]}
    extra = {}
    if len(omega) == 2:
        g1, g2 = g
        l1, l2 = fields["lam"]
        L1, L2 = fields["Lam"]
        # J_ij couples transition i of MLS 1 with transition j of MLS 2
        J = 0.5 * np.outer(g1, l2 - L2) + 0.5 * np.outer(l1 - L1, g2)
        wt1, wt2 = (np.diff(w) for w in fields["omega_tilde"])
        diff = wt1[:, None] - wt2[None, :]
        summ = wt1[:, None] + wt2[None, :]
        if np.any(diff == 0):
            raise DegenerateConfigurationError("MLS transitions are degenerate")
        extra = dict(J=J, J_p=J.copy(), lam_J=J / diff, Lam_J=J / summ)
    return MlsDispersiveModel(
        omega_r=float(omega_r),
        omega=tuple(omega),
        g=tuple(g),
        resonator_levels=resonator_levels,
        meta={"printed_signs": printed_signs},
        **fields,
        **extra,
    )


def mls_model(device: DeviceSpec, printed_signs: bool = False) -> MlsDispersiveModel:
    """Dispersive model of the device at its static flux offsets."""
    omega = [duffing_spectrum(t, t.josephson_energy(t.phi)) for t in device.transmons]
    return mls_model_from_levels(
        omega, list(device.g_ge), device.omega_r, device.resonator_levels, printed_signs
    )


def duffing_level_modulation(spec: TransmonSpec, delta_phi: float, harmonic: int = 1) -> np.ndarray:
    """Level modulation amplitudes f_i (GHz) at one harmonic of a flux drive.

    Every transition of the Duffing ladder follows the plasma frequency, so
    level i moves by i times the transition modulation; the sign matches
    ``omega(t) = omega + G - sum_m eps_m cos(m omega_FC t)``.
    """
    eps = harmonic_decomposition(spec, delta_phi).eps[harmonic]
    return -eps * np.arange(spec.levels, dtype=float)


@dataclass(frozen=True)
class SidebandTerm:
    mls: int
    transition: int
    delta_f: float
    red: float
    blue: float


def mls_fc_sidebands(model: MlsDispersiveModel, f: list) -> list[SidebandTerm]:
    """First-order sideband amplitudes for level modulations f_i^(k)."""
    out = []
    for k, fk in enumerate(f):
        fk = np.asarray(fk, dtype=float)
        if len(fk) != len(model.omega[k]):
            raise ValueError(f"MLS {k}: need one modulation amplitude per level")
        df = np.diff(fk)
        for i, d in enumerate(df):
            out.append(SidebandTerm(k, i, float(d), float(d * model.lam[k][i]), float(d * model.Lam[k][i])))
    return out


def _mls_ops(model: MlsDispersiveModel):
    dims = model.dims
    slot_r = len(model.omega)
    a = embed(ladder(dims[-1]), slot_r, dims).data

    def pi(k, i, j):
        m = np.zeros((dims[k], dims[k]))
        m[i, j] = 1.0
        return embed(Operator(m, (dims[k],)), k, dims).data

    return dims, a, pi


def mls_lab_hamiltonian(model: MlsDispersiveModel) -> Operator:
    """Many-level Hamiltonian with nearest-neighbour charge coupling (rad/ns)."""
    dims, a, pi = _mls_ops(model)
    ad = a.conj().T
    h = model.omega_r * ad @ a
    for k, (w, g) in enumerate(zip(model.omega, model.g)):
        for i, wi in enumerate(w):
            h = h + wi * pi(k, i, i)
        for i, gi in enumerate(g):
            h = h + gi * (pi(k, i, i + 1) + pi(k, i + 1, i)) @ (a + ad)
    return Operator(TWO_PI * h, dims)


def mls_generator(model: MlsDispersiveModel) -> Operator:
    """Anti-Hermitian generator of the many-level dispersive frame."""
    dims, a, pi = _mls_ops(model)
    ad = a.conj().T
    n = ad @ a
    x = np.zeros_like(a)
    for k, w in enumerate(model.omega):
        term = np.zeros_like(a)
        for i in range(len(w) - 1):
            low = pi(k, i, i + 1)
            term = term + model.lam[k][i] * low @ ad + model.Lam[k][i] * low @ a
        for i in range(len(w)):
            term = term + model.xi[k][i] * a @ a @ pi(k, i, i)
        for i in range(len(w) - 2):
            skip = pi(k, i, i + 2)
            term = term + (model.xi_p[k][i] * n + model.xi_pp[k][i] * np.eye(len(a))) @ skip
            term = term + model.zeta[k][i] * skip @ ad @ ad + model.zeta_p[k][i] * skip @ a @ a
        x = x + term - term.conj().T
    return Operator(x, dims)


def mls_exchange_generator(model: MlsDispersiveModel) -> Operator:
    """Generator of the frame change removing the J_ij exchange terms."""
    if model.J is None:
        raise ValueError("exchange generator needs two many-level systems")
    dims, a, pi = _mls_ops(model)
    x = np.zeros_like(a)
    m1, m2 = model.levels
    for i in range(m1 - 1):
        for j in range(m2 - 1):
            term = model.lam_J[i, j] * pi(0, i, i + 1) @ pi(1, j + 1, j)
            term = term + model.Lam_J[i, j] * pi(0, i, i + 1) @ pi(1, j, j + 1)
            x = x + term - term.conj().T
    return Operator(x, dims)


def bch_residual(
    H: Operator,
    generator: Operator,
    order: int | None = None,
    labels: np.ndarray | None = None,
    keep: np.ndarray | None = None,
) -> float:
    """Off-block-diagonal Frobenius norm of exp(-X) H exp(X).

    Args:
        H: Hamiltonian.
        generator: Anti-Hermitian X.
        order: If given, truncate the nested-commutator series at this order
            instead of using the exact exponential.
        labels: Block label per basis state; elements connecting different
            labels count as residual. Defaults to the fully diagonal split.
        keep: Optional boolean mask restricting rows and columns (used to
            exclude states affected by Fock-space truncation).
    """
    X = generator.data
    if np.linalg.norm(X + X.conj().T) > 1e-10 * max(1.0, np.linalg.norm(X)):
        raise ValueError("generator is not anti-Hermitian")
    if order is None:
        U = expm(X)
        T = U.conj().T @ H.data @ U
    else:
        T = H.data.copy()
        term = H.data.copy()
        for k in range(1, order + 1):
            term = (term @ X - X @ term) / k
            T = T + term
    size = T.shape[0]
    labels = np.arange(size) if labels is None else np.asarray(labels)
    off = labels[:, None] != labels[None, :]
    if keep is not None:
        keep = np.asarray(keep, dtype=bool)
        off = off & keep[:, None] & keep[None, :]
    return float(np.linalg.norm(T[off]))


def transformed(H: Operator, *generators: Operator) -> Operator:
    """exp(-X_k)...exp(-X_1) H exp(X_1)...exp(X_k) for successive generators."""
    out = H.data
    for X in generators:
        U = expm(X.data)
        out = U.conj().T @ out @ U
    return Operator(out, H.dims)
