"""Closed-form predictions for flux-driven red sidebands.

Frequencies are in GHz, drive couplings and detunings in MHz (ordinary
frequencies), times in ns. Inside the two-level formulas every rate is
converted to rad/ns with ``2 pi 1e-3``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .device import HarmonicDecomposition, TransmonSpec, harmonic_decomposition
from .dispersive import MlsDispersiveModel

MHZ_TO_ANGULAR = 2.0 * np.pi * 1e-3
RWA_WARN_RATIO = 0.1
DISPERSIVE_LIMIT = 0.5
STRATEGIES = ("resonant-on-ground", "midpoint")


class SidebandModelError(ValueError):
    """Invalid argument to a sideband prediction."""


@dataclass(frozen=True)
class SidebandPrediction:
    """Analytic description of one red sideband |j+1; n> <-> |j; n+1> on MLS ``mls``.

    Attributes:
        resonance: Carrier frequency of the flux drive (GHz).
        rabi: Population oscillation frequency 2 eps_n (MHz).
        eps_n: Two-level coupling (MHz).
        detunings: Carrier detuning from the sideband for the spectator in
            its ground and first excited level (MHz).
        g_crit: Critical coupling of the transition (GHz).
        valid: False when the coupling reaches ``g_crit``.
    """

    mls: int
    transition: int
    photons: int
    harmonic: int
    strategy: str
    resonance: float
    rabi: float
    eps_n: float
    detunings: tuple[float, ...]
    g_crit: float
    valid: bool
    kind: str = "red"


def dominant_harmonic(harmonics: HarmonicDecomposition, rtol: float = 1e-9) -> int:
    """Lowest harmonic whose amplitude is not negligible against the largest."""
    amps = {m: abs(v) for m, v in harmonics.eps.items()}
    top = max(amps.values())
    if top == 0.0:
        return 1
    return min(m for m, v in amps.items() if v > rtol * top)


def _check_harmonic(m: int):
    if m not in (1, 2, 3, 4):
        raise SidebandModelError(f"harmonic must be in 1..4, got {m}")


def resonance(
    model: MlsDispersiveModel,
    harmonics: HarmonicDecomposition,
    j: int = 0,
    n: int = 0,
    m: int = 1,
    k: int = 0,
    spectator_level: int | None = None,
) -> float:
    """Flux-drive frequency (GHz) resonant with the sideband through harmonic ``m``.

    The dressed detuning of MLS ``k`` is shifted by the geometric shift;
    ``spectator_level`` adds the resonator pull of the other MLS.
    """
    _check_harmonic(m)
    detuning = model.dressed_detuning(k, j, n, spectator_level)
    return abs(detuning + harmonics.G) / m


def rabi_rate(
    model: MlsDispersiveModel,
    harmonics: HarmonicDecomposition,
    j: int = 0,
    n: int = 0,
    m: int = 1,
    k: int = 0,
    spectator_level: int | None = None,
) -> float:
    """Sideband Rabi frequency |g_j sqrt(n+1) / (Delta~ + G)| eps_m in MHz."""
    _check_harmonic(m)
    lam = model.lam[k][j]
    if abs(lam) >= DISPERSIVE_LIMIT:
        warnings.warn(
            f"dispersive ratio |lambda_{j}| = {abs(lam):.3f} is not below {DISPERSIVE_LIMIT}; the rate is outside its validity range",
            stacklevel=2,
        )
    detuning = model.dressed_detuning(k, j, n, spectator_level) + harmonics.G
    g = model.g[k][j] * math.sqrt(n + 1)
    return abs(g / detuning * harmonics.eps[m]) * 1e3


def g_crit(Delta: float, n: int = 0) -> float:
    """Critical coupling |Delta| / (2 sqrt(n + 1)) for a sideband into photon n+1."""
    return abs(Delta) / (2.0 * math.sqrt(n + 1))


def two_level_evolution(eps_n: float, delta: float, t: float, counter_rotating: float | None = None) -> np.ndarray:
    """Rotating-wave propagator V(t) of the sideband doublet.

    The basis is ``(|j+1; n>, |j; n+1>)``. ``counter_rotating`` is the
    frequency of the dropped terms omega_FC + Delta_n (MHz); when given, a
    warning is raised if ``eps_n`` is not small against it.
    """
    if counter_rotating is not None and abs(eps_n) > RWA_WARN_RATIO * abs(counter_rotating):
        warnings.warn(
            f"eps_n = {eps_n} MHz is not small against the counter-rotating frequency {counter_rotating} MHz",
            stacklevel=2,
        )
    e = eps_n * MHZ_TO_ANGULAR
    d = delta * MHZ_TO_ANGULAR
    r = math.hypot(d, 2.0 * e)
    if r == 0.0:
        return np.eye(2, dtype=complex)
    c, s = math.cos(r * t / 2), math.sin(r * t / 2)
    lead, trail = np.exp(-0.5j * d * t), np.exp(0.5j * d * t)
    return np.array(
        [
            [lead * (c - 1j * d / r * s), -2j * e / r * lead * s],
            [-2j * e / r * trail * s, trail * (c + 1j * d / r * s)],
        ]
    )


def gate_fidelity_analytic(eps_bar: float, delta: float, t: float) -> tuple[float, float]:
    """Gate fidelity to the ideal sideband pi-pulse and its average fidelity.

    Returns ``(F, (2F + 1) / 3)`` with F = 2 (eps/r)^2 sin^2(rt/2)(1 + cos delta t).
    """
    if eps_bar <= 0:
        raise SidebandModelError("eps_bar must be positive")
    e = eps_bar * MHZ_TO_ANGULAR
    d = delta * MHZ_TO_ANGULAR
    r2 = d * d + 4.0 * e * e
    F = 2.0 * e * e / r2 * math.sin(math.sqrt(r2) * t / 2) ** 2 * (1.0 + math.cos(d * t))
    return F, (2.0 * F + 1.0) / 3.0


def pi_time(eps_bar: float) -> float:
    """Pulse length (ns) with eps_bar t = pi / 2."""
    if eps_bar <= 0:
        raise SidebandModelError("eps_bar must be positive")
    return math.pi / (2.0 * eps_bar * MHZ_TO_ANGULAR)


def gate_fidelity_simple(eps_bar: float, delta: float) -> tuple[float, float]:
    """Small-detuning gate fidelity at t_p = pi / (2 eps_bar) and its average."""
    e = eps_bar * MHZ_TO_ANGULAR
    d = delta * MHZ_TO_ANGULAR
    F = 2.0 * e * e / (d * d + 4.0 * e * e) * (1.0 + math.cos(d * pi_time(eps_bar)))
    return F, (2.0 * F + 1.0) / 3.0


def target_population(eps_bar: float, delta: float) -> float:
    """Population transfer 4 eps^2 / (delta^2 + 4 eps^2) of a pi-pulse."""
    if eps_bar <= 0:
        raise SidebandModelError("eps_bar must be positive")
    return 4.0 * eps_bar**2 / (delta**2 + 4.0 * eps_bar**2)


def target_population_exact(eps_bar: float, delta: float, t: float) -> float:
    """|<target|V(t)|initial>|^2 = (4 eps^2 / r^2) sin^2(r t / 2)."""
    e = eps_bar * MHZ_TO_ANGULAR
    d = delta * MHZ_TO_ANGULAR
    r2 = d * d + 4.0 * e * e
    return 4.0 * e * e / r2 * math.sin(math.sqrt(r2) * t / 2) ** 2


def averaged_coupling(
    model: MlsDispersiveModel,
    spec: TransmonSpec,
    amplitude: Callable[[float], float],
    t0: float,
    t1: float,
    j: int = 0,
    n: int = 0,
    m: int = 1,
    k: int = 0,
) -> float:
    """Time average of eps_n(t) (MHz) over [t0, t1] for a shaped flux amplitude."""
    if t1 <= t0:
        raise SidebandModelError("empty averaging window")

    def eps_at(t):
        h = harmonic_decomposition(spec, abs(float(amplitude(t))))
        return 0.5 * rabi_rate(model, h, j, n, m, k)

    value, _ = quad(eps_at, t0, t1, limit=200)
    return value / (t1 - t0)


def carrier(
    model: MlsDispersiveModel,
    harmonics: HarmonicDecomposition,
    j: int = 0,
    n: int = 0,
    m: int = 1,
    k: int = 0,
    strategy: str = "resonant-on-ground",
) -> float:
    """Carrier (GHz) for a named spectator strategy.

    ``resonant-on-ground`` matches the sideband with the spectator in its
    ground level; ``midpoint`` sits halfway between the ground and excited
    spectator resonances.
    """
    if strategy not in STRATEGIES:
        raise SidebandModelError(f"unknown carrier strategy {strategy!r}; choose from {STRATEGIES}")
    if len(model.omega) > 2:
        raise SidebandModelError("carrier strategies are defined for one spectator only")
    if len(model.omega) == 1:
        return resonance(model, harmonics, j, n, m, k)
    ground = resonance(model, harmonics, j, n, m, k, spectator_level=0)
    if strategy == "resonant-on-ground":
        return ground
    excited = resonance(model, harmonics, j, n, m, k, spectator_level=1)
    return 0.5 * (ground + excited)


def predict(
    model: MlsDispersiveModel,
    harmonics: HarmonicDecomposition,
    j: int = 0,
    n: int = 0,
    m: int | None = None,
    k: int = 0,
    strategy: str = "resonant-on-ground",
) -> SidebandPrediction:
    """Assemble resonance, rate, spectator detunings and validity for one sideband."""
    if m is None:
        m = dominant_harmonic(harmonics)
    _check_harmonic(m)
    omega_fc = carrier(model, harmonics, j, n, m, k, strategy)
    if len(model.omega) == 2:
        spectators = (0, 1)
        rate_level = 0
    else:
        spectators = (None,)
        rate_level = None
    detunings = tuple(
        float(m * (omega_fc - resonance(model, harmonics, j, n, m, k, s)) * 1e3) for s in spectators
    )
    bare = model.omega[k][j + 1] - model.omega[k][j] - model.omega_r
    crit = g_crit(bare, n)
    valid = bool(model.g[k][j] < crit)
    with warnings.catch_warnings():
        if not valid:
            warnings.simplefilter("ignore")
        rabi = rabi_rate(model, harmonics, j, n, m, k, rate_level)
    return SidebandPrediction(
        mls=k,
        transition=j,
        photons=n,
        harmonic=m,
        strategy=strategy,
        resonance=float(omega_fc),
        rabi=float(rabi),
        eps_n=float(rabi / 2.0),
        detunings=detunings,
        g_crit=float(crit),
        valid=valid,
    )
