"""Flux-tunable transmons coupled to a single resonator mode.

Inputs follow the usual table conventions: frequencies and energies are
ordinary frequencies in GHz, fluxes are in units of the flux quantum (the
junction phase is ``pi * flux``), times in ns. Every :class:`Operator`
returned here is in angular units (rad/ns).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .hilbert import Operator, embed, embed_diagonal, ladder

TWO_PI = 2.0 * np.pi
DUFFING_BASIS = 12
MAX_OFFSET = 0.25
FLUX_LIMIT = 0.5
HARMONIC_MAX_AMPLITUDE = 0.15


class DeviceError(ValueError):
    """Invalid device description or out-of-domain flux."""


@dataclass(frozen=True)
class TransmonSpec:
    """One flux-tunable transmon.

    Attributes:
        E_J_sigma: Josephson energy of the SQUID at zero flux (GHz).
        E_C: Charging energy (GHz).
        phi: Static flux offset in flux quanta, ``|phi| <= 0.25``.
        levels: Number of transmon levels kept in the composite space.
        basis_size: Fock states used to diagonalize the Duffing oscillator.
    """

    E_J_sigma: float
    E_C: float
    phi: float = 0.0
    levels: int = 4
    basis_size: int = DUFFING_BASIS

    def __post_init__(self):
        if self.levels < 2:
            raise DeviceError("a transmon needs at least 2 levels")
        if self.basis_size < self.levels + 2:
            raise DeviceError("basis_size must exceed levels by at least 2")
        if self.E_C <= 0 or self.E_J_sigma <= 0:
            raise DeviceError("E_J and E_C must be positive")
        if abs(self.phi) > MAX_OFFSET + 1e-12:
            raise DeviceError(f"flux offset {self.phi} outside |phi| <= {MAX_OFFSET}")
        ratio = self.josephson_energy(self.phi) / self.E_C
        if ratio < 20:
            raise DeviceError(f"E_J/E_C = {ratio:.1f} is below the transmon regime (>= 20)")
        if ratio < 50:
            warnings.warn(f"E_J/E_C = {ratio:.1f} < 50; Duffing model is marginal", stacklevel=2)

    def josephson_energy(self, flux):
        return self.E_J_sigma * np.cos(np.pi * np.asarray(flux, dtype=float))

    @property
    def plasma_frequency(self) -> float:
        """Plasma frequency at the static offset, sqrt(8 E_C E_J(phi)) in GHz."""
        return float(np.sqrt(8.0 * self.E_C * self.josephson_energy(self.phi)))


@dataclass(frozen=True)
class DeviceSpec:
    """Transmons plus one resonator mode.

    ``kappa`` is the resonator field decay rate quoted as kappa/2pi in MHz;
    ``T1`` lists transmon relaxation times in microseconds (``inf`` disables).
    """

    transmons: tuple[TransmonSpec, ...]
    omega_r: float
    resonator_levels: int = 5
    g_ge: tuple[float, ...] = ()
    kappa: float = 0.0
    T1: tuple[float, ...] = ()

    def __post_init__(self):
        transmons = tuple(self.transmons)
        if not transmons:
            raise DeviceError("at least one transmon is required")
        g = tuple(float(x) for x in self.g_ge) or (0.0,) * len(transmons)
        t1 = tuple(float(x) for x in self.T1) or (math.inf,) * len(transmons)
        if len(g) != len(transmons) or len(t1) != len(transmons):
            raise DeviceError("g_ge and T1 need one entry per transmon")
        if self.resonator_levels < 2:
            raise DeviceError("resonator_levels must be >= 2")
        if self.kappa < 0 or any(x <= 0 for x in t1) or self.omega_r <= 0:
            raise DeviceError("rates and frequencies must be positive")
        object.__setattr__(self, "transmons", transmons)
        object.__setattr__(self, "g_ge", g)
        object.__setattr__(self, "T1", t1)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(t.levels for t in self.transmons) + (self.resonator_levels,)

    @property
    def resonator_slot(self) -> int:
        return len(self.transmons)

    def replace(self, **changes) -> "DeviceSpec":
        data = dict(
            transmons=self.transmons,
            omega_r=self.omega_r,
            resonator_levels=self.resonator_levels,
            g_ge=self.g_ge,
            kappa=self.kappa,
            T1=self.T1,
        )
        data.update(changes)
        return DeviceSpec(**data)

    @classmethod
    def from_dict(cls, data: Mapping, path: str = "device") -> "DeviceSpec":
        _reject_unknown(data, {"transmons", "resonator"}, path)
        if "transmons" not in data or "resonator" not in data:
            raise DeviceError(f"{path}: 'transmons' and 'resonator' are required")
        transmons, g, t1 = [], [], []
        for k, item in enumerate(data["transmons"]):
            where = f"{path}.transmons[{k}]"
            _reject_unknown(item, {"E_J", "E_C", "phi", "levels", "g_ge", "T1", "basis_size"}, where)
            try:
                transmons.append(
                    TransmonSpec(
                        E_J_sigma=float(item["E_J"]),
                        E_C=float(item["E_C"]),
                        phi=float(item.get("phi", 0.0)),
                        levels=int(item.get("levels", 4)),
                        basis_size=int(item.get("basis_size", DUFFING_BASIS)),
                    )
                )
            except KeyError as exc:
                raise DeviceError(f"{where}: missing field {exc.args[0]!r}") from None
            except DeviceError as exc:
                raise DeviceError(f"{where}: {exc}") from None
            g.append(float(item.get("g_ge", 0.0)))
            t1.append(math.inf if item.get("T1") is None else float(item["T1"]))
        res = data["resonator"]
        _reject_unknown(res, {"omega_r", "levels", "kappa"}, f"{path}.resonator")
        if "omega_r" not in res:
            raise DeviceError(f"{path}.resonator: missing field 'omega_r'")
        try:
            return cls(
                transmons=tuple(transmons),
                omega_r=float(res["omega_r"]),
                resonator_levels=int(res.get("levels", 5)),
                g_ge=tuple(g),
                kappa=float(res.get("kappa", 0.0)),
                T1=tuple(t1),
            )
        except DeviceError as exc:
            raise DeviceError(f"{path}: {exc}") from None

    @classmethod
    def from_json(cls, path: str | Path) -> "DeviceSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return {
            "transmons": [
                {
                    "E_J": t.E_J_sigma,
                    "E_C": t.E_C,
                    "phi": t.phi,
                    "levels": t.levels,
                    "g_ge": g,
                    "T1": None if math.isinf(t1) else t1,
                    "basis_size": t.basis_size,
                }
                for t, g, t1 in zip(self.transmons, self.g_ge, self.T1)
            ],
            "resonator": {"omega_r": self.omega_r, "levels": self.resonator_levels, "kappa": self.kappa},
        }


def _reject_unknown(data: Mapping, allowed: set, path: str):
    if not isinstance(data, Mapping):
        raise DeviceError(f"{path}: expected an object")
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise DeviceError(f"{path}: unknown field(s) {', '.join(unknown)}")


@dataclass(frozen=True)
class HarmonicDecomposition:
    """Mean shift and harmonic amplitudes of a flux-modulated transition (GHz)."""

    G: float
    eps: dict = field(default_factory=dict)
    omega_p_prime: float = 0.0


def _quartic_position(size: int) -> np.ndarray:
    # (b + b^dag)^4 computed with 4 extra states so the kept block is exact
    big = size + 4
    b = np.diag(np.sqrt(np.arange(1, big)), 1)
    x = b + b.T
    return np.linalg.matrix_power(x, 4)[:size, :size]


def duffing_hamiltonian(spec: TransmonSpec, E_J: float, basis_size: int | None = None) -> Operator:
    """sqrt(8 E_C E_J) b^dag b - (E_C/12)(b + b^dag)^4 on ``basis_size`` Fock states.

    Matrix elements of the quartic term are those of the untruncated
    oscillator. ``basis_size`` defaults to ``spec.levels``.
    """
    if E_J <= 0:
        raise DeviceError(f"E_J must be positive, got {E_J}")
    size = spec.levels if basis_size is None else int(basis_size)
    number = np.diag(np.arange(size, dtype=float))
    h = np.sqrt(8.0 * spec.E_C * E_J) * number - spec.E_C / 12.0 * _quartic_position(size)
    return Operator(TWO_PI * h, (size,))


def duffing_spectrum(spec: TransmonSpec, E_J) -> np.ndarray:
    """Level energies relative to the ground state (GHz) for one or many E_J.

    The oscillator is diagonalized on ``spec.basis_size`` Fock states and the
    physical level k is the eigenvector with the largest weight on Fock |k>.
    The quartic term is unbounded below, so a very large basis acquires
    spurious low-lying states; a moderate basis converges the lowest levels.
    """
    E_J = np.asarray(E_J, dtype=float)
    flat = np.atleast_1d(E_J).ravel()
    if np.any(flat <= 0):
        raise DeviceError("E_J must be positive")
    size = spec.basis_size
    number = np.diag(np.arange(size, dtype=float))
    quartic = _quartic_position(size)
    h = np.sqrt(8.0 * spec.E_C * flat)[:, None, None] * number - spec.E_C / 12.0 * quartic
    values, vectors = np.linalg.eigh(h)
    weight = np.abs(vectors[:, : spec.levels, :]) ** 2
    pick = np.argmax(weight, axis=2)
    energies = np.take_along_axis(values, pick, axis=1)
    energies = energies - energies[:, :1]
    return energies.reshape(E_J.shape + (spec.levels,))


def coupling_operator(spec: TransmonSpec, g_ge: float) -> Operator:
    """Lowering-type charge coupling, elements g_ge sqrt(j+1) on (j, j+1)."""
    return Operator(TWO_PI * g_ge * ladder(spec.levels).data, (spec.levels,))


def flux_to_EJ(spec: TransmonSpec, delta_phi, omega_FC: float, t):
    """E_J(t) = E_JSigma cos[pi (phi + delta_phi cos(2 pi omega_FC t))] in GHz."""
    delta_phi = np.asarray(delta_phi, dtype=float)
    if np.any(abs(spec.phi) + np.abs(delta_phi) >= FLUX_LIMIT):
        raise DeviceError("total flux reaches half a flux quantum; E_J would vanish")
    flux = spec.phi + delta_phi * np.cos(TWO_PI * omega_FC * np.asarray(t, dtype=float))
    return spec.josephson_energy(flux)


def harmonic_decomposition(spec: TransmonSpec, delta_phi: float) -> HarmonicDecomposition:
    """Closed-form geometric shift and harmonic amplitudes to fourth order.

    ``delta_phi`` is in flux quanta; the expansion uses the junction phase
    amplitude ``pi * delta_phi`` and ``tan(pi * phi)``.
    """
    if delta_phi < 0 or delta_phi > HARMONIC_MAX_AMPLITUDE:
        raise DeviceError(f"modulation amplitude {delta_phi} outside [0, {HARMONIC_MAX_AMPLITUDE}]")
    wp = spec.plasma_frequency
    x = np.pi * delta_phi
    t = np.tan(np.pi * spec.phi)
    t2 = t * t
    quartic = 4.0 + 20.0 * t2 + 15.0 * t2 * t2
    G = -(1.0 + t2 / 2.0) * wp * x**2 / 8.0 - quartic * wp * x**4 / 1024.0
    eps = {
        1: (x + (1.0 + 1.5 * t2) * x**3 / 16.0) * wp * t / 2.0,
        2: (1.0 + t2 / 2.0) * wp * x**2 / 8.0 + quartic * wp * x**4 / 768.0,
        3: (1.0 / 3.0 + t2 / 2.0) * wp * t * x**3 / 32.0,
        4: quartic * wp * x**4 / 3072.0,
    }
    return HarmonicDecomposition(G=float(G), eps={m: float(v) for m, v in eps.items()}, omega_p_prime=wp)


def numeric_harmonics(
    spec: TransmonSpec, delta_phi: float, transition: int = 0, samples: int = 256
) -> HarmonicDecomposition:
    """Fourier analysis of the instantaneous transition frequency over one period.

    Returns the mean displacement from the static value as ``G`` and the
    cosine amplitudes at each harmonic as ``eps``, with the same sign
    convention as the closed forms (omega(t) = omega + G - sum eps_m cos m w t).
    """
    phase = np.arange(samples) / samples
    E_J = flux_to_EJ(spec, delta_phi, 1.0, phase)
    levels = duffing_spectrum(spec, E_J)
    freq = levels[:, transition + 1] - levels[:, transition]
    static = duffing_spectrum(spec, spec.josephson_energy(spec.phi))
    static_freq = static[transition + 1] - static[transition]
    coeffs = np.fft.rfft(freq) / samples
    eps = {m: float(-2.0 * coeffs[m].real) for m in range(1, 5)}
    return HarmonicDecomposition(
        G=float(coeffs[0].real - static_freq), eps=eps, omega_p_prime=spec.plasma_frequency
    )


class SystemModel:
    """Precomputed operators for the transmons-plus-resonator Hamiltonian.

    Transmon level energies follow E_J(t) while the level basis stays fixed
    (pure frequency modulation, no coupling modulation).
    """

    def __init__(self, device: DeviceSpec):
        self.device = device
        self.dims = device.dims
        self.order = int(np.prod(self.dims))
        slot_r = device.resonator_slot
        a = embed(ladder(device.resonator_levels), slot_r, self.dims).data
        self.annihilation = a
        self.lowering = [
            embed(ladder(t.levels), k, self.dims).data for k, t in enumerate(device.transmons)
        ]
        position = a + a.conj().T
        static = TWO_PI * device.omega_r * (a.conj().T @ a)
        for k, (t, g) in enumerate(zip(device.transmons, device.g_ge)):
            c = embed(coupling_operator(t, g), k, self.dims).data
            static = static + (c + c.conj().T) @ position
        self.static = static
        self.static_fluxes = np.array([t.phi for t in device.transmons])

    def transmon_levels(self, k: int, flux) -> np.ndarray:
        t = self.device.transmons[k]
        flux = np.asarray(flux, dtype=float)
        if np.any(np.abs(flux) >= FLUX_LIMIT):
            raise DeviceError(f"flux on transmon {k} reaches half a flux quantum")
        return duffing_spectrum(t, t.josephson_energy(flux))

    def diagonal(self, fluxes: Sequence) -> np.ndarray:
        """Diagonal transmon energies (rad/ns) for per-transmon flux arrays.

        ``fluxes[k]`` may be a scalar or an array of shape (T,); the result
        has shape (T, order) or (order,).
        """
        total = 0.0
        for k in range(len(self.device.transmons)):
            levels = self.transmon_levels(k, fluxes[k])
            total = total + embed_diagonal(levels, k, self.dims)
        return TWO_PI * total

    def hamiltonian(self, fluxes: Sequence) -> np.ndarray:
        return self.static + np.diag(self.diagonal([np.asarray(f, dtype=float) for f in fluxes]))


def system_hamiltonian(device: DeviceSpec, fluxes: Sequence | None = None) -> Operator:
    """Full Hamiltonian at instantaneous per-transmon fluxes (static offsets if None)."""
    model = SystemModel(device)
    if fluxes is None:
        fluxes = model.static_fluxes
    return Operator(model.hamiltonian(fluxes), model.dims)
