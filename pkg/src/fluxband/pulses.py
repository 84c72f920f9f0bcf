"""Drive construction: truncated Gaussian envelopes, DRAG, flux and dipole segments.

Flux segments modulate the static flux offset of their target transmon by
``envelope(t) cos(2 pi carrier t + phase)`` (flux quanta). Dipole segments add
``2 * 2 pi 1e-3 * envelope(t) cos(2 pi carrier t + phase) (b + b^dag)`` to the
Hamiltonian, so a dipole amplitude ``A`` (MHz) is the rotating-frame
coupling per unit matrix element of ``b + b^dag``. Times are in ns, carriers in
GHz, and the carrier phase is referenced to ``t = 0`` of the schedule.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import erf, erfinv

from .device import TWO_PI, DeviceSpec, SystemModel, duffing_spectrum, harmonic_decomposition
from .dispersive import MlsDispersiveModel
from .hilbert import Operator, embed, ladder
from . import sideband_model as sm

FLUX = "flux"
DIPOLE = "dipole"
KINDS = (FLUX, DIPOLE)
DIPOLE_SCALE = 2.0 * TWO_PI * 1e-3
OVERLAP_TOL = 1e-9
SUPPORT_TOL = 1e-12

# Five-pulse entangling sequence: (label, kind, target, transition, A, mu, sigma, 2 tau)
ENTANGLING_SEQUENCE = (
    ("R01_1", FLUX, 0, 0, 0.07308, 16.0, 7.0, 28.0),
    ("R12_2", FLUX, 1, 1, 0.02520, 46.5, 6.25, 25.0),
    ("X12_2", DIPOLE, 1, 1, 51.1412, 65.96, 1.48, 5.92),
    ("R12_2", FLUX, 1, 1, 0.02520, 85.42, 6.25, 25.0),
    ("R01_1", FLUX, 0, 0, 0.07308, 115.92, 7.0, 28.0),
)


class PulseError(ValueError):
    """Invalid pulse, segment or schedule."""


@dataclass(frozen=True)
class Envelope:
    """Truncated Gaussian A exp(-(t - mu)^2 / 2 sigma^2) on |t - mu| <= tau."""

    amplitude: float
    mu: float
    sigma: float
    tau: float

    def __post_init__(self):
        if self.sigma <= 0 or self.tau <= 0:
            raise PulseError(f"sigma and tau must be positive, got sigma={self.sigma}, tau={self.tau}")

    @property
    def start(self) -> float:
        return self.mu - self.tau

    @property
    def end(self) -> float:
        return self.mu + self.tau

    def inside(self, t) -> np.ndarray:
        return np.abs(np.asarray(t, dtype=float) - self.mu) <= self.tau + SUPPORT_TOL

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        value = self.amplitude * np.exp(-((t - self.mu) ** 2) / (2.0 * self.sigma**2))
        return np.where(self.inside(t), value, 0.0)

    def derivative(self, t):
        """Exact derivative inside the support and zero outside."""
        t = np.asarray(t, dtype=float)
        value = -(t - self.mu) / self.sigma**2 * self.amplitude * np.exp(-((t - self.mu) ** 2) / (2.0 * self.sigma**2))
        return np.where(self.inside(t), value, 0.0)

    def area(self) -> float:
        return self.amplitude * math.sqrt(2.0 * math.pi) * self.sigma * math.erf(self.tau / (math.sqrt(2.0) * self.sigma))


@dataclass(frozen=True)
class DerivativeEnvelope:
    """``scale`` times the derivative of a base envelope (DRAG quadrature)."""

    base: Envelope
    scale: float

    @property
    def start(self) -> float:
        return self.base.start

    @property
    def end(self) -> float:
        return self.base.end

    def inside(self, t):
        return self.base.inside(t)

    def __call__(self, t):
        return self.scale * self.base.derivative(t)


def effective_amplitude(envelope: Envelope) -> float:
    """Amplitude whose geometric shift balances the pulse.

    Returns A exp(-a^2 / 2 sigma^2) with a = sqrt(2) sigma erfinv(erf(tau / sqrt(2) sigma) / 2),
    the envelope value at the time that splits each half of the pulse area
    into equal parts.
    """
    s = envelope.sigma
    a = math.sqrt(2.0) * s * erfinv(0.5 * erf(envelope.tau / (math.sqrt(2.0) * s)))
    return envelope.amplitude * math.exp(-(a**2) / (2.0 * s**2))


@dataclass(frozen=True)
class PulseSegment:
    """One drive pulse.

    Attributes:
        kind: ``"flux"`` or ``"dipole"``.
        target: Index of the driven transmon.
        carrier: Carrier frequency (GHz).
        envelope: Truncated Gaussian; flux quanta for flux pulses, MHz for dipole pulses.
        phase: Carrier phase (rad).
        drag: Add the derivative quadrature.
        drag_scale: Multiplier of the DRAG quadrature.
        anharmonicity: Local anharmonicity (GHz) used by DRAG.
        transition: Lower level j of the addressed j <-> j+1 transition.
        label: Free-form name.
    """

    kind: str
    target: int
    carrier: float
    envelope: Envelope
    phase: float = 0.0
    drag: bool = False
    drag_scale: float = 1.0
    anharmonicity: float = 0.0
    transition: int = 0
    label: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PulseError(f"unknown segment kind {self.kind!r}")
        if self.target < 0:
            raise PulseError("target must be a transmon index")
        if self.drag and self.anharmonicity == 0.0:
            raise PulseError("DRAG needs a nonzero anharmonicity")

    @property
    def start(self) -> float:
        return self.envelope.start

    @property
    def end(self) -> float:
        return self.envelope.end

    def quadrature(self, t):
        """DRAG quadrature amplitude, in the units of the envelope."""
        if not self.drag:
            return np.zeros_like(np.asarray(t, dtype=float))
        in_phase, corr = drag_correct(self)
        return corr.envelope(t)

    def waveform(self, t):
        """Envelope times carrier, including the DRAG quadrature."""
        t = np.asarray(t, dtype=float)
        angle = TWO_PI * self.carrier * t + self.phase
        return self.envelope(t) * np.cos(angle) + self.quadrature(t) * np.cos(angle + 0.5 * np.pi)


def drag_correct(segment: PulseSegment) -> tuple[PulseSegment, PulseSegment]:
    """Split a segment into its in-phase part and the DRAG quadrature.

    The quadrature is phase-shifted by pi/2 and equals
    ``drag_scale * envelope'(t) / (2 pi anharmonicity)``.
    """
    if segment.anharmonicity == 0.0:
        raise PulseError("DRAG needs a nonzero anharmonicity")
    base = replace(segment, drag=False)
    scale = segment.drag_scale / (TWO_PI * segment.anharmonicity)
    quad = PulseSegment(
        kind=segment.kind,
        target=segment.target,
        carrier=segment.carrier,
        envelope=DerivativeEnvelope(segment.envelope, scale),
        phase=segment.phase + 0.5 * np.pi,
        transition=segment.transition,
        label=f"{segment.label}:drag",
        anharmonicity=segment.anharmonicity,
    )
    return base, quad


@dataclass(frozen=True)
class PulseSchedule:
    """Time-ordered, non-overlapping segments starting at t = 0."""

    segments: tuple[PulseSegment, ...] = ()
    total: float | None = None

    def __post_init__(self):
        segments = tuple(self.segments)
        for prev, nxt in zip(segments, segments[1:]):
            if nxt.start < prev.end - OVERLAP_TOL:
                raise PulseError(
                    f"segments {prev.label or 'previous'} and {nxt.label or 'next'} overlap or are out of order"
                )
        object.__setattr__(self, "segments", segments)
        if self.total is not None and segments and self.total < segments[-1].end - OVERLAP_TOL:
            raise PulseError("total duration ends before the last segment")

    @property
    def duration(self) -> float:
        if self.total is not None:
            return float(self.total)
        return float(self.segments[-1].end) if self.segments else 0.0

    def flux_offsets(self, t, n_transmons: int) -> list[np.ndarray]:
        """Flux displacement of each transmon from its static offset (flux quanta)."""
        t = np.asarray(t, dtype=float)
        out = [np.zeros_like(t) for _ in range(n_transmons)]
        for seg in self.segments:
            if seg.kind == FLUX:
                out[seg.target] = out[seg.target] + seg.waveform(t)
        return out

    def dipole_coefficients(self, t, n_transmons: int) -> list[np.ndarray]:
        """Coefficient (rad/ns) multiplying ``b + b^dag`` of each transmon."""
        t = np.asarray(t, dtype=float)
        out = [np.zeros_like(t) for _ in range(n_transmons)]
        for seg in self.segments:
            if seg.kind == DIPOLE:
                out[seg.target] = out[seg.target] + DIPOLE_SCALE * seg.waveform(t)
        return out

    def to_records(self) -> list[dict]:
        return [_segment_record(s) for s in self.segments]

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps({"segments": self.to_records(), "total": self.total}, indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_records(cls, records: Sequence[dict], total: float | None = None) -> "PulseSchedule":
        return cls(tuple(_segment_from_record(r, i) for i, r in enumerate(records)), total)

    @classmethod
    def from_json(cls, text_or_path: str | Path) -> "PulseSchedule":
        text = str(text_or_path)
        if not text.lstrip().startswith("{"):
            text = Path(text_or_path).read_text()
        data = json.loads(text)
        return cls.from_records(data["segments"], data.get("total"))


_RECORD_FIELDS = {
    "A", "mu", "sigma", "two_tau", "kind", "target", "carrier", "phase", "drag",
    "drag_scale", "anharmonicity", "transition", "label",
}


def _segment_record(seg: PulseSegment) -> dict:
    env = seg.envelope
    return {
        "A": env.amplitude,
        "mu": env.mu,
        "sigma": env.sigma,
        "two_tau": 2.0 * env.tau,
        "kind": seg.kind,
        "target": seg.target,
        "carrier": seg.carrier,
        "phase": seg.phase,
        "drag": seg.drag,
        "drag_scale": seg.drag_scale,
        "anharmonicity": seg.anharmonicity,
        "transition": seg.transition,
        "label": seg.label,
    }


def _segment_from_record(record: dict, index: int) -> PulseSegment:
    unknown = set(record) - _RECORD_FIELDS
    if unknown:
        raise PulseError(f"segments[{index}]: unknown field(s) {', '.join(sorted(unknown))}")
    try:
        env = Envelope(float(record["A"]), float(record["mu"]), float(record["sigma"]), 0.5 * float(record["two_tau"]))
        return PulseSegment(
            kind=record["kind"],
            target=int(record["target"]),
            carrier=float(record["carrier"]),
            envelope=env,
            phase=float(record.get("phase", 0.0)),
            drag=bool(record.get("drag", False)),
            drag_scale=float(record.get("drag_scale", 1.0)),
            anharmonicity=float(record.get("anharmonicity", 0.0)),
            transition=int(record.get("transition", 0)),
            label=str(record.get("label", "")),
        )
    except KeyError as exc:
        raise PulseError(f"segments[{index}]: missing field {exc.args[0]!r}") from None


def local_anharmonicity(device: DeviceSpec, target: int, j: int) -> float:
    """omega_{j+1,j+2} - omega_{j,j+1} of the bare Duffing spectrum (GHz)."""
    spec = device.transmons[target]
    levels = max(spec.levels, j + 3)
    spec = replace(spec, levels=levels, basis_size=max(spec.basis_size, levels + 2))
    energies = duffing_spectrum(spec, spec.josephson_energy(spec.phi))
    return float((energies[j + 2] - energies[j + 1]) - (energies[j + 1] - energies[j]))


def fc_segment(
    model: MlsDispersiveModel,
    device: DeviceSpec,
    target: int,
    j: int,
    envelope: Envelope,
    n: int = 0,
    m: int | None = None,
    strategy: str = "resonant-on-ground",
    phase: float = 0.0,
    drag: bool = False,
    drag_scale: float = 1.0,
    label: str = "",
) -> PulseSegment:
    """Red-sideband flux pulse with the carrier at the geometric-shift-corrected resonance.

    The geometric shift is evaluated at :func:`effective_amplitude` of the envelope.
    """
    spec = device.transmons[target]
    harmonics = harmonic_decomposition(spec, effective_amplitude(envelope))
    if m is None:
        m = sm.dominant_harmonic(harmonic_decomposition(spec, abs(envelope.amplitude)))
    carrier = sm.carrier(model, harmonics, j, n, m, target, strategy)
    return PulseSegment(
        kind=FLUX,
        target=target,
        carrier=carrier,
        envelope=envelope,
        phase=phase,
        drag=drag,
        drag_scale=drag_scale,
        anharmonicity=local_anharmonicity(device, target, j) if drag else 0.0,
        transition=j,
        label=label,
    )


def dipole_segment(
    model: MlsDispersiveModel,
    device: DeviceSpec,
    target: int,
    j: int,
    envelope: Envelope,
    phase: float = 0.0,
    drag: bool = False,
    drag_scale: float = 1.0,
    label: str = "",
) -> PulseSegment:
    """Direct drive of the dressed j <-> j+1 transition of ``target``."""
    wt = model.omega_tilde[target]
    if j + 1 >= len(wt):
        raise PulseError(f"transmon {target} has no level {j + 1}")
    return PulseSegment(
        kind=DIPOLE,
        target=target,
        carrier=float(wt[j + 1] - wt[j]),
        envelope=envelope,
        phase=phase,
        drag=drag,
        drag_scale=drag_scale,
        anharmonicity=local_anharmonicity(device, target, j) if drag else 0.0,
        transition=j,
        label=label,
    )


def build_Uent_schedule(
    device: DeviceSpec,
    model: MlsDispersiveModel | None = None,
    drag: bool = True,
    drag_scale: float = 1.0,
    strategy: str = "midpoint",
    table: Sequence = ENTANGLING_SEQUENCE,
) -> PulseSchedule:
    """Five-pulse sequence R01(1) R12(2) X12(2) R12(2) R01(1) of the entangling gate.

    The qubit-1 sidebands use ``strategy`` for the spectator dependence;
    the qubit-2 sidebands run with qubit 1 in its ground level and are
    resonant on it. DRAG is applied to every pulse acting on the 1 <-> 2
    transition of transmon 2.
    """
    if len(device.transmons) != 2:
        raise PulseError("the entangling sequence needs two transmons")
    if device.transmons[1].levels < 3:
        raise PulseError("transmon 2 needs at least 3 levels")
    if model is None:
        from .dispersive import mls_model

        model = mls_model(device)
    segments = []
    for label, kind, target, j, A, mu, sigma, two_tau in table:
        env = Envelope(A, mu, sigma, 0.5 * two_tau)
        use_drag = drag and target == 1 and j == 1
        if kind == FLUX:
            strat = strategy if target == 0 else "resonant-on-ground"
            seg = fc_segment(model, device, target, j, env, strategy=strat, drag=use_drag,
                             drag_scale=drag_scale, label=label)
        else:
            seg = dipole_segment(model, device, target, j, env, drag=use_drag, drag_scale=drag_scale, label=label)
        segments.append(seg)
    return PulseSchedule(tuple(segments))


def drive_hamiltonian(segment: PulseSegment, t: float, device: DeviceSpec) -> Operator:
    """Additive drive term (rad/ns) of one segment at time ``t``."""
    dims = device.dims
    order = int(np.prod(dims))
    if segment.target >= len(device.transmons):
        raise PulseError(f"segment targets transmon {segment.target}, device has {len(device.transmons)}")
    if not segment.envelope.inside(t):
        return Operator(np.zeros((order, order)), dims)
    k = segment.target
    spec = device.transmons[k]
    if segment.kind == FLUX:
        model = SystemModel(device)
        shifted = model.transmon_levels(k, spec.phi + float(segment.waveform(t)))
        static = model.transmon_levels(k, spec.phi)
        values = np.zeros(dims[k])
        values[:] = TWO_PI * (shifted - static)
        return embed(Operator(np.diag(values), (dims[k],)), k, dims)
    b = ladder(dims[k]).data
    coeff = DIPOLE_SCALE * float(segment.waveform(t))
    return embed(Operator(coeff * (b + b.T), (dims[k],)), k, dims)
