"""Scenario runner: configuration ingestion, parameter sweeps and data files.

A configuration is a JSON object::

    {
      "device": {...},                # DeviceSpec.from_dict layout, optional
      "params": {...},                # scenario parameters, defaults filled in
      "sweep": [{"path": "params.delta_phi", "grid": [0.01, 0.05]}],
      "integrator": {"method": "piecewise", "max_step": 0.02},
      "output": "results"
    }

Sweep paths address the normalized configuration tree, for example
``device.transmons[1].E_J`` or ``device.resonator.kappa``. Several axes span
their Cartesian product. Each grid point becomes one CSV row; the CSV starts
with ``#`` metadata lines carrying the configuration digest, and a JSON
summary sits next to it.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import itertools
import json
import math
import re
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.linalg import schur
from scipy.optimize import curve_fit, minimize, minimize_scalar

from . import __version__
from . import sideband_model as sm
from .device import (
    FLUX_LIMIT,
    HARMONIC_MAX_AMPLITUDE,
    TWO_PI,
    DeviceError,
    DeviceSpec,
    SystemModel,
    duffing_spectrum,
    harmonic_decomposition,
    numeric_harmonics,
)
from .dispersive import mls_model
from .evolve import (
    CollapseSet,
    DrivenHamiltonian,
    IntegratorConfig,
    dressed_states,
    extract_gate,
    leakage,
    propagator,
)
from .metrics import (
    COMPUTATIONAL_LABELS,
    average_fidelity_via_choi_evolution,
    bell_populations_from_gate,
    cnot_equivalence,
    fit_phases,
)
from .pulses import Envelope, PulseSchedule, build_Uent_schedule, effective_amplitude, fc_segment

SIG_DIGITS = 12
HALF_CRIT_RATIO = 0.25
RABI_MAX_SAMPLES = 20_000
MONOTONE_TOL = 1e-9
SWEEP_ROOTS = ("device", "params", "integrator")
INTEGRATOR_KEYS = ("method", "max_step", "tolerance", "order", "chunk")
TOP_LEVEL_KEYS = {"scenario", "device", "params", "sweep", "integrator", "output"}
_PATH_RE = re.compile(r"^[A-Za-z_]\w*(\[\d+\])*(\.[A-Za-z_]\w*(\[\d+\])*)*$")
_TOKEN_RE = re.compile(r"([A-Za-z_]\w*)|\[(\d+)\]")


class ConfigError(ValueError):
    """Invalid scenario configuration; messages start with the offending field path."""


# ---------------------------------------------------------------------------
# Default devices

SPECTATOR_DEVICE = {
    "transmons": [
        {"E_J": 25.0, "E_C": 0.25, "phi": 0.25, "levels": 4, "g_ge": 0.1},
        {"E_J": 35.0, "E_C": 0.3, "phi": 0.25, "levels": 4, "g_ge": 0.1},
    ],
    "resonator": {"omega_r": 7.8, "levels": 5},
}
GATE_DEVICE = {
    "transmons": [
        {"E_J": 25.0, "E_C": 0.25, "phi": 0.25, "levels": 4, "g_ge": 0.1},
        {"E_J": 61.0, "E_C": 0.3, "phi": 0.25, "levels": 4, "g_ge": 0.1},
    ],
    "resonator": {"omega_r": 7.8, "levels": 5},
}
SINGLE_TRANSMON_DEVICE = {
    "transmons": [{"E_J": 25.0, "E_C": 0.25, "phi": 0.25, "levels": 4, "g_ge": 0.1}],
    "resonator": {"omega_r": 7.8, "levels": 3},
}


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class SweepAxis:
    """One swept parameter: a path into the configuration tree and its grid."""

    path: str
    values: tuple


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario configuration.

    ``device`` is the normalized device tree (``DeviceSpec.to_dict``), ``params``
    holds every scenario parameter with defaults filled in and ``integrator``
    the integrator fields.
    """

    scenario: str
    device: dict
    params: dict
    sweep: tuple[SweepAxis, ...] = ()
    integrator: dict = field(default_factory=dict)
    output: str | None = None

    @classmethod
    def from_dict(cls, data: Mapping, scenario: str | None = None) -> "ScenarioConfig":
        if not isinstance(data, Mapping):
            raise ConfigError("config: expected a JSON object")
        unknown = sorted(set(data) - TOP_LEVEL_KEYS)
        if unknown:
            raise ConfigError(f"config: unknown field(s) {', '.join(unknown)}")
        name = scenario or data.get("scenario")
        if data.get("scenario") is not None and scenario is not None and data["scenario"] != scenario:
            raise ConfigError(f"scenario: config is for {data['scenario']!r}, not {scenario!r}")
        if name not in SCENARIOS:
            raise ConfigError(f"scenario: unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
        spec = SCENARIOS[name]
        try:
            device = DeviceSpec.from_dict(data.get("device", spec.device))
        except DeviceError as exc:
            raise ConfigError(str(exc)) from None
        if spec.transmons is not None and len(device.transmons) != spec.transmons:
            raise ConfigError(f"device.transmons: scenario {name!r} needs {spec.transmons} transmon(s)")
        params = _parse_params(data.get("params", {}), spec.params)
        integrator = _parse_integrator(data.get("integrator", {}))
        tree = {"device": device.to_dict(), "params": params, "integrator": integrator}
        sweep = _parse_sweep(data.get("sweep", []), tree)
        output = data.get("output")
        if output is not None and not isinstance(output, str):
            raise ConfigError("output: expected a directory path string")
        cfg = cls(name, tree["device"], params, sweep, integrator, output)
        if spec.check is not None:
            spec.check(cfg)
        return cfg

    @classmethod
    def from_json(cls, path: str | Path, scenario: str | None = None) -> "ScenarioConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON ({exc})") from None
        return cls.from_dict(data, scenario)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "device": self.device,
            "params": self.params,
            "sweep": [{"path": a.path, "grid": list(a.values)} for a in self.sweep],
            "integrator": self.integrator,
        }

    @property
    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), default=_json_default)
        return "sha256:" + hashlib.sha256(text.encode()).hexdigest()

    def with_integrator(self, **changes) -> "ScenarioConfig":
        merged = dict(self.integrator, **changes)
        return ScenarioConfig(self.scenario, self.device, self.params, self.sweep,
                              _parse_integrator(merged), self.output)

    def points(self) -> list[tuple]:
        if not self.sweep:
            return [()]
        return list(itertools.product(*(a.values for a in self.sweep)))

    def resolve(self, values: Sequence = ()) -> tuple[DeviceSpec, dict, IntegratorConfig]:
        """Device, parameters and integrator at one grid point."""
        tree = copy.deepcopy({"device": self.device, "params": self.params, "integrator": self.integrator})
        for axis, value in zip(self.sweep, values):
            _set_path(tree, _tokens(axis.path), value)
        device = DeviceSpec.from_dict(tree["device"])
        return device, tree["params"], IntegratorConfig(**tree["integrator"])


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"not serializable: {type(value).__name__}")


def _parse_params(data: Mapping, defaults: Mapping) -> dict:
    if not isinstance(data, Mapping):
        raise ConfigError("params: expected an object")
    unknown = sorted(set(data) - set(defaults))
    if unknown:
        raise ConfigError(f"params: unknown field(s) {', '.join(unknown)}")
    params = copy.deepcopy(dict(defaults))
    for key, value in data.items():
        default = defaults[key]
        where = f"params.{key}"
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{where}: expected true or false")
        elif isinstance(default, (int, float)) and not isinstance(default, bool):
            if key == "drag_scale" and value == "calibrate":
                pass
            elif isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{where}: expected a number")
            elif isinstance(default, int) and not float(value).is_integer():
                raise ConfigError(f"{where}: expected an integer")
            else:
                value = type(default)(value)
        elif isinstance(default, str) and not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        params[key] = value
    return params


def _parse_integrator(data: Mapping) -> dict:
    if not isinstance(data, Mapping):
        raise ConfigError("integrator: expected an object")
    unknown = sorted(set(data) - set(INTEGRATOR_KEYS))
    if unknown:
        raise ConfigError(f"integrator: unknown field(s) {', '.join(unknown)}")
    defaults = IntegratorConfig()
    merged = {key: data.get(key, getattr(defaults, key)) for key in INTEGRATOR_KEYS}
    try:
        IntegratorConfig(**merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"integrator: {exc}") from None
    return merged


def _tokens(path: str) -> list:
    return [name if name else int(index) for name, index in _TOKEN_RE.findall(path)]


def _get_path(tree, tokens):
    node = tree
    for tok in tokens:
        if isinstance(tok, int):
            if not isinstance(node, list) or tok >= len(node):
                raise KeyError(tok)
        elif not isinstance(node, Mapping) or tok not in node:
            raise KeyError(tok)
        node = node[tok]
    return node


def _set_path(tree, tokens, value):
    parent = _get_path(tree, tokens[:-1])
    parent[tokens[-1]] = value


def _grid(spec, where: str) -> tuple:
    if isinstance(spec, Mapping):
        allowed = {"start", "stop", "num", "scale"}
        unknown = sorted(set(spec) - allowed)
        if unknown:
            raise ConfigError(f"{where}: unknown field(s) {', '.join(unknown)}")
        try:
            start, stop, num = float(spec["start"]), float(spec["stop"]), int(spec["num"])
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"{where}: a range needs numeric start, stop and num") from None
        scale = spec.get("scale", "linear")
        if num < 1:
            raise ConfigError(f"{where}: num must be positive")
        if scale == "linear":
            values = np.linspace(start, stop, num)
        elif scale == "log":
            if start <= 0 or stop <= 0:
                raise ConfigError(f"{where}: a log range needs positive bounds")
            values = np.geomspace(start, stop, num)
        else:
            raise ConfigError(f"{where}: scale must be 'linear' or 'log'")
        return tuple(float(v) for v in values)
    if not isinstance(spec, list) or not spec:
        raise ConfigError(f"{where}: expected a non-empty list or a range object")
    return tuple(spec)


def _parse_sweep(data, tree: dict) -> tuple[SweepAxis, ...]:
    if not isinstance(data, list):
        raise ConfigError("sweep: expected a list of axes")
    axes, seen = [], set()
    for i, item in enumerate(data):
        where = f"sweep[{i}]"
        if not isinstance(item, Mapping) or set(item) != {"path", "grid"}:
            raise ConfigError(f"{where}: each axis needs exactly 'path' and 'grid'")
        path = item["path"]
        if not isinstance(path, str) or not _PATH_RE.match(path):
            raise ConfigError(f"{where}.path: malformed parameter path {path!r}")
        tokens = _tokens(path)
        if tokens[0] not in SWEEP_ROOTS:
            raise ConfigError(f"{where}.path: unknown parameter path {path!r}")
        try:
            current = _get_path(tree, tokens)
        except KeyError:
            raise ConfigError(f"{where}.path: unknown parameter path {path!r}") from None
        if isinstance(current, (Mapping, list)):
            raise ConfigError(f"{where}.path: {path!r} is not a scalar parameter")
        if path in seen:
            raise ConfigError(f"{where}.path: {path!r} is swept twice")
        seen.add(path)
        values = _grid(item["grid"], f"{where}.grid")
        for value in values:
            if isinstance(current, (int, float)) and (isinstance(value, bool) or not isinstance(value, (int, float))):
                if not (tokens[-1] == "drag_scale" and value == "calibrate") and current is not None:
                    raise ConfigError(f"{where}.grid: {path!r} takes numbers, got {value!r}")
        axes.append(SweepAxis(path, values))
    return tuple(axes)


def _check_index(cfg: ScenarioConfig, key: str):
    n = len(cfg.device["transmons"])
    if not 0 <= cfg.params[key] < n:
        raise ConfigError(f"params.{key}: transmon index {cfg.params[key]} outside 0..{n - 1}")


def _check_sideband(cfg: ScenarioConfig):
    _check_index(cfg, "target")
    if cfg.params["strategy"] not in sm.STRATEGIES:
        raise ConfigError(f"params.strategy: choose from {sm.STRATEGIES}")
    levels = cfg.device["transmons"][cfg.params["target"]]["levels"]
    if not 0 <= cfg.params["transition"] < levels - 1:
        raise ConfigError(f"params.transition: the target has no level {cfg.params['transition'] + 1}")
    for key in ("sigma", "tau_over_sigma"):
        if key in cfg.params and cfg.params[key] <= 0:
            raise ConfigError(f"params.{key}: must be positive")


def _check_gate(cfg: ScenarioConfig):
    if cfg.params["strategy"] not in sm.STRATEGIES:
        raise ConfigError(f"params.strategy: choose from {sm.STRATEGIES}")
    ref = cfg.params.get("reference_phases")
    if ref is not None and (not isinstance(ref, list) or len(ref) != 3):
        raise ConfigError("params.reference_phases: expected three numbers or null")


# ---------------------------------------------------------------------------
# Validation


def _amplitudes(device: DeviceSpec, params: Mapping, scenario: str) -> list[tuple[int, float, str]]:
    """(target, flux amplitude, field path) of every flux modulation a scenario applies."""
    if scenario in ("stark-error", "sideband-pi"):
        return [(params["target"], float(params["amplitude"]), "params.amplitude")]
    if scenario in ("rabi-sweep", "geometric-shift", "spectrum"):
        return [(params["target"], float(params["delta_phi"]), "params.delta_phi")]
    if scenario in ("cnot", "fidelity-vs-kappa"):
        from .pulses import ENTANGLING_SEQUENCE

        return [(row[2], row[4], "pulse table") for row in ENTANGLING_SEQUENCE if row[1] == "flux"]
    return []


def _transition_warnings(device: DeviceSpec) -> list[str]:
    out = []
    for k, (spec, g) in enumerate(zip(device.transmons, device.g_ge)):
        levels = duffing_spectrum(spec, spec.josephson_energy(spec.phi))
        for j in range(spec.levels - 1):
            Delta = levels[j + 1] - levels[j] - device.omega_r
            coupling = g * math.sqrt(j + 1)
            crit = sm.g_crit(Delta)
            where = f"device.transmons[{k}]"
            if coupling >= crit:
                out.append(
                    f"{where}: g_{j}{j + 1}/2pi = {coupling:.4g} GHz exceeds g_crit/2pi = {crit:.4g} GHz "
                    f"(|Delta|/2 with Delta/2pi = {Delta:.4g} GHz); the dispersive model does not apply"
                )
            elif coupling >= HALF_CRIT_RATIO * abs(Delta):
                out.append(
                    f"{where}: dispersive ratio |g/Delta| = {coupling / abs(Delta):.3f} on transition {j}-{j + 1} "
                    f"is above {HALF_CRIT_RATIO} (g above g_crit/2 = {crit / 2:.4g} GHz)"
                )
    return out


def _point_label(cfg: ScenarioConfig, values: Sequence) -> str:
    return ", ".join(f"{a.path}={v}" for a, v in zip(cfg.sweep, values))


def validate(config: ScenarioConfig | Mapping, scenario: str | None = None) -> list[str]:
    """Physics-validity warnings for every grid point, without running anything.

    Raises :class:`ConfigError` for hard errors: malformed fields, a device
    outside its domain, or a flux excursion reaching half a flux quantum.
    """
    cfg = config if isinstance(config, ScenarioConfig) else ScenarioConfig.from_dict(config, scenario)
    report: list[str] = []
    for values in cfg.points():
        prefix = f"[{_point_label(cfg, values)}] " if cfg.sweep else ""
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                device, params, _ = cfg.resolve(values)
            except (DeviceError, ValueError, TypeError) as exc:
                raise ConfigError(f"{prefix}{exc}") from None
        notes = [f"device: {w.message}" for w in caught]
        for target, amp, where in _amplitudes(device, params, cfg.scenario):
            phi = device.transmons[target].phi
            if amp < 0:
                raise ConfigError(f"{prefix}{where}: flux amplitude must be non-negative")
            if abs(phi) + amp >= FLUX_LIMIT:
                raise ConfigError(
                    f"{prefix}{where}: |phi| + delta_phi = {abs(phi) + amp:.4g} reaches half a flux quantum"
                )
            if amp > HARMONIC_MAX_AMPLITUDE:
                notes.append(f"{where}: amplitude {amp} is above {HARMONIC_MAX_AMPLITUDE}, outside the closed-form range")
        notes += _transition_warnings(device)
        for note in notes:
            if prefix + note not in report:
                report.append(prefix + note)
    return report


# ---------------------------------------------------------------------------
# Numerical building blocks


def sideband_envelope(params: Mapping) -> Envelope:
    """Truncated Gaussian flux envelope starting at t = 0."""
    tau = params["tau_over_sigma"] * params["sigma"]
    return Envelope(params["amplitude"], tau, params["sigma"], tau)


def _doublet_labels(device: DeviceSpec, target: int, j: int, spectator: int | None):
    """Bare labels (|j+1; 0>, |j; 1>) of the target with the other transmons fixed."""
    n = len(device.transmons)
    rest = [0] * n
    if spectator is not None:
        rest[1 - target] = spectator
    upper = list(rest)
    lower = list(rest)
    upper[target] = j + 1
    lower[target] = j
    return tuple(upper) + (0,), tuple(lower) + (1,)


def single_sideband(device: DeviceSpec, params: Mapping, config: IntegratorConfig = IntegratorConfig()) -> dict:
    """Simulate one Gaussian red-sideband flux pulse and its closed-form prediction.

    Returns the carrier, the averaged coupling, the carrier detunings per
    spectator level, and the dressed-frame doublet blocks (one 2x2 block per
    spectator level; rows and columns ordered |j+1; 0>, |j; 1>).
    """
    target, j = params["target"], params["transition"]
    env = sideband_envelope(params)
    model = mls_model(device)
    spec = device.transmons[target]
    seg = fc_segment(model, device, target, j, env, strategy=params["strategy"], label="sideband")
    m = sm.dominant_harmonic(harmonic_decomposition(spec, abs(env.amplitude)))
    pred = sm.predict(model, harmonic_decomposition(spec, effective_amplitude(env)), j, 0, m, target, params["strategy"])
    eps_bar = sm.averaged_coupling(model, spec, env, env.start, env.end, j, 0, m, target)
    spectators = (0, 1) if len(device.transmons) == 2 else (None,)
    labels = [lab for s in spectators for lab in _doublet_labels(device, target, j, s)]
    M = extract_gate(device, PulseSchedule((seg,)), labels, config)
    blocks = [M[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] for i in range(len(spectators))]
    return {
        "carrier": seg.carrier,
        "harmonic": m,
        "eps_bar": eps_bar,
        "detunings": pred.detunings,
        "pulse_time": env.end - env.start,
        "blocks": blocks,
        "leakage": leakage(M),
    }


def constant_drive_hamiltonian(device: DeviceSpec, target: int, delta_phi: float, carrier: float) -> DrivenHamiltonian:
    """Static device with the flux of ``target`` modulated as delta_phi cos(2 pi carrier t)."""
    model = SystemModel(device)
    offsets = model.static_fluxes

    def diagonal(times):
        fluxes = [np.full(len(times), f) for f in offsets]
        fluxes[target] = offsets[target] + delta_phi * np.cos(TWO_PI * carrier * times)
        return model.diagonal(fluxes)

    return DrivenHamiltonian(model.static, model.dims, diagonal)


def peak_transfer(period_propagator: np.ndarray, initial: np.ndarray, final: np.ndarray) -> float:
    """Largest stroboscopic transfer probability reachable under a periodic drive.

    With Floquet states f_k of the one-period propagator the transfer after
    n periods is |sum_k <final|f_k><f_k|initial> e^{-i n q_k}|^2, bounded by
    (sum_k |<final|f_k>| |<f_k|initial>|)^2 and approached when the
    quasienergies dephase.
    """
    _, Z = schur(period_propagator, output="complex")
    weights = np.abs(final.conj() @ Z) * np.abs(Z.conj().T @ initial)
    return float(min(weights.sum() ** 2, 1.0))


def _rabi_model(t, amplitude, freq):
    return amplitude * np.sin(np.pi * freq * t) ** 2


def fit_rabi(times: np.ndarray, populations: np.ndarray, guess: float) -> tuple[float, float]:
    """Fit P(t) = A sin^2(pi f t); returns (f, A) with f in the inverse unit of ``times``.

    A coarse scan over f in [0.3, 3] x ``guess`` (with A solved linearly)
    seeds a least-squares refinement.
    """
    times = np.asarray(times, dtype=float)
    populations = np.asarray(populations, dtype=float)
    best = None
    for f in guess * np.linspace(0.3, 3.0, 541):
        s = np.sin(np.pi * f * times) ** 2
        A = float(s @ populations / (s @ s))
        cost = float(np.sum((populations - A * s) ** 2))
        if best is None or cost < best[0]:
            best = (cost, A, f)
    _, A0, f0 = best
    (A, f), _ = curve_fit(_rabi_model, times, populations, p0=(A0, f0), maxfev=10_000)
    return float(abs(f)), float(A)


def numeric_rabi(
    device: DeviceSpec,
    target: int,
    delta_phi: float,
    carrier: float,
    guess_mhz: float,
    periods: float = 1.25,
    transition: int = 0,
    config: IntegratorConfig = IntegratorConfig(),
) -> tuple[float, float, float]:
    """Rabi frequency (MHz) of the red sideband from a time-domain fit.

    The drive is a constant-amplitude cosine; the population of the dressed
    |j; 1> state is sampled at multiples of the drive period, starting from
    the dressed |j+1; 0>. Returns (Omega, A) with Omega = f sqrt(A), the
    resonant Rabi frequency even when the carrier is slightly detuned.
    """
    H = constant_drive_hamiltonian(device, target, delta_phi, carrier)
    period = 1.0 / carrier
    U = propagator(H, 0.0, period, config)
    labels = _doublet_labels(device, target, transition, 0 if len(device.transmons) == 2 else None)
    basis, _ = dressed_states(device, labels)
    total = max(int(math.ceil(periods * 1e3 / guess_mhz / period)), 8)
    stride = max(1, int(math.ceil(total / RABI_MAX_SAMPLES)))
    step = np.linalg.matrix_power(U, stride)
    count = int(math.ceil(total / stride))
    psi = basis[:, 0].copy()
    pops = np.empty(count + 1)
    pops[0] = abs(basis[:, 1].conj() @ psi) ** 2
    for n in range(1, count + 1):
        psi = step @ psi
        pops[n] = abs(basis[:, 1].conj() @ psi) ** 2
    times = np.arange(count + 1) * stride * period
    f, A = fit_rabi(times, pops, guess_mhz * 1e-3)
    return f * math.sqrt(min(A, 1.0)) * 1e3, f * 1e3, A


def locate_resonance(
    device: DeviceSpec,
    target: int,
    delta_phi: float,
    guess: float,
    window: float,
    transition: int = 0,
    config: IntegratorConfig = IntegratorConfig(),
) -> tuple[float, float]:
    """Carrier (GHz) maximizing the peak sideband transfer within guess +- window.

    Returns (carrier, peak transfer).
    """
    labels = _doublet_labels(device, target, transition, 0 if len(device.transmons) == 2 else None)
    basis, _ = dressed_states(device, labels)

    def loss(carrier):
        H = constant_drive_hamiltonian(device, target, delta_phi, carrier)
        U = propagator(H, 0.0, 1.0 / carrier, config)
        return -peak_transfer(U, basis[:, 0], basis[:, 1])

    res = minimize_scalar(loss, bounds=(guess - window, guess + window), method="bounded",
                          options={"xatol": 1e-8})
    return float(res.x), float(-res.fun)


def calibrate_drag_scale(
    device: DeviceSpec,
    strategy: str = "midpoint",
    config: IntegratorConfig = IntegratorConfig(),
    bounds: tuple[float, float] = (0.0, 0.5),
    xatol: float = 0.01,
) -> tuple[float, float]:
    """DRAG scale maximizing the dissipation-free phase-fitted gate fidelity.

    Returns (scale, fidelity).
    """
    ideal = device.replace(kappa=0.0, T1=())

    def loss(scale):
        schedule = build_Uent_schedule(ideal, drag_scale=scale, strategy=strategy)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            V = extract_gate(ideal, schedule, COMPUTATIONAL_LABELS, config)
        return -fit_phases(V).fidelity

    res = minimize_scalar(loss, bounds=bounds, method="bounded", options={"xatol": xatol})
    return float(res.x), float(-res.fun)


def calibrate_output_frame(phases: Sequence[float], reference: Sequence[float]) -> tuple[tuple[float, ...], tuple[float, float], float]:
    """Output-side single-qubit Z frame that best maps fitted phases onto reference phases.

    Output phase gates diag(1, e^{ia}) on transmon 1 and diag(1, e^{ib}) on
    transmon 2 shift the phases to (phi1 + a, phi2 + b, phi3 + a + b); the
    combination phi3 - phi1 - phi2 is frame independent. Returns the
    shifted phases in [0, 2 pi), (a, b) and the largest remaining angular
    distance to the reference.
    """
    p = np.asarray(phases, dtype=float)
    r = np.asarray(reference, dtype=float)

    def shifted(ab):
        a, b = ab
        return p + np.array([a, b, a + b])

    def cost(ab):
        return float(np.sum(1.0 - np.cos(shifted(ab) - r)))

    seeds = [(x, y) for x in np.linspace(0, TWO_PI, 8, endpoint=False) for y in np.linspace(0, TWO_PI, 8, endpoint=False)]
    best = min((minimize(cost, s, method="BFGS") for s in seeds), key=lambda res: res.fun)
    out = np.mod(shifted(best.x), TWO_PI)
    gap = np.mod(out - r + np.pi, TWO_PI) - np.pi
    a, b = np.mod(best.x, TWO_PI)
    return tuple(float(x) for x in out), (float(a), float(b)), float(np.abs(gap).max())


# ---------------------------------------------------------------------------
# Scenarios

NAN = float("nan")


def _stark_error(device, params, config):
    out = single_sideband(device, params, config)
    if len(out["blocks"]) != 2:
        raise ConfigError("stark-error needs a spectator transmon")
    delta = out["detunings"][1]
    F_an, avg_an = sm.gate_fidelity_simple(out["eps_bar"], delta)
    U0, U1 = out["blocks"]
    F_num = abs(np.trace(U0.conj().T @ U1)) ** 2 / 4.0
    error_num = 1.0 - (2.0 * F_num + 1.0) / 3.0
    error_an = 1.0 - avg_an
    row = {
        "carrier_ghz": out["carrier"],
        "eps_bar_mhz": out["eps_bar"],
        "spectator_detuning_mhz": delta,
        "pulse_ns": out["pulse_time"],
        "error_analytic": error_an,
        "population_error_analytic": 1.0 - sm.target_population(out["eps_bar"], delta),
        "error_numeric": error_num,
        "relative_deviation": (error_num - error_an) / error_an if error_an > 0 else NAN,
        "leakage": out["leakage"],
    }
    return row, {}


def _sideband_pi(device, params, config):
    out = single_sideband(device, params, config)
    row = {
        "carrier_ghz": out["carrier"],
        "harmonic": out["harmonic"],
        "eps_bar_mhz": out["eps_bar"],
        "delta_ground_mhz": out["detunings"][0],
        "delta_excited_mhz": out["detunings"][-1],
    }
    worst = max(abs(d) for d in out["detunings"])
    row["delta_over_eps"] = worst / out["eps_bar"]
    row["transfer_analytic"] = sm.target_population(out["eps_bar"], worst)
    transfers = []
    for s, block in zip(("s0", "s1"), out["blocks"]):
        forward, backward = abs(block[1, 0]) ** 2, abs(block[0, 1]) ** 2
        row[f"transfer_{s}_forward"] = forward
        row[f"transfer_{s}_backward"] = backward
        transfers += [forward, backward]
    row.setdefault("transfer_s1_forward", NAN)
    row.setdefault("transfer_s1_backward", NAN)
    row["transfer_min"] = min(transfers)
    row["leakage"] = out["leakage"]
    return row, {}


def _rabi_point(device, params, config):
    target, j = params["target"], params["transition"]
    spec = device.transmons[target]
    h = harmonic_decomposition(spec, params["delta_phi"])
    model = mls_model(device)
    pred = sm.predict(model, h, j, 0, None, target)
    rabi_num, oscillation, amp = numeric_rabi(device, target, params["delta_phi"], pred.resonance, pred.rabi,
                                 params["periods"], j, config)
    g = device.g_ge[target] * math.sqrt(j + 1)
    row = {
        "harmonic": pred.harmonic,
        "carrier_ghz": pred.resonance,
        "rabi_analytic_mhz": pred.rabi,
        "rabi_numeric_mhz": rabi_num,
        "relative_deviation": (rabi_num - pred.rabi) / pred.rabi,
        "oscillation_mhz": oscillation,
        "fit_amplitude": amp,
        "g_crit_ghz": pred.g_crit,
        "g_over_g_crit": g / pred.g_crit,
    }
    return row, {}


def _geometric_point(device, params, config):
    target, j = params["target"], params["transition"]
    spec = device.transmons[target]
    h = harmonic_decomposition(spec, params["delta_phi"])
    num = numeric_harmonics(spec, params["delta_phi"], j, params["samples"])
    row = {
        "omega_p_prime_ghz": h.omega_p_prime,
        "G_analytic_mhz": h.G * 1e3,
        "G_numeric_mhz": num.G * 1e3,
        "G_relative_deviation": (h.G - num.G) / num.G if num.G else NAN,
        "resonance_analytic_ghz": NAN,
        "resonance_numeric_ghz": NAN,
        "resonance_offset_mhz": NAN,
        "peak_transfer": NAN,
    }
    if params["resonance_scan"]:
        model = mls_model(device)
        pred = sm.predict(model, h, j, 0, None, target)
        window = max(2e-3 * pred.rabi / pred.harmonic, 2e-3)
        found, peak = locate_resonance(device, target, params["delta_phi"], pred.resonance, window, j, config)
        row.update(
            resonance_analytic_ghz=pred.resonance,
            resonance_numeric_ghz=found,
            resonance_offset_mhz=(pred.resonance - found) * 1e3,
            peak_transfer=peak,
        )
    return row, {}


def _spectrum_point(device, params, config):
    target, j = params["target"], params["transition"]
    spec = device.transmons[target]
    h = harmonic_decomposition(spec, params["delta_phi"])
    num = numeric_harmonics(spec, params["delta_phi"], j, params["samples"])
    row = {"omega_p_prime_ghz": h.omega_p_prime, "G_analytic_mhz": h.G * 1e3, "G_numeric_mhz": num.G * 1e3}
    for m in range(1, 5):
        row[f"eps{m}_analytic_mhz"] = h.eps[m] * 1e3
        row[f"eps{m}_numeric_mhz"] = num.eps[m] * 1e3
    row["odd_to_plasma_ratio"] = max(abs(num.eps[1]), abs(num.eps[3])) / h.omega_p_prime
    row["dominant_harmonic"] = sm.dominant_harmonic(h)
    return row, {}


def _resolve_drag(device, params, config) -> float:
    if params["drag_scale"] == "calibrate":
        return calibrate_drag_scale(device, params["strategy"], config)[0]
    return float(params["drag_scale"])


def _cnot_point(device, params, config):
    scale = _resolve_drag(device, params, config)
    schedule = build_Uent_schedule(device, drag=params["drag"], drag_scale=scale, strategy=params["strategy"])
    ideal = device.replace(kappa=0.0, T1=())
    V = extract_gate(ideal, schedule, COMPUTATIONAL_LABELS, config)
    fit = fit_phases(V)
    table = bell_populations_from_gate(V, fit.phases)
    thetas = cnot_equivalence(fit.phases)
    row = {"drag_scale": scale, "fidelity": fit.fidelity, "average_fidelity": fit.average}
    for i, p in enumerate(fit.phases, 1):
        row[f"phase_{i}"] = p
    for i, t in enumerate(thetas, 1):
        row[f"theta_{i}"] = t
    for i in range(4):
        row[f"bell_{i + 1}"] = table[i, i]
    row["bell_offdiag_max"] = float(np.max(table - np.diag(np.diag(table))))
    row["leakage"] = leakage(V)
    details = {
        "gate_magnitudes": np.abs(V).round(SIG_DIGITS).tolist(),
        "bell_table": table.tolist(),
        "phase_alternatives": [list(a) for a in fit.alternatives],
        "carriers_ghz": [s.carrier for s in schedule.segments],
    }
    row.update(choi_fidelity=NAN, choi_average_fidelity=NAN)
    if params["choi"]:
        cfit = average_fidelity_via_choi_evolution(device, schedule, CollapseSet.from_device(device), config)
        row.update(choi_fidelity=cfit.fidelity, choi_average_fidelity=cfit.average)
        details["choi_phases"] = list(cfit.phases)
    row.update(frame_phase_1=NAN, frame_phase_2=NAN, frame_phase_3=NAN, frame_residual=NAN)
    if params["reference_phases"] is not None:
        framed, shifts, residual = calibrate_output_frame(fit.phases, params["reference_phases"])
        for i, p in enumerate(framed, 1):
            row[f"frame_phase_{i}"] = p
        row["frame_residual"] = residual
        details["frame_shifts"] = list(shifts)
    row["phase_invariant"] = float(np.mod(fit.phases[2] - fit.phases[0] - fit.phases[1], TWO_PI))
    return row, details


def _kappa_point(device, params, config):
    scale = _resolve_drag(device, params, config)
    schedule = build_Uent_schedule(device, drag=params["drag"], drag_scale=scale, strategy=params["strategy"])
    fit = average_fidelity_via_choi_evolution(device, schedule, CollapseSet.from_device(device), config)
    row = {"kappa_mhz": device.kappa, "drag_scale": scale, "fidelity": fit.fidelity, "average_fidelity": fit.average}
    for i, p in enumerate(fit.phases, 1):
        row[f"phase_{i}"] = p
    return row, {}


def _dispersive_columns(device: DeviceSpec) -> tuple[str, ...]:
    cols = []
    for k in range(len(device.transmons)):
        cols += [f"omega_tilde_01_{k}", f"lambda_0_{k}", f"chi_0_{k}", f"stark_1_{k}", f"detuning_{k}", f"g_crit_{k}"]
    if len(device.transmons) == 2:
        cols.append("J_00")
    return tuple(cols)


def _dispersive_point(device, params, config):
    model = mls_model(device, printed_signs=params["printed_signs"])
    row = {}
    for k in range(len(device.transmons)):
        wt = model.omega_tilde[k]
        bare = model.omega[k][1] - model.omega[k][0] - model.omega_r
        row.update({
            f"omega_tilde_01_{k}": wt[1] - wt[0],
            f"lambda_0_{k}": model.lam[k][0],
            f"chi_0_{k}": model.chi[k][0],
            f"stark_1_{k}": model.S[k][1],
            f"detuning_{k}": model.dressed_detuning(k, 0, 0),
            f"g_crit_{k}": sm.g_crit(bare),
        })
    if model.J is not None:
        row["J_00"] = model.J[0, 0]
    dump = {}
    for name in ("omega", "g", "lam", "Lam", "chi", "mu", "xi", "xi_p", "xi_pp", "zeta", "zeta_p",
                 "eta", "eta_p", "L", "S", "omega_tilde"):
        dump[name] = [np.asarray(v).tolist() for v in getattr(model, name)]
    for name in ("J", "J_p", "lam_J", "Lam_J"):
        value = getattr(model, name)
        dump[name] = None if value is None else np.asarray(value).tolist()
    dump["omega_r"] = model.omega_r
    return row, {"coefficients_ghz": dump}


# ---------------------------------------------------------------------------
# Summaries


def _finite(values):
    return [v for v in values if isinstance(v, (int, float)) and math.isfinite(v)]


def _max_abs(points, column):
    vals = _finite(abs(p.row.get(column, NAN)) for p in points if p.ok)
    return max(vals) if vals else None


def _summary_stark(cfg, points):
    return {"max_abs_relative_deviation": _max_abs(points, "relative_deviation")}


def _summary_sideband(cfg, points):
    vals = _finite(p.row["transfer_min"] for p in points if p.ok)
    return {"transfer_min": min(vals) if vals else None}


def _summary_rabi(cfg, points):
    return {"max_abs_relative_deviation": _max_abs(points, "relative_deviation")}


def _summary_geometric(cfg, points):
    return {
        "max_abs_G_relative_deviation": _max_abs(points, "G_relative_deviation"),
        "max_abs_resonance_offset_mhz": _max_abs(points, "resonance_offset_mhz"),
    }


def _summary_spectrum(cfg, points):
    return {"max_odd_to_plasma_ratio": _max_abs(points, "odd_to_plasma_ratio")}


def _summary_cnot(cfg, points):
    return {"points": [{"index": p.index, **p.details} for p in points if p.ok]}


def _summary_kappa(cfg, points):
    ok = sorted((p for p in points if p.ok), key=lambda p: p.row["kappa_mhz"])
    averages = [p.row["average_fidelity"] for p in ok]
    summary = {
        "kappa_mhz": [p.row["kappa_mhz"] for p in ok],
        "average_fidelity": averages,
        "monotone_non_increasing": all(b <= a + MONOTONE_TOL for a, b in zip(averages, averages[1:])),
    }
    if cfg.params["reference"]:
        device, params, config = cfg.resolve(cfg.points()[0])
        ideal = device.replace(kappa=0.0, T1=())
        scale = _resolve_drag(ideal, params, config)
        schedule = build_Uent_schedule(ideal, drag=params["drag"], drag_scale=scale, strategy=params["strategy"])
        V = extract_gate(ideal, schedule, COMPUTATIONAL_LABELS, config)
        ref = fit_phases(V)
        summary["dissipation_free_average_fidelity"] = ref.average
        if averages:
            summary["gap_at_smallest_kappa"] = ref.average - averages[0]
    return summary


def _summary_dispersive(cfg, points):
    return {"points": [{"index": p.index, **p.details} for p in points if p.ok]}


@dataclass(frozen=True)
class Scenario:
    """A runnable scenario: defaults, CSV columns, point evaluator and summary."""

    name: str
    description: str
    device: dict
    params: dict
    columns: tuple[str, ...] | Callable[[DeviceSpec], tuple[str, ...]]
    evaluate: Callable
    summarize: Callable | None = None
    transmons: int | None = None
    check: Callable | None = None

    def column_names(self, device: DeviceSpec) -> tuple[str, ...]:
        return self.columns(device) if callable(self.columns) else self.columns


_PULSE_PARAMS = {"amplitude": 0.075, "sigma": 6.6873, "tau_over_sigma": 2.0, "target": 0, "transition": 0}
_GATE_PARAMS = {"drag": True, "drag_scale": 1.0, "strategy": "midpoint"}

SCENARIOS: dict[str, Scenario] = {
    s.name: s
    for s in (
        Scenario(
            "stark-error",
            "Average error of a red-sideband pi pulse caused by the spectator Stark shift.",
            SPECTATOR_DEVICE,
            dict(_PULSE_PARAMS, strategy="resonant-on-ground"),
            ("carrier_ghz", "eps_bar_mhz", "spectator_detuning_mhz", "pulse_ns", "error_analytic",
             "population_error_analytic", "error_numeric", "relative_deviation", "leakage"),
            _stark_error,
            _summary_stark,
            transmons=2,
            check=_check_sideband,
        ),
        Scenario(
            "rabi-sweep",
            "Analytic and time-domain-fit sideband Rabi frequency under a constant cosine flux drive.",
            SINGLE_TRANSMON_DEVICE,
            {"delta_phi": 0.05, "target": 0, "transition": 0, "periods": 1.25},
            ("harmonic", "carrier_ghz", "rabi_analytic_mhz", "rabi_numeric_mhz", "relative_deviation",
             "oscillation_mhz", "fit_amplitude", "g_crit_ghz", "g_over_g_crit"),
            _rabi_point,
            _summary_rabi,
            check=lambda cfg: _check_index(cfg, "target"),
        ),
        Scenario(
            "geometric-shift",
            "Closed-form and Fourier-mean geometric shift; optional numerical resonance location.",
            SINGLE_TRANSMON_DEVICE,
            {"delta_phi": 0.05, "target": 0, "transition": 0, "samples": 256, "resonance_scan": False},
            ("omega_p_prime_ghz", "G_analytic_mhz", "G_numeric_mhz", "G_relative_deviation",
             "resonance_analytic_ghz", "resonance_numeric_ghz", "resonance_offset_mhz", "peak_transfer"),
            _geometric_point,
            _summary_geometric,
            check=lambda cfg: _check_index(cfg, "target"),
        ),
        Scenario(
            "spectrum",
            "Harmonic content of the modulated transition frequency, closed form and Fourier analysis.",
            SINGLE_TRANSMON_DEVICE,
            {"delta_phi": 0.05, "target": 0, "transition": 0, "samples": 256},
            ("omega_p_prime_ghz", "G_analytic_mhz", "G_numeric_mhz")
            + tuple(f"eps{m}_{kind}_mhz" for m in range(1, 5) for kind in ("analytic", "numeric"))
            + ("odd_to_plasma_ratio", "dominant_harmonic"),
            _spectrum_point,
            _summary_spectrum,
            check=lambda cfg: _check_index(cfg, "target"),
        ),
        Scenario(
            "sideband-pi",
            "Population transfer of a single Gaussian red-sideband pulse for each spectator level.",
            SPECTATOR_DEVICE,
            dict(_PULSE_PARAMS, strategy="midpoint"),
            ("carrier_ghz", "harmonic", "eps_bar_mhz", "delta_ground_mhz", "delta_excited_mhz", "delta_over_eps",
             "transfer_analytic", "transfer_s0_forward", "transfer_s0_backward", "transfer_s1_forward",
             "transfer_s1_backward", "transfer_min", "leakage"),
            _sideband_pi,
            _summary_sideband,
            check=_check_sideband,
        ),
        Scenario(
            "cnot",
            "Five-pulse entangling sequence: fitted phases, fidelities, Bell table, CNOT angles.",
            GATE_DEVICE,
            dict(_GATE_PARAMS, choi=True, reference_phases=None),
            ("drag_scale", "fidelity", "average_fidelity", "phase_1", "phase_2", "phase_3", "theta_1", "theta_2",
             "theta_3", "bell_1", "bell_2", "bell_3", "bell_4", "bell_offdiag_max", "leakage", "choi_fidelity",
             "choi_average_fidelity", "frame_phase_1", "frame_phase_2", "frame_phase_3", "frame_residual",
             "phase_invariant"),
            _cnot_point,
            _summary_cnot,
            transmons=2,
            check=_check_gate,
        ),
        Scenario(
            "fidelity-vs-kappa",
            "Process fidelity of the entangling sequence with resonator and transmon decay.",
            GATE_DEVICE,
            dict(_GATE_PARAMS, reference=True),
            ("kappa_mhz", "drag_scale", "fidelity", "average_fidelity", "phase_1", "phase_2", "phase_3"),
            _kappa_point,
            _summary_kappa,
            transmons=2,
            check=_check_gate,
        ),
        Scenario(
            "dispersive-report",
            "Dispersive coefficients of the device; the JSON summary holds the full dump.",
            GATE_DEVICE,
            {"printed_signs": False},
            _dispersive_columns,
            _dispersive_point,
            _summary_dispersive,
        ),
    )
}


# ---------------------------------------------------------------------------
# Running


@dataclass(frozen=True)
class PointResult:
    """Outcome of one grid point; ``error`` is set when the point failed."""

    index: int
    values: tuple
    row: dict
    details: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class RunRecord:
    """Per-point results of one scenario run plus provenance."""

    scenario: str
    digest: str
    version: str
    axes: tuple[str, ...]
    columns: tuple[str, ...]
    points: list[PointResult]
    wall_clock: float = 0.0
    summary: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    summary_error: str | None = None

    @property
    def failures(self) -> list[PointResult]:
        return [p for p in self.points if not p.ok]

    @property
    def succeeded(self) -> bool:
        return not self.failures and self.summary_error is None

    def csv_text(self) -> str:
        buf = io.StringIO()
        buf.write(f"# scenario: {self.scenario}\n")
        buf.write(f"# config_digest: {self.digest}\n")
        buf.write(f"# version: {self.version}\n")
        buf.write(f"# points: {len(self.points)}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(list(self.axes) + list(self.columns) + ["status"])
        for p in self.points:
            cells = [_format(v) for v in p.values]
            cells += [_format(p.row.get(c, NAN)) for c in self.columns]
            cells.append("ok" if p.ok else f"error: {p.error}")
            writer.writerow(cells)
        return buf.getvalue()

    def summary_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "config_digest": self.digest,
            "version": self.version,
            "wall_clock_s": self.wall_clock,
            "points": len(self.points),
            "failures": [
                {"index": p.index, "point": dict(zip(self.axes, p.values)), "error": p.error} for p in self.failures
            ],
            "warnings": self.warnings,
            "summary": self.summary,
            "summary_error": self.summary_error,
        }

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{self.scenario}.csv"
        json_path = out / f"{self.scenario}.json"
        csv_path.write_text(self.csv_text())
        json_path.write_text(json.dumps(self.summary_dict(), indent=2, default=_json_default, allow_nan=True) + "\n")
        return csv_path, json_path


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return "nan" if math.isnan(value) else format(value, f".{SIG_DIGITS}g")
    return str(value)


POINT_ERRORS = (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError)


def _evaluate(scenario: Scenario, cfg: ScenarioConfig, index: int, values: tuple) -> PointResult:
    try:
        device, params, config = cfg.resolve(values)
        row, details = scenario.evaluate(device, params, config)
    except POINT_ERRORS as exc:
        return PointResult(index, values, {}, {}, f"{type(exc).__name__}: {exc}")
    return PointResult(index, values, row, details)


def run(
    scenario: str,
    config: ScenarioConfig | Mapping,
    out_dir: str | Path | None = None,
    threads: int = 1,
) -> RunRecord:
    """Run a scenario over its sweep and optionally write ``<scenario>.csv`` and ``.json``.

    Grid points are evaluated on a thread pool; results are collected in grid
    order, so the CSV does not depend on ``threads``. A failing point is
    recorded with its error message and the sweep continues.
    """
    if scenario not in SCENARIOS:
        raise ConfigError(f"scenario: unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}")
    cfg = config if isinstance(config, ScenarioConfig) else ScenarioConfig.from_dict(config, scenario)
    if cfg.scenario != scenario:
        raise ConfigError(f"scenario: config is for {cfg.scenario!r}, not {scenario!r}")
    if threads < 1:
        raise ConfigError("threads: must be at least 1")
    spec = SCENARIOS[scenario]
    start = time.perf_counter()
    report = validate(cfg)
    grid = cfg.points()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if threads == 1:
            points = [_evaluate(spec, cfg, i, tuple(v)) for i, v in enumerate(grid)]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                points = list(pool.map(lambda iv: _evaluate(spec, cfg, iv[0], tuple(iv[1])), enumerate(grid)))
        summary_error = None
        try:
            summary = spec.summarize(cfg, points) if spec.summarize else {}
        except POINT_ERRORS as exc:
            summary, summary_error = {}, f"{type(exc).__name__}: {exc}"
    runtime = sorted({str(w.message) for w in caught})
    record = RunRecord(
        scenario=scenario,
        digest=cfg.digest,
        version=__version__,
        axes=tuple(a.path for a in cfg.sweep),
        columns=spec.column_names(cfg.resolve(grid[0])[0]),
        points=points,
        wall_clock=time.perf_counter() - start,
        summary=summary,
        warnings=report + runtime,
        summary_error=summary_error,
    )
    if out_dir is not None:
        record.write(out_dir)
    return record
