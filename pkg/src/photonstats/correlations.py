"""Single-atom field and intensity correlations via quantum regression."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NoDecay, ZeroIntensity
from .quantum import (
    LindbladGenerator,
    SystemParams,
    annihilation,
    build_lindblad,
    evolve,
    steady_state,
)

ZERO_INTENSITY = 1e-12


def default_tau_grid(tau_max: float = 4e-6, step: float = 10e-9) -> np.ndarray:
    """0 .. tau_max inclusive in fixed steps (default 0-4 us by 10 ns)."""
    n = int(round(tau_max / step))
    return np.arange(n + 1) * step


@dataclass(frozen=True, eq=False)
class CorrelationCurve:
    tau: np.ndarray
    values: np.ndarray
    kind: str  # "field" or "intensity"
    normalized: bool = True
    sigma: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("field", "intensity"):
            raise ValueError(f"unknown curve kind {self.kind!r}")
        tau = np.asarray(self.tau, dtype=float)
        if np.any(np.diff(tau) <= 0):
            raise ValueError("tau must be strictly increasing")
        object.__setattr__(self, "tau", tau)
        dtype = complex if self.kind == "field" else float
        object.__setattr__(self, "values", np.asarray(self.values, dtype=dtype))

    def __len__(self):
        return self.tau.size

    def at(self, tau: float):
        """Value at a grid point (exact match within 1 ps)."""
        k = np.flatnonzero(np.abs(self.tau - tau) < 1e-12)
        if k.size == 0:
            raise KeyError(f"tau={tau} not on grid")
        return self.values[k[0]]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            if self.kind == "field":
                w.writerow(["tau_s", "re", "im"])
                for t, v in zip(self.tau, self.values):
                    w.writerow([repr(float(t)), repr(float(v.real)), repr(float(v.imag))])
            else:
                w.writerow(["tau_s", "value"])
                for t, v in zip(self.tau, self.values):
                    w.writerow([repr(float(t)), repr(float(v))])


def read_curve_csv(path) -> CorrelationCurve:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array(body, dtype=float).reshape(len(body), len(header))
    if header == ["tau_s", "re", "im"]:
        return CorrelationCurve(data[:, 0], data[:, 1] + 1j * data[:, 2], "field")
    if header == ["tau_s", "value"]:
        return CorrelationCurve(data[:, 0], data[:, 1], "intensity")
    raise ValueError(f"{Path(path).name}: unrecognised header {header}")


def field_correlation(generator: LindbladGenerator, rho: np.ndarray, tau, *, normalize=True):
    """<a^+(tau) a(0)> = Tr[a^+ e^{L tau}(a rho)], optionally divided by <a^+ a>."""
    a = _annihilation_for(generator)
    ad = a.conj().T
    nbar = float(np.trace(ad @ a @ rho).real)
    if normalize and nbar < ZERO_INTENSITY:
        raise ZeroIntensity(f"mean photon number {nbar:.3e}")
    states = evolve(generator, a @ rho, tau)
    values = np.einsum("ij,tji->t", ad, states)
    if normalize:
        values = values / nbar
        values[np.asarray(tau) == 0] = 1.0
    return CorrelationCurve(tau, values, "field", normalize)


def intensity_correlation(generator: LindbladGenerator, rho: np.ndarray, tau, *, normalize=True):
    """<a^+ a^+(tau) a(tau) a> = Tr[a^+a e^{L tau}(a rho a^+)], optionally over nbar^2."""
    a = _annihilation_for(generator)
    ad = a.conj().T
    nbar = float(np.trace(ad @ a @ rho).real)
    if normalize and nbar < ZERO_INTENSITY:
        raise ZeroIntensity(f"mean photon number {nbar:.3e}")
    states = evolve(generator, a @ rho @ ad, tau)
    values = np.einsum("ij,tji->t", ad @ a, states).real
    if normalize:
        values = values / nbar**2
    return CorrelationCurve(tau, values, "intensity", normalize)


def _annihilation_for(generator: LindbladGenerator) -> np.ndarray:
    if generator.params is not None:
        return annihilation(generator.params)
    # Cavity-only generators carry a as their first jump operator.
    return generator.jumps[0][0]


def g1_atom(params: SystemParams, tau=None) -> CorrelationCurve:
    """Normalized field autocorrelation g_A^(1)(tau) of the cavity output."""
    tau = default_tau_grid() if tau is None else np.asarray(tau, dtype=float)
    L = build_lindblad(params)
    return field_correlation(L, steady_state(L), tau)


def g2_atom(params: SystemParams, tau=None) -> CorrelationCurve:
    """Normalized single-atom intensity correlation g_A^(2)(tau)."""
    tau = default_tau_grid() if tau is None else np.asarray(tau, dtype=float)
    L = build_lindblad(params)
    return intensity_correlation(L, steady_state(L), tau)


def coherence_time(curve: CorrelationCurve) -> float:
    """First tau where |g1| falls to 1/e, linearly interpolated."""
    mag = np.abs(curve.values)
    if curve.normalized is False and mag[0] > 0:
        mag = mag / mag[0]
    level = math.exp(-1.0)
    below = np.flatnonzero(mag <= level)
    if below.size == 0:
        raise NoDecay("|g1| never reaches 1/e on the grid")
    k = below[0]
    if k == 0:
        return float(curve.tau[0])
    t0, t1 = curve.tau[k - 1], curve.tau[k]
    m0, m1 = mag[k - 1], mag[k]
    return float(t0 + (m0 - level) / (m0 - m1) * (t1 - t0))


@dataclass(frozen=True)
class EmissionRate:
    nbar: float  # intracavity mean photon number
    escape: float  # 2 kappa nbar, photons/s leaving through both mirrors
    detected_total: float  # both detectors together, 1/s
    per_channel: float  # one detector, 1/s


def emission_rate(params: SystemParams, nbar: float | None = None) -> EmissionRate:
    """Photon flux through the detection chain: output coupler, 50/50 splitter, detectors."""
    if nbar is None:
        L = build_lindblad(params)
        a = annihilation(params)
        nbar = float(np.trace(a.conj().T @ a @ steady_state(L)).real)
    escape = 2.0 * params.kappa * nbar
    total = escape * params.eta_out * params.eta_det
    return EmissionRate(nbar, escape, total, total / 2.0)
