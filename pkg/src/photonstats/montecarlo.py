"""Synthetic photodetection streams for an ensemble of atoms crossing the cavity.

Atoms arrive as a homogeneous Poisson process and couple to the mode with an
amplitude envelope h(t). Three fidelity modes are available:

particle
    every atom emits photons as a stationary renewal process whose rate and
    pair correlation equal the single-atom cavity output (rate 2 kappa nbar,
    intensity correlation g_A^(2)). Each emission reaches a detector with
    probability eta_out * eta_det * h^2, then a 50/50 splitter picks the
    channel. Atoms are mutually independent, so the beat term is absent.
wave
    chaotic light: a Cox process with intensity c |sum_j h_j exp(i phi_j)|^2,
    phases redrawn at exponential epochs of the recycling rate, sampled by
    thinning.
combined
    particle-mode emitters whose detection is modulated by a shared,
    bounded random gate M(t) (mean 1). The gate supplies the cross-atom
    beat term |f g_A^(1)|^2 and the per-atom renewal target is adjusted so
    that the simulated g2 follows the full ensemble formula to second order.

Windows are independent; each draws from its own stream derived from
``SeedSequence(seed, spawn_key=(window,))``.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit
from scipy.optimize import brentq
from scipy.special import ndtr, ndtri, owens_t

from .correlations import emission_rate, g1_atom, g2_atom
from .ensemble import EnvelopeParams, EnsembleCurve, symmetrize
from .errors import RateOverflow
from .quantum import SystemParams
from .stream import PS, ClickStream

MODEL_STEP = 5e-9  # grid of the single-atom curves and of the gate process
MODEL_SPAN = 8e-6  # single-atom curves are taken as converged beyond this
RENEWAL_STEP = 2e-9
RENEWAL_SPAN = 30e-6
GAUSS_CUTOFF = 5.0  # gaussian envelopes are truncated at this many RMS widths
WAVE_BLOCK = 1e-6


class SimMode(str, enum.Enum):
    PARTICLE = "particle"
    WAVE = "wave"
    COMBINED = "combined"


@dataclass(frozen=True)
class TransitConfig:
    """Atom transits through the mode and the measurement windows.

    ``nbar_atoms`` is the atom number entering the ensemble g2 formula,
    i.e. 1/nbar_atoms is the weight of the single-atom term at tau = 0.
    For a rectangular envelope it equals the mean number of atoms in the
    mode; for the gaussian one the mean of sum h_j^2 is nbar_atoms/sqrt(2).
    """

    nbar_atoms: float
    transit_time: float = 20e-6
    window: float = 8e-3
    n_drops: int = 500
    amplitude_envelope: str = "gaussian"
    dead_time: float = 0.0
    dark_rate: float = 0.0
    max_clicks: float = 1e6

    def __post_init__(self):
        if not self.nbar_atoms >= 0:
            raise ValueError("nbar_atoms must be nonnegative")
        if not self.transit_time > 0:
            raise ValueError("transit_time must be positive")
        if not self.window >= 10 * self.transit_time:
            raise ValueError("window must be at least ten transit times")
        if int(self.n_drops) != self.n_drops or self.n_drops < 1:
            raise ValueError("n_drops must be a positive integer")
        object.__setattr__(self, "n_drops", int(self.n_drops))
        if self.amplitude_envelope not in ("gaussian", "rectangular"):
            raise ValueError(f"unknown envelope {self.amplitude_envelope!r}")
        if self.dead_time < 0 or self.dark_rate < 0 or not self.max_clicks > 0:
            raise ValueError("dead_time and dark_rate must be >= 0, max_clicks > 0")

    @property
    def gaussian(self) -> bool:
        return self.amplitude_envelope == "gaussian"

    @property
    def rms_width(self) -> float:
        """RMS width s of the gaussian amplitude exp(-t^2 / 2 s^2)."""
        return self.transit_time / 2.0

    @property
    def arrival_rate(self) -> float:
        if self.gaussian:
            return self.nbar_atoms / (math.sqrt(2.0 * math.pi) * self.rms_width)
        return self.nbar_atoms / self.transit_time

    @property
    def mean_coupled_atoms(self) -> float:
        """Mean of sum_j h_j(t)^2."""
        return self.nbar_atoms / math.sqrt(2.0) if self.gaussian else self.nbar_atoms

    @property
    def support(self) -> float:
        """Duration over which one atom is simulated."""
        return 2 * GAUSS_CUTOFF * self.rms_width if self.gaussian else self.transit_time

    def pair_envelope(self, tau):
        """Normalized overlap of h^2 with itself shifted by tau."""
        tau = np.abs(np.asarray(tau, dtype=float))
        if self.gaussian:
            return np.exp(-0.5 * (tau / self.rms_width) ** 2)
        return np.clip(1.0 - tau / self.transit_time, 0.0, None)

    def envelope_params(self) -> EnvelopeParams:
        """Stretched-exponential form of ``pair_envelope`` (gaussian only)."""
        if not self.gaussian:
            raise ValueError("a rectangular transit has a triangular envelope; use pair_envelope")
        return EnvelopeParams(tau_i=math.sqrt(2.0) * self.rms_width, exponent=2.0)


# --------------------------------------------------------------------------
# Model tables


@lru_cache(maxsize=8)
def _atom_curves(params: SystemParams):
    tau = np.arange(int(round(MODEL_SPAN / MODEL_STEP)) + 1) * MODEL_STEP
    return tau, g1_atom(params, tau).values, g2_atom(params, tau).values


def interval_law(g2_target, rate: float, step: float, span: float = RENEWAL_SPAN):
    """Interval density of the stationary renewal process with given pair correlation.

    ``g2_target`` is sampled on 0, step, 2 step, ... and taken as 1 beyond.
    Solves the renewal equation u = w + w * u (trapezoidal rule) for the
    interval density w, with u = rate * g2. Negative values left by
    infeasible targets are clipped and the mass renormalized. Returns
    (density, cdf) on the grid 0..span.
    """
    n = int(round(span / step)) + 1
    g2_target = np.asarray(g2_target, dtype=float)
    u = np.ones(n)
    m = min(n, g2_target.size)
    u[:m] = g2_target[:m]
    u *= rate
    w = np.zeros(n)
    w[0] = u[0]
    denom = 1.0 + 0.5 * step * u[0]
    for i in range(1, n):
        conv = step * np.dot(w[1:i], u[i - 1 : 0 : -1]) + 0.5 * step * w[0] * u[i]
        w[i] = (u[i] - conv) / denom
    w = np.clip(w, 0.0, None)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * step * (w[1:] + w[:-1]))])
    w /= cdf[-1]
    cdf /= cdf[-1]
    return w, cdf


def _forward_cdf(cdf: np.ndarray, step: float) -> np.ndarray:
    """CDF of the forward recurrence time, density (1 - W(t)) / mean interval."""
    surv = 1.0 - cdf
    out = np.concatenate([[0.0], np.cumsum(0.5 * step * (surv[1:] + surv[:-1]))])
    return out / out[-1]


def _phi2(h: float, q):
    """P(X < h, Y < h) for standard normals with correlation q."""
    q = np.clip(np.asarray(q, dtype=float), -1 + 1e-12, 1 - 1e-12)
    return ndtr(h) - 2.0 * owens_t(h, np.sqrt((1.0 - q) / (1.0 + q)))


@dataclass(frozen=True)
class Gate:
    """Binary gate M = height * [sqrt(c) Y + sqrt(1-c) Z < threshold].

    Y is a stationary gaussian process with correlation ``corr`` on the
    circular grid, Z independent noise per emission.
    """

    height: float
    threshold: float
    c: float
    step: float
    spectrum_sqrt: np.ndarray  # rfft amplitude of the Y process
    achieved: np.ndarray  # realized <M M'> - 1 at lags 0, step, ...

    def psi(self, q):
        return self.height**2 * _phi2(self.threshold, q) - 1.0


def _gate_size(window: float) -> int:
    need = int(math.ceil((window + 4 * MODEL_SPAN) / MODEL_STEP))
    return 1 << (need - 1).bit_length()


def build_gate(rho: np.ndarray, height: float, size: int, step: float = MODEL_STEP) -> Gate:
    """Gate whose <M M'> - 1 follows ``rho`` (sampled at lags 0, step, ...).

    The gaussian correlation is obtained by inverting psi pointwise and then
    projected onto positive-definite functions by clipping its spectrum.
    """
    if not height > 1.0:
        raise ValueError("gate height must exceed 1")
    thr = float(ndtri(1.0 / height))
    psi = lambda q: height**2 * _phi2(thr, q) - 1.0  # noqa: E731
    c = brentq(lambda q: psi(q) - 1.0, 0.0, 1.0 - 1e-12) if psi(1.0 - 1e-12) > 1.0 else 1.0
    qs = np.linspace(0.0, c, 4001)
    ps = psi(qs)
    r = np.zeros(size)
    m = min(rho.size, size // 2)
    r[:m] = np.interp(np.clip(rho[:m], 0.0, ps[-1]), ps, qs) / c
    r[size - m + 1 :] = r[1:m][::-1]
    spec = np.clip(np.fft.rfft(r).real, 0.0, None)
    rp = np.fft.irfft(spec, size)
    spec /= rp[0]
    achieved = psi(c * rp[:m] / rp[0])
    return Gate(height, thr, c, step, np.sqrt(spec), achieved)


@dataclass(frozen=True)
class EmitterTables:
    rate: float  # photons/s per fully coupled atom
    efficiency: float  # eta_out * eta_det
    step: float
    interval_cdf: np.ndarray
    forward_cdf: np.ndarray
    gate: Gate | None


@lru_cache(maxsize=8)
def emitter_tables(params: SystemParams, transit: TransitConfig, mode: SimMode) -> EmitterTables:
    mode = SimMode(mode)
    rate = emission_rate(params).escape
    eff = params.eta_out * params.eta_det
    tau, g1, g2 = _atom_curves(params)
    gate = None
    target = g2
    if mode is SimMode.COMBINED:
        f = transit.pair_envelope(tau)
        rho = np.abs(f * g1) ** 2
        gate = build_gate(rho, 1.0 / eff, _gate_size(transit.window))
        ach = gate.achieved[: tau.size]
        with np.errstate(divide="ignore", invalid="ignore"):
            target = (f * g2 + transit.nbar_atoms * (rho - ach)) / (f * (1.0 + ach))
        target = np.where(f > 0, target, 1.0)
    fine = np.arange(int(round(RENEWAL_SPAN / RENEWAL_STEP)) + 1) * RENEWAL_STEP
    _, cdf = interval_law(np.interp(fine, tau, target, right=1.0), rate, RENEWAL_STEP)
    return EmitterTables(rate, eff, RENEWAL_STEP, cdf, _forward_cdf(cdf, RENEWAL_STEP), gate)


def expected_g2(params: SystemParams, transit: TransitConfig, mode: SimMode, tau=None) -> EnsembleCurve:
    """g2 of the simulated detector clicks (before dead time and dark counts)."""
    mode = SimMode(mode)
    t, g1, g2 = _atom_curves(params)
    if tau is not None:
        tau = np.asarray(tau, dtype=float)
        g1 = np.interp(tau, t, g1.real, right=0.0) + 1j * np.interp(tau, t, g1.imag, right=0.0)
        g2 = np.interp(tau, t, g2, right=1.0)
        t = tau
    f = transit.pair_envelope(t)
    n = transit.nbar_atoms
    if mode is SimMode.PARTICLE:
        vals = 1.0 + f * g2 / n
    elif mode is SimMode.WAVE:
        vals = 1.0 + f * np.exp(-2.0 * params.recycling_rate * t) + f / n
    else:
        vals = 1.0 + np.abs(f * g1) ** 2 + f * g2 / n
    tt, vals = symmetrize(t, vals)
    return EnsembleCurve(tt, vals, float(n))


def expected_rate(params: SystemParams, transit: TransitConfig) -> float:
    """Mean detected clicks per second, both channels together."""
    er = emission_rate(params)
    return er.detected_total * transit.mean_coupled_atoms + 2.0 * transit.dark_rate


# --------------------------------------------------------------------------
# Sampling kernels (times in ps as float64)


@njit(cache=True, nogil=True)
def _sample(cdf, step, u):
    k = np.searchsorted(cdf, u)
    if k <= 0:
        return 0.0
    if k >= cdf.size:
        return step * (cdf.size - 1)
    lo, hi = cdf[k - 1], cdf[k]
    frac = (u - lo) / (hi - lo) if hi > lo else 0.0
    return step * (k - 1 + frac)


@njit(cache=True, nogil=True)
def _push(buf, n, value):
    if n == buf.size:
        new = np.empty(2 * buf.size + 16)
        new[:n] = buf[:n]
        buf = new
    buf[n] = value
    return buf, n + 1


@njit(cache=True, nogil=True)
def _renewal_kernel(seed, arrivals, gaussian, width, support, window, eff,
                    interval_cdf, forward_cdf, step, gate, gate_step, gate_c, gate_thr, gate_h):
    np.random.seed(seed)
    t0 = np.empty(1024)
    t1 = np.empty(1024)
    n0 = 0
    n1 = 0
    use_gate = gate.size > 0
    sc = math.sqrt(gate_c)
    sz = math.sqrt(max(1.0 - gate_c, 0.0))
    for a in arrivals:
        if gaussian:
            start = a - 0.5 * support
        else:
            start = a
        stop = start + support
        t = start + _sample(forward_cdf, step, np.random.random())
        while t < stop:
            if 0.0 <= t < window:
                if gaussian:
                    x = (t - a) / width
                    p = eff * math.exp(-x * x)
                else:
                    p = eff
                if use_gate:
                    y = sc * gate[int(t / gate_step)] + sz * np.random.standard_normal()
                    p = p * gate_h if y < gate_thr else 0.0
                if np.random.random() < p:
                    if np.random.random() < 0.5:
                        t0, n0 = _push(t0, n0, t)
                    else:
                        t1, n1 = _push(t1, n1, t)
            t += _sample(interval_cdf, step, np.random.random())
    return t0[:n0], t1[:n1]


@njit(cache=True, nogil=True)
def _wave_kernel(seed, arrivals, gaussian, width, support, window, rate, recycle, block):
    """Thinning of c |sum_j h_j exp(i phi_j)|^2; phases jump at Exp(recycle) epochs."""
    np.random.seed(seed)
    t0 = np.empty(1024)
    t1 = np.empty(1024)
    n0 = 0
    n1 = 0
    na = arrivals.size
    phase = np.zeros(na)
    next_epoch = np.full(na, -np.inf)
    started = np.zeros(na, dtype=np.bool_)
    half = 0.5 * support if gaussian else 0.0
    lo = 0
    nblocks = int(math.ceil(window / block))
    for b in range(nblocks):
        b0 = b * block
        b1 = min(b0 + block, window)
        # atoms whose support overlaps [b0, b1)
        while lo < na and arrivals[lo] - half + support <= b0:
            lo += 1
        hi = lo
        bound = 0.0
        while hi < na and arrivals[hi] - half < b1:
            a = arrivals[hi]
            if gaussian:
                d = 0.0
                if a < b0:
                    d = b0 - a
                elif a > b1:
                    d = a - b1
                x = d / width
                bound += math.exp(-0.5 * x * x)
            else:
                bound += 1.0
            hi += 1
        if bound == 0.0:
            continue
        peak = rate * bound * bound
        n = np.random.poisson(peak * (b1 - b0))
        cand = np.sort(b0 + (b1 - b0) * np.random.random(n))
        for t in cand:
            re = 0.0
            im = 0.0
            for j in range(lo, hi):
                a = arrivals[j]
                s = a - half
                if t < s or t >= s + support:
                    continue
                if not started[j]:
                    started[j] = True
                    phase[j] = 2.0 * math.pi * np.random.random()
                    next_epoch[j] = t + np.random.exponential(1.0 / recycle)
                while t >= next_epoch[j]:
                    phase[j] = 2.0 * math.pi * np.random.random()
                    next_epoch[j] += np.random.exponential(1.0 / recycle)
                if gaussian:
                    x = (t - a) / width
                    h = math.exp(-0.5 * x * x)
                else:
                    h = 1.0
                re += h * math.cos(phase[j])
                im += h * math.sin(phase[j])
            if np.random.random() * peak < rate * (re * re + im * im):
                if np.random.random() < 0.5:
                    t0, n0 = _push(t0, n0, t)
                else:
                    t1, n1 = _push(t1, n1, t)
    return t0[:n0], t1[:n1]


@njit(cache=True, nogil=True)
def _apply_dead_time(t, dead):
    keep = np.ones(t.size, dtype=np.bool_)
    last = -np.inf
    for i in range(t.size):
        if t[i] - last < dead:
            keep[i] = False
        else:
            last = t[i]
    return t[keep]


def _window_rngs(seed: int, window: int):
    ss = np.random.SeedSequence(seed, spawn_key=(window,))
    rng = np.random.default_rng(ss)
    return rng, int(ss.generate_state(1, np.uint32)[0])


def _simulate_window(params, transit, mode, tables, seed, window):
    rng, kseed = _window_rngs(seed, window)
    L = transit.window / PS
    width_ps = transit.rms_width / PS
    support = transit.support / PS
    lead = 0.5 * support if transit.gaussian else support
    span = L + lead + (0.5 * support if transit.gaussian else 0.0)
    n_atoms = rng.poisson(transit.arrival_rate * span * PS)
    arrivals = np.sort(rng.uniform(-lead, L + (0.5 * support if transit.gaussian else 0.0), n_atoms))
    if mode is SimMode.WAVE:
        rate = emission_rate(params).escape * params.eta_out * params.eta_det * PS
        block = WAVE_BLOCK / PS
        c0, c1 = _wave_kernel(kseed, arrivals, transit.gaussian, width_ps, support, L, rate,
                              params.recycling_rate * PS, block)
    else:
        gate = tables.gate
        if gate is None:
            noise, gstep, gc, gthr, gh = np.zeros(0), 1.0, 0.0, 0.0, 1.0
        else:
            z = rng.standard_normal(2 * (gate.spectrum_sqrt.size - 1))
            noise = np.fft.irfft(np.fft.rfft(z) * gate.spectrum_sqrt, z.size)
            gstep, gc, gthr, gh = gate.step / PS, gate.c, gate.threshold, gate.height
        c0, c1 = _renewal_kernel(kseed, arrivals, transit.gaussian, width_ps, support, L,
                                 tables.efficiency, tables.interval_cdf, tables.forward_cdf,
                                 tables.step / PS, noise, gstep, gc, gthr, gh)
    out = []
    for clicks in (c0, c1):
        if transit.dark_rate > 0:
            nd = rng.poisson(transit.dark_rate * transit.window)
            clicks = np.concatenate([clicks, rng.uniform(0.0, L, nd)])
        ps = np.unique(np.floor(clicks).astype(np.int64))
        if transit.dead_time > 0:
            ps = _apply_dead_time(ps.astype(np.float64), transit.dead_time / PS).astype(np.int64)
        out.append(ps)
    return out


def simulate(params: SystemParams, transit: TransitConfig, mode: SimMode | str = SimMode.COMBINED,
             seed: int = 0, threads: int = 1) -> ClickStream:
    """Simulate ``transit.n_drops`` windows of two-channel clicks."""
    mode = SimMode(mode)
    window_ps = int(round(transit.window / PS))
    if transit.nbar_atoms == 0 and transit.dark_rate == 0:
        return ClickStream.empty(transit.n_drops, window_ps, seed=seed)
    expected = expected_rate(params, transit) * transit.window
    if expected > transit.max_clicks:
        raise RateOverflow(f"{expected:.3g} expected clicks per window exceeds {transit.max_clicks:.3g}")
    tables = emitter_tables(params, transit, mode) if transit.nbar_atoms > 0 and mode is not SimMode.WAVE else None
    if tables is None and mode is not SimMode.WAVE:
        tables = EmitterTables(0.0, 0.0, 1.0, np.zeros(2), np.zeros(2), None)

    def run(w):
        if transit.nbar_atoms == 0:
            rng, _ = _window_rngs(seed, w)
            return _dark_only(rng, transit, window_ps)
        return _simulate_window(params, transit, mode, tables, seed, w)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, range(transit.n_drops)))
    else:
        results = [run(w) for w in range(transit.n_drops)]
    times, windows = [], []
    for c in range(2):
        times.append(np.concatenate([r[c] for r in results]))
        windows.append(np.concatenate([np.full(r[c].size, w, np.int64) for w, r in enumerate(results)]))
    return ClickStream(tuple(times), tuple(windows), transit.n_drops, window_ps, seed)


def _dark_only(rng, transit, window_ps):
    out = []
    for _ in range(2):
        nd = rng.poisson(transit.dark_rate * transit.window)
        ps = np.unique(rng.integers(0, window_ps, nd))
        if transit.dead_time > 0:
            ps = _apply_dead_time(ps.astype(np.float64), transit.dead_time / PS).astype(np.int64)
        out.append(ps)
    return out
