"""Independent-emitter ensemble: composed g2, classification, scaling fits."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .correlations import CorrelationCurve
from .errors import GridMismatch, OutOfModel, Underdetermined


@dataclass(frozen=True)
class EnvelopeParams:
    """Transit envelope f(tau) = exp(-(|tau|/tau_i)**exponent)."""

    tau_i: float = 7.1e-6
    exponent: float = 1.3

    def __post_init__(self):
        if not self.tau_i > 0 or not self.exponent > 0:
            raise ValueError("tau_i and exponent must be positive")


def envelope(tau, params: EnvelopeParams = EnvelopeParams()):
    """f(tau); ``params`` may also be any callable envelope of tau."""
    tau = np.asarray(tau, dtype=float)
    if callable(params):
        out = np.asarray(params(tau), dtype=float)
        return out if out.ndim else float(out)
    out = np.exp(-((np.abs(tau) / params.tau_i) ** params.exponent))
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class EnsembleCurve:
    tau: np.ndarray
    g2: np.ndarray
    nbar_atoms: float
    sigma: np.ndarray | None = None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau_s", "g2"])
            for t, v in zip(self.tau, self.g2):
                w.writerow([repr(float(t)), repr(float(v))])

    def value_at(self, tau: float) -> float:
        return float(self.g2[np.argmin(np.abs(self.tau - tau))])


def symmetrize(tau, values, conjugate=False):
    """Mirror a tau >= 0 curve onto negative delays (tau=0 kept once)."""
    tau = np.asarray(tau, dtype=float)
    values = np.asarray(values)
    if tau[0] != 0:
        raise ValueError("curve must start at tau = 0")
    neg = values[:0:-1].conj() if conjugate else values[:0:-1]
    return np.concatenate([-tau[:0:-1], tau]), np.concatenate([neg, values])


def compose_g2(
    g1: CorrelationCurve,
    g2a: CorrelationCurve,
    nbar_atoms: float,
    env: EnvelopeParams = EnvelopeParams(),
) -> EnsembleCurve:
    """g2 = 1 + |f g1|^2 + f g2a / nbar_atoms on a symmetric delay grid."""
    if g1.tau.shape != g2a.tau.shape or not np.allclose(g1.tau, g2a.tau, rtol=0, atol=1e-15):
        raise GridMismatch("g1 and g2 curves must share a tau grid")
    if not nbar_atoms > 0:
        raise ValueError("nbar_atoms must be positive")
    f = envelope(g1.tau, env)
    g2 = 1.0 + np.abs(f * g1.values) ** 2 + f * g2a.values / nbar_atoms
    tau, g2 = symmetrize(g1.tau, g2)
    return EnsembleCurve(tau, g2, float(nbar_atoms))


def classify(curve, tol: float | None = None, n_sigma: float = 3.0) -> str:
    """'antibunched', 'bunched' or 'flat' from the Schwarz inequality at tau = 0.

    ``curve`` needs ``tau`` and ``g2`` arrays and may carry ``sigma``. With
    uncertainties the margin for each comparison is n_sigma times the
    combined sigma of the two bins; otherwise ``tol`` (default 1e-6).
    """
    tau = np.asarray(curve.tau, dtype=float)
    g2 = np.asarray(curve.g2, dtype=float)
    zero = np.flatnonzero(np.abs(tau) < 1e-15)
    if zero.size == 0:
        raise ValueError("grid must include tau = 0")
    k = zero[0]
    others = np.ones(tau.size, dtype=bool)
    others[k] = False
    diff = g2[others] - g2[k]
    sigma = getattr(curve, "sigma", None)
    if tol is not None:
        margin = np.full(diff.shape, tol)
    elif sigma is not None:
        sigma = np.asarray(sigma, dtype=float)
        margin = n_sigma * np.sqrt(sigma[others] ** 2 + sigma[k] ** 2)
    else:
        margin = np.full(diff.shape, 1e-6)
    if np.any(diff > margin):
        return "antibunched"
    if np.all(-diff > margin):
        return "bunched"
    return "flat"


@dataclass(frozen=True)
class ScalingFit:
    offset: float  # 1 + A
    slope: float  # B
    residual: float  # RMS of g2 - (offset + slope / nbar)
    n_points: int
    offset_err: float = float("nan")
    slope_err: float = float("nan")

    def report(self, **extra) -> str:
        lines = [
            f"offset = {self.offset!r}",
            f"slope = {self.slope!r}",
            f"residual = {self.residual!r}",
            f"n_points = {self.n_points}",
        ]
        lines += [f"{k} = {v!r}" for k, v in extra.items()]
        return "\n".join(lines) + "\n"


def fit_hyperbolic(points, weighted: bool = True) -> ScalingFit:
    """Least-squares fit of g2 = offset + slope / nbar.

    ``points`` is a sequence of (nbar_atoms, g2_value, sigma). Sigma is
    used as 1/sigma weights when ``weighted``; it may be None otherwise.
    """
    pts = list(points)
    nbar = np.array([p[0] for p in pts], dtype=float)
    y = np.array([p[1] for p in pts], dtype=float)
    if np.unique(nbar).size < 3:
        raise Underdetermined("need at least 3 distinct atom numbers")
    if np.any(nbar <= 0):
        raise ValueError("atom numbers must be positive")
    x = 1.0 / nbar
    if weighted:
        sigma = np.array([p[2] for p in pts], dtype=float)
        if np.any(~(sigma > 0)):
            raise ValueError("weighted fit needs positive sigma for every point")
    else:
        sigma = np.ones_like(y)
    design = np.column_stack([np.ones_like(x), x]) / sigma[:, None]
    coef, *_ = np.linalg.lstsq(design, y / sigma, rcond=None)
    resid = y - (coef[0] + coef[1] * x)
    cov = np.linalg.inv(design.T @ design)
    if not weighted:
        dof = max(len(y) - 2, 1)
        cov = cov * float(resid @ resid) / dof
    return ScalingFit(
        offset=float(coef[0]),
        slope=float(coef[1]),
        residual=float(np.sqrt(np.mean(resid**2))),
        n_points=len(y),
        offset_err=float(math.sqrt(cov[0, 0])),
        slope_err=float(math.sqrt(cov[1, 1])),
    )


def fano_factor(nbar_photons: float, g2_zero: float) -> float:
    """Delta n^2 / nbar = nbar (g2(0) - 1) + 1."""
    if nbar_photons < 0:
        raise ValueError("nbar_photons must be nonnegative")
    return nbar_photons * (g2_zero - 1.0) + 1.0


def calibrate_atom_number(g2_at_1us: float, env: EnvelopeParams = EnvelopeParams()) -> float:
    """Invert g2(1 us) = 1 + f(1 us)/nbar assuming g_A^(2)=1 and g_A^(1)=0 there."""
    if not g2_at_1us > 1.0:
        raise OutOfModel(f"g2(1 us) = {g2_at_1us} leaves no single-atom contribution")
    return envelope(1e-6, env) / (g2_at_1us - 1.0)


def crossover_atom_number(g1: CorrelationCurve, g2a: CorrelationCurve,
                          env: EnvelopeParams = EnvelopeParams(), lo=0.05, hi=50.0) -> float:
    """Atom number where the composed curve switches from antibunched to bunched.

    With S(tau) = 1 - |f g1|^2 and D(tau) = f g2a(tau) - g2a(0), the curve is
    antibunched iff D(tau) > nbar S(tau) for some tau != 0, so the boundary
    is max_tau D/S.
    """
    f = envelope(g1.tau[1:], env)
    s = 1.0 - np.abs(f * g1.values[1:]) ** 2
    d = f * g2a.values[1:] - g2a.values[0]
    ok = s > 0
    boundary = float(np.max(d[ok] / s[ok]))
    return min(max(boundary, lo), hi)
