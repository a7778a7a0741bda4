"""Open-system model of one three-level atom coupled to a single cavity mode.

Atomic levels are ordered ``(u, e, g)`` and the cavity is truncated at
``n_max`` photons. The joint basis index is ``atom * (n_max + 1) + n``.
All rates and frequencies are angular (rad/s). Density operators are plain
complex ``numpy`` arrays; superoperators act on the row-major flattening.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields, replace
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DegenerateKernel, ParameterError, StepSizeFailure

TWO_PI_MHZ = 2.0 * math.pi * 1e6

U, E, G = 0, 1, 2
ATOM_LABELS = ("u", "e", "g")

# Fields given in MHz in configuration files (converted by 2*pi*1e6).
FREQUENCY_FIELDS = ("g_max", "kappa", "gamma", "omega_p", "omega_r", "delta", "g_eff")

STATE_TOL = {"hermitian": 1e-10, "trace": 1e-8, "eigenvalue": -1e-8}


@dataclass(frozen=True)
class SystemParams:
    """Rates of the atom-cavity system plus detection efficiencies.

    Frequencies are angular, in rad/s. ``delta`` is signed. ``g_eff`` defaults
    to ``g_max`` when left as ``None``.
    """

    g_max: float
    kappa: float
    gamma: float
    omega_p: float
    omega_r: float
    delta: float
    g_eff: float | None = None
    branch_u: float = 5.0 / 9.0
    eta_out: float = 0.90
    eta_det: float = 0.50
    n_max: int = 4

    def __post_init__(self):
        if self.g_eff is None:
            object.__setattr__(self, "g_eff", self.g_max)
        if not self.kappa > 0 or not self.gamma > 0:
            raise ParameterError("kappa and gamma must be positive")
        if int(self.n_max) != self.n_max or self.n_max < 2:
            raise ParameterError(f"n_max must be an integer >= 2, got {self.n_max}")
        object.__setattr__(self, "n_max", int(self.n_max))
        if not 0.0 < self.branch_u < 1.0:
            raise ParameterError("branch_u must lie in (0, 1)")
        for name in ("eta_out", "eta_det"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1], got {value}")
        for name in ("g_max", "omega_p", "omega_r", "g_eff"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be nonnegative")
        if self.delta == 0 and self.omega_p > 0:
            raise ParameterError("delta must be nonzero for a detuned Raman drive")

    @classmethod
    def defaults(cls, **overrides) -> "SystemParams":
        """(g_max, kappa, gamma, omega_p, omega_r, delta) = 2pi x (2.5, 1.25, 3.0, 7.6, 3.3, -20) MHz."""
        mhz = dict(g_max=2.5, kappa=1.25, gamma=3.0, omega_p=7.6, omega_r=3.3, delta=-20.0)
        params = cls(**{k: v * TWO_PI_MHZ for k, v in mhz.items()})
        return replace(params, **overrides) if overrides else params

    @classmethod
    def from_mhz(cls, **values) -> "SystemParams":
        """Build from a mapping whose frequency entries are in MHz."""
        kwargs = {}
        for key, value in values.items():
            if value is None:
                kwargs[key] = None
            elif key in FREQUENCY_FIELDS:
                kwargs[key] = float(value) * TWO_PI_MHZ
            elif key == "n_max":
                kwargs[key] = int(value)
            else:
                kwargs[key] = float(value)
        return cls(**kwargs)

    def to_mhz(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = value / TWO_PI_MHZ if f.name in FREQUENCY_FIELDS else value
        return out

    @property
    def dim(self) -> int:
        return 3 * (self.n_max + 1)

    @property
    def omega_eff(self) -> float:
        """Two-photon Raman Rabi frequency g_eff * omega_p / |delta|."""
        return self.g_eff * self.omega_p / abs(self.delta)

    @property
    def recycling_rate(self) -> float:
        return recycling_rate(self.omega_r, self.gamma, self.branch_u)


def recycling_rate(omega_r: float, gamma: float, branch_u: float = 5.0 / 9.0) -> float:
    """Incoherent g -> u transfer rate from a resonantly saturated g <-> e drive.

    Excited population of the driven two-level subsystem times the e -> u
    branch of the population decay 2*gamma. Saturates at branch_u * gamma.
    """
    if math.isinf(omega_r):
        rho_ee = 0.5
    else:
        rho_ee = (omega_r**2 / 4.0) / (omega_r**2 / 2.0 + gamma**2)
    return branch_u * 2.0 * gamma * rho_ee


def load_params(path, section: str = "system") -> SystemParams:
    """Read SystemParams from a key-value file (frequencies in MHz).

    Either a flat ``key = value`` file or an INI file with a ``[system]``
    section is accepted.
    """
    text = Path(path).read_text()
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError:
        parser.read_string(f"[{section}]\n" + text)
    if not parser.has_section(section):
        raise ParameterError(f"no [{section}] section in {path}")
    return params_from_mapping(dict(parser[section]))


def params_from_mapping(mapping: dict) -> SystemParams:
    known = {f.name for f in fields(SystemParams)}
    unknown = set(mapping) - known
    if unknown:
        raise ParameterError(f"unknown system parameter(s): {sorted(unknown)}")
    defaults = SystemParams.defaults().to_mhz()
    defaults["g_eff"] = None
    defaults.update({k: v for k, v in mapping.items()})
    return SystemParams.from_mhz(**defaults)


# -- operators -----------------------------------------------------------


def atom_projector(i: int, j: int) -> np.ndarray:
    op = np.zeros((3, 3), dtype=complex)
    op[i, j] = 1.0
    return op


def destroy(n_max: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n_max + 1)), 1).astype(complex)


def on_atom(op: np.ndarray, n_max: int) -> np.ndarray:
    return np.kron(op, np.eye(n_max + 1))


def on_cavity(op: np.ndarray) -> np.ndarray:
    return np.kron(np.eye(3), op)


def annihilation(params: SystemParams) -> np.ndarray:
    """Cavity operator a on the joint space."""
    return on_cavity(destroy(params.n_max))


def basis_index(atom: int, n: int, n_max: int) -> int:
    return atom * (n_max + 1) + n


def basis_state(atom: int, n: int, n_max: int) -> np.ndarray:
    psi = np.zeros(3 * (n_max + 1), dtype=complex)
    psi[basis_index(atom, n, n_max)] = 1.0
    return psi


def projector_state(atom: int, n: int, n_max: int) -> np.ndarray:
    psi = basis_state(atom, n, n_max)
    return np.outer(psi, psi.conj())


def build_hamiltonian(params: SystemParams) -> np.ndarray:
    """H/hbar in the frame co-rotating with pump and cavity.

    -delta |e><e| + (omega_p/2)(|e><u| + h.c.) + g_eff (a^+ |g><e| + h.c.),
    with |u,n> and |g,n+1> degenerate (bare two-photon resonance).
    """
    n = params.n_max
    a = annihilation(params)
    h = -params.delta * on_atom(atom_projector(E, E), n)
    pump = on_atom(atom_projector(E, U), n)
    h = h + 0.5 * params.omega_p * (pump + pump.conj().T)
    cav = a.conj().T @ on_atom(atom_projector(G, E), n)
    h = h + params.g_eff * (cav + cav.conj().T)
    return h


def _superop(h: np.ndarray, jumps) -> np.ndarray:
    d = h.shape[0]
    eye = np.eye(d)
    m = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for op, rate in jumps:
        if rate == 0:
            continue
        jdj = op.conj().T @ op
        m += rate * (np.kron(op, op.conj()) - 0.5 * np.kron(jdj, eye) - 0.5 * np.kron(eye, jdj.T))
    return m


@dataclass(frozen=True, eq=False)
class LindbladGenerator:
    """Superoperator  L(rho) = -i[H, rho] + sum_k rate_k D[J_k](rho)."""

    hamiltonian: np.ndarray
    jumps: tuple = ()
    labels: tuple = ()
    params: SystemParams | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @cached_property
    def matrix(self) -> np.ndarray:
        """Dense superoperator acting on row-major vec(rho)."""
        return _superop(self.hamiltonian, self.jumps)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        h = self.hamiltonian
        out = -1j * (h @ rho - rho @ h)
        for op, rate in self.jumps:
            jd = op.conj().T
            jdj = jd @ op
            out += rate * (op @ rho @ jd - 0.5 * (jdj @ rho + rho @ jdj))
        return out

    def rate(self, label: str) -> float:
        return self.jumps[self.labels.index(label)][1]


def build_lindblad(params: SystemParams) -> LindbladGenerator:
    """Generator with cavity decay, both spontaneous branches and incoherent recycling."""
    n = params.n_max
    jumps = (
        (annihilation(params), 2.0 * params.kappa),
        (on_atom(atom_projector(U, E), n), params.branch_u * 2.0 * params.gamma),
        (on_atom(atom_projector(G, E), n), (1.0 - params.branch_u) * 2.0 * params.gamma),
        (on_atom(atom_projector(U, G), n), params.recycling_rate),
    )
    labels = ("cavity", "spont_u", "spont_g", "recycle")
    return LindbladGenerator(build_hamiltonian(params), jumps, labels, params)


def cavity_decay_generator(kappa: float, n_max: int = 4) -> LindbladGenerator:
    """Bare cavity field decay (atom decoupled), useful as a reference generator."""
    a = on_cavity(destroy(n_max))
    h = np.zeros_like(a)
    return LindbladGenerator(h, ((a, 2.0 * kappa),), ("cavity",))


# -- steady state and propagation -----------------------------------------


def steady_state(generator: LindbladGenerator, *, degeneracy_ratio: float = 1e-6) -> np.ndarray:
    """Unique stationary state of ``generator``.

    The kernel is taken from the SVD of the superoperator; a second
    singular value below ``degeneracy_ratio`` times the largest signals a
    degenerate kernel.
    """
    d = generator.dim
    m = generator.matrix
    _, s, vh = np.linalg.svd(m)
    if s[-2] < degeneracy_ratio * s[0]:
        raise DegenerateKernel(
            f"second-smallest singular value {s[-2]:.3e} below {degeneracy_ratio:g} x {s[0]:.3e}"
        )
    rho = vh[-1].conj().reshape(d, d)
    rho = rho / np.trace(rho)
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def residual_norm(generator: LindbladGenerator, rho: np.ndarray) -> float:
    """||L(rho)|| relative to the spectral norm of L."""
    scale = np.linalg.norm(generator.matrix, 2)
    return float(np.linalg.norm(generator.apply(rho)) / scale)


def evolve(
    generator: LindbladGenerator,
    rho0: np.ndarray,
    tau_grid: Sequence[float],
    *,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> np.ndarray:
    """exp(L tau)(rho0) at each grid time; returns shape (len(tau), d, d).

    ``rho0`` may be any operator, not only a state.
    """
    tau = np.asarray(tau_grid, dtype=float)
    if tau.ndim != 1 or tau.size == 0:
        raise ValueError("tau_grid must be a nonempty 1-d sequence")
    if tau[0] < 0 or np.any(np.diff(tau) < 0):
        raise ValueError("tau_grid must be nonnegative and increasing")
    d = generator.dim
    rho0 = np.asarray(rho0, dtype=complex)
    y0 = rho0.reshape(-1)
    if tau[-1] == 0.0:
        return np.repeat(rho0[None, :, :], tau.size, axis=0)
    m = generator.matrix
    # Integrate in microseconds so rates are O(1-100) for the step controller.
    scale = 1e-6
    ms = m * scale
    sol = solve_ivp(
        lambda t, y: ms @ y,
        (0.0, tau[-1] / scale),
        y0,
        method="DOP853",
        t_eval=tau / scale,
        rtol=rtol,
        atol=atol,
    )
    if not sol.success:
        raise StepSizeFailure(sol.message)
    out = sol.y.T.reshape(tau.size, d, d)
    out[tau == 0.0] = rho0
    return out


# -- expectation values and state checks ------------------------------------


def expect(op: np.ndarray, rho: np.ndarray) -> complex:
    return np.trace(op @ rho)


def mean_photon_number(params: SystemParams, rho: np.ndarray | None = None) -> float:
    if rho is None:
        rho = steady_state(build_lindblad(params))
    a = annihilation(params)
    return float(expect(a.conj().T @ a, rho).real)


def atom_populations(rho: np.ndarray, n_max: int) -> dict:
    diag = np.real(np.diag(rho)).reshape(3, n_max + 1).sum(axis=1)
    return dict(zip(ATOM_LABELS, diag))


def fock_populations(rho: np.ndarray, n_max: int) -> np.ndarray:
    return np.real(np.diag(rho)).reshape(3, n_max + 1).sum(axis=0)


def hermiticity_error(rho: np.ndarray) -> float:
    return float(np.max(np.abs(rho - rho.conj().T)))


def trace_error(rho: np.ndarray) -> float:
    return float(abs(np.trace(rho) - 1.0))


def min_eigenvalue(rho: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])


def is_valid_state(rho: np.ndarray, tol: dict = STATE_TOL) -> bool:
    return (
        hermiticity_error(rho) <= tol["hermitian"]
        and trace_error(rho) <= tol["trace"]
        and min_eigenvalue(rho) >= tol["eigenvalue"]
    )
