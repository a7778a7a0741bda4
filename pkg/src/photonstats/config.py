"""INI run configuration shared by the command-line tools.

Values are kept in file units (MHz for frequencies, microseconds for times,
Hz for dark counts) so that the effective-config echo re-parses exactly.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace

from .ensemble import EnvelopeParams
from .montecarlo import SimMode, TransitConfig
from .quantum import SystemParams, params_from_mapping

US = 1e-6

DEFAULT_SYSTEM = {
    "g_max": 2.5,
    "kappa": 1.25,
    "gamma": 3.0,
    "omega_p": 7.6,
    "omega_r": 3.3,
    "delta": -20.0,
    "branch_u": 5.0 / 9.0,
    "eta_out": 0.9,
    "eta_det": 0.5,
    "n_max": 4,
}

SECTIONS = {
    "transit": {
        "transit_time": "transit_time_us",
        "window": "window_us",
        "amplitude_envelope": "amplitude_envelope",
        "dead_time": "dead_time_us",
        "dark_rate": "dark_rate_hz",
        "max_clicks": "max_clicks",
    },
    "simulation": {"mode": "mode", "seed": "seed", "drops": "n_drops", "nbar_atoms": "nbar_atoms"},
    "correlation": {"bin": "bin_width_us", "tau_max": "tau_max_us"},
    "sweep": {"nbar": "nbar_list", "tau_max": "model_tau_max_us", "step": "model_step_us"},
    "envelope": {"tau_i": "tau_i_us", "exponent": "exponent"},
    "fit": {"tau": "fit_taus_us"},
}


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(",", " ").split())


@dataclass(frozen=True)
class RunConfig:
    system: tuple = ()  # (name, value) pairs in MHz units; missing names take defaults
    transit_time_us: float = 20.0
    window_us: float = 8000.0
    amplitude_envelope: str = "gaussian"
    dead_time_us: float = 0.0
    dark_rate_hz: float = 0.0
    max_clicks: float = 1e6
    mode: str = "combined"
    seed: int = 0
    n_drops: int = 500
    nbar_atoms: float = 2.0
    bin_width_us: float = 0.05
    tau_max_us: float = 6.0
    nbar_list: tuple = (0.15, 2.0, 10.0)
    model_tau_max_us: float = 6.0
    model_step_us: float = 0.01
    tau_i_us: float = 7.1
    exponent: float = 1.3
    fit_taus_us: tuple = field(default=(0.0, 1.0))

    def __post_init__(self):
        object.__setattr__(self, "system", tuple(sorted({**DEFAULT_SYSTEM, **dict(self.system)}.items())))
        object.__setattr__(self, "mode", SimMode(self.mode).value)
        object.__setattr__(self, "nbar_list", tuple(float(x) for x in self.nbar_list))
        object.__setattr__(self, "fit_taus_us", tuple(float(x) for x in self.fit_taus_us))
        self.params()
        self.transit()
        self.envelope()
        if not self.bin_width_us > 0 or self.tau_max_us < self.bin_width_us:
            raise ValueError("correlation needs bin > 0 and tau_max >= bin")
        if not self.model_step_us > 0 or self.model_tau_max_us < self.model_step_us:
            raise ValueError("sweep needs step > 0 and tau_max >= step")
        if any(not n > 0 for n in self.nbar_list):
            raise ValueError("sweep atom numbers must be positive")

    # -- typed views -------------------------------------------------------

    def params(self) -> SystemParams:
        return params_from_mapping(dict(self.system))

    def transit(self, nbar_atoms: float | None = None, n_drops: int | None = None) -> TransitConfig:
        return TransitConfig(
            nbar_atoms=self.nbar_atoms if nbar_atoms is None else nbar_atoms,
            transit_time=self.transit_time_us * US,
            window=self.window_us * US,
            n_drops=self.n_drops if n_drops is None else n_drops,
            amplitude_envelope=self.amplitude_envelope,
            dead_time=self.dead_time_us * US,
            dark_rate=self.dark_rate_hz,
            max_clicks=self.max_clicks,
        )

    def envelope(self) -> EnvelopeParams:
        return EnvelopeParams(self.tau_i_us * US, self.exponent)

    # -- text form ---------------------------------------------------------

    def to_ini(self) -> str:
        parser = configparser.ConfigParser()
        parser["system"] = {k: repr(v) for k, v in self.system}
        for section, keys in SECTIONS.items():
            parser[section] = {}
            for key, attr in keys.items():
                value = getattr(self, attr)
                if isinstance(value, tuple):
                    text = ", ".join(repr(v) for v in value)
                elif isinstance(value, float):
                    text = repr(value)
                else:
                    text = str(value)
                parser[section][key] = text
        lines = []
        for section in parser.sections():
            lines.append(f"[{section}]")
            lines += [f"{k} = {v}" for k, v in parser[section].items()]
            lines.append("")
        return "\n".join(lines)

    @classmethod
    def from_ini(cls, text: str) -> "RunConfig":
        parser = configparser.ConfigParser()
        parser.read_string(text)
        unknown = set(parser.sections()) - set(SECTIONS) - {"system"}
        if unknown:
            raise ValueError(f"unknown config section(s): {sorted(unknown)}")
        kwargs = {}
        if parser.has_section("system"):
            system = {}
            for k, v in parser["system"].items():
                system[k] = int(v) if k == "n_max" else float(v)
            kwargs["system"] = tuple(system.items())
        types = {f.name: f.type for f in fields(cls)}
        for section, keys in SECTIONS.items():
            if not parser.has_section(section):
                continue
            extra = set(parser[section]) - set(keys)
            if extra:
                raise ValueError(f"unknown key(s) in [{section}]: {sorted(extra)}")
            for key, attr in keys.items():
                if key not in parser[section]:
                    continue
                raw = parser[section][key]
                kind = types[attr]
                if kind == "tuple":
                    kwargs[attr] = _floats(raw)
                elif kind == "int":
                    kwargs[attr] = int(raw)
                elif kind == "str":
                    kwargs[attr] = raw.strip()
                else:
                    kwargs[attr] = float(raw)
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_ini(fh.read())

    def with_overrides(self, **changes) -> "RunConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})
