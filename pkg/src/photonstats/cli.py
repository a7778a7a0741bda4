"""photonstats command line: model curves, click simulation, correlation, scaling fits.

Configuration is an INI file with sections [system] (frequencies in MHz),
[transit] (times in us, dark_rate in Hz), [simulation], [correlation]
(bin and tau_max in us), [sweep] (comma-separated atom numbers; tau_max and
step in us), [envelope] (tau_i in us) and [fit] (delays in us). Every
command writes the effective configuration to <out-dir>/effective_config.ini.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import US, RunConfig
from .correlations import coherence_time, g1_atom, g2_atom
from .correlator import cross_correlate, naive_correlate
from .ensemble import (
    calibrate_atom_number,
    classify,
    compose_g2,
    crossover_atom_number,
    fano_factor,
    fit_hyperbolic,
)
from .errors import NoDecay, OutOfModel, PhotonStatsError
from .montecarlo import expected_rate, simulate
from .quantum import mean_photon_number
from .stream import read_stream, write_stream

log = logging.getLogger("photonstats")


def _atomic_write(path: Path, write) -> Path:
    """Call write(tmp_path) and move the result into place."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    os.close(fd)
    os.chmod(tmp, 0o644)
    try:
        write(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _write_text(path: Path, text: str) -> Path:
    return _atomic_write(path, lambda tmp: Path(tmp).write_text(text))


def _nbar_label(n: float) -> str:
    return f"{n:g}".replace(".", "p")


def _model_grid(cfg: RunConfig) -> np.ndarray:
    n = int(round(cfg.model_tau_max_us / cfg.model_step_us))
    return np.arange(n + 1) * cfg.model_step_us * US


def _model_curves(cfg: RunConfig):
    params = cfg.params()
    tau = _model_grid(cfg)
    return params, g1_atom(params, tau), g2_atom(params, tau)


# -- commands --------------------------------------------------------------


def cmd_model(cfg: RunConfig, out: Path, threads: int, parser) -> int:
    if not cfg.nbar_list:
        parser.error("model: the [sweep] nbar list is empty")
    params, g1, g2 = _model_curves(cfg)
    env = cfg.envelope()
    _atomic_write(out / "g1_atom.csv", g1.to_csv)
    _atomic_write(out / "g2_atom.csv", g2.to_csv)

    def entry(n):
        curve = compose_g2(g1, g2, n, env)
        _atomic_write(out / f"g2_nbar_{_nbar_label(n)}.csv", curve.to_csv)
        return n, curve

    with ThreadPoolExecutor(max(threads, 1)) as pool:
        results = list(pool.map(entry, cfg.nbar_list))
    print(f"nbar_photons_single_atom = {mean_photon_number(params):.6g}")
    for n, curve in results:
        print(f"nbar_atoms = {n:g}  g2(0) = {curve.value_at(0.0):.6f}  {classify(curve)}")
    print(f"crossover_nbar = {crossover_atom_number(g1, g2, env):.4g}")
    return 0


def cmd_simulate(cfg: RunConfig, out: Path, threads: int, args) -> int:
    params = cfg.params()
    transit = cfg.transit()
    stream = simulate(params, transit, cfg.mode, seed=cfg.seed, threads=threads)
    path = Path(args.output) if args.output else out / "stream.pstm"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_stream(stream, path)
    clicks = sum(stream.counts())
    rate = clicks / stream.total_duration
    print(f"drops = {stream.n_windows}")
    print(f"clicks = {clicks}  (channels {stream.counts()[0]}, {stream.counts()[1]})")
    print(f"mean_rate = {rate:.6g} /s  (expected {expected_rate(params, transit):.6g} /s)")
    print(f"file = {path}")
    return 0


def cmd_correlate(cfg: RunConfig, out: Path, threads: int, args) -> int:
    stream = read_stream(args.stream)
    bin_width = (args.bin if args.bin is not None else cfg.bin_width_us) * US
    tau_max = (args.tau_max if args.tau_max is not None else cfg.tau_max_us) * US
    channels = (0, 0) if args.same_channel else (0, 1)
    fn = naive_correlate if args.naive else cross_correlate
    hist = fn(stream, bin_width, tau_max, channels)
    path = Path(args.output) if args.output else out / (Path(args.stream).stem + "_g2.csv")
    _atomic_write(path, hist.to_csv)
    print(f"pairs = {int(hist.counts.sum())}  n1 = {hist.n1}  n2 = {hist.n2}")
    if hist.empty:
        print("empty channel: histogram flagged empty")
    else:
        print(f"g2(0) = {hist.g2[hist.n_half]:.6f} +- {hist.sigma[hist.n_half]:.6f}  {classify(hist)}")
    print(f"file = {path}")
    return 0


def _read_histogram_csv(path) -> tuple:
    data = np.genfromtxt(path, delimiter=",", names=True)
    return data["tau_s"], data["g2"], data["sigma"]


def _parse_inputs(items) -> list:
    pts = []
    for item in items:
        name, sep, n = item.rpartition(":")
        if not sep:
            raise ValueError(f"input {item!r} must look like path.csv:nbar")
        pts.append((Path(name), float(n)))
    return pts


def cmd_fit(cfg: RunConfig, out: Path, threads: int, args) -> int:
    taus = [t * US for t in cfg.fit_taus_us]
    blocks = []
    if args.inputs:
        inputs = _parse_inputs(args.inputs)
        curves = [(n, *_read_histogram_csv(p)) for p, n in inputs]
        for tau in taus:
            pts = []
            for n, t, g, s in curves:
                k = int(np.argmin(np.abs(t - tau)))
                pts.append((n, float(g[k]), float(s[k])))
            fit = fit_hyperbolic(pts, weighted=True)
            blocks.append((tau, fit, {}))
        extra = {}
        for n, t, g, s in curves:
            k = int(np.argmin(np.abs(t - 1e-6)))
            try:
                extra[f"calibrated_nbar[{n:g}]"] = calibrate_atom_number(float(g[k]), cfg.envelope())
            except OutOfModel as exc:
                log.warning("%s", exc)
                extra[f"calibrated_nbar[{n:g}]"] = float("nan")
        blocks.append((None, None, extra))
    else:
        params, g1, g2 = _model_curves(cfg)
        env = cfg.envelope()
        composed = {n: compose_g2(g1, g2, n, env) for n in cfg.nbar_list}
        for tau in taus:
            pts = [(n, c.value_at(tau), None) for n, c in composed.items()]
            blocks.append((tau, fit_hyperbolic(pts, weighted=False), {}))
        extra = {}
        try:
            extra["coherence_time_s"] = coherence_time(g1)
        except NoDecay as exc:
            log.warning("%s", exc)
        nphot = mean_photon_number(params)
        for n, c in composed.items():
            extra[f"fano_factor[{n:g}]"] = fano_factor(n * nphot, c.value_at(0.0))
        blocks.append((None, None, extra))
    text = []
    for tau, fit, extra in blocks:
        if fit is None:
            text.append("[derived]\n" + "".join(f"{k} = {v!r}\n" for k, v in extra.items()))
        else:
            text.append(f"[tau = {tau / US:g} us]\n" + fit.report())
    report = "\n".join(text)
    path = Path(args.output) if args.output else out / "fit_report.txt"
    _write_text(path, report)
    print(report, end="")
    return 0


# -- entry point -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="photonstats", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config", help="INI configuration file")
    parser.add_argument("--seed", type=int, help="override [simulation] seed")
    parser.add_argument("--out-dir", default=".", help="directory for outputs (default: .)")
    parser.add_argument("--threads", type=int, default=1, help="worker threads (default: 1)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("model", help="single-atom and composed g2 curves for the sweep")
    p.add_argument("--nbar", type=float, nargs="*", help="override the [sweep] atom numbers")

    p = sub.add_parser("simulate", help="Monte Carlo click stream to a PSTM file")
    p.add_argument("--nbar", type=float, help="override [simulation] nbar_atoms")
    p.add_argument("--mode", choices=["particle", "wave", "combined"])
    p.add_argument("--drops", type=int, help="override [simulation] drops")
    p.add_argument("-o", "--output", help="PSTM path (default: <out-dir>/stream.pstm)")

    p = sub.add_parser("correlate", help="histogram g2 from a PSTM file")
    p.add_argument("stream", help="PSTM file")
    p.add_argument("--bin", type=float, help="bin width in us")
    p.add_argument("--tau-max", type=float, help="largest delay in us")
    p.add_argument("--naive", action="store_true", help="use the all-pairs reference correlator")
    p.add_argument("--same-channel", action="store_true",
                   help="autocorrelate channel 0 (biased by dead time)")
    p.add_argument("-o", "--output", help="CSV path")

    p = sub.add_parser("fit", help="fit g2 = offset + slope/nbar at the [fit] delays")
    p.add_argument("inputs", nargs="*",
                   help="histogram CSVs as path:nbar; without inputs the model sweep is fitted")
    p.add_argument("--nbar", type=float, nargs="*", help="override the [sweep] atom numbers")
    p.add_argument("-o", "--output", help="report path")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        changes = {"seed": args.seed}
        if args.command == "simulate":
            changes.update(nbar_atoms=args.nbar, mode=args.mode, n_drops=args.drops)
        if args.command in ("model", "fit") and args.nbar is not None:
            changes["nbar_list"] = tuple(args.nbar)
        cfg = cfg.with_overrides(**changes)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_text(out / "effective_config.ini", cfg.to_ini())
        if args.command == "model":
            return cmd_model(cfg, out, args.threads, parser)
        if args.command == "simulate":
            return cmd_simulate(cfg, out, args.threads, args)
        if args.command == "correlate":
            return cmd_correlate(cfg, out, args.threads, args)
        return cmd_fit(cfg, out, args.threads, args)
    except (PhotonStatsError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
