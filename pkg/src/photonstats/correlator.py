"""Start-stop free pair-difference correlator for two-channel click streams.

Bins are centred on multiples of the bin width: bin k covers delays in
[(k - 1/2) w, (k + 1/2) w) for k = -K..K with K = round(tau_max / w). Only
pairs inside the same measurement window are counted.

Normalization divides the counts by the number expected for uncorrelated
clicks of the same mean rates, including the loss of overlap near the window
edges::

    g2_k = counts_k * T_total**2 / (n1 * n2 * w * Tcorr_k)
    Tcorr_k = (1/w) * integral over bin k of sum_windows max(0, L - |tau|)
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConfigMismatch, TooLarge, UnsortedInput
from .stream import PS, ClickStream

NAIVE_LIMIT = 100_000


@njit(cache=True)
def _sweep(a, b, reach, half, width, nbins, same):
    """Two-pointer sweep over globally sorted keys; counts b - a differences."""
    counts = np.zeros(nbins, dtype=np.int64)
    nb = b.size
    lo = 0
    offset = nbins // 2
    for i in range(a.size):
        t = a[i]
        while lo < nb and b[lo] < t - reach:
            lo += 1
        j = lo
        while j < nb and b[j] <= t + reach:
            if not (same and j == i):
                k = (b[j] - t + half) // width + offset
                if 0 <= k < nbins:
                    counts[k] += 1
            j += 1
    return counts


@dataclass(eq=False)
class CorrelationHistogram:
    bin_width: float  # s
    tau_max: float  # s, centre of the outermost bin
    counts: np.ndarray
    n1: int
    n2: int
    effective_duration: float  # s, total measured time
    tcorr: np.ndarray  # s per bin, summed window overlap
    empty: bool = field(default=False)

    @property
    def n_half(self) -> int:
        return self.counts.size // 2

    @property
    def tau(self) -> np.ndarray:
        return np.arange(-self.n_half, self.n_half + 1) * self.bin_width

    @property
    def scale(self) -> np.ndarray:
        """g2 per count in each bin."""
        if self.n1 == 0 or self.n2 == 0:
            return np.full(self.counts.size, np.nan)
        with np.errstate(divide="ignore"):
            return self.effective_duration**2 / (self.n1 * self.n2 * self.bin_width * self.tcorr)

    @property
    def g2(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return self.counts * self.scale

    @property
    def sigma(self) -> np.ndarray:
        """Poisson error g2/sqrt(counts); empty bins get the one-count value."""
        c = np.maximum(self.counts, 1)
        return self.scale * np.sqrt(c)

    def expected_counts(self, g2_model) -> np.ndarray:
        """Counts a model g2 would produce at this histogram's rates."""
        return np.asarray(g2_model) / self.scale

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau_s", "counts", "g2", "sigma"])
            for row in zip(self.tau, self.counts, self.g2, self.sigma):
                w.writerow([repr(float(row[0])), int(row[1]), repr(float(row[2])), repr(float(row[3]))])

    def same_config(self, other: "CorrelationHistogram") -> bool:
        return self.bin_width == other.bin_width and self.tau_max == other.tau_max


def _grid(bin_width: float, tau_max: float):
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    if tau_max < bin_width:
        raise ValueError("tau_max must be at least one bin width")
    width = int(round(bin_width / PS))
    k = int(round(tau_max / bin_width))
    return width, k


def overlap_time(n_windows: int, window_ps: int, width_ps: int, k: int) -> np.ndarray:
    """Bin-averaged sum over windows of max(0, L - |tau|), in seconds."""
    L = window_ps * PS
    w = width_ps * PS
    centres = np.arange(-k, k + 1) * w
    lo, hi = centres - w / 2, centres + w / 2

    def primitive(x):
        # integral_0^x max(0, L - s) ds for x >= 0
        x = np.clip(x, 0.0, L)
        return L * x - 0.5 * x * x

    def integral(a, b):
        # integral_a^b max(0, L - |s|) ds
        return np.sign(b) * primitive(np.abs(b)) - np.sign(a) * primitive(np.abs(a))

    return n_windows * integral(lo, hi) / w


def _keys(stream: ClickStream, channel: int, stride: int) -> np.ndarray:
    return stream.windows[channel] * stride + stream.times[channel]


def _check_sorted(stream: ClickStream, channels):
    for c in set(channels):
        t, win = stream.times[c], stream.windows[c]
        dw = np.diff(win)
        if np.any(dw < 0) or np.any((dw == 0) & (np.diff(t) <= 0)):
            raise UnsortedInput(f"channel {c} is not sorted by (window, time)")


def _histogram(stream, bin_width, tau_max, channels, counts) -> CorrelationHistogram:
    width, k = _grid(bin_width, tau_max)
    c1, c2 = channels
    n1, n2 = stream.times[c1].size, stream.times[c2].size
    return CorrelationHistogram(
        bin_width=width * PS,
        tau_max=k * width * PS,
        counts=counts,
        n1=int(n1),
        n2=int(n2),
        effective_duration=stream.total_duration,
        tcorr=overlap_time(stream.n_windows, stream.window_ps, width, k),
        empty=(n1 == 0 or n2 == 0),
    )


def cross_correlate(stream: ClickStream, bin_width: float = 50e-9, tau_max: float = 6e-6,
                    channels=(0, 1)) -> CorrelationHistogram:
    """Histogram of delays t2 - t1 between clicks of two channels.

    Runs in O(n k) with k the mean number of partner clicks within reach.
    Passing the same channel twice gives the autocorrelation without
    self-pairs; that path is biased by detector dead time when one is present.
    """
    width, k = _grid(bin_width, tau_max)
    _check_sorted(stream, channels)
    nbins = 2 * k + 1
    c1, c2 = channels
    reach = k * width + width // 2
    stride = stream.window_ps + 2 * reach + 1
    a = _keys(stream, c1, stride)
    b = _keys(stream, c2, stride)
    if a.size == 0 or b.size == 0:
        counts = np.zeros(nbins, dtype=np.int64)
    else:
        counts = _sweep(a, b, reach, width // 2, width, nbins, c1 == c2)
    return _histogram(stream, bin_width, tau_max, channels, counts)


def naive_correlate(stream: ClickStream, bin_width: float = 50e-9, tau_max: float = 6e-6,
                    channels=(0, 1)) -> CorrelationHistogram:
    """All-pairs reference implementation (quadratic; small inputs only)."""
    total = sum(stream.counts())
    if total > NAIVE_LIMIT:
        raise TooLarge(f"{total} events exceeds the naive limit of {NAIVE_LIMIT}")
    width, k = _grid(bin_width, tau_max)
    _check_sorted(stream, channels)
    nbins = 2 * k + 1
    half = width // 2
    c1, c2 = channels
    counts = np.zeros(nbins, dtype=np.int64)
    for win in np.union1d(stream.windows[c1], stream.windows[c2]):
        t1 = stream.times[c1][stream.windows[c1] == win]
        t2 = stream.times[c2][stream.windows[c2] == win]
        d = t2[None, :] - t1[:, None]
        if c1 == c2:
            d = d[~np.eye(t1.size, dtype=bool)]
        idx = (d.ravel() + half) // width + k
        idx = idx[(idx >= 0) & (idx < nbins)]
        counts += np.bincount(idx, minlength=nbins)
    return _histogram(stream, bin_width, tau_max, channels, counts)


def merge(h1: CorrelationHistogram, h2: CorrelationHistogram) -> CorrelationHistogram:
    """Combine histograms from disjoint data (windows or files)."""
    if not h1.same_config(h2):
        raise ConfigMismatch("histograms differ in bin width or tau_max")
    n1, n2 = h1.n1 + h2.n1, h1.n2 + h2.n2
    return CorrelationHistogram(
        bin_width=h1.bin_width,
        tau_max=h1.tau_max,
        counts=h1.counts + h2.counts,
        n1=n1,
        n2=n2,
        effective_duration=h1.effective_duration + h2.effective_duration,
        tcorr=h1.tcorr + h2.tcorr,
        empty=(n1 == 0 or n2 == 0),
    )


def empty_histogram(bin_width: float, tau_max: float) -> CorrelationHistogram:
    width, k = _grid(bin_width, tau_max)
    n = 2 * k + 1
    return CorrelationHistogram(width * PS, k * width * PS, np.zeros(n, np.int64), 0, 0, 0.0,
                                np.zeros(n), empty=True)


def window_histograms(stream: ClickStream, bin_width: float, tau_max: float, channels=(0, 1)):
    """One histogram per window, each normalized over a single window."""
    for win in range(stream.n_windows):
        sub = stream.select_windows([win])
        sub = ClickStream(sub.times, tuple(np.zeros_like(w) for w in sub.windows), 1, stream.window_ps)
        yield cross_correlate(sub, bin_width, tau_max, channels)


def _renumbered(stream: ClickStream, ids: np.ndarray) -> ClickStream:
    """Sub-stream of windows ``ids`` (sorted), renumbered 0..len(ids)-1."""
    times, wins = [], []
    for t, w in zip(stream.times, stream.windows):
        keep = np.isin(w, ids)
        times.append(t[keep])
        wins.append(np.searchsorted(ids, w[keep]))
    return ClickStream(tuple(times), tuple(wins), ids.size, stream.window_ps)


def jackknife_sigma(stream: ClickStream, bin_width: float = 50e-9, tau_max: float = 6e-6,
                    channels=(0, 1), n_blocks: int = 50) -> np.ndarray:
    """Leave-one-block-out uncertainty of g2 over contiguous blocks of windows.

    Unlike the Poisson ``sigma`` this includes correlations between pairs
    that share a click or an emitter, which matter for bunched light.
    """
    n_blocks = min(n_blocks, stream.n_windows)
    if n_blocks < 2:
        raise ValueError("need at least two windows")
    edges = np.linspace(0, stream.n_windows, n_blocks + 1).astype(int)
    parts = [cross_correlate(_renumbered(stream, np.arange(lo, hi)), bin_width, tau_max, channels)
             for lo, hi in zip(edges[:-1], edges[1:])]
    total = parts[0]
    for p in parts[1:]:
        total = merge(total, p)
    loo = []
    for p in parts:
        rest = CorrelationHistogram(
            total.bin_width, total.tau_max, total.counts - p.counts, total.n1 - p.n1, total.n2 - p.n2,
            total.effective_duration - p.effective_duration, total.tcorr - p.tcorr,
        )
        loo.append(rest.g2)
    loo = np.array(loo)
    return np.sqrt((n_blocks - 1) / n_blocks * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0))
