"""Synthetic click streams shared by the correlator and acceptance tests."""
import numpy as np

from photonstats.stream import PS, ClickStream


def poisson_stream(rng, rate, n_windows, window_ps):
    """Independent homogeneous Poisson clicks on two channels."""
    times, wins = [], []
    for _ in range(2):
        n = rng.poisson(rate * window_ps * PS, n_windows)
        w = np.repeat(np.arange(n_windows), n)
        t = rng.integers(0, window_ps, w.size)
        order = np.lexsort((t, w))
        w, t = w[order], t[order]
        keep = np.ones(w.size, bool)
        keep[1:] = (np.diff(w) != 0) | (np.diff(t) != 0)
        times.append(t[keep])
        wins.append(w[keep])
    return ClickStream(tuple(times), tuple(wins), n_windows, window_ps)


def small_random_stream(rng):
    """At most a few thousand clicks per channel in 1 to 5 windows."""
    n_windows = int(rng.integers(1, 6))
    window_ps = int(rng.integers(10**5, 10**8))
    per_channel = int(rng.integers(0, 4700))
    return poisson_stream(rng, per_channel / (n_windows * window_ps * PS), n_windows, window_ps)
