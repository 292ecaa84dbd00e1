"""Synthetic datasets, sliding-window ingestion and JSON-lines dataset files."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .autoencoder import TimeSeries
from .errors import ConfigurationError, DataError


@dataclass(frozen=True)
class PeriodicSpec:
    """Noisy, shifted, truncated sinusoids with 2, 4 and 8 periods per window.

    ``max_phase_shift`` is a fraction of one period, ``noise_level`` and the
    amplitude range are fractions of the maximum amplitude (1.0), and
    ``max_length_shortening`` is the largest fraction of ``base_length`` that
    may be cut from the end of a signal.
    """

    n_per_class: int = 100
    base_length: int = 64
    periods: tuple = (2, 4, 8)
    max_phase_shift: float = 1.0
    amplitude_range: tuple = (0.5, 1.0)
    noise_level: float = 0.02
    max_length_shortening: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.n_per_class < 1 or self.base_length < 4:
            raise ConfigurationError("n_per_class >= 1 and base_length >= 4 required")
        lo, hi = self.amplitude_range
        for name, v in [
            ("max_phase_shift", self.max_phase_shift),
            ("noise_level", self.noise_level),
            ("max_length_shortening", self.max_length_shortening),
            ("amplitude", lo),
            ("amplitude", hi),
        ]:
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {v}")
        if lo > hi:
            raise ConfigurationError("amplitude_range must be (low, high)")

    @property
    def min_length(self):
        cut = self.base_length * (1.0 - self.max_length_shortening)
        return max(1, math.ceil(round(cut, 9)))


def gen_periodic(spec: PeriodicSpec):
    """Labeled sinusoid dataset; ``label`` is the number of periods.

    Each signal is ``a * sin(2 pi c (t + phi) / base_length) + eps_t`` for
    ``t = 0 .. T_n - 1`` with ``a``, ``phi``, ``eps_t`` uniform and ``T_n``
    uniform on ``min_length .. base_length``.  Signals are ordered by class.
    """
    rng = np.random.default_rng(spec.seed)
    B = spec.base_length
    t = np.arange(B)
    out = []
    for c in spec.periods:
        period = B / c
        for _ in range(spec.n_per_class):
            a = rng.uniform(*spec.amplitude_range)
            phi = rng.uniform(0.0, spec.max_phase_shift * period)
            eps = rng.uniform(-spec.noise_level, spec.noise_level, size=B)
            T = int(rng.integers(spec.min_length, B + 1))
            x = a * np.sin(2.0 * np.pi * c * (t + phi) / B) + eps
            out.append(TimeSeries(x[:T, None], id=len(out), label=int(c)))
    return out


@dataclass(frozen=True)
class ComplexPeriodicSpec:
    """Two rotating phasors read out through ``(1, 1, 1, 1)``.

    Angular velocities are in radians per step.
    """

    n_per_type: int = 500
    length: int = 32
    omegas_A: tuple = (55.0, 20.0)
    omegas_B: tuple = (50.0, 25.0)
    seed: int = 0

    def __post_init__(self):
        if self.n_per_type < 1 or self.length < 2:
            raise ConfigurationError("n_per_type >= 1 and length >= 2 required")


def complex_periodic_signal(theta1, theta2, omega1, omega2, length):
    """``x_t = <(Re h1, Im h1, Re h2, Im h2), (1,1,1,1)>`` with ``h_j = e^{i(theta_j + omega_j t)}``."""
    t = np.arange(length)
    p1 = theta1 + omega1 * t
    p2 = theta2 + omega2 * t
    return np.cos(p1) + np.sin(p1) + np.cos(p2) + np.sin(p2)


def gen_complex_periodic(spec: ComplexPeriodicSpec):
    """``n_per_type`` signals of type ``"A"`` followed by as many of type ``"B"``."""
    rng = np.random.default_rng(spec.seed)
    out = []
    for label, (w1, w2) in (("A", spec.omegas_A), ("B", spec.omegas_B)):
        for _ in range(spec.n_per_type):
            th1, th2 = rng.uniform(0.0, 2.0 * np.pi, size=2)
            x = complex_periodic_signal(th1, th2, w1, w2, spec.length)
            out.append(TimeSeries(x[:, None], id=len(out), label=label))
    return out


@dataclass(frozen=True)
class WindowSpec:
    """Sliding-window cut of first-differenced multichannel data.

    ``sampling_pitch`` (seconds) is carried as metadata only.
    """

    window: int = 512
    slide: int = 8
    sampling_pitch: float = 0.1
    activity_threshold: float = 0.0
    activity_channel: int = 0

    def __post_init__(self):
        if self.window < 2 or not 1 <= self.slide <= self.window:
            raise ConfigurationError("need window >= 2 and 1 <= slide <= window")
        if self.activity_threshold < 0:
            raise ConfigurationError("activity_threshold must be >= 0")


def sliding_window(raw, spec: WindowSpec):
    """Difference ``raw`` along time and cut windows of ``spec.window`` rows.

    A candidate window starting at row ``s`` of the differenced array is kept
    when ``max |diff[s:s+window, activity_channel]| >= activity_threshold``.

    Returns
    -------
    windows : list of TimeSeries
        Kept windows with ids ``0, 1, ...``.
    starts : ndarray of int
        Start row (in the differenced array) of each kept window.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim == 1:
        raw = raw[:, None]
    if raw.shape[0] < spec.window + 1:
        raise DataError(
            f"need at least {spec.window + 1} rows for window {spec.window}, got {raw.shape[0]}"
        )
    if not 0 <= spec.activity_channel < raw.shape[1]:
        raise ConfigurationError(
            f"activity_channel {spec.activity_channel} out of range for {raw.shape[1]} channels"
        )
    if not np.all(np.isfinite(raw)):
        raise DataError("raw data contains non-finite values")
    diff = np.diff(raw, axis=0)
    starts = np.arange(0, diff.shape[0] - spec.window + 1, spec.slide)
    windows, kept = [], []
    for s in starts:
        w = diff[s : s + spec.window]
        if np.max(np.abs(w[:, spec.activity_channel])) >= spec.activity_threshold:
            windows.append(TimeSeries(w.copy(), id=len(windows)))
            kept.append(s)
    return windows, np.asarray(kept, dtype=np.intp)


def read_csv(path):
    """Channels of a CSV with a header row and a leading timestamp column."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] < 2:
        raise DataError(f"{path}: need a timestamp column and at least one channel")
    return data[:, 1:]


def write_dataset(path, signals):
    """Write one JSON object per line: ``{"id", "label"?, "values"}``."""
    with open(path, "w") as fh:
        for s in signals:
            rec = {"id": int(s.id)}
            if s.label is not None:
                rec["label"] = s.label
            rec["values"] = s.values.tolist()
            fh.write(json.dumps(rec) + "\n")


def read_dataset(path):
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out.append(TimeSeries(rec["values"], id=int(rec["id"]), label=rec.get("label")))
            except (KeyError, ValueError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: bad record ({exc})") from exc
    if not out:
        raise DataError(f"{path}: no signals")
    return out
