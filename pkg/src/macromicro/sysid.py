"""Sine-sweep identification: excitation, FRF estimation, Sanathanan-Koerner
rational fitting, model-fit metrics and -3 dB cutoff extraction."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.optimize
import scipy.signal

from .lti import FrequencyResponse, LTIError, TransferFunction


class IdentificationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    f_start: float
    f_end: float
    amplitude: float
    offset: float = 0.0
    duration: float = 10.0
    sample_rate: float = 1000.0
    # quiet time appended after the sweep so the response can decay
    tail: float = 0.0

    def __post_init__(self):
        if not 0 < self.f_start < self.f_end:
            raise ValueError("need 0 < f_start < f_end")
        if self.f_end >= self.sample_rate / 2:
            raise ValueError("sweep end frequency violates the Nyquist limit")
        if self.duration <= 0 or self.tail < 0:
            raise ValueError("duration must be positive")


@dataclass(frozen=True)
class TimeSeries:
    t: np.ndarray
    u: np.ndarray
    y: np.ndarray | None = None

    def __post_init__(self):
        if len(self.t) != len(self.u) or (self.y is not None and len(self.y) != len(self.t)):
            raise ValueError("t, u and y must have equal length")
        if len(self.t) > 2:
            dt = np.diff(self.t)
            if np.ptp(dt) > 1e-6 * dt[0]:
                raise ValueError("time grid must be uniform")

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def with_output(self, y) -> "TimeSeries":
        return TimeSeries(self.t, self.u, np.asarray(y, dtype=float))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "u", "y"])
            y = self.y if self.y is not None else np.zeros_like(self.u)
            for row in zip(self.t, self.u, y):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "TimeSeries":
        data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1], data[:, 2])


@dataclass(frozen=True)
class FitResult:
    model: TransferFunction
    params: dict = field(default_factory=dict)
    fit_percent: float = float("nan")
    mse: float = float("nan")

    def as_row(self) -> dict:
        row = {k: float(v) for k, v in self.params.items()}
        row.update(fit_percent=self.fit_percent, mse=self.mse)
        return row


def gen_sweep(spec: SweepSpec) -> TimeSeries:
    """Exponential (constant cycles/decade) chirp around ``offset``."""
    n = int(round((spec.duration + spec.tail) * spec.sample_rate))
    t = np.arange(n) / spec.sample_rate
    k = math.log(spec.f_end / spec.f_start)
    T = spec.duration
    tau = np.minimum(t, T)
    phase = 2 * math.pi * spec.f_start * T / k * (np.exp(k * tau / T) - 1.0)
    u = spec.amplitude * np.sin(phase)
    u[t > T] = 0.0
    return TimeSeries(t, spec.offset + u)


def instantaneous_frequency(spec: SweepSpec, t) -> np.ndarray:
    """Sweep frequency in Hz at time ``t`` (derivative of the chirp phase)."""
    return spec.f_start * (spec.f_end / spec.f_start) ** (np.asarray(t) / spec.duration)


def lsim(tf: TransferFunction, data: TimeSeries, x0_offset: bool = True) -> np.ndarray:
    """Tustin-discretized response of ``tf`` to ``data.u``.

    With ``x0_offset`` the model starts in steady state for the first input value,
    which keeps a DC offset from ringing the model.
    """
    fs = 1.0 / data.dt
    b, a = scipy.signal.bilinear(tf.num, tf.den, fs)
    u = np.asarray(data.u, dtype=float)
    zi = None
    if x0_offset and u[0] != 0:
        zi = scipy.signal.lfilter_zi(b, a) * u[0]
    if zi is None:
        return scipy.signal.lfilter(b, a, u)
    return scipy.signal.lfilter(b, a, u, zi=zi)[0]


def estimate_frf(data: TimeSeries, grid_hz, n_segments: int = 8, window: str = "hann",
                 overlap: float = 0.5) -> FrequencyResponse:
    """H1 estimate ``S_uy / S_uu`` interpolated onto ``grid_hz``.

    ``n_segments=1`` with ``window="boxcar"`` uses the whole record as one block,
    which is exact for noise-free data that starts and ends at rest.
    """
    if data.y is None:
        raise IdentificationError("time series has no output")
    fs = 1.0 / data.dt
    u = data.u - np.mean(data.u)
    y = data.y - np.mean(data.y)
    grid_hz = np.asarray(grid_hz, dtype=float)
    N = len(u)
    if n_segments <= 1:
        nperseg, noverlap = N, 0
    else:
        nperseg = int(N / (1 + (n_segments - 1) * (1 - overlap)))
        noverlap = int(overlap * nperseg)
    f, Suy = scipy.signal.csd(u, y, fs=fs, window=window, nperseg=nperseg,
                              noverlap=noverlap, detrend=False)
    _, Suu = scipy.signal.welch(u, fs=fs, window=window, nperseg=nperseg,
                                noverlap=noverlap, detrend=False)
    if np.any(grid_hz < f[1]) or np.any(grid_hz > f[-1]):
        raise IdentificationError("grid outside the estimated frequency range")
    band = (f >= grid_hz[0]) & (f <= grid_hz[-1])
    if not np.any(Suu[band] > 1e-12 * np.max(Suu)):
        raise IdentificationError("degenerate input power on the grid")
    H = Suy / np.where(Suu > 0, Suu, np.inf)
    vals = np.interp(grid_hz, f, H.real) + 1j * np.interp(grid_hz, f, H.imag)
    return FrequencyResponse(2 * math.pi * grid_hz, vals)


def sk_fit(frf: FrequencyResponse, n_num: int, n_den: int, iterations: int = 50,
           tol: float = 1e-10, weights=None) -> TransferFunction:
    """Sanathanan-Koerner iteration for ``B(s)/A(s)`` with monic ``A`` of degree ``n_den``.

    Each pass solves the linearized problem ``min |(H A - B)/A_prev|^2``.
    """
    w = frf.frequencies
    # frequency scaling keeps the Vandermonde columns comparable
    w0 = float(np.sqrt(w[0] * w[-1]))
    s = 1j * w / w0
    H = frf.siso()
    wt = np.ones_like(w) if weights is None else np.asarray(weights, dtype=float)
    a_prev = np.zeros(n_den + 1)
    a_prev[0] = 1.0
    a = a_prev
    b = np.zeros(n_num + 1)
    for _ in range(iterations):
        d = np.abs(np.polyval(a_prev, s))
        scale = wt / d
        # unknowns: a[1..n_den], b[0..n_num]
        Va = np.column_stack([s ** (n_den - k) for k in range(1, n_den + 1)]) if n_den else \
            np.zeros((len(s), 0))
        Vb = np.column_stack([s ** (n_num - k) for k in range(n_num + 1)])
        M = np.hstack([H[:, None] * Va, -Vb]) * scale[:, None]
        rhs = -(H * s ** n_den) * scale
        Mr = np.vstack([M.real, M.imag])
        rr = np.concatenate([rhs.real, rhs.imag])
        sol, *_ = np.linalg.lstsq(Mr, rr, rcond=None)
        a = np.concatenate([[1.0], sol[:n_den]])
        b = sol[n_den:]
        if np.max(np.abs(a - a_prev)) < tol * (1 + np.max(np.abs(a))):
            break
        a_prev = a
    else:
        raise IdentificationError("SK iteration did not converge within the iteration limit")
    # undo frequency scaling: s_scaled = s / w0
    num = np.array([b[k] * w0 ** (n_den - n_num + k) for k in range(n_num + 1)])
    den = np.array([a[k] * w0 ** k for k in range(n_den + 1)])
    return TransferFunction(num, den)


def model_fit_percent(y, y_hat) -> float:
    y = np.asarray(y, dtype=float)
    denom = np.linalg.norm(y - np.mean(y))
    if denom == 0:
        return 100.0 if np.allclose(y, y_hat) else -np.inf
    return float(100.0 * (1.0 - np.linalg.norm(y - y_hat) / denom))


def _score(model: TransferFunction, frf: FrequencyResponse, validation: TimeSeries | None):
    if validation is not None:
        y_hat = lsim(model, validation)
        return model_fit_percent(validation.y, y_hat), float(np.mean((validation.y - y_hat) ** 2))
    H = frf.siso()
    Hm = model.freq_response(frf.frequencies)
    fit = 100.0 * (1.0 - np.linalg.norm(H - Hm) / np.linalg.norm(H - np.mean(H)))
    return float(fit), float(np.mean(np.abs(H - Hm) ** 2))


def fit_second_order(frf: FrequencyResponse, constrain_zeta_to_one: bool = False,
                     validation: TimeSeries | None = None) -> FitResult:
    """Fit ``K w^2 / (s^2 + 2 zeta w s + w^2)`` to a measured response."""
    if len(frf.frequencies) < 8:
        raise IdentificationError("need at least 8 frequency points")
    tf = sk_fit(frf, 0, 2)
    a1, a0 = tf.den[1] / tf.den[0], tf.den[2] / tf.den[0]
    b0 = tf.num[-1] / tf.den[0]
    if a0 <= 0 or a1 <= 0 or b0 <= 0:
        raise IdentificationError("fit produced a negative parameter")
    wc = math.sqrt(a0)
    zeta = a1 / (2 * wc)
    K = b0 / a0
    if constrain_zeta_to_one:
        zeta = 1.0
        H = frf.siso()
        s = 1j * frf.frequencies

        def resid(p):
            k_, w_ = p
            e = k_ * w_ ** 2 / (s + w_) ** 2 - H
            return np.concatenate([e.real, e.imag])

        sol = scipy.optimize.least_squares(resid, [K, wc], x_scale=[K, wc])
        K, wc = (float(v) for v in sol.x)
        if K <= 0 or wc <= 0:
            raise IdentificationError("fit produced a negative parameter")
    model = TransferFunction([K * wc ** 2], [1.0, 2 * zeta * wc, wc ** 2])
    fit, mse = _score(model, frf, validation)
    return FitResult(model, {"K": K, "zeta": zeta, "omega_c": wc}, fit, mse)


def _stabilize(tf: TransferFunction) -> TransferFunction:
    p = tf.poles()
    if np.all(p.real < 0):
        return tf
    p = np.where(p.real >= 0, -np.abs(p.real) - 1e-9 + 1j * p.imag, p)
    return TransferFunction(tf.num, np.real(np.poly(p)) * tf.den[0])


def fit_reduced_order(data: TimeSeries | FrequencyResponse, order: int, grid_hz=None,
                      n_segments: int = 8, window: str = "hann") -> FitResult:
    """Stable strictly proper rational fit of the given order (1-3)."""
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    if isinstance(data, FrequencyResponse):
        frf, validation = data, None
    else:
        if grid_hz is None:
            raise ValueError("grid_hz required for time-domain data")
        frf = estimate_frf(data, grid_hz, n_segments=n_segments, window=window)
        validation = data
    tf = sk_fit(frf, order - 1, order)
    if not np.all(tf.poles().real < 0):
        # reflect unstable poles, then refit the numerator with the denominator fixed
        den = _stabilize(tf).den
        s = 1j * frf.frequencies
        A = np.polyval(den, s)
        V = np.column_stack([s ** (order - 1 - k) for k in range(order)]) / A[:, None]
        H = frf.siso()
        sol, *_ = np.linalg.lstsq(np.vstack([V.real, V.imag]),
                                  np.concatenate([H.real, H.imag]), rcond=None)
        tf = TransferFunction(sol, den)
    fit, mse = _score(tf, frf, validation)
    params = {f"pole_{i}": complex(p) for i, p in enumerate(sorted(tf.poles(), key=abs))}
    params = {k: (v.real if v.imag == 0 else abs(v)) for k, v in params.items()}
    params["dc_gain"] = tf.dc_gain()
    return FitResult(tf, params, fit, mse)


def cutoff_minus3db(model: TransferFunction, w_max: float = 1e4) -> float:
    """Smallest frequency (Hz) where the magnitude falls to DC/sqrt(2)."""
    dc = abs(model.dc_gain())
    if not dc > 0 or not np.isfinite(dc):
        raise LTIError("model needs a finite positive DC gain")
    target = dc / math.sqrt(2)
    grid = np.geomspace(1e-6, w_max, 4000)
    mag = np.abs(model.freq_response(grid))
    below = np.flatnonzero(mag < target)
    if below.size == 0:
        raise LTIError("magnitude never drops below -3 dB")
    i = below[0]
    if i == 0:
        return grid[0] / (2 * math.pi)
    lo, hi = grid[i - 1], grid[i]
    for _ in range(100):
        mid = math.sqrt(lo * hi)
        if abs(model.freq_response([mid])[0]) < target:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-12 * hi:
            break
    return 0.5 * (lo + hi) / (2 * math.pi)
