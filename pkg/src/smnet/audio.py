"""Frame-level spectral descriptors of mono PCM audio."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

EPS = 1e-10
SFM_CLAMP = 1e-6
METRICS = ("rms", "sc", "sfm", "flux")


class AudioError(ValueError):
    pass


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise AudioError("waveform must be a non-empty 1-d sequence")
        if self.sample_rate <= 0:
            raise AudioError("sample rate must be positive")


@dataclass
class FrameSeries:
    metric_id: str
    values: np.ndarray
    frame_times: np.ndarray
    valid: np.ndarray = None

    def __post_init__(self):
        if self.valid is None:
            self.valid = np.isfinite(self.values)

    def defined(self):
        """Frame times and values with undefined frames removed."""
        return self.frame_times[self.valid], self.values[self.valid]


def to_mono(data):
    """Average channels and rescale integer PCM linearly to [-1, 1]."""
    data = np.asarray(data)
    if np.issubdtype(data.dtype, np.integer):
        info = np.iinfo(data.dtype)
        if info.min == 0:  # unsigned 8-bit PCM is offset binary
            mid = (info.max + 1) / 2.0
            x = (data.astype(np.float64) - mid) / mid
        else:
            x = data.astype(np.float64) / -float(info.min)
    else:
        x = data.astype(np.float64)
    if x.ndim == 2:
        x = x.mean(axis=1)
    return np.clip(x, -1.0, 1.0)


def read_wav(path):
    rate, data = wavfile.read(path)
    return Waveform(to_mono(data), float(rate))


def frame_plan(sample_rate):
    """Window length and hop (samples) for ~46 ms windows with 50% overlap."""
    N = int(np.floor(0.046 * sample_rate))
    H = int(np.floor(0.023 * sample_rate))
    if N < 2 or H < 1:
        raise AudioError(f"sample rate {sample_rate} too coarse for framing (N={N})")
    return N, H


def hann_window(N):
    if N < 2:
        raise AudioError("window length must be at least 2")
    n = np.arange(N)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * n / (N - 1)))


def frame_count(length, N, H):
    return 0 if length < N else 1 + (length - N) // H


def frames(x, N, H):
    """Overlapping frames as a (n_frames, N) view."""
    m = frame_count(len(x), N, H)
    return np.lib.stride_tricks.as_strided(
        x, shape=(m, N), strides=(H * x.strides[0], x.strides[0]), writeable=False)


def magnitude_spectrum(frame, sample_rate=None):
    """One-sided DFT magnitudes for bins 1..floor(N/2) (DC dropped).

    Works on a single frame or a stack of frames along the last axis. The DFT
    is unnormalized. Returns ``(magnitudes, bin_frequencies)``; frequencies are
    in Hz when ``sample_rate`` is given, otherwise in cycles per sample.
    """
    frame = np.asarray(frame, dtype=np.float64)
    N = frame.shape[-1]
    half = N // 2
    mags = np.abs(np.fft.rfft(frame, axis=-1))[..., 1:half + 1]
    k = np.arange(1, half + 1)
    freqs = k * (sample_rate if sample_rate is not None else 1.0) / N
    return mags, freqs


def rms(frame, eps=EPS):
    frame = np.asarray(frame, dtype=np.float64)
    return np.log(np.sqrt(np.mean(frame * frame, axis=-1)) + eps)


def spectral_centroid(mags, freqs):
    """Magnitude-weighted mean log frequency; NaN for an all-zero spectrum."""
    mags = np.asarray(mags, dtype=np.float64)
    total = mags.sum(axis=-1)
    weighted = (mags * np.log(freqs)).sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(total > 0, weighted / np.where(total > 0, total, 1.0), np.nan)
    return out if out.ndim else float(out)


def spectral_flatness(mags, eps=EPS, clamp=SFM_CLAMP):
    """Logit of geometric over arithmetic mean magnitude, ratio clamped."""
    mags = np.asarray(mags, dtype=np.float64)
    gm = np.exp(np.mean(np.log(mags + eps), axis=-1))
    ratio = np.clip(gm / (np.mean(mags, axis=-1) + eps), clamp, 1.0 - clamp)
    return np.log(ratio) - np.log1p(-ratio)


def spectral_flux(mags, prev, eps=EPS):
    mags = np.asarray(mags, dtype=np.float64)
    prev = np.asarray(prev, dtype=np.float64)
    if mags.shape[-1] != prev.shape[-1]:
        raise AudioError("spectra must have equal bin counts")
    return np.log(np.maximum(mags - prev, 0.0).sum(axis=-1) + eps)


def extract_all(wave, eps=EPS):
    """RMS, SC, SFM and Flux series for every full frame of ``wave``.

    Frames whose spectrum is identically zero have an undefined centroid and
    are marked invalid in the SC series.
    """
    N, H = frame_plan(wave.sample_rate)
    m = frame_count(wave.samples.size, N, H)
    if m < 2:
        raise AudioError(f"input too short: {wave.samples.size} samples give {m} frame(s)")
    fr = frames(wave.samples, N, H)
    windowed = fr * hann_window(N)
    mags, freqs = magnitude_spectrum(windowed, wave.sample_rate)
    prev = np.vstack([np.zeros((1, mags.shape[1])), mags[:-1]])
    times = np.linspace(0.0, 1.0, m)
    values = {
        "rms": rms(windowed, eps),
        "sc": spectral_centroid(mags, freqs),
        "sfm": spectral_flatness(mags, eps),
        "flux": spectral_flux(mags, prev, eps),
    }
    return {name: FrameSeries(name, np.asarray(values[name]), times) for name in METRICS}


def write_features(series, path):
    """Per-track CSV with columns frame_index, t_m, rms, sc, sfm, flux.

    Undefined values are written as empty fields.
    """
    times = series["rms"].frame_times
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame_index", "t_m", *METRICS])
        for m, t in enumerate(times):
            row = [m, repr(float(t))]
            for name in METRICS:
                v = series[name].values[m]
                row.append(repr(float(v)) if np.isfinite(v) else "")
            w.writerow(row)


def read_features(path):
    data = {name: [] for name in ("t_m", *METRICS)}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            for name in data:
                data[name].append(float(row[name]) if row[name] != "" else np.nan)
    times = np.asarray(data["t_m"])
    return {name: FrameSeries(name, np.asarray(data[name]), times) for name in METRICS}


def extract_file(path, out_path, eps=EPS):
    series = extract_all(read_wav(path), eps)
    write_features(series, out_path)
    return series


def list_wavs(directory):
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() == ".wav")
