"""Synthetic impulse-GPR range profiles and labeled multi-class datasets.

The transmit waveform is a Gaussian monocycle, the target is a sum of
Gaussian scattering centres, and a range profile is their convolution
sampled at the (stroboscopic) interval ``T_s`` plus white Gaussian noise.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import constants

from .data import BScan, LabeledDataset, RangeProfile

C0 = 3.0e8  # free-space propagation speed used throughout, m/s
Z0 = float(np.sqrt(constants.mu_0 / constants.epsilon_0))  # free-space impedance, ohm

# pulse support is truncated this many periods past its centre
_PULSE_SUPPORT_PERIODS = 6.0
_OVERSAMPLE = 5


@dataclass(frozen=True)
class PulseSpec:
    center_frequency: float = 2.0e9
    peak_amplitude: float = 1.0

    def __post_init__(self):
        if not self.center_frequency > 0:
            raise ValueError("center frequency must be positive")
        if self.peak_amplitude == 0:
            raise ValueError("peak amplitude must be non-zero")

    @property
    def delay(self):
        return 1.0 / self.center_frequency


@dataclass(frozen=True)
class ScattererSpec:
    reflectivity: float
    range: float
    duration: float

    def __post_init__(self):
        if self.range < 0:
            raise ValueError("scatterer range must be non-negative")
        if not self.duration > 0:
            raise ValueError("scatterer duration must be positive")

    def scaled(self, factor):
        return replace(self, reflectivity=self.reflectivity * factor)


@dataclass(frozen=True)
class AcquisitionSpec:
    sample_count: int = 211
    sampling_interval: float = 25e-12
    permittivity: float = 4.0
    conductivity: float = 0.0
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sample_count <= 0:
            raise ValueError("sample count must be positive")
        if not self.sampling_interval > 0:
            raise ValueError("sampling interval must be positive")
        if self.permittivity < 1:
            raise ValueError("relative permittivity must be >= 1")
        if self.conductivity < 0:
            raise ValueError("conductivity must be >= 0")
        if self.noise_std < 0:
            raise ValueError("noise std must be >= 0")

    @property
    def velocity(self):
        return phase_velocity(self.permittivity)

    def times(self):
        return np.arange(self.sample_count) * self.sampling_interval


def gaussian_pulse(t, p: PulseSpec):
    t = np.asarray(t, dtype=np.float64)
    fc = p.center_frequency
    return p.peak_amplitude * np.exp(-2.0 * np.pi**2 * fc**2 * (t - p.delay) ** 2)


def monocycle(t, p: PulseSpec):
    """First time-derivative of :func:`gaussian_pulse`."""
    t = np.asarray(t, dtype=np.float64)
    fc = p.center_frequency
    u = t - p.delay
    return -4.0 * np.pi**2 * fc**2 * p.peak_amplitude * u * np.exp(-2.0 * np.pi**2 * fc**2 * u**2)


def phase_velocity(permittivity):
    if np.any(np.asarray(permittivity) < 1):
        raise ValueError("relative permittivity must be >= 1")
    return C0 / np.sqrt(permittivity)


def attenuation_coefficient(conductivity, permittivity):
    """Low-loss attenuation ``Z0 * sigma / (2 sqrt(eps_r))`` in Np/m."""
    if np.any(np.asarray(conductivity) < 0):
        raise ValueError("conductivity must be >= 0")
    if np.any(np.asarray(permittivity) < 1):
        raise ValueError("relative permittivity must be >= 1")
    return Z0 * conductivity / (2.0 * np.sqrt(permittivity))


def depth_resolution(permittivity, bandwidth):
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    return phase_velocity(permittivity) / bandwidth


def echo_time(r, permittivity):
    """Two-way travel time to range ``r``."""
    return 2.0 * np.asarray(r, dtype=np.float64) / phase_velocity(permittivity)


def cir(t, scatterers, permittivity):
    """Channel impulse response: a sum of delayed, weighted Gaussians."""
    t = np.asarray(t, dtype=np.float64)
    out = np.zeros_like(t)
    v = phase_velocity(permittivity)
    for s in scatterers:
        tm = 2.0 * s.range / v
        out += s.reflectivity * np.exp(-4.0 * np.pi * ((t - tm) / s.duration) ** 2)
    return out


def _pulse_kernel(p: PulseSpec, step):
    n = int(np.ceil((p.delay + _PULSE_SUPPORT_PERIODS / p.center_frequency) / step)) + 1
    return monocycle(np.arange(n) * step, p)


def noise_free_profile(p: PulseSpec, scatterers, acq: AcquisitionSpec):
    """Sampled ``(s_T * h)(n T_s)`` without noise, as a plain array."""
    M, Ts = acq.sample_count, acq.sampling_interval
    if scatterers:
        deepest = max(echo_time(s.range, acq.permittivity) for s in scatterers)
        window = (M - 1) * Ts
        if deepest + p.delay > window:
            raise ValueError(
                f"{M} samples at {Ts:g} s cover {window:g} s, but the deepest echo "
                f"arrives at {deepest + p.delay:g} s; increase sample_count"
            )
    else:
        return np.zeros(M)

    step = Ts / _OVERSAMPLE
    kernel = _pulse_kernel(p, step)
    U = kernel.size
    # h is needed on t - u for t in [0, (M-1) Ts] and u in [0, (U-1) step]
    t_h = (np.arange((M - 1) * _OVERSAMPLE + U) - (U - 1)) * step
    loss = attenuation_coefficient(acq.conductivity, acq.permittivity)
    if loss > 0:
        scatterers = [s.scaled(np.exp(-2.0 * loss * s.range)) for s in scatterers]
    h = cir(t_h, scatterers, acq.permittivity)
    full = np.convolve(h, kernel) * step
    idx = np.arange(M) * _OVERSAMPLE + U - 1
    return full[idx]


def synthesize_profile(p: PulseSpec, scatterers, acq: AcquisitionSpec, rng=None) -> RangeProfile:
    """Sample the received echo of ``scatterers`` and add white noise.

    Noise is drawn from ``rng`` when given, else from a generator seeded
    with ``acq.seed``.
    """
    y = noise_free_profile(p, list(scatterers), acq)
    if acq.noise_std > 0:
        if rng is None:
            rng = np.random.default_rng(acq.seed)
        y = y + rng.normal(0.0, acq.noise_std, size=y.shape)
    return RangeProfile(y, acq.sampling_interval, {"scatterers": len(scatterers)})


# --- class templates -------------------------------------------------------


@dataclass(frozen=True)
class TargetTemplate:
    """A buried object seen as a top echo followed by an inverted bottom echo."""

    depth: tuple[float, float]
    reflectivity: tuple[float, float]
    thickness: tuple[float, float]
    bottom_ratio: tuple[float, float]
    duration: tuple[float, float]


@dataclass(frozen=True)
class ClutterTemplate:
    """Randomly placed weak scatterers with random sign."""

    count: tuple[int, int]
    reflectivity: tuple[float, float]
    depth: tuple[float, float]
    duration: tuple[float, float]


@dataclass(frozen=True)
class ClassSpec:
    name: str
    clutter: ClutterTemplate
    target: TargetTemplate | None = None
    gain_jitter: float = 0.1

    def draw(self, rng):
        out = []
        if self.target is not None:
            t = self.target
            depth = rng.uniform(*t.depth)
            a = rng.uniform(*t.reflectivity)
            dur = rng.uniform(*t.duration)
            out.append(ScattererSpec(a, depth, dur))
            out.append(ScattererSpec(-a * rng.uniform(*t.bottom_ratio),
                                     depth + rng.uniform(*t.thickness), dur))
        c = self.clutter
        n = int(rng.integers(c.count[0], c.count[1] + 1))
        for _ in range(n):
            a = rng.uniform(*c.reflectivity) * rng.choice((-1.0, 1.0))
            out.append(ScattererSpec(a, rng.uniform(*c.depth), rng.uniform(*c.duration)))
        gain = max(1.0 + self.gain_jitter * rng.standard_normal(), 0.05)
        return [s.scaled(gain) for s in out]


DEFAULT_COUNTS = (463, 168, 167, 128)


def default_classes():
    """Clutter plus three buried-object classes of decreasing size.

    Larger objects give stronger echoes and a wider top/bottom separation.
    Clutter is a handful of weak random-sign reflections, so at the weak end
    it resembles the smallest class.
    """
    soil = ClutterTemplate(count=(0, 2), reflectivity=(0.02, 0.08),
                           depth=(0.02, 0.30), duration=(60e-12, 120e-12))
    dur = (60e-12, 90e-12)
    return [
        ClassSpec("clutter", ClutterTemplate(count=(3, 8), reflectivity=(0.05, 0.35),
                                             depth=(0.02, 0.30), duration=(50e-12, 150e-12))),
        ClassSpec("large", soil, TargetTemplate(depth=(0.10, 0.15), reflectivity=(0.8, 1.0),
                                                thickness=(0.060, 0.080), bottom_ratio=(0.6, 0.8),
                                                duration=dur)),
        ClassSpec("medium", soil, TargetTemplate(depth=(0.10, 0.15), reflectivity=(0.55, 0.75),
                                                 thickness=(0.035, 0.050), bottom_ratio=(0.5, 0.7),
                                                 duration=dur)),
        ClassSpec("small", soil, TargetTemplate(depth=(0.10, 0.15), reflectivity=(0.35, 0.5),
                                                thickness=(0.015, 0.025), bottom_ratio=(0.4, 0.6),
                                                duration=dur)),
    ]


DEFAULT_NOISE_STD = 0.002


def column_rng(seed, index):
    """Generator for column ``index``; independent of generation order."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def generate_dataset(classes=None, counts=DEFAULT_COUNTS, acq=None, seed=0, pulse=None) -> LabeledDataset:
    """Draw ``counts[c]`` profiles from each class, grouped by class.

    The result is a pure function of the arguments: column ``j`` uses a
    generator derived from ``(seed, j)`` for both its scatterers and its
    noise.
    """
    classes = default_classes() if classes is None else list(classes)
    counts = [int(c) for c in counts]
    if len(counts) != len(classes):
        raise ValueError(f"{len(classes)} classes but {len(counts)} counts")
    if any(c <= 0 for c in counts):
        raise ValueError("every class count must be positive")
    if acq is None:
        acq = AcquisitionSpec(noise_std=DEFAULT_NOISE_STD)
    pulse = PulseSpec() if pulse is None else pulse

    labels = np.repeat(np.arange(len(classes)), counts)
    Y = np.empty((acq.sample_count, labels.size))
    for j, c in enumerate(labels):
        rng = column_rng(seed, j)
        Y[:, j] = synthesize_profile(pulse, classes[c].draw(rng), acq, rng).samples
    return LabeledDataset(Y, labels, tuple(c.name for c in classes), acq.sampling_interval)


def synthesize_bscan(x0, depth, acq: AcquisitionSpec, positions, p: PulseSpec | None = None,
                     reflectivity=1.0, duration=75e-12) -> BScan:
    """B-scan of a point target at lateral position ``x0`` and depth ``depth``.

    Every trace sees a single scatterer at the slant range
    ``sqrt(depth**2 + (x - x0)**2)``, which traces out the usual hyperbola.
    """
    p = PulseSpec() if p is None else p
    positions = np.asarray(positions, dtype=np.float64)
    if positions.ndim != 1 or positions.size == 0:
        raise ValueError("positions must be a non-empty 1-D sequence")
    if np.any(np.diff(positions) < 0):
        raise ValueError("positions must be sorted")
    cols = []
    for j, x in enumerate(positions):
        r = float(np.hypot(depth, x - x0))
        rng = column_rng(acq.seed, j)
        cols.append(synthesize_profile(p, [ScattererSpec(reflectivity, r, duration)], acq, rng).samples)
    dx = float(positions[1] - positions[0]) if positions.size > 1 else 0.0
    return BScan(np.column_stack(cols), acq.sampling_interval, dx, positions,
                 {"x0": float(x0), "depth": float(depth)})


@dataclass(frozen=True)
class SurveyTarget:
    """A buried object covering the inclusive pixel box ``[x0, x1] x [y0, y1]``."""

    target_id: str
    class_index: int
    x0: int
    y0: int
    x1: int
    y1: int

    def contains(self, ix, iy):
        return self.x0 <= ix <= self.x1 and self.y0 <= iy <= self.y1


def default_survey_targets():
    """One object of each target class on the default 60 x 15 survey grid."""
    return [SurveyTarget("T1", 1, 6, 4, 15, 9), SurveyTarget("T2", 2, 26, 5, 33, 9),
            SurveyTarget("T3", 3, 45, 6, 50, 9)]


def generate_survey(nx=60, ny=15, targets=None, classes=None, acq=None, seed=0, pulse=None,
                    clutter_index=0):
    """Profiles on an ``nx`` x ``ny`` survey grid, ordered line by line.

    Pixel ``(ix, iy)`` is profile ``iy * nx + ix``. Pixels inside a target
    box are drawn from that target's class, all others from the clutter
    class. Returns the labeled profiles (labels are the ground truth) and
    the list of targets.
    """
    classes = default_classes() if classes is None else list(classes)
    targets = default_survey_targets() if targets is None else list(targets)
    if nx < 1 or ny < 1:
        raise ValueError("survey grid must be at least 1 x 1")
    for t in targets:
        if not (0 <= t.x0 <= t.x1 < nx and 0 <= t.y0 <= t.y1 < ny):
            raise ValueError(f"target {t.target_id} lies outside the {nx} x {ny} grid")
        if not 0 <= t.class_index < len(classes):
            raise ValueError(f"target {t.target_id}: class index {t.class_index} out of range")
    if acq is None:
        acq = AcquisitionSpec(noise_std=DEFAULT_NOISE_STD)
    pulse = PulseSpec() if pulse is None else pulse
    labels = np.full(nx * ny, clutter_index, dtype=np.int64)
    for iy in range(ny):
        for ix in range(nx):
            for t in targets:
                if t.contains(ix, iy):
                    labels[iy * nx + ix] = t.class_index
    Y = np.empty((acq.sample_count, labels.size))
    for j, c in enumerate(labels):
        rng = column_rng(seed, j)
        Y[:, j] = synthesize_profile(pulse, classes[c].draw(rng), acq, rng).samples
    return LabeledDataset(Y, labels, tuple(c.name for c in classes), acq.sampling_interval), targets
