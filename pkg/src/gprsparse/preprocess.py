"""Classical B-scan conditioning and constant-velocity f-k (Stolt) migration."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import BScan, RangeProfile


@dataclass(frozen=True)
class GainCurve:
    """Per-sample multiplicative gain ``g[n] >= 0``."""

    g: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.g, dtype=np.float64)
        if g.ndim != 1:
            raise ValueError("gain curve must be one-dimensional")
        if not np.all(np.isfinite(g)):
            raise ValueError("gain curve contains non-finite values")
        if np.any(g < 0):
            raise ValueError("gain curve must be non-negative")
        object.__setattr__(self, "g", g)

    def __len__(self):
        return self.g.size

    @classmethod
    def exponential(cls, n, rate):
        """``g[n] = exp(rate * n)``; undoes a decay of ``exp(-rate * n)``."""
        return cls(np.exp(rate * np.arange(n)))

    @classmethod
    def linear(cls, n, slope, offset=1.0):
        return cls(offset + slope * np.arange(n))


def _samples(x):
    if isinstance(x, RangeProfile):
        return x.samples
    if isinstance(x, BScan):
        return x.data
    return np.asarray(x, dtype=np.float64)


def _rewrap(x, values):
    if isinstance(x, (RangeProfile, BScan)):
        return x.replace(values)
    return values


def time_gate(profile, n_start, n_end):
    """Zero every sample outside ``[n_start, n_end)``.

    Works on a single profile or, row-wise, on a whole B-scan.
    """
    y = _samples(profile)
    M = y.shape[0]
    if not 0 <= n_start <= n_end <= M:
        raise ValueError(f"gate [{n_start}, {n_end}) invalid for {M} samples")
    out = np.zeros_like(y)
    out[n_start:n_end] = y[n_start:n_end]
    return _rewrap(profile, out)


def time_gain(profile, g):
    y = _samples(profile)
    g = g if isinstance(g, GainCurve) else GainCurve(g)
    if len(g) != y.shape[0]:
        raise ValueError(f"gain length {len(g)} != profile length {y.shape[0]}")
    gv = g.g if y.ndim == 1 else g.g[:, None]
    return _rewrap(profile, y * gv)


def background_subtraction_mean(bscan: BScan) -> BScan:
    A = bscan.data
    if A.shape[1] < 1:
        raise ValueError("need at least one profile")
    return bscan.replace(A - A.mean(axis=1, keepdims=True))


def dewow(bscan: BScan, window_width: int) -> BScan:
    """Subtract from every profile the mean of its neighbouring profiles.

    The window is centred and shrinks at the ends of the line. A window at
    least as wide as the line's reach reduces to
    :func:`background_subtraction_mean`.
    """
    window_width = int(window_width)
    if window_width < 1 or window_width % 2 == 0:
        raise ValueError("window width must be a positive odd integer")
    A = bscan.data
    L = A.shape[1]
    half = window_width // 2
    if half >= L - 1:
        return background_subtraction_mean(bscan)
    csum = np.concatenate([np.zeros((A.shape[0], 1)), np.cumsum(A, axis=1)], axis=1)
    j = np.arange(L)
    lo = np.maximum(j - half, 0)
    hi = np.minimum(j + half + 1, L)
    local = (csum[:, hi] - csum[:, lo]) / (hi - lo)
    return bscan.replace(A - local)


def background_subtraction_pca(bscan: BScan, n_components: int) -> BScan:
    """Remove the leading ``n_components`` singular components."""
    A = bscan.data
    if n_components < 1 or n_components >= min(A.shape):
        raise ValueError(f"n_components must lie in [1, {min(A.shape) - 1}]")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    k = n_components
    return bscan.replace(A - (U[:, :k] * s[:k]) @ Vt[:k])


def fk_migrate(bscan: BScan, velocity, dx=None, dt=None, obliquity=True, time_zero=0.0) -> BScan:
    """Constant-velocity Stolt migration of a zero-offset section.

    The section is transformed to ``(omega, k_x)``, resampled onto a regular
    ``k_z`` grid through ``omega = (v/2) sqrt(k_x**2 + k_z**2)`` by linear
    interpolation, and transformed back. Output depth samples are spaced
    ``v * dt / 2`` so that row ``n`` of the image lines up with two-way time
    ``n * dt`` at normal incidence.

    Parameters
    ----------
    bscan : BScan
        ``(M, L)`` section, one column per trace.
    velocity : float
        Propagation speed in the medium, m/s.
    dx, dt : float, optional
        Trace spacing and sampling interval; default to the scan's own.
    obliquity : bool
        Apply the ``k_z / sqrt(k_x**2 + k_z**2)`` amplitude factor.
    time_zero : float
        Delay in seconds between the recorded time origin and the moment
        the wave leaves the antenna (e.g. the transmit pulse delay). It is
        removed before the remap, because a delayed hyperbola is not a
        hyperbola and focuses off its apex. Row ``n`` of the image then
        corresponds to depth ``n * v * dt / 2``.
    """
    if not velocity > 0:
        raise ValueError("velocity must be positive")
    dx = bscan.dx if dx is None else dx
    dt = bscan.dt if dt is None else dt
    if not (dx > 0 and dt > 0):
        raise ValueError("trace spacing and sampling interval must be positive")
    A = bscan.data
    M, L = A.shape
    if not np.any(A):
        return bscan.replace(np.zeros_like(A))

    # zero-pad both axes to suppress wrap-around of the hyperbola tails
    nt, nx = 2 * M, 2 * L
    S = np.fft.fft2(A, (nt, nx))
    omega = 2 * np.pi * np.fft.fftfreq(nt, dt)
    if time_zero:
        S *= np.exp(1j * omega * time_zero)[:, None]
    kx = 2 * np.pi * np.fft.fftfreq(nx, dx)
    dz = velocity * dt / 2
    kz = 2 * np.pi * np.fft.fftfreq(nt, dz)

    order = np.argsort(omega)
    om_sorted = omega[order]
    out = np.zeros_like(S)
    for i, k in enumerate(kx):
        w = np.sign(kz) * (velocity / 2) * np.sqrt(k**2 + kz**2)
        col = S[order, i]
        vals = (np.interp(w, om_sorted, col.real, left=0.0, right=0.0)
                + 1j * np.interp(w, om_sorted, col.imag, left=0.0, right=0.0))
        if obliquity:
            r = np.sqrt(k**2 + kz**2)
            vals *= np.divide(np.abs(kz), r, out=np.zeros_like(r), where=r > 0)
        out[:, i] = vals
    img = np.real(np.fft.ifft2(out))[:M, :L]
    return bscan.replace(img)


# --- pipeline strings --------------------------------------------------------


def _op_gate(b, a, z):
    return time_gate(b, int(a), int(z))


def _op_gain_exp(b, rate):
    return time_gain(b, GainCurve.exponential(b.shape[0], float(rate)))


_OPS = {
    "dewow": lambda b, w: dewow(b, int(w)),
    "bg-mean": lambda b: background_subtraction_mean(b),
    "bg-pca": lambda b, k: background_subtraction_pca(b, int(k)),
    "gate": _op_gate,
    "gain-exp": _op_gain_exp,
    "migrate": lambda b, v, t0="0": fk_migrate(b, float(v), time_zero=float(t0)),
}


def parse_pipeline(spec: str):
    """Parse ``"dewow:31,bg-pca:2,gate:40:400"`` into ``(name, args)`` steps.

    Ops: ``dewow:W``, ``bg-mean``, ``bg-pca:N``, ``gate:START:END``,
    ``gain-exp:RATE`` (per sample) and ``migrate:V[:T0]`` (m/s, seconds).
    """
    steps = []
    for tok in filter(None, (t.strip() for t in spec.split(","))):
        name, *args = tok.split(":")
        if name not in _OPS:
            raise ValueError(f"unknown preprocessing op {name!r}; known: {', '.join(sorted(_OPS))}")
        steps.append((name, args))
    return steps


def run_pipeline(bscan: BScan, spec: str) -> BScan:
    for name, args in parse_pipeline(spec):
        try:
            bscan = _OPS[name](bscan, *args)
        except TypeError:
            raise ValueError(f"wrong number of arguments for op {name!r}: {args}") from None
    return bscan
