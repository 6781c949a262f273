"""Pulse representation, design parameters and physical scaling.

The search objective is the peak per-sample nutation in radians at a fixed
sample count. Conversion to Gauss and milliseconds happens only for reporting:
at fixed ``n_points`` the minimum duration under a B1 cap is proportional to
the peak nutation, so both orderings agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import PulseFormatError, UnscaledPulse, ValidationError, ZeroPulse

GAMMA_HZ_PER_GAUSS = 4257.6


@dataclass(frozen=True)
class DesignSpec:
    nb: int = 7
    tbw: float = 6.0
    passband_ripple: float = 0.01
    stopband_ripple: float = 0.01
    band_gap: float = 6.0
    n_points: int = 512
    peak_constraint_gauss: float = 0.2
    pulse_role: str = "refocusing"
    # multiplies the equiripple transition width estimate
    transition_scale: float = 1.0

    def __post_init__(self):
        if int(self.nb) != self.nb or self.nb < 1:
            raise ValidationError(f"nb must be a positive integer, got {self.nb}")
        if not self.tbw > 0:
            raise ValidationError(f"tbw must be positive, got {self.tbw}")
        for name in ("passband_ripple", "stopband_ripple"):
            v = getattr(self, name)
            if not 0 < v < 0.5:
                raise ValidationError(f"{name} must lie in (0, 0.5), got {v}")
        if not self.band_gap > 1:
            raise ValidationError(f"band_gap must exceed 1, got {self.band_gap}")
        if int(self.n_points) != self.n_points or self.n_points < 8:
            raise ValidationError(f"n_points must be an integer >= 8, got {self.n_points}")
        if not self.peak_constraint_gauss > 0:
            raise ValidationError("peak_constraint_gauss must be positive")
        if self.pulse_role not in ("refocusing", "excitation"):
            raise ValidationError(f"unknown pulse_role {self.pulse_role!r}")
        if not self.transition_scale > 0:
            raise ValidationError("transition_scale must be positive")

    def with_(self, **kwargs) -> "DesignSpec":
        return replace(self, **kwargs)

    def to_dict(self) -> dict:
        return {
            "nb": self.nb,
            "tbw": self.tbw,
            "passband_ripple": self.passband_ripple,
            "stopband_ripple": self.stopband_ripple,
            "band_gap": self.band_gap,
            "n_points": self.n_points,
            "peak_constraint_gauss": self.peak_constraint_gauss,
            "pulse_role": self.pulse_role,
            "transition_scale": self.transition_scale,
        }


@dataclass
class RfPulse:
    """Hard-pulse samples in radians of nutation per sample.

    ``dwell_s`` stays ``None`` until the pulse has been scaled to a peak
    constraint with :func:`scale_to_peak`.
    """

    samples: np.ndarray
    dwell_s: Optional[float] = None
    gamma_hz_per_gauss: float = GAMMA_HZ_PER_GAUSS
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=complex).ravel()
        if self.samples.size == 0:
            raise ValidationError("a pulse needs at least one sample")
        if not np.all(np.isfinite(self.samples)):
            raise ValidationError("pulse samples must be finite")

    @property
    def n_points(self) -> int:
        return self.samples.size

    @property
    def duration_ms(self) -> float:
        if self.dwell_s is None:
            raise UnscaledPulse("pulse has no dwell time; call scale_to_peak first")
        return self.n_points * self.dwell_s * 1e3

    def gauss(self) -> np.ndarray:
        """Complex B1 waveform in Gauss (requires a dwell time)."""
        if self.dwell_s is None:
            raise UnscaledPulse("pulse has no dwell time; call scale_to_peak first")
        return self.samples / (2 * np.pi * self.gamma_hz_per_gauss * self.dwell_s)


@dataclass(frozen=True)
class Scaling:
    dwell_s: float
    duration_ms: float
    peak_gauss: float


def peak_nutation(pulse) -> float:
    samples = pulse.samples if isinstance(pulse, RfPulse) else np.asarray(pulse)
    return float(np.max(np.abs(samples)))


def duration_for_peak(peak_rad: float, n_points: int, peak_constraint_gauss: float,
                      gamma_hz_per_gauss: float = GAMMA_HZ_PER_GAUSS) -> float:
    """Minimum duration in ms for a pulse whose largest sample is ``peak_rad``."""
    dwell = peak_rad / (2 * np.pi * gamma_hz_per_gauss * peak_constraint_gauss)
    return n_points * dwell * 1e3


def scale_to_peak(pulse: RfPulse, spec: DesignSpec) -> Scaling:
    """Shortest dwell time that keeps ``pulse`` under the design's B1 cap."""
    peak = peak_nutation(pulse)
    if peak == 0:
        raise ZeroPulse("cannot scale an all-zero pulse")
    gamma = pulse.gamma_hz_per_gauss
    dwell = peak / (2 * np.pi * gamma * spec.peak_constraint_gauss)
    duration = pulse.n_points * dwell * 1e3
    peak_gauss = peak / (2 * np.pi * gamma * dwell)
    return Scaling(dwell_s=dwell, duration_ms=duration, peak_gauss=peak_gauss)


def scaled(pulse: RfPulse, spec: DesignSpec) -> RfPulse:
    """Copy of ``pulse`` with its dwell time set by :func:`scale_to_peak`."""
    s = scale_to_peak(pulse, spec)
    return RfPulse(pulse.samples.copy(), dwell_s=s.dwell_s,
                   gamma_hz_per_gauss=pulse.gamma_hz_per_gauss, meta=dict(pulse.meta))


def write_pulse_csv(pulse: RfPulse, path) -> None:
    b1 = pulse.gauss()
    lines = [f"# dwell_s={pulse.dwell_s!r}", f"# gamma={pulse.gamma_hz_per_gauss!r}",
             "index,amplitude_gauss,phase_rad"]
    for i, v in enumerate(b1):
        lines.append(f"{i},{abs(v):.17g},{math.atan2(v.imag, v.real):.17g}")
    _atomic_write(Path(path), "\n".join(lines) + "\n")


def read_pulse_csv(path) -> RfPulse:
    dwell = gamma = None
    rows = []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise PulseFormatError(f"cannot read pulse file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            try:
                if key.strip() == "dwell_s":
                    dwell = float(val)
                elif key.strip() == "gamma":
                    gamma = float(val)
            except ValueError as exc:
                raise PulseFormatError(f"{path}:{lineno}: bad header value {val!r}") from exc
            continue
        if line.startswith("index"):
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise PulseFormatError(f"{path}:{lineno}: expected 3 columns, got {len(parts)}")
        try:
            idx, amp, ph = int(parts[0]), float(parts[1]), float(parts[2])
        except ValueError as exc:
            raise PulseFormatError(f"{path}:{lineno}: unparseable row {line!r}") from exc
        if idx != len(rows):
            raise PulseFormatError(f"{path}:{lineno}: index {idx} out of sequence")
        rows.append(amp * np.exp(1j * ph))
    if dwell is None or gamma is None:
        raise PulseFormatError(f"{path}: missing dwell_s or gamma header")
    if not rows:
        raise PulseFormatError(f"{path}: no samples")
    b1 = np.array(rows)
    samples = b1 * 2 * np.pi * gamma * dwell
    return RfPulse(samples, dwell_s=dwell, gamma_hz_per_gauss=gamma)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)
