"""Spinor Bloch simulation of excitation / refocusing pairs and profile metrics.

Spins are two-component spinors; M = psi^H sigma psi. A field B rotates M
by -gamma*|B|*t about B (the usual left-handed MRI sense), i.e.
psi <- (cos(phi/2) I + 1j sin(phi/2) n.sigma) psi. Pulses are applied in
the hard-pulse form the SLR transform assumes: an instantaneous RF
rotation per sample followed by one dwell of gradient precession.
Relaxation is ignored.

Crusher lobes are modelled as ideal intra-voxel dephasing: each position
carries ``n_iso`` isochromats whose crusher phases are spread uniformly
over one cycle, and transverse magnetization is averaged over them. Only
the spin-echo pathway survives that average, as with real crushers
spanning several cycles per voxel.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import UnscaledPulse, ValidationError
from .filters import BandLayout
from .pulse import GAMMA_HZ_PER_GAUSS, RfPulse, _atomic_write
from .slr import circle_frequencies, evaluate_on_circle

SLICE_THICKNESS_CM = 0.7
CRUSHER_CYCLES_PER_SLICE = 8


@dataclass(frozen=True)
class SpinGrid:
    positions: np.ndarray
    gradient_g_per_cm: float
    crusher_area: float
    n_iso: int = 8

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.size < 3:
            raise ValidationError("need at least 3 spins")
        if not np.allclose(pos, -pos[::-1], atol=1e-12):
            raise ValidationError("positions must be symmetric about 0")
        if self.n_iso < 3:
            raise ValidationError("need at least 3 isochromats to cancel crusher pathways")
        object.__setattr__(self, "positions", pos)

    @property
    def count(self) -> int:
        return self.positions.size

    @classmethod
    def for_pulse(cls, pulse: RfPulse, tbw: float, count: int = 1001, extent_cm: float = 10.0,
                  slice_cm: float = SLICE_THICKNESS_CM, n_iso: int = 8) -> "SpinGrid":
        """Grid whose slice-select gradient maps one band width to ``slice_cm``."""
        if pulse.dwell_s is None:
            raise UnscaledPulse("pulse needs a dwell time to set the gradient")
        bw_hz = tbw / (pulse.n_points * pulse.dwell_s)
        gamma = pulse.gamma_hz_per_gauss
        grad = bw_hz / (gamma * slice_cm)
        crusher = CRUSHER_CYCLES_PER_SLICE / (gamma * slice_cm)
        return cls(np.linspace(-extent_cm, extent_cm, count), grad, crusher, n_iso)

    def frequencies(self, dwell_s: float, gamma: float = GAMMA_HZ_PER_GAUSS) -> np.ndarray:
        """Gradient precession per dwell (rad) at each position."""
        return 2 * np.pi * gamma * self.gradient_g_per_cm * self.positions * dwell_s


def _rotate(psi, rx, ry, rz):
    """Apply exp(1j/2 * (rx sx + ry sy + rz sz)) to spinors psi[..., 2]."""
    phi = np.sqrt(rx * rx + ry * ry + rz * rz)
    half = phi / 2
    c = np.cos(half)
    s = np.where(phi > 0, np.sin(half) / np.where(phi > 0, phi, 1), 0.5)
    # 1j*s*(n.sigma) with n*phi = (rx, ry, rz)
    u00 = c + 1j * s * rz
    u11 = c - 1j * s * rz
    u01 = 1j * s * (rx - 1j * ry)
    u10 = 1j * s * (rx + 1j * ry)
    p0, p1 = psi[..., 0], psi[..., 1]
    return np.stack([u00 * p0 + u01 * p1, u10 * p0 + u11 * p1], axis=-1)


def hard_pulse_step(state, b1_sample, gradient, position, dwell,
                    gamma: float = GAMMA_HZ_PER_GAUSS):
    """Rotate spinor(s) about the combined field for one dwell.

    ``b1_sample`` is complex Gauss (x + 1j y), ``gradient`` G/cm,
    ``position`` cm. Broadcasts over leading axes of ``state``.
    """
    k = 2 * np.pi * gamma * dwell
    b1 = np.asarray(b1_sample, dtype=complex)
    rz = k * np.asarray(gradient, dtype=float) * np.asarray(position, dtype=float)
    return _rotate(np.asarray(state, dtype=complex), k * b1.real, k * b1.imag, rz)


def magnetization(psi):
    """(Mxy, Mz) of spinors."""
    p0, p1 = psi[..., 0], psi[..., 1]
    return 2 * np.conj(p0) * p1, np.abs(p0) ** 2 - np.abs(p1) ** 2


def _norm2(psi):
    return np.abs(psi[..., 0]) ** 2 + np.abs(psi[..., 1]) ** 2


def _apply_pulse(psi, pulse: RfPulse, omega, track: bool = False):
    """Hard-pulse form: RF rotation of each sample then gradient precession ``omega``.

    Returns (psi, largest per-step change of the spinor norm squared), the
    latter only computed when ``track`` is set.
    """
    rz = np.broadcast_to(omega[:, None], psi.shape[:-1])
    zero = np.zeros(psi.shape[:-1])
    drift = 0.0
    for x in pulse.samples:
        before = _norm2(psi) if track else None
        psi = _rotate(psi, zero + x.real, zero + x.imag, zero)
        psi = _rotate(psi, zero, zero, rz)
        if track:
            drift = max(drift, float(np.max(np.abs(_norm2(psi) - before))))
    return psi, drift


def _require_scaled(*pulses):
    for p in pulses:
        if p.dwell_s is None:
            raise UnscaledPulse("simulation needs pulses scaled to a dwell time")


def _crusher_phases(grid: SpinGrid):
    return 2 * np.pi * np.arange(grid.n_iso) / grid.n_iso


def _crushed_refocus(psi, ref: RfPulse, grid: SpinGrid, echo_samples: float = 0.0,
                     track: bool = False):
    omega = grid.frequencies(ref.dwell_s, ref.gamma_hz_per_gauss)
    crush = np.broadcast_to(_crusher_phases(grid)[None, :], psi.shape[:-1])
    zero = np.zeros(psi.shape[:-1])
    psi = _rotate(psi, zero, zero, crush)
    psi, drift = _apply_pulse(psi, ref, omega, track)
    psi = _rotate(psi, zero, zero, crush + echo_samples * omega[:, None])
    mxy, _ = magnetization(psi)
    return mxy.mean(axis=1), drift


def simulate_refocusing_profile(ref: RfPulse, grid: SpinGrid, return_drift: bool = False):
    """Crushed echo Mxy for spins starting along +x (magnitude equals |beta|^2).

    With ``return_drift`` also returns the largest per-step norm change.
    """
    _require_scaled(ref)
    psi = np.full((grid.count, grid.n_iso, 2), 1 / np.sqrt(2), dtype=complex)
    mxy, drift = _crushed_refocus(psi, ref, grid, track=return_drift)
    return (mxy, drift) if return_drift else mxy


def simulate_spin_echo(exc: RfPulse, ref: RfPulse, grid: SpinGrid,
                       rephase_samples: float = 0.0, echo_samples: float | None = None):
    """Excite from +z, optionally rephase, then crush-refocus-crush.

    Returns (|Mxy|, phase) per position. ``rephase_samples`` and
    ``echo_samples`` add gradient precession, in units of one dwell, after
    the excitation and after the refocusing pulse. By default the echo
    offset is ``ref.n_points - 1`` plus the excitation's
    ``meta["rephase_samples"]``, which puts the echo where the matched
    design expects it (flat passband phase).
    """
    _require_scaled(exc, ref)
    if echo_samples is None:
        echo_samples = ref.n_points - 1 + float(exc.meta.get("rephase_samples", 0.0))
    psi = np.zeros((grid.count, grid.n_iso, 2), dtype=complex)
    psi[..., 0] = 1
    omega_ex = grid.frequencies(exc.dwell_s, exc.gamma_hz_per_gauss)
    psi, _ = _apply_pulse(psi, exc, omega_ex)
    zero = np.zeros(psi.shape[:-1])
    psi = _rotate(psi, zero, zero, np.broadcast_to((rephase_samples * omega_ex)[:, None], zero.shape))
    mxy, _ = _crushed_refocus(psi, ref, grid, echo_samples)
    return np.abs(mxy), np.angle(mxy)


def refocusing_profile(b_coeffs, n_grid: int) -> np.ndarray:
    return np.abs(evaluate_on_circle(b_coeffs, n_grid)) ** 2


def measure_ripples(profile, layout: BandLayout, target: float = 1.0, w=None):
    """(max passband |profile - target|, max stopband |profile|); transitions ignored.

    ``w`` defaults to :func:`circle_frequencies` for the profile length.
    """
    profile = np.asarray(profile)
    w = circle_frequencies(profile.size) if w is None else np.asarray(w)
    pmask = layout.passband_mask(w)
    smask = layout.stopband_mask(w)
    pass_dev = float(np.max(np.abs(profile[pmask] - target))) if pmask.any() else 0.0
    stop = float(np.max(np.abs(profile[smask]))) if smask.any() else 0.0
    return pass_dev, stop


def write_profile_csv(path, z_cm, mxy):
    mxy = np.asarray(mxy)
    lines = ["z_cm,mxy_mag,mxy_phase_rad"]
    lines += [f"{z:.17g},{abs(m):.17g},{np.angle(m):.17g}" for z, m in zip(z_cm, mxy)]
    _atomic_write(Path(path), "\n".join(lines) + "\n")
