"""Forward and inverse Shinnar-Le Roux transforms.

Polynomials are stored as coefficient arrays in ascending powers of z^-1.
A pulse sample with modulus ``phi`` and angle ``theta`` acts as the rotation

    C = cos(phi/2),  S = 1j * exp(1j*theta) * sin(phi/2)
    A <- C*A - conj(S) * z^-1 * B
    B <- S*A + C * z^-1 * B

so a real (x-axis) pulse yields a real ``A`` and a purely imaginary ``B``.
Filter design works with real-coefficient beta; :func:`beta_to_pulse`
multiplies by 1j before inverting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import FactorizationFailure, NotUnimodular
from .pulse import RfPulse

UNIMODULAR_TOL = 1e-8


@dataclass
class SlrPolynomials:
    a_coeffs: np.ndarray
    b_coeffs: np.ndarray

    def __post_init__(self):
        self.a_coeffs = np.asarray(self.a_coeffs, dtype=complex).ravel()
        self.b_coeffs = np.asarray(self.b_coeffs, dtype=complex).ravel()
        if self.a_coeffs.size != self.b_coeffs.size:
            raise ValueError("alpha and beta must have the same length")

    @property
    def n(self) -> int:
        return self.a_coeffs.size

    def unimodularity_error(self, n_grid: int | None = None) -> float:
        n_grid = n_grid or check_grid_size(self.n)
        a = np.fft.fft(self.a_coeffs, n_grid)
        b = np.fft.fft(self.b_coeffs, n_grid)
        return float(np.max(np.abs(np.abs(a) ** 2 + np.abs(b) ** 2 - 1)))


def check_grid_size(n: int) -> int:
    """Grid used for unit-circle checks: 8x the length, at least 4096."""
    return max(4096, 8 * int(n))


def circle_frequencies(n_grid: int) -> np.ndarray:
    """Angular frequencies in [-pi, pi) matching :func:`evaluate_on_circle`."""
    return 2 * np.pi * (np.arange(n_grid) - n_grid // 2) / n_grid


def evaluate_on_circle(coeffs, n_grid: int) -> np.ndarray:
    """Evaluate sum_k c_k exp(-1j*w*k) on ``circle_frequencies(n_grid)``."""
    coeffs = np.asarray(coeffs)
    if n_grid < coeffs.size:
        raise ValueError(f"n_grid={n_grid} is shorter than the polynomial ({coeffs.size})")
    return np.fft.fftshift(np.fft.fft(coeffs, n_grid))


def forward_slr(pulse) -> SlrPolynomials:
    samples = pulse.samples if isinstance(pulse, RfPulse) else np.asarray(pulse, dtype=complex)
    a, b = _kernels.forward_recursion(np.ascontiguousarray(samples, dtype=np.complex128))
    return SlrPolynomials(a, b)


def inverse_slr(polys: SlrPolynomials, check: bool = True, tol: float = UNIMODULAR_TOL) -> RfPulse:
    """Recover the hard pulse whose forward transform is ``polys``.

    Each step reads the constant coefficients of A and B, which belong to
    the last sample applied, removes that rotation and the delay, and
    continues on polynomials one shorter.
    """
    if check:
        err = polys.unimodularity_error()
        if err > tol:
            raise NotUnimodular(f"|A|^2 + |B|^2 deviates from 1 by {err:.3g}")
    a, b = polys.a_coeffs, polys.b_coeffs
    if a[0] == 0:
        raise NotUnimodular("alpha has a zero constant coefficient")
    if np.all(a.imag == 0) and np.all(b.real == 0):
        rf = _kernels.inverse_recursion_real(np.ascontiguousarray(a.real),
                                             np.ascontiguousarray(b.imag))
        return RfPulse(rf.astype(complex))
    return RfPulse(_kernels.inverse_recursion(np.ascontiguousarray(a), np.ascontiguousarray(b)))


def minimum_phase_from_magnitude(mag: np.ndarray) -> np.ndarray:
    """Minimum-phase spectrum with magnitude ``mag`` on an FFT grid (folded cepstrum)."""
    n = mag.size
    cep = np.fft.ifft(np.log(mag))
    fold = np.zeros(n, dtype=complex)
    fold[0] = cep[0]
    fold[1:n // 2] = 2 * cep[1:n // 2]
    fold[n // 2] = cep[n // 2]
    return np.exp(np.fft.fft(fold))


def alpha_grid_size(n: int) -> int:
    return max(65536, 64 * int(2 ** np.ceil(np.log2(n))))


def min_phase_alpha(b_coeffs, n_grid: int | None = None) -> np.ndarray:
    """Minimum-phase alpha with |A|^2 = 1 - |B|^2 on the unit circle.

    Real-coefficient beta gives real-coefficient alpha.
    """
    b = np.asarray(b_coeffs)
    n = b.size
    m = n_grid or alpha_grid_size(n)
    bf = np.fft.fft(b, m)
    rem = 1.0 - np.abs(bf) ** 2
    if rem.min() < -1e-10:
        raise FactorizationFailure(f"|B| exceeds 1 on the unit circle (1-|B|^2 = {rem.min():.3g})")
    mag = np.sqrt(np.maximum(rem, 1e-300))
    a = np.fft.ifft(minimum_phase_from_magnitude(mag))[:n]
    if np.isrealobj(b):
        a = a.real
    if not np.all(np.isfinite(a)):
        raise FactorizationFailure("spectral factorization produced non-finite coefficients")
    return a


def beta_to_polys(b_coeffs, a_coeffs=None) -> SlrPolynomials:
    """SLR pair for a design-domain beta (real beta -> x-axis pulse)."""
    b = np.asarray(b_coeffs)
    if a_coeffs is None:
        a_coeffs = min_phase_alpha(b)
    return SlrPolynomials(a_coeffs, 1j * b)


def beta_to_pulse(b_coeffs, a_coeffs=None, check: bool = True) -> RfPulse:
    return inverse_slr(beta_to_polys(b_coeffs, a_coeffs), check=check)
