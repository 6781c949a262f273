"""Root finding, eligibility, conjugate-symmetric flipping and the pattern environment.

Roots are those of B(z) = sum_k b_k z^-k, i.e. ``np.roots(b)``. Flipping a
root r to 1/conj(r) multiplies B by a unit-modulus all-pass factor, so the
magnitude profile is unchanged after renormalization while the phase, and
therefore the RF shape, changes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import IllConditioned, ValidationError, ZeroRoot
from .filters import BandLayout, band_edges, design_min_phase_beta
from .pulse import DesignSpec, RfPulse, _atomic_write
from .slr import (beta_to_pulse, check_grid_size, evaluate_on_circle, min_phase_alpha)

RECONSTRUCTION_TOL = 1e-6
MIRROR_TOL = 1e-6
# Roots closer than this to the unit circle are fixed points of the flip.
OFF_CIRCLE_TOL = 4e-3
ELIGIBLE_WIDTHS = 3.0


def expand_roots(roots) -> np.ndarray:
    """Monic coefficients (ascending z^-1) of prod(1 - r z^-1).

    The product is formed pointwise on an FFT grid, smallest moduli first,
    and transformed back. Sequential convolution loses every significant
    digit once hundreds of roots crowd the unit circle; the pointwise
    product keeps relative accuracy at each grid point.
    """
    roots = np.asarray(roots, dtype=complex)
    n = roots.size + 1
    m = 1 << int(np.ceil(np.log2(n)))
    zinv = np.exp(-2j * np.pi * np.arange(m) / m)
    prod = np.ones(m, dtype=complex)
    for r in roots[np.argsort(np.abs(roots), kind="stable")]:
        prod *= 1 - r * zinv
    if not np.all(np.isfinite(prod)):
        raise IllConditioned("root expansion overflowed")
    return np.fft.ifft(prod)[:n]


def find_roots(b_coeffs, tol: float = RECONSTRUCTION_TOL) -> np.ndarray:
    b = np.trim_zeros(np.asarray(b_coeffs), "b")
    if b.size < 2:
        raise ValidationError("need a polynomial of degree >= 1")
    if b[0] == 0:
        raise ValidationError("constant coefficient must be nonzero")
    roots = np.roots(b)
    recon = expand_roots(roots) * b[0]
    err = np.max(np.abs(recon - b)) / np.max(np.abs(b))
    if err > tol:
        raise IllConditioned(f"root reconstruction error {err:.3g} exceeds {tol:g}")
    return roots


def identify_eligible(roots, layout: BandLayout, widths: float = ELIGIBLE_WIDTHS,
                      off_circle_tol: float = OFF_CIRCLE_TOL) -> np.ndarray:
    """Indices of flippable roots, ordered by angle then modulus.

    A root qualifies if it lies in the upper half plane, within ``widths``
    band widths (in angle) of a band center, and is not on the unit circle.
    """
    roots = np.asarray(roots, dtype=complex)
    if roots.size == 0:
        return np.zeros(0, dtype=int)
    dist = layout.nearest_center_distance(np.angle(roots))
    ok = ((roots.imag > 0) & (dist <= widths * layout.band_width)
          & (np.abs(1 - np.abs(roots)) > off_circle_tol))
    idx = np.flatnonzero(ok)
    order = np.lexsort((np.abs(roots[idx]), np.angle(roots[idx])))
    return idx[order]


def flip_root(r: complex) -> complex:
    if r == 0:
        raise ZeroRoot("cannot reflect a root at the origin")
    return 1 / np.conj(r)


def mirror_indices(roots, eligible, tol: float = MIRROR_TOL) -> np.ndarray:
    roots = np.asarray(roots, dtype=complex)
    out = np.empty(len(eligible), dtype=int)
    for k, i in enumerate(eligible):
        d = np.abs(roots - np.conj(roots[i]))
        d[i] = np.inf
        j = int(np.argmin(d))
        if d[j] > tol * max(1.0, abs(roots[i])):
            raise IllConditioned(f"root {roots[i]:.6g} has no conjugate partner")
        out[k] = j
    return out


@dataclass(frozen=True)
class RootSet:
    roots: np.ndarray
    eligible_indices: np.ndarray
    mirror_map: np.ndarray
    reference_max_b: float

    @property
    def n_root(self) -> int:
        return len(self.eligible_indices)

    @classmethod
    def from_beta(cls, b_coeffs, layout: BandLayout, **kwargs) -> "RootSet":
        roots = find_roots(b_coeffs)
        elig = identify_eligible(roots, layout, **kwargs)
        ref = float(np.abs(evaluate_on_circle(b_coeffs, check_grid_size(len(b_coeffs)))).max())
        return cls(roots, elig, mirror_indices(roots, elig), ref)


@dataclass(frozen=True)
class RootPattern:
    bits: tuple

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise ValidationError("pattern bits must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    def __len__(self):
        return len(self.bits)

    def __str__(self):
        return "".join(map(str, self.bits))

    @classmethod
    def zeros(cls, n: int) -> "RootPattern":
        return cls((0,) * n)

    @classmethod
    def parse(cls, text: str) -> "RootPattern":
        text = text.strip()
        if text and set(text) - {"0", "1"}:
            raise ValidationError(f"pattern may only contain 0/1, got {text!r}")
        return cls(tuple(int(c) for c in text))


def _check_length(root_set: RootSet, pattern: RootPattern):
    if len(pattern) != root_set.n_root:
        raise ValidationError(f"pattern has {len(pattern)} bits, expected {root_set.n_root}")


def apply_pattern(root_set: RootSet, pattern: RootPattern) -> np.ndarray:
    _check_length(root_set, pattern)
    out = root_set.roots.copy()
    for bit, i, j in zip(pattern.bits, root_set.eligible_indices, root_set.mirror_map):
        if bit:
            out[i] = flip_root(root_set.roots[i])
            out[j] = flip_root(root_set.roots[j])
    return out


def reconstruct_beta(roots, root_set: RootSet, sign: float = 1.0) -> np.ndarray:
    """Expand ``roots`` and rescale so max |B| matches the reference.

    ``sign`` sets the sign of the constant coefficient (that of the
    reference beta keeps the all-zero pattern an exact round trip).
    """
    coeffs = expand_roots(roots)
    mag = np.abs(evaluate_on_circle(coeffs, check_grid_size(coeffs.size))).max()
    if not np.isfinite(mag) or mag == 0:
        raise IllConditioned("reconstructed beta has no usable magnitude")
    coeffs = coeffs * (sign * root_set.reference_max_b / mag)
    scale = np.max(np.abs(coeffs))
    if np.max(np.abs(coeffs.imag)) <= 1e-8 * scale:
        return coeffs.real
    return coeffs


class FlipContext:
    """Precomputed flip environment for one design.

    Each eligible root pair contributes an all-pass phase on an FFT grid;
    a pattern's beta is the reference spectrum times the exponential of the
    summed phases. Alpha depends only on |B|, which flipping preserves, so
    it is factored once.
    """

    def __init__(self, spec: DesignSpec, b_ref=None, layout: BandLayout | None = None,
                 off_circle_tol: float = OFF_CIRCLE_TOL):
        self.spec = spec
        self.layout = layout or band_edges(spec)
        self.b_ref = np.asarray(design_min_phase_beta(spec) if b_ref is None else b_ref)
        self.a_ref = min_phase_alpha(self.b_ref)
        self.root_set = RootSet.from_beta(self.b_ref, self.layout, off_circle_tol=off_circle_tol)
        n = self.b_ref.size
        self.n_fft = 1 << int(np.ceil(np.log2(n)))
        zinv = np.exp(-2j * np.pi * np.arange(self.n_fft) / self.n_fft)
        self._spectrum = np.fft.fft(self.b_ref, self.n_fft)
        phases = np.zeros((self.root_set.n_root, self.n_fft))
        for k, (i, j) in enumerate(zip(self.root_set.eligible_indices, self.root_set.mirror_map)):
            for r in (self.root_set.roots[i], self.root_set.roots[j]):
                phases[k] += np.angle((np.conj(r) - zinv) / (1 - r * zinv))
        self._phases = phases
        self._a_real = np.ascontiguousarray(self.a_ref.real)

    @property
    def n_root(self) -> int:
        return self.root_set.n_root

    def beta(self, pattern) -> np.ndarray:
        bits = np.asarray(pattern.bits if isinstance(pattern, RootPattern) else pattern, dtype=float)
        if bits.size != self.n_root:
            raise ValidationError(f"pattern has {bits.size} bits, expected {self.n_root}")
        spec = self._spectrum * np.exp(1j * (bits @ self._phases)) if bits.size else self._spectrum
        return np.fft.ifft(spec)[: self.b_ref.size].real

    def amplitude(self, pattern) -> np.ndarray:
        """|rf| of the pattern's pulse in radians per sample."""
        rf = _kernels.inverse_recursion_real(self._a_real, np.ascontiguousarray(self.beta(pattern)))
        return np.abs(rf)

    def peak(self, pattern) -> float:
        return float(np.max(self.amplitude(pattern)))

    def pulse(self, pattern) -> RfPulse:
        return beta_to_pulse(self.beta(pattern), self.a_ref, check=False)


def pattern_to_pulse(pattern: RootPattern, ctx: FlipContext):
    pulse = ctx.pulse(pattern)
    return pulse, float(np.max(np.abs(pulse.samples)))


def write_pattern(path, pattern: RootPattern):
    _atomic_write(Path(path), str(pattern) + "\n")


def read_pattern(path, n_root: int | None = None) -> RootPattern:
    pattern = RootPattern.parse(Path(path).read_text())
    if n_root is not None and len(pattern) != n_root:
        raise ValidationError(f"pattern file has {len(pattern)} bits, expected {n_root}")
    return pattern


def write_root_dump(path, root_set: RootSet, pattern: RootPattern | None = None):
    flipped = np.zeros(root_set.roots.size, dtype=int)
    eligible = np.zeros(root_set.roots.size, dtype=int)
    eligible[root_set.eligible_indices] = 1
    roots = root_set.roots
    if pattern is not None:
        roots = apply_pattern(root_set, pattern)
        for bit, i, j in zip(pattern.bits, root_set.eligible_indices, root_set.mirror_map):
            if bit:
                flipped[[i, j]] = 1
    lines = ["index,re,im,eligible,flipped"]
    lines += [f"{k},{r.real:.17g},{r.imag:.17g},{eligible[k]},{flipped[k]}"
              for k, r in enumerate(roots)]
    _atomic_write(Path(path), "\n".join(lines) + "\n")
