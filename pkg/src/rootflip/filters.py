"""Multiband minimum-phase beta design and the phase-matched excitation pulse.

The refocusing profile |beta|^2 is designed as a zero-phase, length 2N-1
equiripple filter, lifted to be nonnegative and factored into a length-N
minimum-phase beta. Ripple specifications refer to the refocusing profile
and are mapped to the filter as in standard minimum-phase SLR design.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.signal as signal

from .errors import DesignFailure, LayoutOverflow, RippleViolation
from .pulse import DesignSpec, RfPulse
from .slr import (alpha_grid_size, beta_to_pulse, check_grid_size, circle_frequencies, evaluate_on_circle,
                  min_phase_alpha, minimum_phase_from_magnitude)

RIPPLE_SLACK = 1.25
PHASE_FLATNESS_TOL = 0.1
# |B| ceiling for least-squares excitations; keeps alpha's factorization accurate
CLIP_LEVEL = 0.999
TRANSITION_WEIGHT = 0.1
# passband weights tried when the first equiripple design misses its bounds
PASS_WEIGHT_STEPS = (2.0, 4.0, 8.0)


def dinf(d1, d2):
    """Equiripple transition-width estimate D_inf(d1, d2) (Herrmann et al.)."""
    a1, a2, a3 = 5.309e-3, 7.114e-2, -4.761e-1
    a4, a5, a6 = -2.66e-3, -5.941e-1, -4.278e-1
    l1, l2 = np.log10(d1), np.log10(d2)
    return (a1 * l1 * l1 + a2 * l1 + a3) * l2 + (a4 * l1 * l1 + a5 * l1 + a6)


def profile_ripples(spec: DesignSpec):
    """Ripples (pass, stop) of the |beta|^2 filter before lifting.

    Refocusing: beta ripples (d1/4, sqrt(d2)); excitation at 90 degrees:
    (sqrt(d1/2), d2/sqrt(2)). The squared filter then carries
    (2*d1_beta, d2_beta**2 / 2).
    """
    if spec.pulse_role == "refocusing":
        d1b, d2b = spec.passband_ripple / 4, np.sqrt(spec.stopband_ripple)
    else:
        d1b, d2b = np.sqrt(spec.passband_ripple / 2), spec.stopband_ripple / np.sqrt(2)
    return 2 * d1b, 0.5 * d2b ** 2


@dataclass(frozen=True)
class BandLayout:
    """Band geometry in radians per sample."""

    centers: tuple
    band_width: float
    transition_width: float
    n_points: int

    @property
    def half_pass(self) -> float:
        return (self.band_width - self.transition_width) / 2

    @property
    def half_stop(self) -> float:
        return (self.band_width + self.transition_width) / 2

    @property
    def passbands(self):
        return [(c - self.half_pass, c + self.half_pass) for c in self.centers]

    @property
    def stopbands(self):
        edges = [-np.pi]
        for c in self.centers:
            edges += [c - self.half_stop, c + self.half_stop]
        edges.append(np.pi)
        return [(edges[i], edges[i + 1]) for i in range(0, len(edges), 2)]

    def passband_mask(self, w):
        w = np.asarray(w)
        return np.any([np.abs(w - c) <= self.half_pass for c in self.centers], axis=0)

    def stopband_mask(self, w):
        w = np.asarray(w)
        return np.all([np.abs(w - c) >= self.half_stop for c in self.centers], axis=0)

    def nearest_center_distance(self, w):
        w = np.asarray(w, dtype=float)
        return np.min(np.abs(w[..., None] - np.asarray(self.centers)), axis=-1)

    def remez_bands(self):
        """Band edges/desired values on [0, N/2] (cycles per pulse) for the positive half."""
        n = self.n_points
        to_cyc = n / (2 * np.pi)
        pos = sorted(c for c in self.centers if c >= 0)
        edges, desired, is_pass = [], [], []
        cur = 0.0
        for c in pos:
            if c == 0:
                edges += [0.0, self.half_pass * to_cyc]
                desired.append(1.0)
                is_pass.append(True)
            else:
                edges += [cur, (c - self.half_stop) * to_cyc]
                desired.append(0.0)
                is_pass.append(False)
                edges += [(c - self.half_pass) * to_cyc, (c + self.half_pass) * to_cyc]
                desired.append(1.0)
                is_pass.append(True)
            cur = (c + self.half_stop) * to_cyc
        edges += [cur, n / 2]
        desired.append(0.0)
        is_pass.append(False)
        return np.array(edges), np.array(desired), np.array(is_pass)


def band_edges(spec: DesignSpec) -> BandLayout:
    bw = 2 * np.pi * spec.tbw / spec.n_points
    d1, d2 = profile_ripples(spec)
    frac = 0.5 * dinf(d1, d2) / spec.tbw * spec.transition_scale
    if not 0 < frac < 1:
        raise LayoutOverflow(f"transition fraction {frac:.3f} leaves no passband")
    centers = tuple(float(v) for v in (np.arange(spec.nb) - (spec.nb - 1) / 2) * spec.band_gap * bw)
    layout = BandLayout(centers, bw, frac * bw, spec.n_points)
    if spec.band_gap * bw <= 2 * layout.half_stop and spec.nb > 1:
        raise LayoutOverflow("adjacent bands overlap once transitions are included")
    if max(centers) + layout.half_stop >= np.pi:
        raise LayoutOverflow(
            f"outermost band edge {max(centers) + layout.half_stop:.3f} rad exceeds Nyquist")
    return layout


def _lifted_profile_filter(spec: DesignSpec, layout: BandLayout, pass_weight: float = 1.0) -> np.ndarray:
    edges, desired, is_pass = layout.remez_bands()
    d1, d2 = profile_ripples(spec)
    weights = np.where(is_pass, pass_weight, d1 / d2)
    n = spec.n_points
    try:
        h = signal.remez(2 * n - 1, edges, desired, weight=weights, fs=n,
                         grid_density=16, maxiter=400)
    except ValueError as exc:
        raise DesignFailure(f"equiripple design did not converge: {exc}") from exc
    return h


def _factor(h: np.ndarray, n: int) -> np.ndarray:
    """Minimum-phase length-n factor of the zero-phase filter ``h`` (length 2n-1)."""
    m = max(65536, 64 * int(2 ** np.ceil(np.log2(h.size))))
    resp = np.fft.fft(h, m) * np.exp(2j * np.pi * np.arange(m) * (n - 1) / m)
    resp = resp.real
    lifted = resp - resp.min() * (1 + 1e-6)
    mag = np.sqrt(np.abs(lifted))
    b = np.fft.ifft(minimum_phase_from_magnitude(mag))[:n]
    return b.real


def design_min_phase_beta(spec: DesignSpec, check: bool = True) -> np.ndarray:
    """Real, minimum-phase multiband beta for ``spec``.

    Refocusing beta is scaled so max |B|^2 = 1 - passband_ripple/8, which
    keeps alpha's factorization well conditioned. Excitation beta is
    scaled so the passband mean of |B|^2 is 1/2.
    """
    layout = band_edges(spec)
    b = _scaled_min_phase_beta(spec, layout, 1.0)
    if not check:
        return b
    # The transition estimate is asymptotic in filter length; short or
    # low-TBW designs can miss the passband bound, so trade stopband margin
    # for passband accuracy before giving up.
    for pass_weight in PASS_WEIGHT_STEPS:
        try:
            check_beta_ripples(b, spec, layout)
            return b
        except RippleViolation as exc:
            last = exc
        b = _scaled_min_phase_beta(spec, layout, pass_weight)
    raise last


def _scaled_min_phase_beta(spec: DesignSpec, layout: BandLayout, pass_weight: float) -> np.ndarray:
    h = _lifted_profile_filter(spec, layout, pass_weight)
    b = _factor(h, spec.n_points)
    grid = check_grid_size(spec.n_points)
    w = circle_frequencies(grid)
    mag = np.abs(evaluate_on_circle(b, grid))
    if spec.pulse_role == "refocusing":
        return b * np.sqrt(1 - spec.passband_ripple / 8) / mag.max()
    b = b * np.sqrt(0.5 / np.mean(mag[layout.passband_mask(w)] ** 2))
    peak = np.abs(evaluate_on_circle(b, grid)).max()
    if peak > 1:
        b = b / peak * (1 - 1e-9)
    return b


def beta_bounds(spec: DesignSpec):
    """(target |B| in passband, allowed passband deviation, stopband |B| bound)."""
    if spec.pulse_role == "refocusing":
        return 1.0, spec.passband_ripple, np.sqrt(spec.stopband_ripple)
    return np.sin(np.pi / 4), np.sqrt(spec.passband_ripple / 2), spec.stopband_ripple / np.sqrt(2)


def beta_ripples(b, spec: DesignSpec, layout: BandLayout | None = None):
    layout = layout or band_edges(spec)
    grid = check_grid_size(len(b))
    w = circle_frequencies(grid)
    mag = np.abs(evaluate_on_circle(b, grid))
    target, _, _ = beta_bounds(spec)
    pass_dev = float(np.max(np.abs(mag[layout.passband_mask(w)] - target)))
    stop_level = float(np.max(mag[layout.stopband_mask(w)]))
    return pass_dev, stop_level


def check_beta_ripples(b, spec: DesignSpec, layout: BandLayout | None = None):
    pass_dev, stop_level = beta_ripples(b, spec, layout)
    _, pass_bound, stop_bound = beta_bounds(spec)
    if pass_dev > RIPPLE_SLACK * pass_bound or stop_level > RIPPLE_SLACK * stop_bound:
        raise RippleViolation(
            f"passband deviation {pass_dev:.4g} (bound {pass_bound:.4g}), "
            f"stopband level {stop_level:.4g} (bound {stop_bound:.4g})")
    return pass_dev, stop_level


def spin_echo_profile(a_ex, b_ex, b_ref, n_grid):
    """Analytic crushed spin-echo profile 2 * A_ex * conj(B_ex) * B_ref^2."""
    a = evaluate_on_circle(a_ex, n_grid)
    b = evaluate_on_circle(b_ex, n_grid)
    r = evaluate_on_circle(b_ref, n_grid)
    return 2 * a * np.conj(b) * r ** 2


def passband_phase_deviation(profile, layout: BandLayout, w, shift: float = 0.0) -> float:
    """Largest in-band departure from each band's mean phase.

    ``shift`` (samples) removes a linear phase exp(1j*w*shift), which an
    echo-time offset or a slice rephasing lobe absorbs.
    """
    profile = profile * np.exp(-1j * np.asarray(w) * shift)
    worst = 0.0
    for lo, hi in layout.passbands:
        sel = (w >= lo) & (w <= hi)
        z = profile[sel]
        ref = np.angle(np.sum(z))
        worst = max(worst, float(np.max(np.abs(np.angle(z * np.exp(-1j * ref))))))
    return worst


def design_matched_excitation(b_ref, spec: DesignSpec, iterations: int = 3,
                              transition_scale: float = 2.0, n_points: int | None = None,
                              check: bool = True) -> RfPulse:
    """Matched excitation; with ``n_points=None`` the shortest length that passes.

    Lengths tried are 1, 1.5, 2 and 3 times that of ``b_ref``.
    """
    if n_points is not None:
        return _matched_excitation(b_ref, spec, iterations, transition_scale, int(n_points), check)
    n_ref = len(b_ref)
    last = None
    for factor in (1.0, 1.5, 2.0, 3.0):
        try:
            return _matched_excitation(b_ref, spec, iterations, transition_scale,
                                       int(round(factor * n_ref)), True)
        except (DesignFailure, RippleViolation) as exc:
            last = exc
    if check:
        raise DesignFailure(f"no excitation length up to 3x meets the bounds: {last}")
    return _matched_excitation(b_ref, spec, iterations, transition_scale, 3 * n_ref, False)


def _matched_excitation(b_ref, spec: DesignSpec, iterations: int, transition_scale: float,
                        n_points: int, check: bool) -> RfPulse:
    """90-degree excitation whose beta phase tracks angle(B_ref^2) in the passbands.

    Complex weighted least squares for a real-coefficient beta against
    sin(45 deg) * exp(1j * (2*angle(B_ref) + angle(A_ex) - w*shift)) in
    passbands and zero in stopbands. A_ex is the minimum-phase alpha of the
    current beta, so the target is refined a few times. The linear term
    ``shift`` is scanned for the best fit; it is a pure echo-time offset and
    is stored as ``meta["rephase_samples"]``.

    The target phase is not minimum phase, so the transitions are widened by
    ``transition_scale`` relative to the minimum-phase estimate.

    ``n_points`` sets the excitation length at the same dwell, so the band layout in radians per sample is shared.
    Flipped refocusing pulses delay their bands by different amounts and
    the excitation must span twice that spread, which can need more
    samples than the refocusing pulse.
    """
    ex_spec = spec.with_(pulse_role="excitation",
                         transition_scale=spec.transition_scale * transition_scale)
    layout = band_edges(ex_spec)
    n = n_points
    grid = max(4096, 8 * n)
    w = circle_frequencies(grid)
    pmask = layout.passband_mask(w)
    smask = layout.stopband_mask(w)
    _, pass_bound, stop_bound = beta_bounds(ex_spec)
    # transitions get a linear taper at low weight so they cannot blow up
    dist = layout.nearest_center_distance(w)
    taper = np.clip((layout.half_stop - dist) / (layout.half_stop - layout.half_pass), 0, 1)
    weight = np.where(pmask, 1.0, np.where(smask, pass_bound / stop_bound, TRANSITION_WEIGHT))
    target_mag = np.sin(np.pi / 4) * taper
    basis = np.exp(-1j * np.outer(w, np.arange(n))) * weight[:, None]
    q, r = np.linalg.qr(np.vstack([basis.real, basis.imag]))
    ref_phase = np.unwrap(2 * np.angle(evaluate_on_circle(b_ref, grid)))

    def fit(phase):
        rhs = target_mag * np.exp(1j * phase) * weight
        rhs = np.concatenate([rhs.real, rhs.imag])
        coef = q.T @ rhs
        return np.linalg.solve(r, coef), float(rhs @ rhs - coef @ coef)

    # Centre the spread of per-band delays in the excitation window, then
    # refine the echo offset locally.
    delays = []
    for lo, hi in layout.passbands:
        sel = (w >= lo) & (w <= hi)
        delays.append(-np.polyfit(w[sel], ref_phase[sel], 1)[0])
    centre = np.round((n - 1) / 2 - (min(delays) + max(delays)) / 2)
    shifts = centre + np.arange(-n // 8, n // 8 + 1, max(1, n // 128))
    errs = [fit(ref_phase - w * d)[1] for d in shifts]
    shift = float(shifts[int(np.argmin(errs))])
    alpha_phase = np.zeros(grid)
    for _ in range(iterations):
        b_ex, _ = fit(ref_phase + alpha_phase - w * shift)
        peak = np.abs(np.fft.fft(b_ex, alpha_grid_size(n))).max()
        if peak > CLIP_LEVEL:
            b_ex = b_ex * (CLIP_LEVEL / peak)
        a_ex = min_phase_alpha(b_ex)
        alpha_phase = np.angle(evaluate_on_circle(a_ex, grid))
    profile = spin_echo_profile(a_ex, b_ex, b_ref, grid)
    dev = passband_phase_deviation(profile, layout, w, shift)
    if check and dev > PHASE_FLATNESS_TOL:
        raise DesignFailure(f"spin-echo passband phase deviates by {dev:.3f} rad")
    if check:
        check_beta_ripples(b_ex, ex_spec, layout)
    pulse = beta_to_pulse(b_ex, a_ex)
    pulse.meta.update(b_coeffs=b_ex, a_coeffs=a_ex, phase_deviation=dev,
                      rephase_samples=shift, layout=layout)
    return pulse
