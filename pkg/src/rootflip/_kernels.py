"""Compiled inner loops for the hard-pulse SLR recursions."""

import numpy as np
from numba import njit


@njit(cache=True)
def forward_recursion(samples):
    n = samples.shape[0]
    a = np.zeros(n, np.complex128)
    b = np.zeros(n, np.complex128)
    a[0] = 1.0
    for j in range(n):
        phi = abs(samples[j])
        c = np.cos(phi / 2)
        if phi > 0:
            s = 1j * (samples[j] / phi) * np.sin(phi / 2)
        else:
            s = 0j
        sc = s.conjugate()
        # descending k so b[k-1] is still the pre-step value
        for k in range(j, -1, -1):
            bprev = b[k - 1] if k > 0 else 0j
            ak = a[k]
            a[k] = c * ak - sc * bprev
            b[k] = s * ak + c * bprev
    return a, b


@njit(cache=True)
def inverse_recursion(a_in, b_in):
    n = a_in.shape[0]
    a = a_in.copy()
    b = b_in.copy()
    rf = np.zeros(n, np.complex128)
    for j in range(n - 1, -1, -1):
        ratio = b[0] / a[0]
        m = abs(ratio)
        c = 1.0 / np.sqrt(1.0 + m * m)
        s = ratio * c
        if m > 0:
            rf[j] = 2.0 * np.arctan(m) * (-1j * ratio / m)
        sc = s.conjugate()
        for k in range(j + 1):
            ak = a[k]
            bk = b[k]
            a[k] = c * ak + sc * bk
            if k > 0:
                b[k - 1] = c * bk - s * ak
    return rf


@njit(cache=True)
def inverse_recursion_real(a_in, b_in):
    """Inverse recursion for real ``a`` and purely imaginary ``b = 1j * b_in``.

    Both polynomials stay in that form at every step, so the pulse is real
    and the update is a plain 2x2 rotation.
    """
    n = a_in.shape[0]
    a = a_in.copy()
    b = b_in.copy()
    rf = np.empty(n)
    for j in range(n - 1, -1, -1):
        r = b[0] / a[0]
        c = 1.0 / np.sqrt(1.0 + r * r)
        s = r * c
        rf[j] = 2.0 * np.arctan(r)
        for k in range(j + 1):
            ak = a[k]
            bk = b[k]
            a[k] = c * ak + s * bk
            if k > 0:
                b[k - 1] = c * bk - s * ak
    return rf
