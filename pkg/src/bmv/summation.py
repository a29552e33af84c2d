"""Compensated accumulation for contour sums with heavy cancellation."""
import math

import numpy as np


def neumaier_sum(values) -> complex:
    """Kahan-Babuska (Neumaier) compensated sum of a 1-d complex array."""
    s_re = c_re = s_im = c_im = 0.0
    for v in np.asarray(values, dtype=complex).ravel():
        x = v.real
        t = s_re + x
        c_re += (s_re - t) + x if abs(s_re) >= abs(x) else (x - t) + s_re
        s_re = t
        y = v.imag
        t = s_im + y
        c_im += (s_im - t) + y if abs(s_im) >= abs(y) else (y - t) + s_im
        s_im = t
    return complex(s_re + c_re, s_im + c_im)


def exact_sum(values) -> complex:
    """Correctly rounded sum of real and imaginary parts (``math.fsum``)."""
    v = np.asarray(values, dtype=complex).ravel()
    return complex(math.fsum(v.real.tolist()), math.fsum(v.imag.tolist()))
