"""Shared oracles and helpers.

The reference implementations here are deliberately independent of the
library's code paths: convolution is direct per-output-element summation,
gradients come from central finite differences, resampling evaluates the
sampling formula pointwise.
"""

import numpy as np
import pytest

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def conv_reference(w, b, x, stride, pad):
    """Direct-summation 2D cross-correlation, one output element at a time."""
    n, cin, h, wd = x.shape
    co, _, kh, kw = w.shape
    sh, sw = stride
    ph, pw = pad
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (wd + 2 * pw - kw) // sw + 1
    xp = np.pad(x.astype(np.float64), ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    y = np.zeros((n, co, oh, ow))
    for ni in range(n):
        for o in range(co):
            for oy in range(oh):
                for ox in range(ow):
                    patch = xp[ni, :, oy * sh:oy * sh + kh, ox * sw:ox * sw + kw]
                    y[ni, o, oy, ox] = np.sum(patch * w[o]) + b[o]
    return y


def central_diff(f, x, eps=1e-3):
    """Central finite-difference gradient of scalar f() w.r.t. array x,
    perturbing x in place (x must be float64)."""
    assert x.dtype == np.float64
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        fp = f()
        flat[i] = old - eps
        fm = f()
        flat[i] = old
        gf[i] = (fp - fm) / (2 * eps)
    return g


def max_rel_err(analytic, numeric, floor=1e-4):
    """Elementwise |a - n| / max(|a| + |n|, floor), maximized.

    The floor turns the comparison absolute for gradients smaller than it,
    where finite differences carry no usable relative information.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.abs(a) + np.abs(n), floor)
    return float(np.max(np.abs(a - n) / denom))


def norm_rel_err(got, ref):
    """Max-norm relative error: ||got - ref||_inf / ||ref||_inf.

    The right yardstick for float32 results checked against a float64
    reference, where per-element ratios are meaningless under cancellation.
    """
    got = np.asarray(got, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    scale = max(float(np.max(np.abs(ref))), 1e-30)
    return float(np.max(np.abs(got - ref))) / scale


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
