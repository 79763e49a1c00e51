import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyadlab import _pykernels, kernels

try:
    from dyadlab import _ckernels
except ImportError:
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")


def _avg_pyramid(cells, n, L):
    sums = _pykernels.pyramid_sums(cells, n, L)
    b = 1 << n
    sizes = np.repeat([b ** (L - k) for k in range(L + 1)], [b ** k for k in range(L + 1)])
    return sums / sizes


def _brute_sums(cells, n, L):
    b = 1 << n
    out = []
    for k in range(L + 1):
        block = b ** (L - k)
        out.extend(cells[m * block:(m + 1) * block].sum() for m in range(b ** k))
    return np.array(out)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([(1, 0), (1, 1), (1, 7), (2, 3), (3, 2)]), st.integers(0, 2 ** 32 - 1))
def test_python_kernels_against_loops(nl, seed):
    n, L = nl
    b = 1 << n
    rng = np.random.default_rng(seed)
    cells = rng.lognormal(size=b ** L)
    np.testing.assert_allclose(_pykernels.pyramid_sums(cells, n, L), _brute_sums(cells, n, L), rtol=1e-13)
    coef = rng.random(len(_brute_sums(cells, n, L)))
    want = np.zeros(b ** L)
    for c in range(b ** L):
        for k in range(L + 1):
            want[c] += coef[(b ** k - 1) // (b - 1) + (c >> (n * (L - k)))]
    np.testing.assert_allclose(_pykernels.broadcast_sum(coef, n, L), want, rtol=1e-13)
    avg = _avg_pyramid(cells, n, L)
    sm = _pykernels.suffix_max_integrals(avg, n, L)
    for k in range(L + 1):
        for m in range(b ** k):
            span = b ** (L - k)
            run = np.zeros(span)
            for j in range(k, L + 1):
                blk = b ** (L - j)
                anc = avg[(b ** j - 1) // (b - 1) + (m * span + np.arange(span)) // blk]
                run = np.maximum(run, anc)
            assert sm[(b ** k - 1) // (b - 1) + m] == pytest.approx(run.sum(), rel=1e-13)
            np.testing.assert_array_equal(_pykernels.chain_max(avg, n, L, k, m), run)


@needs_ext
@settings(max_examples=30, deadline=None)
@given(st.sampled_from([(1, 0), (1, 1), (1, 9), (2, 4), (3, 3)]), st.integers(0, 2 ** 32 - 1))
def test_backends_agree(nl, seed):
    n, L = nl
    rng = np.random.default_rng(seed)
    cells = rng.lognormal(size=(1 << n) ** L)
    nodes = rng.random(_pykernels.pyramid_sums(cells, n, L).size)
    avg = _avg_pyramid(cells, n, L)
    np.testing.assert_allclose(_ckernels.pyramid_sums(cells, n, L), _pykernels.pyramid_sums(cells, n, L), rtol=1e-13)
    np.testing.assert_allclose(_ckernels.broadcast_sum(nodes, n, L), _pykernels.broadcast_sum(nodes, n, L), rtol=1e-13)
    np.testing.assert_allclose(_ckernels.suffix_max_integrals(avg, n, L),
                               _pykernels.suffix_max_integrals(avg, n, L), rtol=1e-12)
    k = int(rng.integers(L + 1))
    m = int(rng.integers((1 << n) ** k))
    np.testing.assert_array_equal(_ckernels.chain_max(avg, n, L, k, m), _pykernels.chain_max(avg, n, L, k, m))


def test_backend_flag():
    assert kernels.BACKEND in ("cython", "python")
    forced = os.environ.get("DYADLAB_PURE") == "1"
    assert kernels.BACKEND == ("cython" if _ckernels is not None and not forced else "python")


def test_pure_python_fallback_runs_end_to_end():
    code = ("import dyadlab, numpy as np\n"
            "from dyadlab import *\n"
            "assert dyadlab.BACKEND == 'python'\n"
            "s = GridSpec(1, 1); one = Weight.constant(s)\n"
            "print(repr(exact_norm_22(chain(s, 1), one, one)), ainfty_constant(Weight(s, [1.0, 3.0])).value)\n")
    env = dict(os.environ, DYADLAB_PURE="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True).stdout
    val, ainf = out.split()
    assert abs(float(val) - (1 + 2 ** 0.5 / 2) ** 0.5) < 1e-9 and float(ainf) == 1.25
