import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from richards_lab import _kernels

pytestmark = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")

heads = arrays(np.float64, st.integers(1, 64), elements=st.floats(-1e3, 5.0))


@given(heads, st.floats(0.05, 5.0), st.floats(1.1, 4.0))
def test_van_genuchten_flavours_agree(psi, alpha, n):
    m = 1.0 - 1.0 / n
    a = _kernels.van_genuchten_numpy(psi, alpha, n, m, 0.05, 0.4, 0.3)
    b = _kernels.van_genuchten_numba(psi, alpha, n, m, 0.05, 0.4, 0.3)
    for x, y in zip(a, b):
        assert np.allclose(x, y, rtol=1e-12, atol=1e-300)


@given(st.integers(1, 50), st.integers(0, 2**31 - 1))
def test_scatter_flavours_agree(size, seed):
    rng = np.random.default_rng(seed)
    index = rng.integers(0, size, 200)
    values = rng.standard_normal(200)
    assert np.allclose(_kernels.scatter_add_numpy(index, values, size),
                       _kernels.scatter_add_numba(index, values, size), rtol=1e-13, atol=1e-13)


@given(st.integers(3, 60), st.integers(0, 2**31 - 1))
def test_sweep_flavours_agree(n, seed):
    rng = np.random.default_rng(seed)
    ext = rng.standard_normal(n + 2)
    kface = rng.uniform(0, 1, n + 1)
    theta, prev, src = rng.uniform(0.1, 0.4, (3, n))
    a = _kernels.explicit_flow_sweep_numpy(ext, kface, theta, prev, src, 1e-3, 0.05, 0.5)
    b = _kernels.explicit_flow_sweep_numba(ext, kface, theta, prev, src, 1e-3, 0.05, 0.5)
    assert np.allclose(a, b, rtol=1e-14, atol=1e-15)
    c = rng.uniform(1, 2, n)
    q = rng.standard_normal(n - 1)
    a = _kernels.explicit_transport_sweep_numpy(c, q, theta, prev, src, 1.0, 1e-4, 0.05, 100.0)
    b = _kernels.explicit_transport_sweep_numba(c, q, theta, prev, src, 1.0, 1e-4, 0.05, 100.0)
    assert np.allclose(a, b, rtol=1e-14, atol=1e-15)


def test_backend_flag_is_consistent():
    assert _kernels.BACKEND in ("numba", "numpy")
    expected = _kernels.van_genuchten_numba if _kernels.USE_NUMBA else _kernels.van_genuchten_numpy
    assert _kernels.van_genuchten is expected
