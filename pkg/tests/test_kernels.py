import os
import subprocess
import sys

import numpy as np
import pytest

from spam_forge import kernels
from spam_forge.errors import ArgumentError

compiled = pytest.mark.skipif(kernels.BACKEND != "compiled", reason="extension not built")


def backend_in_subprocess(env_value):
    env = dict(os.environ, SPAM_FORGE_PURE=env_value)
    out = subprocess.run([sys.executable, "-c", "from spam_forge import kernels; print(kernels.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    return out.stdout.strip()


def test_pure_env_forces_fallback():
    assert backend_in_subprocess("1") == "python"


@compiled
def test_compiled_selected_by_default():
    assert backend_in_subprocess("0") == "compiled"


def test_unknown_backend():
    with pytest.raises(ArgumentError):
        kernels.backend("gpu")


@compiled
def test_bfs_depth_limit():
    # path 0-1-2-3-4 as CSR
    indptr = np.array([0, 1, 3, 5, 7, 8], dtype=np.int64)
    indices = np.array([1, 0, 2, 1, 3, 2, 4, 3], dtype=np.int64)
    for name in ("python", "compiled"):
        k = kernels.backend(name)
        assert k.bfs_distances(indptr, indices, 0).tolist() == [0, 1, 2, 3, 4]
        assert k.bfs_distances(indptr, indices, 2, 1).tolist() == [-1, 1, 0, 1, -1]


@compiled
def test_accept_borderline_agrees():
    # decisions exactly at the threshold must agree between numpy and C arithmetic
    from spam_forge._fallback import accept_power
    from spam_forge.model import profile_kappa
    kappa = profile_kappa(1.5)
    import math
    x = np.array([0.7, 1.3, 2.0])
    p = np.array([min(kappa * math.pow(v, -1.5), 1.0) for v in x])
    ok = accept_power(p, x, 1.0, np.zeros(3), 0.5, 1.0, 1.5, kappa, 1)
    assert np.all(ok)
    ok = accept_power(np.nextafter(p, 2), x, 1.0, np.zeros(3), 0.5, 1.0, 1.5, kappa, 1)
    assert not np.any(ok)
