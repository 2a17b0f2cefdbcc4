import json

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from ep_spectra.spectral_core import ComplexMatrix
from ep_spectra.trajectory import ParamFamily
from ep_spectra.two_level import TwoLevelSystem


def charpoly_roots(a: np.ndarray) -> np.ndarray:
    # Faddeev–LeVerrier 로 특성다항식을 만들고 동반행렬(np.roots) 로 근을 구한다
    n = a.shape[0]
    coeffs = [1.0 + 0j]
    m = np.zeros_like(a, dtype=complex)
    for k in range(1, n + 1):
        m = a @ m + coeffs[-1] * np.eye(n)
        coeffs.append(-np.trace(a @ m) / k)
    return np.roots(coeffs)


def multiset_distance(a, b) -> float:
    cost = np.abs(np.subtract.outer(np.asarray(a), np.asarray(b)))
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


@pytest.fixture
def rng():
    return np.random.default_rng(20241018)


@pytest.fixture
def spectrum_oracle():
    return charpoly_roots


@pytest.fixture
def same_multiset():
    return multiset_distance


@pytest.fixture
def random_symmetric(rng):
    def make(n: int) -> ComplexMatrix:
        a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        return ComplexMatrix((a + a.T) / 2, symmetric=True)

    return make


@pytest.fixture
def ep_family():
    """ε₁ = X − iY, ε₂ = 0, ω = 0.5. (X, Y) = (0, 1) 에 EP 가 있다."""
    return ParamFamily(
        lambda p: TwoLevelSystem(complex(p[0], -p[1]), 0j, 0.5 + 0j).matrix(),
        dim=2,
        description="eps1 = X - iY",
        n_params=2,
    )


@pytest.fixture
def write_instance(tmp_path):
    def write(document, name: str = "instance.json") -> str:
        path = tmp_path / name
        if isinstance(document, str):
            path.write_text(document, encoding="utf-8")
        else:
            path.write_text(json.dumps(document), encoding="utf-8")
        return str(path)

    return write
