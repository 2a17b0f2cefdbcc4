import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.sparse.csgraph import connected_components
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from ep_spectra.errors import DimensionMismatch, NonConvergence, NormalizationSingular

# 로깅 설정
logger = logging.getLogger(__name__)

MAX_DIM = 1024  # 데스크 규모 스펙트럼만 다룬다
DEGENERACY_TOL = 1e-12  # 이보다 가까운 고유값은 교차로 취급
SINGULAR_TOL = 1e-14  # 단위 벡터의 (φ)² 가 이보다 작으면 정규화 불가
WIDTH_TOL = 1e-10  # 개방계 폭의 허용 음수 오차


@dataclass(frozen=True, eq=False)
class ComplexMatrix:
    """복소 정방 행렬. symmetric=True 이면 entries[i][j] == entries[j][i] 를 정확히 요구한다 (에르미트가 아님)."""

    entries: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        entries = np.array(self.entries, dtype=complex)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise DimensionMismatch(f"정방 행렬이 아닙니다: shape={entries.shape}")
        if not 1 <= entries.shape[0] <= MAX_DIM:
            raise DimensionMismatch(
                f"행렬 차원은 1 이상 {MAX_DIM} 이하여야 합니다: dim={entries.shape[0]}"
            )
        if not np.all(np.isfinite(entries)):
            raise ValueError("행렬에 유한하지 않은 원소가 있습니다.")
        if self.symmetric and not np.array_equal(entries, entries.T):
            raise ValueError("symmetric 으로 표시된 행렬이 정확히 대칭이 아닙니다.")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def is_symmetric(self) -> bool:
        return self.symmetric or bool(np.array_equal(self.entries, self.entries.T))

    @staticmethod
    def from_rows(rows: Sequence[Sequence[complex]], symmetric: bool = False) -> "ComplexMatrix":
        return ComplexMatrix(np.asarray(rows, dtype=complex), symmetric=symmetric)


@dataclass(frozen=True)
class ComplexEigenvalue:
    """z_λ = E_λ − (i/2)Γ_λ"""

    value: complex

    def energy(self) -> float:
        return float(self.value.real)

    def width(self) -> float:
        return float(-2.0 * self.value.imag)


@dataclass(eq=False)
class Eigensystem:
    """
    고유값과 쌍을 이루는 오른쪽/왼쪽 고유벡터.

    right_vectors[λ] 가 φ_λ, left_vectors[λ] 가 ψ_λ 이다.
    대칭 행렬이면 ψ_λ = conj(φ_λ) 이다.
    """

    eigenvalues: List[ComplexEigenvalue]
    right_vectors: np.ndarray
    left_vectors: np.ndarray
    residual_norm: float = 0.0
    symmetric: bool = True
    singular: List[bool] = field(default_factory=list)  # 정규화 실패 표시

    def __post_init__(self):
        if not self.singular:
            self.singular = [False] * len(self.eigenvalues)

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    def values(self) -> np.ndarray:
        return np.array([ev.value for ev in self.eigenvalues], dtype=complex)

    def widths(self) -> np.ndarray:
        return -2.0 * self.values().imag

    def reordered(self, order: Sequence[int]) -> "Eigensystem":
        order = list(order)
        return Eigensystem(
            eigenvalues=[self.eigenvalues[i] for i in order],
            right_vectors=self.right_vectors[order].copy(),
            left_vectors=self.left_vectors[order].copy(),
            residual_norm=self.residual_norm,
            symmetric=self.symmetric,
            singular=[self.singular[i] for i in order],
        )

    def raise_if_singular(self) -> None:
        flagged = [i for i, s in enumerate(self.singular) if s]
        if flagged:
            raise NormalizationSingular(
                f"정규화할 수 없는 고유쌍이 있습니다 (EP 근처): {flagged}", flagged
            )


def eigendecompose(H: ComplexMatrix) -> Eigensystem:
    """
    작은 복소 행렬의 전체 고유분해를 수행하고 쌍직교 정규화한다.

    LAPACK geev (Hessenberg 축약 + shifted QR) 를 사용한다.
    내적 규약:
        ⟨ψ|φ⟩ = Σ conj(ψ_i) φ_i. ψ = φ* 이면 이는 conj 없는 쌍선형형 Σ φ_i φ_i 가 된다.
        ⟨φ|φ⟩ = Σ |φ_i|² 는 에르미트 노름이다.

    Args:
        H (ComplexMatrix): 분해할 행렬

    Returns:
        Eigensystem: (실수부, 허수부) 순으로 정렬된 고유쌍
    """
    a = H.entries
    symmetric = H.is_symmetric()
    data = a.real if not np.any(a.imag) else a
    try:
        if symmetric:
            w, vr = scipy.linalg.eig(data, right=True, check_finite=False)
            vl = None
        else:
            w, vl, vr = scipy.linalg.eig(data, left=True, right=True, check_finite=False)
    except np.linalg.LinAlgError as e:
        raise NonConvergence(f"고유값 반복이 수렴하지 않았습니다: dim={H.dim}") from e

    w = np.asarray(w, dtype=complex)
    order = np.lexsort((w.imag, w.real))
    w = w[order]
    right = np.asarray(vr, dtype=complex)[:, order].T.copy()
    right /= np.linalg.norm(right, axis=1, keepdims=True)
    if symmetric:
        left = right.conj()
    else:
        left = np.asarray(vl, dtype=complex)[:, order].T.copy()
        left /= np.linalg.norm(left, axis=1, keepdims=True)

    # max_λ ‖Hφ − zφ‖ / ‖H‖ (단위 벡터 기준)
    residuals = np.linalg.norm(right @ a.T - w[:, None] * right, axis=1)
    scale = np.linalg.norm(a)
    residual_norm = float(residuals.max() / scale) if scale > 0 else float(residuals.max())

    es = Eigensystem(
        eigenvalues=[ComplexEigenvalue(complex(z)) for z in w],
        right_vectors=right,
        left_vectors=left,
        residual_norm=residual_norm,
        symmetric=symmetric,
    )
    return biorthonormalize(es)


def _perturbed(H: ComplexMatrix, attempt: int) -> ComplexMatrix:
    rng = np.random.default_rng(attempt)
    scale = 1e-14 * attempt * max(float(np.abs(H.entries).max()), 1.0)
    noise = rng.standard_normal(H.entries.shape)
    if np.any(H.entries.imag):
        noise = noise + 1j * rng.standard_normal(H.entries.shape)
    if H.is_symmetric():
        noise = (noise + noise.T) / 2
    return ComplexMatrix(H.entries + scale * noise, symmetric=H.is_symmetric())


def eigendecompose_with_retry(H: ComplexMatrix, attempts: int = 3) -> Eigensystem:
    """
    NonConvergence 가 나면 입력을 아주 조금 교란해서 다시 분해한다.

    Args:
        H (ComplexMatrix): 분해할 행렬
        attempts (int): 최대 시도 횟수

    Returns:
        Eigensystem: 분해 결과
    """
    for attempt in Retrying(
        stop=stop_after_attempt(attempts),
        retry=retry_if_exception_type(NonConvergence),
        reraise=True,
    ):
        with attempt:
            n = attempt.retry_state.attempt_number
            if n > 1:
                logger.debug(f"eigendecompose retry {n}/{attempts} with perturbed input")
            return eigendecompose(H if n == 1 else _perturbed(H, n - 1))


def _degenerate_clusters(values: np.ndarray) -> List[List[int]]:
    if len(values) == 1:
        return [[0]]
    close = np.abs(np.subtract.outer(values, values)) <= DEGENERACY_TOL
    n_clusters, labels = connected_components(close, directed=False)
    return [list(np.flatnonzero(labels == c)) for c in range(n_clusters)]


def _gauge(v: np.ndarray) -> np.ndarray:
    """단위 노름, 절댓값이 가장 큰 성분을 실수 양수로."""
    v = v / np.linalg.norm(v)
    k = int(np.argmax(np.abs(v)))
    return v * np.exp(-1j * np.angle(v[k]))


def _fix_sign(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v)))
    if v[k].real < 0 or (v[k].real == 0 and v[k].imag < 0):
        return -v
    return v


def _normalize_symmetric(right: np.ndarray, cluster: List[int], singular: List[bool]) -> None:
    # 쌍선형 Gram-Schmidt. 비축퇴 고유벡터는 이미 φ_λ·φ_μ = 0 이다.
    done: List[int] = []
    for j in cluster:
        v = _gauge(right[j])
        for i in done:
            v = v - (right[i] @ v) * right[i]
        norm2 = np.vdot(v, v).real
        self_overlap = v @ v
        if norm2 == 0 or abs(self_overlap) / norm2 < SINGULAR_TOL:
            singular[j] = True
            right[j] = _gauge(v) if norm2 > 0 else _gauge(right[j])
            continue
        right[j] = _fix_sign(v / np.sqrt(self_overlap))
        done.append(j)


def _normalize_general(
    right: np.ndarray, left: np.ndarray, cluster: List[int], singular: List[bool]
) -> None:
    if len(cluster) > 1:
        gram = left[cluster].conj() @ right[cluster].T  # G[a,b] = ⟨ψ_a|φ_b⟩
        if np.linalg.cond(gram) > 1.0 / DEGENERACY_TOL:
            for j in cluster:
                singular[j] = True
            return
        left[cluster] = np.linalg.inv(gram).conj() @ left[cluster]
    for j in cluster:
        phi = _gauge(right[j])
        psi = left[j] / np.linalg.norm(left[j])
        overlap = np.vdot(psi, phi)
        if abs(overlap) < SINGULAR_TOL:
            singular[j] = True
            right[j], left[j] = phi, psi
            continue
        # ‖ψ‖ = ‖φ‖ 로 맞추면 r = 1/A 가 일반 행렬에서도 성립한다
        right[j] = phi / np.sqrt(abs(overlap))
        left[j] = psi * np.conj(np.sqrt(abs(overlap)) / overlap)


def biorthonormalize(es: Eigensystem, strict: bool = False) -> Eigensystem:
    """
    ⟨ψ_λ|φ_μ⟩ = δ_λμ 가 되도록 고유벡터를 다시 스케일한다.

    남는 게이지는 가장 큰 성분의 위상으로 고정한다. 대칭 행렬에서는 φ·φ = 1 때문에
    부호만 자유로우므로 가장 큰 성분이 오른쪽 반평면에 오도록 부호를 정한다.

    Args:
        es (Eigensystem): 오른쪽(및 왼쪽) 고유벡터가 있는 고유계
        strict (bool): True 이면 정규화 실패 시 NormalizationSingular 를 던진다

    Returns:
        Eigensystem: 정규화된 새 고유계. 실패한 쌍은 singular 로 표시된다.
    """
    right = np.array(es.right_vectors, dtype=complex)
    left = np.array(es.left_vectors, dtype=complex)
    singular = [False] * es.dim
    for cluster in _degenerate_clusters(es.values()):
        if es.symmetric:
            _normalize_symmetric(right, cluster, singular)
        else:
            _normalize_general(right, left, cluster, singular)
    if es.symmetric:
        left = right.conj()

    result = Eigensystem(
        eigenvalues=list(es.eigenvalues),
        right_vectors=right,
        left_vectors=left,
        residual_norm=es.residual_norm,
        symmetric=es.symmetric,
        singular=singular,
    )
    if any(singular):
        logger.warning(
            f"정규화 불가 고유쌍 {[i for i, s in enumerate(singular) if s]} "
            "(exceptional point 근처)"
        )
        if strict:
            result.raise_if_singular()
    return result


def mixing_coefficients(es: Eigensystem) -> Tuple[np.ndarray, np.ndarray]:
    """
    A_λ = ⟨φ_λ|φ_λ⟩ 와 B[λ][μ] = |⟨φ_λ|φ_μ⟩| (에르미트 내적).

    정규화에 실패한 고유쌍은 A = ∞, 해당 행/열의 B = ∞ 로 보고한다.
    """
    phi = es.right_vectors
    gram = phi.conj() @ phi.T
    a = gram.diagonal().real.copy()
    b = np.abs(gram)
    flagged = np.array(es.singular, dtype=bool)
    a[flagged] = np.inf
    b[flagged, :] = np.inf
    b[:, flagged] = np.inf
    np.fill_diagonal(b, 0.0)
    return a, b


def phase_rigidity(es: Eigensystem) -> np.ndarray:
    """
    r_λ = |⟨ψ_λ|φ_λ⟩| / ⟨φ_λ|φ_λ⟩ = 1/A_λ.

    에르미트 극한에서 1, EP 에서 0. 정규화 실패한 쌍은 0.
    """
    numerator = np.abs(np.sum(es.left_vectors.conj() * es.right_vectors, axis=1))
    denominator = np.sum(np.abs(es.right_vectors) ** 2, axis=1)
    r = np.clip(numerator / denominator, 0.0, 1.0)
    r[np.array(es.singular, dtype=bool)] = 0.0
    return r
