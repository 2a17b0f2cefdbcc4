import cmath
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ep_spectra.errors import AtExceptionalPoint, ZeroCoupling
from ep_spectra.spectral_core import (
    ComplexEigenvalue,
    ComplexMatrix,
    Eigensystem,
    biorthonormalize,
)

# 로깅 설정
logger = logging.getLogger(__name__)

EP_TOL = 1e-12  # distance_to_ep 가 이 이하이면 EP 로 본다


@dataclass(frozen=True)
class TwoLevelSystem:
    """2x2 대칭 비에르미트 해밀토니안 [[ε₁, ω], [ω, ε₂]]"""

    eps1: complex  # ε₁, 상태 1 의 에너지와 폭
    eps2: complex  # ε₂
    omega: complex  # ω, 두 상태 사이의 결합

    @staticmethod
    def open_system(eps1: complex, eps2: complex, omega: complex) -> "TwoLevelSystem":
        """
        개방 양자계용 생성자. 두 상태 모두 붕괴만 해야 한다 (Im ε ≤ 0).

        Raises:
            ValueError: Im(ε₁) 또는 Im(ε₂) 가 양수일 때
        """
        if complex(eps1).imag > 0 or complex(eps2).imag > 0:
            raise ValueError(
                f"개방계에서는 Im(ε) ≤ 0 이어야 합니다: eps1={eps1}, eps2={eps2}"
            )
        return TwoLevelSystem(complex(eps1), complex(eps2), complex(omega))

    def matrix(self) -> ComplexMatrix:
        return ComplexMatrix(
            np.array([[self.eps1, self.omega], [self.omega, self.eps2]], dtype=complex),
            symmetric=True,
        )

    def discriminant(self) -> complex:
        return complex((self.eps1 - self.eps2) ** 2 + 4 * self.omega**2)


@dataclass(frozen=True)
class CrossingDiagnostic:
    """교차 조건 (ε₁−ε₂)/(2ω) = ±i 에 대한 진단값"""

    ratio: complex  # (ε₁−ε₂)/(2ω)
    distance_to_ep: float  # min |ratio − i|, |ratio + i|
    discriminant: complex  # (ε₁−ε₂)² + 4ω²
    crossing_forbidden: bool  # 파라미터가 모두 실수이면 교차 불가능

    def at_ep(self) -> bool:
        return self.distance_to_ep <= EP_TOL


def eigenvalues2(s: TwoLevelSystem) -> Tuple[complex, complex]:
    """
    E_± = (ε₁+ε₂)/2 ± (1/2)√((ε₁−ε₂)² + 4ω²).

    주 분지 제곱근을 쓴다. E_+/E_− 는 분지 이름일 뿐이며 스윕에서의 연속성은
    trajectory 모듈의 매칭이 맡는다.
    """
    mean = (s.eps1 + s.eps2) / 2
    half_root = cmath.sqrt(s.discriminant()) / 2
    return complex(mean + half_root), complex(mean - half_root)


def crossing_diagnostic(s: TwoLevelSystem) -> CrossingDiagnostic:
    """
    교차 조건 진단.

    Raises:
        ZeroCoupling: ω = 0 이라 비율이 정의되지 않을 때 (판별식은 예외에 담김)
    """
    discriminant = s.discriminant()
    if s.omega == 0:
        raise ZeroCoupling("ω = 0 이면 (ε₁−ε₂)/(2ω) 가 정의되지 않습니다.", discriminant)
    ratio = complex((s.eps1 - s.eps2) / (2 * s.omega))
    distance = min(abs(ratio - 1j), abs(ratio + 1j))
    forbidden = all(complex(x).imag == 0 for x in (s.eps1, s.eps2, s.omega))
    return CrossingDiagnostic(
        ratio=ratio,
        distance_to_ep=float(distance),
        discriminant=discriminant,
        crossing_forbidden=forbidden,
    )


def _distance_to_ep(s: TwoLevelSystem) -> float:
    if s.omega == 0:
        # 결합이 없으면 판별식이 (ε₁−ε₂)² 이므로 교차는 대각 축퇴뿐
        return float("inf")
    return crossing_diagnostic(s).distance_to_ep


def _closed_form_vector(s: TwoLevelSystem, energy: complex, fallback: int) -> np.ndarray:
    # (ω, E−ε₁) 와 (E−ε₂, ω) 중 노름이 큰 쪽을 쓴다
    first = np.array([s.omega, energy - s.eps1], dtype=complex)
    second = np.array([energy - s.eps2, s.omega], dtype=complex)
    v = first if np.linalg.norm(first) >= np.linalg.norm(second) else second
    if np.linalg.norm(v) == 0:
        v = np.eye(2, dtype=complex)[fallback]
    return v


def eigenvectors2(s: TwoLevelSystem) -> Eigensystem:
    """
    닫힌 형식의 고유벡터를 쌍직교 정규화해 반환한다. 순서는 (E_+, E_−).

    Raises:
        AtExceptionalPoint: distance_to_ep ≤ 1e-12. 자기직교 고유벡터 하나를 담는다.
    """
    e_plus, e_minus = eigenvalues2(s)
    if _distance_to_ep(s) <= EP_TOL:
        vector = _closed_form_vector(s, e_plus, 0)
        raise AtExceptionalPoint(
            f"예외점 위에 있습니다: ratio={crossing_diagnostic(s).ratio}", vector
        )
    right = np.array(
        [_closed_form_vector(s, e_plus, 0), _closed_form_vector(s, e_minus, 1)]
    )
    es = Eigensystem(
        eigenvalues=[ComplexEigenvalue(e_plus), ComplexEigenvalue(e_minus)],
        right_vectors=right,
        left_vectors=right.conj(),
        symmetric=True,
    )
    return biorthonormalize(es)


def phase_rigidity2(s: TwoLevelSystem) -> Tuple[float, float]:
    """
    닫힌 형식 위상 강성 r_± = |φ_±·φ_±| / ⟨φ_±|φ_±⟩.

    EP 에서는 (0, 0) 을 반환한다.
    """
    if _distance_to_ep(s) <= EP_TOL:
        logger.info("phase_rigidity2: exceptional point, r = 0")
        return 0.0, 0.0
    result = []
    for index, energy in enumerate(eigenvalues2(s)):
        v = _closed_form_vector(s, energy, index)
        result.append(float(min(abs(v @ v) / np.vdot(v, v).real, 1.0)))
    return result[0], result[1]


def eigenmode_angle(s: TwoLevelSystem) -> float:
    """
    두 고유모드 사이의 각도 arccos(|⟨φ_+|φ_−⟩| / (‖φ_+‖‖φ_−‖)).

    교차에서 멀면 π/2, EP 에 다가가면 0 으로 간다.
    """
    e_plus, e_minus = eigenvalues2(s)
    u = _closed_form_vector(s, e_plus, 0)
    v = _closed_form_vector(s, e_minus, 1)
    if _distance_to_ep(s) <= EP_TOL:
        return 0.0
    cosine = abs(np.vdot(u, v)) / (np.linalg.norm(u) * np.linalg.norm(v))
    return float(np.arccos(min(cosine, 1.0)))


def component_phase(s: TwoLevelSystem) -> Tuple[float, float]:
    # 성분비 φ₂/φ₁ 의 위상. EP 를 지날 때의 위상 점프 진단용
    phases = []
    for index, energy in enumerate(eigenvalues2(s)):
        v = _closed_form_vector(s, energy, index)
        phases.append(float(np.angle(v[1] / v[0])) if v[0] != 0 else float(np.pi / 2))
    return phases[0], phases[1]
