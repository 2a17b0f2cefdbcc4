import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Sequence, Tuple

import numpy as np

from ep_spectra.errors import ZeroCoupling
from ep_spectra.spectral_core import ComplexMatrix

# 로깅 설정
logger = logging.getLogger(__name__)


class PTPhaseKind(str, Enum):
    SYMMETRIC = "Symmetric"
    BROKEN = "Broken"
    THRESHOLD = "Threshold"


@dataclass(frozen=True)
class PTPhase:
    """PT 대칭 상태 분류와 여유(margin)"""

    kind: PTPhaseKind
    margin: float  # 4|b|² − γ² (passive 이면 4|b|² − γ²/4)


@dataclass(frozen=True)
class PTDimer:
    """
    PT 대칭 2x2 해밀토니안.

    γ 는 두 모드 사이의 이득/손실 대비 Im(d) − Im(a) 이다. 능동 행렬은
    [[ε − iγ/2, b], [b*, ε + iγ/2]] 이고 고유값이 ε ± (1/2)√(4|b|² − γ²) 가 된다.
    c = b* 는 저장하지 않고 항상 b 에서 만든다.
    """

    epsilon: float  # ε, 공통 모드 에너지
    gamma: float  # γ ≥ 0, 이득/손실
    b: complex  # 격자를 통한 결합

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"gamma 는 0 이상이어야 합니다: {self.gamma}")

    def matrix(self, passive: bool = False) -> ComplexMatrix:
        """
        닫힌 형식 고유값을 정확히 재현하는 명시적 행렬.

        passive 이면 대비 γ/2 의 능동 이량체에 균일 손실 −iγ/2 를 더한 행렬
        [[ε − 3iγ/4, b], [b*, ε − iγ/4]] 로, 이득 항이 없다.
        """
        b = complex(self.b)
        if passive:
            a = self.epsilon - 0.75j * self.gamma
            d = self.epsilon - 0.25j * self.gamma
        else:
            a = self.epsilon - 0.5j * self.gamma
            d = self.epsilon + 0.5j * self.gamma
        return ComplexMatrix(np.array([[a, b], [b.conjugate(), d]], dtype=complex))


def _tolerance(d: PTDimer) -> float:
    return 1e-12 * max(4 * abs(d.b) ** 2, d.gamma**2, 1.0)


def pt_phase(d: PTDimer, passive: bool = False) -> PTPhase:
    """
    4|b|² 와 γ² (passive 면 γ²/4) 를 비교해 PT 상태를 분류한다.

    Args:
        d (PTDimer): 이량체
        passive (bool): 이득 없는(손실만 있는) 변형 여부

    Returns:
        PTPhase: 분류 결과
    """
    loss = d.gamma**2 / 4 if passive else d.gamma**2
    margin = 4 * abs(d.b) ** 2 - loss
    tol = _tolerance(d)
    if margin > tol:
        kind = PTPhaseKind.SYMMETRIC
    elif margin < -tol:
        kind = PTPhaseKind.BROKEN
    else:
        kind = PTPhaseKind.THRESHOLD
    return PTPhase(kind=kind, margin=float(margin))


def _split(phase: PTPhase) -> complex:
    # (1/2)√margin, 문턱에서는 정확히 0
    if phase.kind is PTPhaseKind.THRESHOLD:
        return 0j
    if phase.margin > 0:
        return complex(np.sqrt(phase.margin) / 2)
    return complex(0.0, np.sqrt(-phase.margin) / 2)


def pt_eigenvalues(d: PTDimer) -> Tuple[complex, complex]:
    """E°_± = ε ± (1/2)√(4|b|² − γ²). b 에는 |b| 로만 의존한다."""
    half = _split(pt_phase(d))
    return complex(d.epsilon + half), complex(d.epsilon - half)


def passive_eigenvalues(d: PTDimer) -> Tuple[complex, complex]:
    """Ẽ°_± = ε − (i/2)γ ± (1/2)√(4|b|² − γ²/4). 문턱 아래에서 Im 은 정확히 −γ/2."""
    half = _split(pt_phase(d, passive=True))
    center = complex(d.epsilon, -d.gamma / 2)
    return center + half, center - half


def pt_breaking_threshold(b: complex) -> Tuple[float, float]:
    """
    대칭 깨짐 문턱: 능동 γ = 2|b|, 수동 γ = 4|b|.

    Raises:
        ZeroCoupling: b = 0 일 때
    """
    if b == 0:
        raise ZeroCoupling("b = 0 이면 PT 대칭 깨짐 문턱이 정의되지 않습니다.")
    magnitude = abs(complex(b))
    return 2 * magnitude, 4 * magnitude


def phase_diagram(
    epsilon: float,
    b_values: Sequence[complex],
    gammas: Sequence[float],
    passive: bool = False,
) -> List[List[PTPhase]]:
    """(b, γ) 격자 위의 PT 상태 지도. 결과[i][j] 는 b_values[i], gammas[j] 에 해당한다."""
    diagram = [
        [pt_phase(PTDimer(epsilon, float(g), complex(b)), passive) for g in gammas]
        for b in b_values
    ]
    logger.debug(f"phase_diagram: {len(b_values)}x{len(gammas)} points, passive={passive}")
    return diagram

