from typing import Optional, Sequence, Tuple

import numpy as np


class SpectraError(Exception):
    """ep_spectra 에서 발생하는 모든 예외의 기본 클래스"""


# 입력/모델 검증 오류
class InvalidModel(SpectraError, ValueError):
    """모델 파라미터가 불변 조건을 만족하지 않을 때"""


class DimensionMismatch(InvalidModel):
    """행렬 차원이 서로 맞지 않을 때"""


class SymmetryViolation(InvalidModel):
    """주어진 치환이 H_B 와 교환하지 않거나 V 를 보존하지 않을 때"""


class ZeroCoupling(InvalidModel):
    """결합 상수가 0 이라 비율/문턱값이 정의되지 않을 때"""

    def __init__(self, message: str, discriminant: Optional[complex] = None):
        super().__init__(message)
        self.discriminant = discriminant


class InstanceError(SpectraError, ValueError):
    """인스턴스 파일을 읽거나 검증하는 중 발생한 오류 (위치 정보 포함)"""

    def __init__(
        self,
        message: str,
        line: Optional[int] = None,
        column: Optional[int] = None,
        location: Optional[str] = None,
    ):
        super().__init__(message)
        self.line = line
        self.column = column
        self.location = location

    def __str__(self) -> str:
        base = super().__str__()
        if self.line is not None:
            return f"line {self.line}, column {self.column}: {base}"
        if self.location:
            return f"{self.location}: {base}"
        return base


# 수치 오류
class NonConvergence(SpectraError):
    """고유값 반복이 수렴하지 않았을 때"""


class NormalizationSingular(SpectraError):
    """(φ_λ)² 가 0 에 가까워 정규화가 불가능할 때 (EP 근처)"""

    def __init__(self, message: str, indices: Sequence[int] = ()):
        super().__init__(message)
        self.indices = list(indices)


class AtExceptionalPoint(SpectraError):
    """2준위 계가 정확히 예외점 위에 있을 때"""

    def __init__(self, message: str, vector: Optional[np.ndarray] = None):
        super().__init__(message)
        self.vector = vector


class AmbiguousMatching(SpectraError):
    """연속 격자점 사이의 가지(branch) 대응이 구분되지 않을 때"""

    def __init__(self, message: str, interval: Optional[Tuple] = None):
        super().__init__(message)
        self.interval = interval


class RadiusTooSmall(SpectraError):
    """EP 를 도는 경로에서 한 스텝의 이동이 국소 간격의 절반을 넘을 때"""


# EP 탐색 오류
class EPSearchError(SpectraError):
    """EP 탐색 실패. 가장 좋은 점과 잔차를 함께 보관한다."""

    def __init__(
        self,
        message: str,
        location: Optional[np.ndarray] = None,
        residual: float = float("nan"),
        iterations: int = 0,
    ):
        super().__init__(message)
        self.location = location
        self.residual = residual
        self.iterations = iterations


class NoConvergence(EPSearchError):
    """뉴턴 반복이 최대 횟수 안에 수렴하지 않았을 때"""


class NotAnEP(EPSearchError):
    """수렴한 점의 잔차가 너무 커서 EP 가 아닐 때"""
