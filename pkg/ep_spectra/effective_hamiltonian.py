import logging
from dataclasses import dataclass, field, replace
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment

from ep_spectra.errors import DimensionMismatch, InvalidModel, SymmetryViolation
from ep_spectra.spectral_core import WIDTH_TOL, ComplexMatrix
from ep_spectra.trajectory import ParamFamily, TrajectoryBundle, rigidity_onset, sweep

# 로깅 설정
logger = logging.getLogger(__name__)

HB_SYMMETRY_TOL = 1e-14
SYMMETRY_TOL = 1e-12  # 대칭 치환이 H_B 와 교환하는지 판단
BIC_REL_TOL = 1e-10  # 같은 α 의 최대 폭 대비
SUM_RULE_TOL = 1e-10
MIN_DECADES = 2


class SplitMix64:
    """
    64비트 splitmix 난수 발생기. 랜덤 n_level 인스턴스를 구현과 무관하게 재현하기 위해
    알고리즘을 고정한다.
    """

    _MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self.state = int(seed) & self._MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & self._MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self._MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self._MASK
        return z ^ (z >> 31)

    def uniform(self, low: float = -1.0, high: float = 1.0) -> float:
        # 상위 53비트로 [0, 1) 실수를 만든다
        u = (self.next_u64() >> 11) * 2.0**-53
        return low + (high - low) * u


@dataclass(frozen=True, eq=False)
class EffectiveHamiltonian:
    """
    개방계 유효 해밀토니안 H_eff = H_B − iα·V·Vᵀ.

    연속체 그린 함수 항은 에너지와 무관한 상수 폭 근사로 −iα·V·Vᵀ 에 흡수한다.
    h_b 는 실대칭 N×N, v 는 실수 N×K (채널 결합 벡터) 이다.
    """

    h_b: np.ndarray
    v: np.ndarray
    alpha: float = 0.0

    def __post_init__(self):
        h_b = np.array(self.h_b)
        v = np.array(self.v)
        if (np.iscomplexobj(h_b) and np.any(h_b.imag)) or (np.iscomplexobj(v) and np.any(v.imag)):
            raise InvalidModel("h_b 와 v 는 실수 행렬이어야 합니다.")
        h_b = np.real(h_b).astype(float)
        v = np.real(v).astype(float)
        if v.ndim == 1:
            v = v[:, None]
        if h_b.ndim != 2 or h_b.shape[0] != h_b.shape[1]:
            raise DimensionMismatch(f"h_b 는 정방 행렬이어야 합니다: shape={h_b.shape}")
        n = h_b.shape[0]
        if n < 2:
            raise DimensionMismatch(f"준위 수 N 은 2 이상이어야 합니다: N={n}")
        if v.ndim != 2 or v.shape[0] != n:
            raise DimensionMismatch(f"v 의 행 수가 N={n} 과 다릅니다: shape={v.shape}")
        k = v.shape[1]
        if not 1 <= k < n:
            raise InvalidModel(f"채널 수는 1 ≤ K < N 이어야 합니다: N={n}, K={k}")
        if not (np.all(np.isfinite(h_b)) and np.all(np.isfinite(v))):
            raise InvalidModel("h_b 또는 v 에 유한하지 않은 원소가 있습니다.")
        if np.max(np.abs(h_b - h_b.T)) > HB_SYMMETRY_TOL:
            raise InvalidModel("h_b 가 대칭이 아닙니다.")
        if not (np.isfinite(self.alpha) and self.alpha >= 0):
            raise InvalidModel(f"alpha 는 0 이상이어야 합니다: {self.alpha}")
        h_b.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "h_b", h_b)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def n_levels(self) -> int:
        return self.h_b.shape[0]

    @property
    def n_channels(self) -> int:
        return self.v.shape[1]

    def with_alpha(self, alpha: float) -> "EffectiveHamiltonian":
        return replace(self, alpha=alpha)

    def coupling_trace(self) -> float:
        """Tr(V·Vᵀ)"""
        return float(np.sum(self.v**2))

    @staticmethod
    def from_random(n: int, k: int, seed: int, alpha: float = 0.0) -> "EffectiveHamiltonian":
        """
        splitmix64 로 만든 랜덤 인스턴스.

        [−1, 1) 균등 난수를 H_B 의 위쪽 삼각(대각 포함, 행 우선) 순서로 채우고,
        이어서 V 를 행 우선으로 채운다.

        Args:
            n (int): 준위 수 N
            k (int): 채널 수 K
            seed (int): 64비트 시드
            alpha (float): 결합 세기

        Returns:
            EffectiveHamiltonian: 재현 가능한 랜덤 인스턴스
        """
        rng = SplitMix64(seed)
        h_b = np.zeros((n, n))
        for i in range(n):
            for j in range(i, n):
                h_b[i, j] = h_b[j, i] = rng.uniform()
        v = np.array([[rng.uniform() for _ in range(k)] for _ in range(n)]).reshape(n, k)
        return EffectiveHamiltonian(h_b, v, alpha)


def assemble(eh: EffectiveHamiltonian) -> ComplexMatrix:
    """H_B − iα·V·Vᵀ 를 정확히 대칭인 복소 행렬로 만든다."""
    h_b = (eh.h_b + eh.h_b.T) / 2
    coupling = eh.v @ eh.v.T
    coupling = (coupling + coupling.T) / 2
    return ComplexMatrix(h_b - 1j * eh.alpha * coupling, symmetric=True)


class BoundState(NamedTuple):
    alpha: float
    branch: int
    width: float
    certified: bool = False  # 대칭 보호 구간에서 해석적으로 확인된 BIC


@dataclass
class TrappingReport:
    alphas: np.ndarray
    widths: np.ndarray  # (n_alpha, N), 각 α 에서 내림차순 정렬된 폭
    branch_widths: np.ndarray  # (n_alpha, N), 추적된 가지별 폭
    width_order: List[List[int]]  # 각 α 에서 폭이 큰 순서의 가지 라벨
    broad_count: int
    trapped_widths_slope: float
    bic_candidates: List[Tuple[float, int]]
    sum_rule_error: float  # max_α |ΣΓ − 2αTr(VVᵀ)| 상대 오차
    trace_error: float  # max_α |Σz − Tr H_eff| 상대 오차
    min_rigidity: np.ndarray
    rigidity_onset_alpha: Optional[float] = None
    critical_alpha: Optional[float] = None
    flagged: List[int] = field(default_factory=list)
    bundle: Optional[TrajectoryBundle] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "alphas": self.alphas.tolist(),
            "widths": self.widths.tolist(),
            "branch_widths": self.branch_widths.tolist(),
            "width_order": self.width_order,
            "broad_count": self.broad_count,
            "trapped_widths_slope": self.trapped_widths_slope,
            "bic_candidates": [[a, lam] for a, lam in self.bic_candidates],
            "sum_rule_error": self.sum_rule_error,
            "trace_error": self.trace_error,
            "min_rigidity": self.min_rigidity.tolist(),
            "rigidity_onset_alpha": self.rigidity_onset_alpha,
            "critical_alpha": self.critical_alpha,
            "flagged": self.flagged,
        }

    @staticmethod
    def from_dict(data: dict) -> "TrappingReport":
        return TrappingReport(
            alphas=np.asarray(data["alphas"], dtype=float),
            widths=np.asarray(data["widths"], dtype=float),
            branch_widths=np.asarray(data["branch_widths"], dtype=float),
            width_order=[list(row) for row in data["width_order"]],
            broad_count=int(data["broad_count"]),
            trapped_widths_slope=float(data["trapped_widths_slope"]),
            bic_candidates=[(float(a), int(lam)) for a, lam in data["bic_candidates"]],
            sum_rule_error=float(data["sum_rule_error"]),
            trace_error=float(data["trace_error"]),
            min_rigidity=np.asarray(data["min_rigidity"], dtype=float),
            rigidity_onset_alpha=data.get("rigidity_onset_alpha"),
            critical_alpha=data.get("critical_alpha"),
            flagged=list(data.get("flagged", [])),
        )


def _check_alphas(alphas: Sequence[float]) -> np.ndarray:
    alphas = np.asarray(alphas, dtype=float)
    if alphas.ndim != 1 or len(alphas) < 3:
        raise ValueError("alpha 격자는 3개 이상의 점이어야 합니다.")
    if not np.all(np.isfinite(alphas)) or alphas[0] < 0:
        raise ValueError("alpha 는 유한한 0 이상의 값이어야 합니다.")
    if np.any(np.diff(alphas) <= 0):
        raise ValueError("alpha 격자는 순증가해야 합니다.")
    positive = alphas[alphas > 0]
    if len(positive) == 0 or alphas[-1] < 10**MIN_DECADES * positive[0]:
        raise ValueError("alpha 격자는 최소 두 자릿수(100배)에 걸쳐야 합니다.")
    return alphas


def _family(eh: EffectiveHamiltonian) -> ParamFamily:
    return ParamFamily(
        evaluator=lambda p: assemble(eh.with_alpha(float(p[0]))),
        dim=eh.n_levels,
        description=f"n_level N={eh.n_levels} K={eh.n_channels}",
    )


def _top_decade(alphas: np.ndarray) -> np.ndarray:
    mask = alphas >= alphas[-1] / 10
    if mask.sum() < 2:
        mask[-2:] = True
    return mask


def _rank_slopes(alphas: np.ndarray, widths: np.ndarray) -> List[Optional[float]]:
    """정렬된 폭의 순위별 log Γ vs log α 기울기 (최상위 자릿수 구간)."""
    mask = _top_decade(alphas) & (alphas > 0)
    slopes: List[Optional[float]] = []
    for rank in range(widths.shape[1]):
        gamma = widths[mask, rank]
        valid = np.isfinite(gamma) & (gamma > 0)
        if valid.sum() < 2:
            slopes.append(None)
            continue
        slope = np.polyfit(np.log(alphas[mask][valid]), np.log(gamma[valid]), 1)[0]
        slopes.append(float(slope))
    return slopes


def _bic_rows(widths: np.ndarray) -> List[int]:
    top = np.nanmax(widths)
    if not top > 0:
        return []
    return [lam for lam, gamma in enumerate(widths) if gamma < BIC_REL_TOL * top]


def coupling_sweep(
    eh: EffectiveHamiltonian, alphas: Sequence[float], max_workers: int = 4
) -> TrappingReport:
    """
    결합 세기 α 를 스윕하며 공명 포획과 폭 분기를 진단한다.

    Args:
        eh (EffectiveHamiltonian): 모델 (alpha 값은 무시)
        alphas (Sequence[float]): 순증가, 3점 이상, 100배 이상에 걸친 격자
        max_workers (int): 격자 분해 스레드 수

    Returns:
        TrappingReport: 폭 기록, broad_count, 포획 폭 기울기 등
    """
    alphas = _check_alphas(alphas)
    bundle = sweep(_family(eh), alphas, max_workers=max_workers)

    branch_widths = bundle.widths()
    widths = -np.sort(-branch_widths, axis=1)
    order = np.argsort(-branch_widths, axis=1, kind="stable")
    width_order = [[int(lam) for lam in row] for row in order]

    # 합 규칙과 대각합 검사
    expected = 2 * alphas * eh.coupling_trace()
    observed = np.sum(branch_widths, axis=1)
    scale = np.maximum(expected, np.sum(np.abs(bundle.branches), axis=1))
    sum_rule = np.abs(observed - expected) / np.where(scale > 0, scale, 1.0)
    h_trace = np.trace(eh.h_b) - 1j * alphas * eh.coupling_trace()
    trace = np.abs(np.sum(bundle.branches, axis=1) - h_trace) / np.where(scale > 0, scale, 1.0)
    sum_rule_error = float(np.nanmax(sum_rule)) if np.any(np.isfinite(sum_rule)) else float("nan")
    trace_error = float(np.nanmax(trace)) if np.any(np.isfinite(trace)) else float("nan")
    if sum_rule_error > SUM_RULE_TOL:
        logger.warning(f"폭 합 규칙 오차가 큽니다: {sum_rule_error:.3e}")
    if np.nanmin(branch_widths) < -WIDTH_TOL:
        logger.warning(f"음수 폭이 있습니다: min Γ = {np.nanmin(branch_widths):.3e}")

    slopes = _rank_slopes(alphas, widths)
    broad_count = sum(1 for s in slopes if s is not None and s > 0)
    trapped = [s for s in slopes[broad_count:] if s is not None]
    trapped_slope = float(np.mean(trapped)) if trapped else float("nan")

    bic_candidates = [
        (float(alphas[i]), lam)
        for i in range(len(alphas))
        for lam in _bic_rows(branch_widths[i])
    ]

    critical_alpha = None
    if broad_count < eh.n_levels:
        mean_trapped = np.nanmean(widths[:, broad_count:], axis=1)
        if np.any(np.isfinite(mean_trapped)):
            critical_alpha = float(alphas[int(np.nanargmax(mean_trapped))])

    onset = rigidity_onset(bundle)
    flagged = sorted({k for interval in bundle.flagged for k in interval} | set(bundle.failed))
    report = TrappingReport(
        alphas=alphas,
        widths=widths,
        branch_widths=branch_widths,
        width_order=width_order,
        broad_count=broad_count,
        trapped_widths_slope=trapped_slope,
        bic_candidates=bic_candidates,
        sum_rule_error=sum_rule_error,
        trace_error=trace_error,
        min_rigidity=np.nanmin(bundle.rigidity, axis=1),
        rigidity_onset_alpha=None if onset is None else float(onset),
        critical_alpha=critical_alpha,
        flagged=flagged,
        bundle=bundle,
    )
    logger.info(
        f"coupling_sweep N={eh.n_levels} K={eh.n_channels}: broad_count={broad_count}, "
        f"trapped_widths_slope={trapped_slope:.4f}, critical_alpha={critical_alpha}"
    )
    return report


def _permutation_matrix(symmetry: Sequence[int], n: int) -> np.ndarray:
    perm = [int(i) for i in symmetry]
    if sorted(perm) != list(range(n)):
        raise SymmetryViolation(f"길이 {n} 의 치환이 아닙니다: {perm}")
    P = np.zeros((n, n))
    P[np.arange(n), perm] = 1.0
    if not np.array_equal(P @ P, np.eye(n)):
        raise SymmetryViolation("대칭 치환은 P² = I 를 만족해야 합니다.")
    return P


def _channel_parity(P: np.ndarray, v: np.ndarray) -> int:
    mapped = P @ v
    if np.max(np.abs(mapped - v)) <= SYMMETRY_TOL:
        return 1
    if np.max(np.abs(mapped + v)) <= SYMMETRY_TOL:
        return -1
    raise SymmetryViolation("P·V = ±V 를 만족하지 않습니다 (채널마다 같은 부호여야 함).")


def _protected_sector(eh: EffectiveHamiltonian, symmetry: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """V 와 직교하는 대칭 구간의 (에너지, 고유벡터들)."""
    P = _permutation_matrix(symmetry, eh.n_levels)
    if np.max(np.abs(P @ eh.h_b @ P.T - eh.h_b)) > SYMMETRY_TOL:
        raise SymmetryViolation("대칭 치환이 H_B 와 교환하지 않습니다.")
    parity = _channel_parity(P, eh.v)
    basis = scipy.linalg.orth((np.eye(eh.n_levels) - parity * P) / 2)
    if basis.shape[1] == 0:
        return np.zeros(0), np.zeros((eh.n_levels, 0))
    energies, u = scipy.linalg.eigh(basis.T @ eh.h_b @ basis)
    return energies, basis @ u


def find_bics(
    eh: EffectiveHamiltonian,
    alphas: Sequence[float],
    symmetry: Optional[Sequence[int]] = None,
    max_workers: int = 4,
) -> List[BoundState]:
    """
    연속체 속 속박 상태(BIC) 를 찾는다.

    Γ_λ < 1e-10·(같은 α 의 최대 폭) 인 상태를 수치 후보로 보고한다. 대칭 치환 P 가
    주어지면 P·V = sV 의 반대 패리티 구간은 V 와 직교하므로 그 H_B 고유쌍이 모든 α 에서
    H_eff 의 정확한 고유쌍이 되며, 폭 0.0 으로 certified 표시해 보고한다.

    Args:
        eh (EffectiveHamiltonian): 모델
        alphas (Sequence[float]): coupling_sweep 과 같은 조건의 격자
        symmetry (Sequence[int], optional): 사이트 치환 (P[i, symmetry[i]] = 1)

    Returns:
        List[BoundState]: (alpha, branch, width, certified) 목록

    Raises:
        SymmetryViolation: 치환이 H_B 와 1e-12 안에서 교환하지 않거나 V 의 패리티가 섞였을 때
    """
    alphas = _check_alphas(alphas)
    sector = _protected_sector(eh, symmetry) if symmetry is not None else None
    bundle = sweep(_family(eh), alphas, max_workers=max_workers, keep_vectors=False)
    widths = bundle.widths()

    found: List[BoundState] = []
    for i, alpha in enumerate(alphas):
        certified = set()
        if sector is not None and len(sector[0]) > 0 and np.all(np.isfinite(bundle.branches[i])):
            # 보호 구간의 에너지에 가장 가까운 가지로 라벨을 붙인다
            cost = np.abs(np.subtract.outer(sector[0], bundle.branches[i]))
            _, cols = linear_sum_assignment(cost)
            for lam in cols:
                found.append(BoundState(float(alpha), int(lam), 0.0, True))
                certified.add(int(lam))
        for lam in _bic_rows(widths[i]):
            if lam not in certified:
                found.append(BoundState(float(alpha), lam, float(widths[i, lam]), False))
    logger.info(
        f"find_bics: {sum(b.certified for b in found)} certified, "
        f"{sum(not b.certified for b in found)} numeric candidates"
    )
    return found
