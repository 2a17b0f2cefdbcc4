import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment

from ep_spectra.errors import (
    AmbiguousMatching,
    DimensionMismatch,
    NoConvergence,
    NonConvergence,
    NotAnEP,
    RadiusTooSmall,
)
from ep_spectra.spectral_core import (
    ComplexMatrix,
    Eigensystem,
    eigendecompose_with_retry,
    phase_rigidity,
)

# 로깅 설정
logger = logging.getLogger(__name__)

AMBIGUITY_TOL = 1e-12  # 최선/차선 배정 비용 차이가 이보다 작으면 모호
MAX_REFINEMENTS = 20  # 모호한 스텝 하나당 이분 횟수 상한
EXACT_ASSIGNMENT_MAX_DIM = 64  # 이 이하에서만 차선 배정을 정확히 계산
TRUE_CROSSING_TOL = 1e-10  # 이보다 작은 간격은 회피 교차가 아니라 진짜 교차
MIXING_TOL = 1e-3  # r < 1 − MIXING_TOL 이면 위상이 강성을 잃은 것으로 본다
BRANCH_POINT_FACTOR = 2.0  # 분기점 통과로 보는 (간격 / 이동량) 상한

NEWTON_MAX_ITER = 200
NEWTON_MAX_HALVINGS = 30
FD_STEP = 1e-6  # 상대 유한차분 스텝
EP_RESIDUAL_TOL = 1e-10
NOT_AN_EP_TOL = 1e-8
MIN_ENCIRCLE_STEPS = 64


@dataclass(frozen=True)
class ParamFamily:
    """파라미터 벡터(1개 또는 2개 성분)에서 고정 차원 행렬로 가는 연속 사상"""

    evaluator: Callable[[np.ndarray], ComplexMatrix]
    dim: int
    description: str = ""
    n_params: int = 1

    def __call__(self, params) -> ComplexMatrix:
        p = np.atleast_1d(np.asarray(params, dtype=float))
        if p.shape != (self.n_params,):
            raise DimensionMismatch(
                f"파라미터 개수가 맞지 않습니다: expected {self.n_params}, got {p.shape}"
            )
        H = self.evaluator(p)
        if H.dim != self.dim:
            raise DimensionMismatch(f"행렬 차원이 {self.dim} 이 아닙니다: {H.dim}")
        return H


@dataclass(eq=False)
class TrajectoryBundle:
    """
    격자 위의 연속성 라벨이 붙은 고유값 궤적.

    branches[k, λ] 는 격자점 k 에서 가지 λ 의 고유값, vectors[k, λ] 는 그 φ_λ 이다.
    """

    grid: np.ndarray  # (n,) 또는 (n, p)
    branches: np.ndarray  # (n, dim) complex
    rigidity: np.ndarray  # (n, dim)
    matching_cost: np.ndarray  # (n-1,) 스텝별 Σ|Δz|
    vectors: Optional[np.ndarray] = None  # (n, dim, dim)
    left_vectors: Optional[np.ndarray] = None
    flagged: List[Tuple[int, int]] = field(default_factory=list)  # 모호한 격자 구간
    failed: List[int] = field(default_factory=list)  # 분해에 실패한 격자점

    @property
    def dim(self) -> int:
        return self.branches.shape[1]

    @property
    def n_points(self) -> int:
        return self.branches.shape[0]

    def widths(self) -> np.ndarray:
        return -2.0 * self.branches.imag

    def ok(self) -> bool:
        return not self.flagged and not self.failed


@dataclass(frozen=True)
class AvoidedCrossing:
    pair: Tuple[int, int]  # (λ, μ)
    x_min: object  # 간격이 최소인 격자값
    gap_min: float  # min |z_λ − z_μ|
    rigidity_dip: float  # x_min 근처에서 두 가지의 최소 r
    index: int  # x_min 의 격자 인덱스
    mixing_range: float  # 두 가지 모두 r < 1 − 1e-3 인 연속 구간의 길이


@dataclass(frozen=True)
class EPLocation:
    location: np.ndarray
    residual: float
    iterations: int


@dataclass
class EncircleResult:
    permutation: List[int]
    vector_overlaps: List[complex]
    per_loop: List[Tuple[List[int], List[complex]]]  # 1..loops 바퀴 후의 결과
    steps: int
    radius: float


@dataclass
class _TrackState:
    x: np.ndarray
    es: Eigensystem  # 라벨과 게이지가 정리된 고유계
    previous: Optional[Tuple[np.ndarray, np.ndarray]] = None  # 한 스텝 전 (x, 고유값)


def _as_points(grid, n_params: int) -> np.ndarray:
    points = np.asarray(grid, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if points.ndim != 2 or points.shape[1] != n_params:
        raise DimensionMismatch(f"격자 모양이 파라미터 개수 {n_params} 와 맞지 않습니다.")
    return points


def _decompose_all(
    family: ParamFamily, points: np.ndarray, max_workers: int
) -> Tuple[List[Optional[Eigensystem]], List[int]]:
    """격자점들을 동시에 분해하고 격자 순서대로 돌려준다."""
    systems: List[Optional[Eigensystem]] = [None] * len(points)
    failed: List[int] = []

    def task(k: int) -> Eigensystem:
        return eigendecompose_with_retry(family(points[k]))

    if max_workers <= 1:
        for k in range(len(points)):
            try:
                systems[k] = task(k)
            except NonConvergence as e:
                logger.warning(f"격자점 {k} 분해 실패: {e}")
                failed.append(k)
        return systems, failed

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        future_to_index = {executor.submit(task, k): k for k in range(len(points))}
        for future in as_completed(future_to_index):
            k = future_to_index[future]
            try:
                systems[k] = future.result()
            except NonConvergence as e:
                logger.warning(f"격자점 {k} 분해 실패: {e}")
                failed.append(k)
    return systems, sorted(failed)


def _assignment_gap(cost: np.ndarray, cols: np.ndarray) -> Tuple[float, Optional[np.ndarray]]:
    """차선 배정과 최선 배정의 비용 차이, 그리고 차선 배정."""
    n = len(cols)
    if n < 2:
        return float("inf"), None
    rows = np.arange(n)
    best = cost[rows, cols].sum()
    if n > EXACT_ASSIGNMENT_MAX_DIM:
        # 큰 차원: 행별 여유로 검증
        ordered = np.sort(cost, axis=1)
        return float(np.min(ordered[:, 1] - ordered[:, 0])), None
    second, alternative = float("inf"), None
    for i in range(n):
        trial = cost.copy()
        trial[i, cols[i]] = np.inf
        try:
            r2, c2 = linear_sum_assignment(trial)
        except ValueError:
            continue
        total = trial[r2, c2].sum()
        if total < second:
            second, alternative = total, c2
    return float(second - best), alternative


def _choose(
    state: _TrackState, x_new: np.ndarray, es_new: Eigensystem
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """이전 라벨과 새 고유값 사이의 배정. (cols, 동률로 남은 행들 또는 None)"""
    prev = state.es.values()
    new = es_new.values()
    cost = np.abs(np.subtract.outer(prev, new))
    _, cols = linear_sum_assignment(cost)
    best = cost[np.arange(len(cols)), cols].sum()
    gap, alternative = _assignment_gap(cost, cols)
    if gap >= AMBIGUITY_TOL:
        return cols, None

    # 0차 비용이 동률일 때: 속도 연속성, 그 다음 고유벡터 겹침
    secondary = []
    if state.previous is not None:
        x_prev, values_prev = state.previous
        last = np.linalg.norm(state.x - x_prev)
        ratio = np.linalg.norm(x_new - state.x) / last if last > 0 else 1.0
        predicted = prev + (prev - values_prev) * ratio
        secondary.append(np.abs(np.subtract.outer(predicted, new)))
    phi_prev = state.es.right_vectors / np.linalg.norm(state.es.right_vectors, axis=1, keepdims=True)
    phi_new = es_new.right_vectors / np.linalg.norm(es_new.right_vectors, axis=1, keepdims=True)
    secondary.append(1.0 - np.abs(phi_prev.conj() @ phi_new.T))

    for tie_cost in secondary:
        _, tie_cols = linear_sum_assignment(tie_cost)
        if cost[np.arange(len(tie_cols)), tie_cols].sum() > best + AMBIGUITY_TOL:
            continue
        tie_gap, _ = _assignment_gap(tie_cost, tie_cols)
        if tie_gap >= AMBIGUITY_TOL:
            return tie_cols, None

    if alternative is None:
        return cols, np.arange(len(cols))
    # 차선 배정이 같은 값 열을 주면 라벨이 달라도 궤적은 같다
    if np.max(np.abs(new[alternative] - new[cols])) <= AMBIGUITY_TOL:
        return cols, None
    return cols, np.flatnonzero(alternative != cols)


def _branch_point_passage(
    prev: np.ndarray, new: np.ndarray, cols: np.ndarray, tied: np.ndarray
) -> bool:
    """
    동률인 가지들이 스텝 안에서 합쳐지는지(EP 또는 교차 통과) 판단한다.

    제곱근 분기점을 포함한 구간에서는 양 끝 간격 중 작은 쪽이 이동량의 √2 배를 넘지 않는다.
    이 경우 두 라벨 모두 연속인 이어 붙이기이므로 최선 배정을 받아들인다.
    """
    before = prev[tied]
    after = new[cols[tied]]
    movement = float(np.max(np.abs(before - after)))
    gap = min(_minimum_gap(before), _minimum_gap(after))
    return gap <= BRANCH_POINT_FACTOR * movement


def _transport(previous: Eigensystem, labeled: Eigensystem) -> Eigensystem:
    """
    평행 이동 게이지. 정규화가 남긴 자유도 안에서 Re⟨φ_prev|φ_new⟩ 를 최대화한다.
    대칭 행렬은 φ·φ = 1 때문에 부호만, 일반 행렬은 단위 위상을 고른다.
    """
    right = labeled.right_vectors.copy()
    left = labeled.left_vectors.copy()
    for lam in range(labeled.dim):
        overlap = np.vdot(previous.right_vectors[lam], right[lam])
        if overlap == 0:
            continue
        if labeled.symmetric:
            factor = -1.0 if overlap.real < 0 else 1.0
        else:
            factor = np.conj(overlap) / abs(overlap)
        right[lam] *= factor
        left[lam] *= factor
    if labeled.symmetric:
        left = right.conj()
    return Eigensystem(
        eigenvalues=list(labeled.eigenvalues),
        right_vectors=right,
        left_vectors=left,
        residual_norm=labeled.residual_norm,
        symmetric=labeled.symmetric,
        singular=list(labeled.singular),
    )


def _advance(
    family: ParamFamily,
    state: _TrackState,
    x_new: np.ndarray,
    es_new: Eigensystem,
    budget: List[int],
) -> Tuple[_TrackState, bool]:
    """한 스텝 진행. 모호하면 중점을 넣어 이분한다. (새 상태, 모호 표시)"""
    cols, tied = _choose(state, x_new, es_new)
    if tied is not None and budget[0] > 0:
        budget[0] -= 1
        x_mid = (state.x + x_new) / 2
        try:
            es_mid = eigendecompose_with_retry(family(x_mid))
        except NonConvergence:
            logger.warning(f"중점 {x_mid} 분해 실패, 최선 배정을 사용합니다.")
        else:
            logger.debug(f"refining ambiguous step at {state.x} -> {x_new}")
            mid, flagged_first = _advance(family, state, x_mid, es_mid, budget)
            end, flagged_second = _advance(family, mid, x_new, es_new, budget)
            return end, flagged_first or flagged_second
    ambiguous = False
    if tied is not None:
        if _branch_point_passage(state.es.values(), es_new.values(), cols, tied):
            logger.debug(f"branch point passage between {state.x} and {x_new}")
        else:
            ambiguous = True
    labeled = _transport(state.es, es_new.reordered(cols))
    return _TrackState(x_new, labeled, previous=(state.x, state.es.values())), ambiguous


def _record(state: _TrackState, k: int, branches, rigidity, vectors, left) -> None:
    branches[k] = state.es.values()
    rigidity[k] = phase_rigidity(state.es)
    if vectors is not None:
        vectors[k] = state.es.right_vectors
        left[k] = state.es.left_vectors


def sweep(
    f: ParamFamily,
    grid: Sequence,
    max_workers: int = 4,
    keep_vectors: bool = True,
) -> TrajectoryBundle:
    """
    파라미터 격자를 따라 고유값 궤적을 만든다.

    연속 격자점 사이는 Σ|Δz| 를 최소화하는 최적 배정(헝가리안)으로 라벨을 잇고,
    고유벡터는 평행 이동 게이지로 맞춘다. 배정이 모호하면 스텝을 최대 20번 이분하고,
    그래도 모호하면 그 구간을 flagged 에 남긴다.

    Args:
        f (ParamFamily): 행렬 족
        grid (Sequence): 격자값 (1-파라미터면 실수 목록, 2-파라미터면 벡터 목록)
        max_workers (int): 분해에 쓸 스레드 수
        keep_vectors (bool): 고유벡터 궤적 보관 여부

    Returns:
        TrajectoryBundle: 라벨이 붙은 궤적
    """
    points = _as_points(grid, f.n_params)
    if len(points) < 2:
        raise ValueError("격자점은 2개 이상이어야 합니다.")
    systems, failed = _decompose_all(f, points, max_workers)

    n, dim = len(points), f.dim
    branches = np.full((n, dim), np.nan + 1j * np.nan)
    rigidity = np.full((n, dim), np.nan)
    costs = np.full(n - 1, np.nan)
    vectors = np.full((n, dim, dim), np.nan + 1j * np.nan) if keep_vectors else None
    left = np.full((n, dim, dim), np.nan + 1j * np.nan) if keep_vectors else None
    flagged: List[Tuple[int, int]] = []

    state: Optional[_TrackState] = None
    last_k: Optional[int] = None
    for k, es in enumerate(systems):
        if es is None:
            continue
        if state is None:
            state = _TrackState(points[k], es)
        else:
            budget = [MAX_REFINEMENTS]
            previous_values = state.es.values()
            state, ambiguous = _advance(f, state, points[k], es, budget)
            if ambiguous:
                logger.warning(f"모호한 배정 구간: grid[{last_k}]..grid[{k}]")
                flagged.append((last_k, k))
            costs[k - 1] = float(np.sum(np.abs(state.es.values() - previous_values)))
        _record(state, k, branches, rigidity, vectors, left)
        last_k = k

    grid_out = points[:, 0].copy() if f.n_params == 1 else points.copy()
    logger.info(
        f"sweep '{f.description}': {n} points, dim={dim}, "
        f"flagged={len(flagged)}, failed={len(failed)}"
    )
    return TrajectoryBundle(
        grid=grid_out,
        branches=branches,
        rigidity=rigidity,
        matching_cost=costs,
        vectors=vectors,
        left_vectors=left,
        flagged=flagged,
        failed=failed,
    )


def _grid_distance(grid: np.ndarray, i: int, j: int) -> float:
    return float(np.linalg.norm(np.atleast_1d(grid[j] - grid[i])))


def _mixing_range(tb: TrajectoryBundle, lam: int, mu: int, k: int) -> float:
    mixed = np.nanmax(tb.rigidity[:, [lam, mu]], axis=1) < 1 - MIXING_TOL
    if not mixed[k]:
        return 0.0
    lo, hi = k, k
    while lo > 0 and mixed[lo - 1]:
        lo -= 1
    while hi < tb.n_points - 1 and mixed[hi + 1]:
        hi += 1
    return _grid_distance(tb.grid, lo, hi)


def detect_avoided_crossings(
    tb: TrajectoryBundle, threshold: float = np.inf, window: int = 2
) -> List[AvoidedCrossing]:
    """
    가지 쌍 사이 거리의 내부 극소점 중 threshold 보다 작은 것을 회피 교차로 보고한다.

    간격이 사실상 0 인 진짜 교차(EP, 실축 교차)는 제외한다.
    """
    if tb.n_points < 3:
        raise ValueError("회피 교차 탐지에는 격자점이 3개 이상 필요합니다.")
    crossings: List[AvoidedCrossing] = []
    for lam in range(tb.dim):
        for mu in range(lam + 1, tb.dim):
            gap = np.abs(tb.branches[:, lam] - tb.branches[:, mu])
            for k in range(1, tb.n_points - 1):
                if not (gap[k] < gap[k - 1] and gap[k] <= gap[k + 1]):
                    continue
                if not (TRUE_CROSSING_TOL < gap[k] < threshold):
                    continue
                lo, hi = max(0, k - window), min(tb.n_points, k + window + 1)
                dip = float(np.nanmin(tb.rigidity[lo:hi][:, [lam, mu]]))
                crossings.append(
                    AvoidedCrossing(
                        pair=(lam, mu),
                        x_min=tb.grid[k],
                        gap_min=float(gap[k]),
                        rigidity_dip=dip,
                        index=k,
                        mixing_range=_mixing_range(tb, lam, mu, k),
                    )
                )
    logger.info(f"detected {len(crossings)} avoided crossings")
    return crossings


def rigidity_onset(tb: TrajectoryBundle, threshold: float = MIXING_TOL):
    """min_λ r_λ 가 처음으로 1 − threshold 아래로 떨어지는 격자값. 없으면 None."""
    for k in range(tb.n_points):
        row = tb.rigidity[k]
        if np.all(np.isnan(row)):
            continue
        if np.nanmin(row) < 1 - threshold:
            return tb.grid[k]
    return None


def ep_discriminant(H: ComplexMatrix) -> complex:
    """
    EP 조건 D = 0. 2x2 는 (a−d)² + 4bc, 그 이상은 가장 가까운 고유값 쌍의 (z_i − z_j)².
    """
    a = H.entries
    if H.dim == 2:
        return complex((a[0, 0] - a[1, 1]) ** 2 + 4 * a[0, 1] * a[1, 0])
    if H.dim == 1:
        return complex("inf")
    try:
        z = scipy.linalg.eigvals(a, check_finite=False)
    except np.linalg.LinAlgError as e:
        raise NonConvergence(f"고유값 계산 실패: {e}") from e
    distance = np.abs(np.subtract.outer(z, z))
    np.fill_diagonal(distance, np.inf)
    i, j = np.unravel_index(np.argmin(distance), distance.shape)
    return complex((z[i] - z[j]) ** 2)


def _safe_discriminant(f: ParamFamily, p: np.ndarray) -> complex:
    try:
        return ep_discriminant(f(p))
    except (ValueError, NonConvergence):
        return complex(np.nan, np.nan)


def _jacobian(f: ParamFamily, p: np.ndarray, fd_step: float) -> np.ndarray:
    jac = np.zeros((2, len(p)))
    d0 = _safe_discriminant(f, p)
    for i in range(len(p)):
        h = fd_step * max(1.0, abs(p[i]))
        forward, backward = p.copy(), p.copy()
        forward[i] += h
        backward[i] -= h
        d_plus = _safe_discriminant(f, forward)
        d_minus = _safe_discriminant(f, backward)
        if np.isnan(d_minus.real):
            derivative = (d_plus - d0) / h
        elif np.isnan(d_plus.real):
            derivative = (d0 - d_minus) / h
        else:
            derivative = (d_plus - d_minus) / (2 * h)
        jac[:, i] = derivative.real, derivative.imag
    return jac


def find_ep(
    f: ParamFamily,
    seed: Sequence[float],
    max_iter: int = NEWTON_MAX_ITER,
    fd_step: float = FD_STEP,
) -> EPLocation:
    """
    2-파라미터 족에서 Re D = Im D = 0 을 감쇠 뉴턴법으로 푼다.

    야코비안은 상대 스텝 fd_step 의 중심 유한차분이고, |D| 가 줄지 않으면
    스텝을 최대 30번 반으로 줄인다. 야코비안이 특이하면(예: D 가 실수인 족) 최소제곱
    스텝을 쓴다.

    Args:
        f (ParamFamily): 2-파라미터 행렬 족
        seed (Sequence[float]): 시작점

    Returns:
        EPLocation: 위치, 잔차 |D|, 반복 횟수

    Raises:
        NoConvergence: 최대 반복 후에도 수렴하지 않을 때 (가장 좋은 점 포함)
        NotAnEP: 뉴턴이 멈춘 점의 잔차가 1e-8 보다 클 때
    """
    if f.n_params != 2:
        raise DimensionMismatch("find_ep 는 2-파라미터 족만 받습니다.")
    p = np.asarray(seed, dtype=float).copy()
    d = _safe_discriminant(f, p)
    if np.isnan(d.real):
        raise NotAnEP(f"시작점에서 족을 평가할 수 없습니다: {p}", p, float("nan"), 0)

    iterations = 0
    stalled = False
    while iterations < max_iter and abs(d) > EP_RESIDUAL_TOL:
        iterations += 1
        jac = _jacobian(f, p, fd_step)
        step = np.linalg.lstsq(jac, -np.array([d.real, d.imag]), rcond=None)[0]
        t, accepted = 1.0, False
        for _ in range(NEWTON_MAX_HALVINGS + 1):
            trial = p + t * step
            d_trial = _safe_discriminant(f, trial)
            if abs(d_trial) < abs(d):
                accepted = True
                break
            t /= 2
        if not accepted or not np.any(t * step):
            stalled = True
            break
        p, d = trial, d_trial
        logger.debug(f"find_ep iter {iterations}: p={p}, |D|={abs(d):.3e}, t={t}")

    residual = float(abs(d))
    if residual <= NOT_AN_EP_TOL:
        logger.info(f"EP located at {p} (|D|={residual:.3e}, {iterations} iterations)")
        return EPLocation(location=p, residual=residual, iterations=iterations)
    if stalled:
        raise NotAnEP(
            f"뉴턴이 멈춘 점이 EP 가 아닙니다: {p}, |D|={residual:.3e}", p, residual, iterations
        )
    raise NoConvergence(
        f"{max_iter} 번 반복 후에도 수렴하지 않았습니다: best={p}, |D|={residual:.3e}",
        p,
        residual,
        iterations,
    )


def _loop_result(initial: Eigensystem, current: Eigensystem) -> Tuple[List[int], List[complex]]:
    cost = np.abs(np.subtract.outer(current.values(), initial.values()))
    _, permutation = linear_sum_assignment(cost)
    overlaps = [
        complex(np.vdot(initial.left_vectors[permutation[lam]], current.right_vectors[lam]))
        for lam in range(current.dim)
    ]
    return [int(i) for i in permutation], overlaps


def _minimum_gap(values: np.ndarray) -> float:
    if len(values) < 2:
        return float("inf")
    distance = np.abs(np.subtract.outer(values, values))
    np.fill_diagonal(distance, np.inf)
    return float(distance.min())


def encircle_ep(
    f: ParamFamily,
    center: Sequence[float],
    radius: float,
    steps: int,
    loops: int,
    max_workers: int = 4,
) -> EncircleResult:
    """
    EP 를 중심으로 하는 원을 loops 바퀴 돌며 고유쌍을 평행 이동한다.

    permutation[λ] 는 가지 λ 가 도착한 처음 고유값의 인덱스, vector_overlaps[λ] 는
    ⟨ψ_initial,perm(λ)|φ_final,λ⟩ 이다. EP 를 한 바퀴 돌면 두 가지가 바뀌고,
    두 바퀴에서 벡터 부호가 뒤집히며(겹침 −1), 네 바퀴에서 원래대로 돌아온다.

    Raises:
        RadiusTooSmall: 한 스텝의 이동이 국소 간격의 절반을 넘을 때
        AmbiguousMatching: 이분 후에도 배정이 모호할 때
    """
    if f.n_params != 2:
        raise DimensionMismatch("encircle_ep 는 2-파라미터 족만 받습니다.")
    if steps < MIN_ENCIRCLE_STEPS:
        raise ValueError(f"루프당 스텝은 {MIN_ENCIRCLE_STEPS} 이상이어야 합니다: {steps}")
    if loops < 1:
        raise ValueError("loops 는 1 이상이어야 합니다.")
    if not radius > 0:
        raise RadiusTooSmall(f"반지름이 양수가 아닙니다: {radius}")

    center = np.asarray(center, dtype=float)
    angles = 2 * np.pi * np.arange(steps * loops + 1) / steps
    points = center + radius * np.column_stack([np.cos(angles), np.sin(angles)])
    systems, failed = _decompose_all(f, points, max_workers)
    if failed:
        raise NonConvergence(f"경로 위 격자점 분해 실패: {failed}")

    state = _TrackState(points[0], systems[0])
    initial = state.es
    per_loop: List[Tuple[List[int], List[complex]]] = []
    for k in range(1, len(points)):
        local_gap = _minimum_gap(state.es.values())
        previous_values = state.es.values()
        state, ambiguous = _advance(f, state, points[k], systems[k], [MAX_REFINEMENTS])
        if ambiguous:
            raise AmbiguousMatching(
                f"경로 스텝 {k - 1}->{k} 에서 배정이 모호합니다.", (k - 1, k)
            )
        move = float(np.max(np.abs(state.es.values() - previous_values)))
        if move > local_gap / 2:
            raise RadiusTooSmall(
                f"스텝 {k} 이동 {move:.3e} 이 국소 간격의 절반 {local_gap / 2:.3e} 을 넘습니다."
            )
        if k % steps == 0:
            per_loop.append(_loop_result(initial, state.es))

    permutation, overlaps = per_loop[-1]
    logger.info(f"encircle {loops} loop(s) around {center}: permutation={permutation}")
    return EncircleResult(
        permutation=permutation,
        vector_overlaps=overlaps,
        per_loop=per_loop,
        steps=steps,
        radius=float(radius),
    )
