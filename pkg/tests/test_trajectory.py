import numpy as np
import pytest

from ep_spectra.errors import (
    AmbiguousMatching,
    DimensionMismatch,
    EPSearchError,
    NonConvergence,
    RadiusTooSmall,
)
from ep_spectra.pt_dimer import PTDimer
from ep_spectra.spectral_core import ComplexMatrix, eigendecompose, phase_rigidity
from ep_spectra.trajectory import (
    ParamFamily,
    detect_avoided_crossings,
    encircle_ep,
    ep_discriminant,
    find_ep,
    rigidity_onset,
    sweep,
)
from ep_spectra.two_level import TwoLevelSystem


def _two_level(eps1, eps2, omega, description=""):
    return ParamFamily(
        lambda p: TwoLevelSystem(eps1(p[0]), eps2(p[0]), omega).matrix(),
        dim=2,
        description=description,
    )


@pytest.fixture
def lossy_family():
    """ε₁ = X − 0.1i, ε₂ = −X, ω = 0.2. X = 0 근처에서 회피 교차."""
    return _two_level(lambda x: complex(x, -0.1), lambda x: complex(-x), 0.2 + 0j)


@pytest.fixture
def real_family():
    return _two_level(lambda x: complex(x), lambda x: complex(-x), 0.1 + 0j)


@pytest.fixture
def diagonal_family():
    return ParamFamily(
        lambda p: ComplexMatrix(np.diag([p[0], -p[0]]).astype(complex)),
        dim=2,
        description="diag(X, -X)",
    )


def _random_linear_family(rng, n):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    b = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    a, b = (a + a.T) / 2, (b + b.T) / 2
    return ParamFamily(lambda p: ComplexMatrix(a + p[0] * b, symmetric=True), dim=n)


def test_diagonal_crossing_keeps_straight_lines(diagonal_family):
    grid = np.arange(-100, 101) / 100
    tb = sweep(diagonal_family, grid)
    assert tb.ok()
    np.testing.assert_allclose(tb.branches[:, 0], grid, atol=1e-14)
    np.testing.assert_allclose(tb.branches[:, 1], -grid, atol=1e-14)
    assert detect_avoided_crossings(tb, threshold=0.5) == []


def test_crossing_between_grid_points_follows_minimal_distance(diagonal_family):
    # 0 을 건너뛰는 격자에서는 가장 가까운 값으로 이어져 V 자가 된다
    grid = np.linspace(-1, 1, 20)
    tb = sweep(diagonal_family, grid)
    assert tb.ok()
    np.testing.assert_allclose(tb.branches[:, 0], -np.abs(grid), atol=1e-14)
    np.testing.assert_allclose(tb.branches[:, 1], np.abs(grid), atol=1e-14)


def test_constant_gap_has_no_avoided_crossing():
    family = ParamFamily(
        lambda p: ComplexMatrix(np.diag([p[0], p[0] + 1]).astype(complex)), dim=2
    )
    tb = sweep(family, np.linspace(-1, 1, 41))
    assert detect_avoided_crossings(tb, threshold=0.5) == []


def test_lossy_family_has_one_avoided_crossing(lossy_family):
    grid = np.linspace(-1, 1, 201)
    tb = sweep(lossy_family, grid)
    assert tb.ok()
    crossings = detect_avoided_crossings(tb)
    assert len(crossings) == 1
    crossing = crossings[0]
    assert crossing.pair == (0, 1)
    assert abs(crossing.x_min) <= 0.01
    assert crossing.gap_min == pytest.approx(np.sqrt(0.15), rel=1e-3)
    assert crossing.rigidity_dip < 1 - 1e-3
    assert crossing.mixing_range > 0

    # 강성 최소는 간격 최소에서 2 스텝 안에 있다
    k_rigidity = int(np.argmin(tb.rigidity[:, list(crossing.pair)].min(axis=1)))
    assert abs(k_rigidity - crossing.index) <= 2


def test_hermitian_avoided_crossing_keeps_full_rigidity(real_family):
    tb = sweep(real_family, np.linspace(-1, 1, 101))
    crossings = detect_avoided_crossings(tb, threshold=0.3)
    assert len(crossings) == 1
    assert crossings[0].gap_min == pytest.approx(0.2, rel=1e-12)
    assert crossings[0].rigidity_dip == pytest.approx(1.0, abs=1e-12)
    assert crossings[0].mixing_range == 0.0
    assert detect_avoided_crossings(tb, threshold=0.1) == []
    assert rigidity_onset(tb) is None


def test_pt_sweep_passes_threshold():
    family = ParamFamily(lambda p: PTDimer(0.0, p[0], 1 + 0j).matrix(), dim=2, description="gamma")
    grid = np.linspace(0, 4, 40)
    tb = sweep(family, grid)
    assert tb.ok()
    np.testing.assert_allclose(tb.branches.sum(axis=1), 0, atol=1e-12)
    below = grid < 2
    assert np.abs(tb.branches[below].imag).max() <= 1e-8
    above = tb.branches[~below]
    np.testing.assert_allclose(above[:, 0], above[:, 1].conj(), atol=1e-12)
    assert np.all(np.abs(above.imag) > 1e-3)


@pytest.mark.parametrize("name", ["lossy_family", "diagonal_family"])
def test_refinement_keeps_labels(name, request):
    family = request.getfixturevalue(name)
    fine = np.arange(-100, 101) / 100
    tb_fine = sweep(family, fine)
    tb_coarse = sweep(family, fine[::2])
    np.testing.assert_array_equal(tb_fine.branches[::2], tb_coarse.branches)


def test_branches_match_fresh_decomposition(rng, same_multiset):
    family = _random_linear_family(rng, 3)
    grid = np.linspace(0, 1, 50)
    tb = sweep(family, grid)
    for k, x in enumerate(grid):
        fresh = eigendecompose(family(x)).values()
        assert same_multiset(tb.branches[k], fresh) <= 1e-10


def test_matching_cost_is_optimal(lossy_family):
    tb = sweep(lossy_family, np.linspace(-1, 1, 51))
    steps = np.abs(np.diff(tb.branches, axis=0)).sum(axis=1)
    np.testing.assert_allclose(tb.matching_cost, steps)
    swapped = np.abs(tb.branches[1:, ::-1] - tb.branches[:-1]).sum(axis=1)
    assert np.all(tb.matching_cost <= swapped)


def test_worker_count_does_not_change_result(rng):
    family = _random_linear_family(rng, 4)
    grid = np.linspace(-1, 1, 60)
    serial = sweep(family, grid, max_workers=1)
    threaded = sweep(family, grid, max_workers=4)
    np.testing.assert_array_equal(serial.branches, threaded.branches)
    np.testing.assert_array_equal(serial.rigidity, threaded.rigidity)


def test_failed_point_is_recorded(lossy_family):
    grid = np.linspace(-1, 1, 21)

    def evaluator(p):
        if p[0] == grid[10]:
            raise NonConvergence("synthetic failure")
        return lossy_family(p)

    tb = sweep(ParamFamily(evaluator, dim=2), grid)
    assert tb.failed == [10]
    assert not tb.ok()
    assert np.all(np.isnan(tb.branches[10]))
    assert np.isnan(tb.matching_cost[9])
    assert not np.isnan(tb.matching_cost[10])
    assert not np.any(np.isnan(tb.branches[11]))


def test_sweep_without_vectors(lossy_family):
    tb = sweep(lossy_family, np.linspace(-1, 1, 11), keep_vectors=False)
    assert tb.vectors is None
    np.testing.assert_allclose(tb.widths(), -2 * tb.branches.imag)


def test_sweep_input_validation(lossy_family, ep_family):
    with pytest.raises(ValueError):
        sweep(lossy_family, [0.0])
    with pytest.raises(DimensionMismatch):
        sweep(ep_family, [0.0, 0.1])
    tb = sweep(lossy_family, [0.0, 0.1])
    with pytest.raises(ValueError):
        detect_avoided_crossings(tb)


def test_rigidity_onset_finds_first_mixed_point(lossy_family):
    tb = sweep(lossy_family, np.linspace(-1, 1, 201))
    onset = rigidity_onset(tb)
    assert onset is not None
    k = int(np.flatnonzero(tb.grid == onset)[0])
    assert tb.rigidity[k].min() < 1 - 1e-3
    assert np.all(tb.rigidity[:k].min(axis=1) >= 1 - 1e-3)


def test_discriminant_forms():
    H = TwoLevelSystem(0.5 + 0j, 0j, 0.5 + 0j).matrix()
    assert ep_discriminant(H) == pytest.approx(0.25 + 1.0)
    assert ep_discriminant(ComplexMatrix(np.array([[1.0 + 0j]]))) == complex("inf")
    block = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 10]], dtype=complex)
    assert ep_discriminant(ComplexMatrix(block)) == pytest.approx(4.0)


def test_find_ep_on_two_level_family(ep_family):
    result = find_ep(ep_family, (0.3, 0.7))
    assert result.residual <= 1e-10
    np.testing.assert_allclose(result.location, [0.0, 1.0], atol=1e-8)
    x, y = result.location
    ratio = complex(x, -y) / (2 * 0.5)
    assert min(abs(ratio - 1j), abs(ratio + 1j)) <= 1e-8


def test_find_ep_on_pt_threshold_curve():
    family = ParamFamily(
        lambda p: PTDimer(0.0, p[0], complex(p[1])).matrix(), dim=2, n_params=2
    )
    result = find_ep(family, (1.8, 1.0))
    gamma, b = result.location
    assert abs(gamma - 2 * b) <= 1e-8


def test_find_ep_in_three_level_family():
    def evaluator(p):
        return ComplexMatrix(
            np.array([[complex(p[0], -p[1]), 0.5, 0], [0.5, 0, 0], [0, 0, 5]], dtype=complex)
        )

    result = find_ep(ParamFamily(evaluator, dim=3, n_params=2), (0.2, 0.8))
    np.testing.assert_allclose(result.location, [0.0, 1.0], atol=1e-6)


NEAR_EP_OFFSETS = [(1, 0), (-1, 0), (0, 1), (0, -1)]


def _rigidity_around(family, location, distance):
    centre = np.asarray(location, dtype=float)
    return [
        phase_rigidity(eigendecompose(family(centre + distance * np.asarray(offset))))
        for offset in NEAR_EP_OFFSETS
    ]


def test_rigidity_vanishes_next_to_three_level_ep():
    # ε₁ = −i + 1e-3·(X − iY), ω = 0.5. (0, 0) 에 EP, 셋째 준위는 분리되어 있다
    def evaluator(p):
        eps1 = -1j + 1e-3 * complex(p[0], -p[1])
        return ComplexMatrix(np.array([[eps1, 0.5, 0], [0.5, 0, 0], [0, 0, 5]], dtype=complex))

    family = ParamFamily(evaluator, dim=3, n_params=2)
    result = find_ep(family, (0.3, -0.2))
    assert result.residual <= 1e-10
    np.testing.assert_allclose(result.location, [0.0, 0.0], atol=1e-6)
    for r in _rigidity_around(family, result.location, 1e-4):
        assert np.all(np.sort(r)[:2] < 1e-3)
        assert r.max() == pytest.approx(1.0, abs=1e-9)


def test_generic_rigidity_vanishes_next_to_located_ep():
    # ε₁ = X − iY, ε₂ = 0, ω = 4. (0, 8) 에 EP
    family = ParamFamily(
        lambda p: TwoLevelSystem(complex(p[0], -p[1]), 0j, 4 + 0j).matrix(), dim=2, n_params=2
    )
    result = find_ep(family, (0.5, 7.0))
    np.testing.assert_allclose(result.location, [0.0, 8.0], atol=1e-8)
    for distance in (1e-6, 1e-7):
        for r in _rigidity_around(family, result.location, distance):
            assert np.all(r <= 1e-3)


def test_find_ep_reports_failure():
    # ε₁ = X 가 실수라서 판별식 X² + 1 은 0 이 되지 않는다
    family = ParamFamily(
        lambda p: TwoLevelSystem(complex(p[0]), 0j, 0.5 + 0j).matrix(), dim=2, n_params=2
    )
    with pytest.raises(EPSearchError) as info:
        find_ep(family, (0.5, 0.0))
    assert info.value.residual >= 0.99
    assert info.value.location is not None


def test_find_ep_requires_two_parameters(lossy_family):
    with pytest.raises(DimensionMismatch):
        find_ep(lossy_family, (0.0,))


def test_single_loop_swaps_branches(ep_family):
    result = encircle_ep(ep_family, (0.0, 1.0), 0.3, 128, 1)
    assert result.permutation == [1, 0]
    assert np.prod(result.vector_overlaps) == pytest.approx(-1.0, abs=1e-8)
    assert all(abs(abs(o) - 1) <= 1e-8 for o in result.vector_overlaps)


def test_double_loop_flips_sign(ep_family):
    result = encircle_ep(ep_family, (0.0, 1.0), 0.3, 128, 2)
    assert result.permutation == [0, 1]
    np.testing.assert_allclose(result.vector_overlaps, [-1, -1], atol=1e-6)


def test_four_loops_restore_vectors(ep_family):
    result = encircle_ep(ep_family, (0.0, 1.0), 0.3, 128, 4)
    assert result.permutation == [0, 1]
    np.testing.assert_allclose(result.vector_overlaps, [1, 1], atol=1e-6)
    assert len(result.per_loop) == 4


def test_loop_permutations_compose(ep_family):
    result = encircle_ep(ep_family, (0.0, 1.0), 0.3, 128, 4)
    one = np.array(result.per_loop[0][0])
    composed = np.arange(2)
    for loop in range(4):
        composed = composed[one]
        assert result.per_loop[loop][0] == composed.tolist()


def test_finer_loop_gives_same_permutation(ep_family):
    coarse = encircle_ep(ep_family, (0.0, 1.0), 0.3, 128, 1)
    fine = encircle_ep(ep_family, (0.0, 1.0), 0.3, 512, 1)
    assert coarse.permutation == fine.permutation
    np.testing.assert_allclose(coarse.vector_overlaps, fine.vector_overlaps, atol=1e-8)


def test_loop_without_ep_is_trivial(ep_family):
    result = encircle_ep(ep_family, (2.0, 1.0), 0.3, 64, 1)
    assert result.permutation == [0, 1]
    np.testing.assert_allclose(result.vector_overlaps, [1, 1], atol=1e-8)


def test_loop_through_ep_is_rejected(ep_family):
    with pytest.raises((RadiusTooSmall, AmbiguousMatching)):
        encircle_ep(ep_family, (0.0, 1.05), 0.05, 64, 1)


def test_encircle_argument_checks(ep_family, lossy_family):
    with pytest.raises(ValueError):
        encircle_ep(ep_family, (0.0, 1.0), 0.3, 32, 1)
    with pytest.raises(ValueError):
        encircle_ep(ep_family, (0.0, 1.0), 0.3, 64, 0)
    with pytest.raises(RadiusTooSmall):
        encircle_ep(ep_family, (0.0, 1.0), 0.0, 64, 1)
    with pytest.raises(DimensionMismatch):
        encircle_ep(lossy_family, (0.0, 1.0), 0.3, 64, 1)
