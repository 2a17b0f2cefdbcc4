import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from ep_spectra import __version__
from ep_spectra.config import Settings, configure_logging
from ep_spectra.effective_hamiltonian import coupling_sweep, find_bics
from ep_spectra.errors import (
    AmbiguousMatching,
    EPSearchError,
    InstanceError,
    NonConvergence,
    NormalizationSingular,
    RadiusTooSmall,
)
from ep_spectra.instance import NLevelInstance, load_instance
from ep_spectra.results import (
    CSV_FLOAT_FORMAT,
    ResultMetadata,
    ResultTable,
    write_csv,
    write_json,
    write_svg,
)
from ep_spectra.spectral_core import eigendecompose_with_retry, phase_rigidity
from ep_spectra.trajectory import detect_avoided_crossings, encircle_ep, find_ep, sweep

# 로깅 설정
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_SEARCH = 4

EP_ACCEPT_RESIDUAL = 1e-8
RIGIDITY_OFFSET = 1e-7  # rigidity_at_offset 을 재는 EP 로부터의 거리


def _metadata(instance, args) -> ResultMetadata:
    seed = args.seed if args.seed is not None else instance.seed
    return ResultMetadata.create(
        instance.instance_hash(), instance.kind, seed, timestamp=not args.no_timestamp
    )


def _complex_pairs(values) -> List[List[float]]:
    return [[float(np.real(z)), float(np.imag(z))] for z in values]


def cmd_sweep(args, settings: Settings) -> int:
    """1-파라미터 스윕. 결과 표를 CSV/JSON 으로, 요청하면 SVG 궤적도 저장한다."""
    instance = load_instance(args.instance)
    if instance.n_variables != 1:
        raise InstanceError("sweep 은 변수가 하나인 경로만 받습니다.", location="sweep.variables")
    family = instance.family(args.seed)
    tb = sweep(family, instance.grid_values(), max_workers=settings.max_workers)
    if not tb.ok():
        for lo, hi in tb.flagged:
            print(f"flagged grid interval: [{tb.grid[lo]!r}, {tb.grid[hi]!r}]", file=sys.stderr)
        for k in tb.failed:
            print(f"failed grid point: {tb.grid[k]!r}", file=sys.stderr)
        logger.error(f"수치 실패로 결과를 쓰지 않습니다: flagged={tb.flagged}, failed={tb.failed}")
        return EXIT_NUMERICAL

    crossings = []
    if "avoided_crossings" in instance.outputs and tb.n_points >= 3:
        crossings = detect_avoided_crossings(tb)
    table = ResultTable.from_bundle(tb, _metadata(instance, args), crossings)

    out_format = args.format or ("json" if args.out.endswith(".json") else "csv")
    if out_format == "json":
        write_json(table.to_dict(), args.out)
    else:
        write_csv(table, args.out)
    if args.plot:
        write_svg(table, args.plot, title=family.description)
    return EXIT_OK


def _rigidity_at_offset(family, location: np.ndarray) -> Optional[float]:
    offset = location.copy()
    offset[0] += RIGIDITY_OFFSET
    try:
        return float(np.min(phase_rigidity(eigendecompose_with_retry(family(offset)))))
    except (NonConvergence, ValueError) as e:
        logger.warning(f"EP 근처 위상 강성 계산 실패: {e}")
        return None


def cmd_ep_find(args, settings: Settings) -> int:
    """2-파라미터 족에서 EP 를 찾는다. 실패해도 가장 좋은 점을 기록하고 4 를 반환한다."""
    instance = load_instance(args.instance)
    if instance.n_variables != 2:
        raise InstanceError("ep-find 는 변수가 두 개인 경로가 필요합니다.", location="sweep.variables")
    family = instance.family(args.seed)
    record = {"metadata": vars(_metadata(instance, args))}
    try:
        result = find_ep(family, args.guess)
    except EPSearchError as e:
        location = e.location if e.location is not None else np.asarray(args.guess, dtype=float)
        record.update(
            {
                "location": [float(x) for x in location],
                "residual": float(e.residual),
                "iterations": e.iterations,
                "rigidity_at_offset": None,
                "error": f"{type(e).__name__}: {e}",
            }
        )
        write_json(record, args.out)
        logger.error(f"EP 탐색 실패: {e}")
        print(f"EP search failed: {e}", file=sys.stderr)
        return EXIT_SEARCH

    record.update(
        {
            "location": [float(x) for x in result.location],
            "residual": result.residual,
            "iterations": result.iterations,
            "rigidity_at_offset": _rigidity_at_offset(family, result.location),
        }
    )
    write_json(record, args.out)
    print(f"location={record['location']} residual={result.residual:.3e}")
    return EXIT_OK if result.residual <= EP_ACCEPT_RESIDUAL else EXIT_SEARCH


def cmd_trap(args, settings: Settings) -> int:
    """n_level 인스턴스의 결합 세기 스윕. 보고서 JSON 과 α 별 폭 CSV 를 저장한다."""
    instance = load_instance(args.instance)
    if not isinstance(instance, NLevelInstance):
        raise InstanceError("trap 은 n_level 인스턴스만 받습니다.", location="kind")
    eh = instance.model(args.seed)
    alphas = instance.alphas()
    report = coupling_sweep(eh, alphas, max_workers=settings.max_workers)
    if report.flagged:
        flagged = [float(alphas[k]) for k in report.flagged]
        print(f"flagged alpha points: {flagged}", file=sys.stderr)
        logger.error(f"수치 실패로 결과를 쓰지 않습니다: {flagged}")
        return EXIT_NUMERICAL
    bics = find_bics(eh, alphas, instance.symmetry, max_workers=settings.max_workers)

    payload = {
        "metadata": vars(_metadata(instance, args)),
        "report": report.to_dict(),
        "bics": [b._asdict() for b in bics],
    }
    write_json(payload, args.out)

    widths = pd.DataFrame({"alpha": alphas})
    for lam in range(eh.n_levels):
        widths[f"gamma_{lam}"] = report.branch_widths[:, lam]
    widths_path = Path(args.out).with_suffix(".widths.csv")
    widths.to_csv(widths_path, index=False, float_format=CSV_FLOAT_FORMAT)
    logger.info(f"CSV 저장: {widths_path}")

    print(
        f"broad_count={report.broad_count} "
        f"trapped_widths_slope={report.trapped_widths_slope:.6f}"
    )
    return EXIT_OK


def cmd_encircle(args, settings: Settings) -> int:
    """EP 를 도는 루프의 순열과 벡터 겹침을 바퀴 수별로 저장한다."""
    instance = load_instance(args.instance)
    if instance.n_variables != 2:
        raise InstanceError("encircle 은 변수가 두 개인 경로가 필요합니다.", location="sweep.variables")
    family = instance.family(args.seed)
    steps = args.steps if args.steps is not None else settings.encircle_steps
    result = encircle_ep(
        family, args.center, args.radius, steps, args.loops, max_workers=settings.max_workers
    )
    payload = {
        "metadata": vars(_metadata(instance, args)),
        "center": [float(x) for x in args.center],
        "radius": result.radius,
        "steps": result.steps,
        "loops": args.loops,
        "permutation": result.permutation,
        "overlaps": _complex_pairs(result.vector_overlaps),
        "per_loop": {
            str(loop + 1): {"permutation": perm, "overlaps": _complex_pairs(overlaps)}
            for loop, (perm, overlaps) in enumerate(result.per_loop)
        },
    }
    write_json(payload, args.out)
    print(f"permutation={result.permutation}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ep-spectra",
        description="Spectra, exceptional points and resonance trapping of non-Hermitian matrices.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--instance", required=True, help="instance JSON file")
    common.add_argument("--out", required=True, help="output path")
    common.add_argument("--seed", type=int, default=None, help="U64 seed for random instances")
    common.add_argument("--no-timestamp", action="store_true", help="omit timestamp from metadata")
    common.add_argument(
        "--log-level", default=None, choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
    )

    subparsers = parser.add_subparsers(dest="command", required=True)

    p_sweep = subparsers.add_parser("sweep", parents=[common], help="track eigenvalues along a path")
    p_sweep.add_argument("--format", choices=["csv", "json"], default=None)
    p_sweep.add_argument("--plot", default=None, help="SVG plot of the trajectories")
    p_sweep.set_defaults(handler=cmd_sweep)

    p_ep = subparsers.add_parser("ep-find", parents=[common], help="locate an exceptional point")
    p_ep.add_argument("--guess", nargs=2, type=float, required=True, metavar=("X", "Y"))
    p_ep.set_defaults(handler=cmd_ep_find)

    p_trap = subparsers.add_parser("trap", parents=[common], help="resonance trapping sweep")
    p_trap.set_defaults(handler=cmd_trap)

    p_enc = subparsers.add_parser("encircle", parents=[common], help="encircle an exceptional point")
    p_enc.add_argument("--center", nargs=2, type=float, required=True, metavar=("X", "Y"))
    p_enc.add_argument("--radius", type=float, required=True)
    p_enc.add_argument("--loops", type=int, default=1)
    p_enc.add_argument("--steps", type=int, default=None)
    p_enc.set_defaults(handler=cmd_encircle)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    ep-spectra 진입점.

    Returns:
        int: 0 성공, 2 입력 오류, 3 수치 실패, 4 탐색 실패, 1 그 밖의 오류
    """
    args = build_parser().parse_args(argv)
    try:
        settings = Settings.from_env()
    except EnvironmentError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_INPUT
    configure_logging(args.log_level or settings.log_level)

    try:
        return args.handler(args, settings)
    except (EPSearchError, RadiusTooSmall, AmbiguousMatching) as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"search failed: {e}", file=sys.stderr)
        return EXIT_SEARCH
    except (NonConvergence, NormalizationSingular) as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as e:
        # InstanceError, InvalidModel 포함
        logger.error(f"{type(e).__name__}: {e}")
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as e:
        # 출력 경로 없음, 권한 등
        logger.error(f"{type(e).__name__}: {e}")
        print(f"output error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as e:
        logger.exception(f"An unexpected error occurred: {e}")
        return EXIT_FAILURE
