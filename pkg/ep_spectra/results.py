import json
import logging
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import List, Optional, Sequence

import matplotlib
import numpy as np
import pandas as pd
from matplotlib.figure import Figure

from ep_spectra import __version__
from ep_spectra.trajectory import AvoidedCrossing, TrajectoryBundle

# 로깅 설정
logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = "%.17g"
SVG_HASH_SALT = "ep-spectra"


@dataclass
class ResultMetadata:
    instance_hash: str
    version: str = __version__
    timestamp: Optional[str] = None
    seed: Optional[int] = None
    kind: Optional[str] = None

    @staticmethod
    def create(instance_hash: str, kind: str, seed: Optional[int], timestamp: bool) -> "ResultMetadata":
        now = datetime.now(timezone.utc).isoformat(timespec="seconds") if timestamp else None
        return ResultMetadata(instance_hash=instance_hash, timestamp=now, seed=seed, kind=kind)

    @staticmethod
    def from_dict(data: dict) -> "ResultMetadata":
        return ResultMetadata(
            instance_hash=data["instance_hash"],
            version=data.get("version", __version__),
            timestamp=data.get("timestamp"),
            seed=data.get("seed"),
            kind=data.get("kind"),
        )


@dataclass(eq=False)
class ResultTable:
    """
    격자 순서의 결과 표. 열은 x 다음에 가지마다 (Re z, Im z, Γ, r) 이다.
    """

    grid: np.ndarray  # (n,)
    values: np.ndarray  # (n, dim) complex
    rigidity: np.ndarray  # (n, dim)
    metadata: ResultMetadata
    avoided_crossings: List[dict] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def columns(self) -> List[str]:
        names = ["x"]
        for lam in range(self.dim):
            names += [f"re_z_{lam}", f"im_z_{lam}", f"gamma_{lam}", f"r_{lam}"]
        return names

    def to_frame(self) -> pd.DataFrame:
        data = {"x": self.grid}
        for lam in range(self.dim):
            z = self.values[:, lam]
            data[f"re_z_{lam}"] = z.real
            data[f"im_z_{lam}"] = z.imag
            data[f"gamma_{lam}"] = -2.0 * z.imag
            data[f"r_{lam}"] = self.rigidity[:, lam]
        return pd.DataFrame(data, columns=self.columns())

    def to_dict(self) -> dict:
        return {
            "metadata": asdict(self.metadata),
            "columns": self.columns(),
            "grid": self.grid.tolist(),
            "values": [[[z.real, z.imag] for z in row] for row in self.values.tolist()],
            "rigidity": self.rigidity.tolist(),
            "avoided_crossings": self.avoided_crossings,
        }

    @staticmethod
    def from_dict(data: dict) -> "ResultTable":
        values = np.array(
            [[complex(re, im) for re, im in row] for row in data["values"]], dtype=complex
        )
        return ResultTable(
            grid=np.asarray(data["grid"], dtype=float),
            values=values.reshape(len(data["grid"]), -1),
            rigidity=np.asarray(data["rigidity"], dtype=float).reshape(len(data["grid"]), -1),
            metadata=ResultMetadata.from_dict(data["metadata"]),
            avoided_crossings=list(data.get("avoided_crossings", [])),
        )

    @staticmethod
    def from_bundle(
        tb: TrajectoryBundle,
        metadata: ResultMetadata,
        crossings: Sequence[AvoidedCrossing] = (),
    ) -> "ResultTable":
        return ResultTable(
            grid=np.asarray(tb.grid, dtype=float).reshape(tb.n_points),
            values=tb.branches.copy(),
            rigidity=tb.rigidity.copy(),
            metadata=metadata,
            avoided_crossings=[crossing_to_dict(c) for c in crossings],
        )

    def same_as(self, other: "ResultTable") -> bool:
        return (
            np.array_equal(self.grid, other.grid, equal_nan=True)
            and np.array_equal(self.values, other.values, equal_nan=True)
            and np.array_equal(self.rigidity, other.rigidity, equal_nan=True)
            and asdict(self.metadata) == asdict(other.metadata)
            and self.avoided_crossings == other.avoided_crossings
        )


def crossing_to_dict(c: AvoidedCrossing) -> dict:
    return {
        "pair": list(c.pair),
        "x_min": float(np.asarray(c.x_min).reshape(-1)[0]),
        "gap_min": c.gap_min,
        "rigidity_dip": c.rigidity_dip,
        "index": c.index,
        "mixing_range": c.mixing_range,
    }


def write_csv(table: ResultTable, path: str) -> None:
    table.to_frame().to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    logger.info(f"CSV 저장: {path} ({len(table.grid)} rows)")


def read_csv(path: str) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


def write_json(payload: dict, path: str) -> None:
    """정렬된 키, 들여쓰기 2 로 저장한다. 같은 입력이면 바이트 단위로 같은 파일이 나온다."""
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write("\n")
    logger.info(f"JSON 저장: {path}")


def read_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_svg(table: ResultTable, path: str, title: str = "") -> None:
    """
    복소 평면 위 (Re z, Im z) 궤적과 회피 교차 표시를 SVG 로 저장한다.

    Args:
        table (ResultTable): 결과 표
        path (str): 저장 경로
        title (str): 그림 제목
    """
    with matplotlib.rc_context({"svg.hashsalt": SVG_HASH_SALT}):
        fig = Figure(figsize=(6.0, 4.5))
        ax = fig.add_subplot()
        for lam in range(table.dim):
            z = table.values[:, lam]
            ax.plot(z.real, z.imag, marker=".", markersize=3, linewidth=1, label=f"branch {lam}")
        for crossing in table.avoided_crossings:
            k = crossing["index"]
            lam, mu = crossing["pair"]
            midpoint = (table.values[k, lam] + table.values[k, mu]) / 2
            ax.scatter([midpoint.real], [midpoint.imag], marker="x", color="black", zorder=3)
        ax.set_xlabel("Re z")
        ax.set_ylabel("Im z")
        if title:
            ax.set_title(title)
        if table.dim <= 10:
            ax.legend(loc="best", fontsize="small")
        fig.savefig(path, format="svg", metadata={"Date": None})
    logger.info(f"SVG 저장: {path}")
