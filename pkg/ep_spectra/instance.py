import hashlib
import json
import logging
from typing import Annotated, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError, model_validator

from ep_spectra.effective_hamiltonian import EffectiveHamiltonian, assemble
from ep_spectra.errors import InstanceError, InvalidModel
from ep_spectra.pt_dimer import PTDimer
from ep_spectra.trajectory import ParamFamily
from ep_spectra.two_level import TwoLevelSystem

# 로깅 설정
logger = logging.getLogger(__name__)

FiniteFloat = Annotated[float, Field(allow_inf_nan=False)]
ComplexPair = Tuple[FiniteFloat, FiniteFloat]  # [re, im]
Output = Literal["eigenvalues", "widths", "rigidity", "avoided_crossings"]


def to_complex(pair: ComplexPair) -> complex:
    return complex(pair[0], pair[1])


class _Strict(BaseModel):
    # 알 수 없는 키는 거부한다
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridSpec(_Strict):
    start: FiniteFloat
    stop: FiniteFloat
    count: int = Field(ge=2)
    scale: Literal["linear", "log"] = "linear"

    @model_validator(mode="after")
    def _check_log_bounds(self) -> "GridSpec":
        if self.scale == "log" and (self.start <= 0 or self.stop <= 0):
            raise ValueError("log 스케일 격자는 양수 경계가 필요합니다.")
        return self

    def values(self) -> np.ndarray:
        if self.scale == "log":
            return np.geomspace(self.start, self.stop, self.count)
        return np.linspace(self.start, self.stop, self.count)


class PathEntry(_Strict):
    """parameter = offset + Σ_j coefficients[j]·x_j"""

    parameter: str
    offset: ComplexPair = (0.0, 0.0)
    coefficients: List[ComplexPair]


class SweepSpec(_Strict):
    variables: List[str] = Field(default_factory=lambda: ["x"], min_length=1, max_length=2)
    path: List[PathEntry] = Field(min_length=1)
    grid: Optional[GridSpec] = None

    @model_validator(mode="after")
    def _check_path(self) -> "SweepSpec":
        names = [entry.parameter for entry in self.path]
        if len(set(names)) != len(names):
            raise ValueError(f"path 에 같은 파라미터가 중복되었습니다: {names}")
        for entry in self.path:
            if len(entry.coefficients) != len(self.variables):
                raise ValueError(
                    f"'{entry.parameter}' 의 coefficients 개수가 변수 개수 "
                    f"{len(self.variables)} 와 다릅니다."
                )
        return self

    def evaluate(self, x: np.ndarray) -> Dict[str, complex]:
        return {
            entry.parameter: to_complex(entry.offset)
            + sum(to_complex(c) * float(xj) for c, xj in zip(entry.coefficients, x))
            for entry in self.path
        }


class TwoLevelParameters(_Strict):
    eps1: ComplexPair = (0.0, 0.0)
    eps2: ComplexPair = (0.0, 0.0)
    omega: ComplexPair = (0.0, 0.0)


class PTDimerParameters(_Strict):
    epsilon: FiniteFloat = 0.0
    gamma: FiniteFloat = Field(default=0.0, ge=0)
    b: ComplexPair = (1.0, 0.0)
    passive: bool = False


class NLevelParameters(_Strict):
    """명시적 (h_b, v) 또는 시드 기반 랜덤 (n, k) 중 하나"""

    h_b: Optional[List[List[FiniteFloat]]] = None
    v: Optional[List[List[FiniteFloat]]] = None
    n: Optional[int] = Field(default=None, ge=2)
    k: Optional[int] = Field(default=None, ge=1)
    alpha: FiniteFloat = Field(default=0.0, ge=0)

    @model_validator(mode="after")
    def _check_source(self) -> "NLevelParameters":
        explicit = self.h_b is not None and self.v is not None
        random = self.n is not None and self.k is not None
        if explicit == random:
            raise ValueError("h_b/v 와 n/k 중 정확히 하나를 지정해야 합니다.")
        return self


_SWEEPABLE = {
    "two_level": ("eps1", "eps2", "omega"),
    "pt_dimer": ("epsilon", "gamma", "b"),
    "n_level": ("alpha",),
}
_REAL_PARAMETERS = ("epsilon", "gamma", "alpha")


class _InstanceBase(_Strict):
    sweep: SweepSpec
    outputs: List[Output] = Field(
        default_factory=lambda: ["eigenvalues", "widths", "rigidity", "avoided_crossings"]
    )
    seed: Optional[int] = Field(default=None, ge=0, lt=2**64)
    symmetry: Optional[List[int]] = None

    @model_validator(mode="after")
    def _check_sweepable(self):
        allowed = _SWEEPABLE[self.kind]
        for entry in self.sweep.path:
            if entry.parameter not in allowed:
                raise ValueError(
                    f"{self.kind} 에서 '{entry.parameter}' 는 스윕할 수 없습니다 "
                    f"(가능: {', '.join(allowed)})"
                )
        return self

    @property
    def n_variables(self) -> int:
        return len(self.sweep.variables)

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def instance_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def grid_values(self) -> np.ndarray:
        if self.sweep.grid is None:
            raise InstanceError("이 명령에는 sweep.grid 가 필요합니다.", location="sweep.grid")
        return self.sweep.grid.values()

    def _values(self, x: np.ndarray) -> Dict[str, complex]:
        values = self.sweep.evaluate(x)
        for name in _REAL_PARAMETERS:
            if name in values and values[name].imag != 0:
                raise InvalidModel(f"'{name}' 는 실수여야 합니다: {values[name]}")
        return values


class TwoLevelInstance(_InstanceBase):
    kind: Literal["two_level"]
    parameters: TwoLevelParameters = TwoLevelParameters()

    def family(self, seed: Optional[int] = None) -> ParamFamily:
        base = {name: to_complex(value) for name, value in self.parameters.model_dump().items()}

        def evaluator(p: np.ndarray):
            merged = {**base, **self._values(p)}
            return TwoLevelSystem(merged["eps1"], merged["eps2"], merged["omega"]).matrix()

        return ParamFamily(evaluator, dim=2, description="two_level", n_params=self.n_variables)


class PTDimerInstance(_InstanceBase):
    kind: Literal["pt_dimer"]
    parameters: PTDimerParameters = PTDimerParameters()

    def family(self, seed: Optional[int] = None) -> ParamFamily:
        params = self.parameters

        def evaluator(p: np.ndarray):
            values = self._values(p)
            dimer = PTDimer(
                epsilon=values["epsilon"].real if "epsilon" in values else params.epsilon,
                gamma=values["gamma"].real if "gamma" in values else params.gamma,
                b=values.get("b", to_complex(params.b)),
            )
            return dimer.matrix(passive=params.passive)

        return ParamFamily(evaluator, dim=2, description="pt_dimer", n_params=self.n_variables)


class NLevelInstance(_InstanceBase):
    kind: Literal["n_level"]
    parameters: NLevelParameters

    @model_validator(mode="after")
    def _check_single_variable(self) -> "NLevelInstance":
        if self.n_variables != 1:
            raise ValueError("n_level 은 결합 세기 α 하나만 스윕합니다.")
        return self

    def model(self, seed: Optional[int] = None) -> EffectiveHamiltonian:
        """
        유효 해밀토니안을 만든다. 랜덤 인스턴스는 seed 인자, 없으면 파일의 seed 를 쓴다.

        Raises:
            InstanceError: 랜덤 인스턴스인데 시드가 없을 때
        """
        params = self.parameters
        if params.h_b is not None:
            return EffectiveHamiltonian(np.array(params.h_b), np.array(params.v), params.alpha)
        seed = self.seed if seed is None else seed
        if seed is None:
            raise InstanceError("랜덤 n_level 인스턴스에는 seed 가 필요합니다.", location="seed")
        return EffectiveHamiltonian.from_random(params.n, params.k, seed, params.alpha)

    def alphas(self) -> np.ndarray:
        return np.array([self._values(np.atleast_1d(x))["alpha"].real for x in self.grid_values()])

    def family(self, seed: Optional[int] = None) -> ParamFamily:
        eh = self.model(seed)

        def evaluator(p: np.ndarray):
            return assemble(eh.with_alpha(self._values(p)["alpha"].real))

        return ParamFamily(
            evaluator, dim=eh.n_levels, description="n_level", n_params=self.n_variables
        )


Instance = Annotated[
    Union[TwoLevelInstance, PTDimerInstance, NLevelInstance], Field(discriminator="kind")
]
_ADAPTER = TypeAdapter(Instance)


def parse_instance(text: str) -> Union[TwoLevelInstance, PTDimerInstance, NLevelInstance]:
    """
    인스턴스 JSON 문자열을 검증한다.

    Raises:
        InstanceError: JSON 문법 오류(줄/열 포함) 또는 스키마 위반(필드 위치 포함)
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise InstanceError(f"JSON 파싱 실패: {e.msg}", line=e.lineno, column=e.colno) from e
    try:
        return _ADAPTER.validate_python(data)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        raise InstanceError(
            f"{first['msg']} ({e.error_count()} error(s))", location=location or None
        ) from e


def load_instance(path: str) -> Union[TwoLevelInstance, PTDimerInstance, NLevelInstance]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise InstanceError(f"인스턴스 파일을 읽을 수 없습니다: {e}", location=path) from e
    instance = parse_instance(text)
    logger.info(f"loaded {instance.kind} instance from {path} ({instance.instance_hash()[:12]})")
    return instance
