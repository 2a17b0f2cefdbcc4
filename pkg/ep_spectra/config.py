import os
import logging
from dataclasses import dataclass
from typing import Optional

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


@dataclass(frozen=True)
class Settings:
    """환경 변수에서 읽어 오는 실행 설정"""

    log_level: str = "WARNING"  # 로그 레벨
    max_workers: int = 4  # 격자 계산용 스레드 수 (1 이면 순차 실행)
    encircle_steps: int = 256  # encircle 명령의 루프당 기본 스텝 수

    @staticmethod
    def from_env() -> "Settings":
        log_level = os.environ.get("EP_SPECTRA_LOG_LEVEL", "WARNING").upper()
        if log_level not in _LEVELS:
            raise EnvironmentError(
                f"EP_SPECTRA_LOG_LEVEL 값이 올바르지 않습니다: {log_level}"
            )
        try:
            max_workers = int(os.environ.get("EP_SPECTRA_MAX_WORKERS", "4"))
            encircle_steps = int(os.environ.get("EP_SPECTRA_ENCIRCLE_STEPS", "256"))
        except ValueError as e:
            raise EnvironmentError(f"정수 환경 변수를 해석할 수 없습니다: {e}") from e
        if max_workers < 1:
            raise EnvironmentError("EP_SPECTRA_MAX_WORKERS 는 1 이상이어야 합니다.")
        if encircle_steps < 64:
            raise EnvironmentError("EP_SPECTRA_ENCIRCLE_STEPS 는 64 이상이어야 합니다.")
        return Settings(
            log_level=log_level,
            max_workers=max_workers,
            encircle_steps=encircle_steps,
        )


def configure_logging(level: Optional[str] = None) -> None:
    """
    루트 로거에 stderr 핸들러를 한 번만 붙인다.

    Args:
        level (str, optional): 로그 레벨. 없으면 환경 설정값을 사용.
    """
    root = logging.getLogger()
    root.setLevel(level or Settings.from_env().log_level)
    if not any(getattr(h, "_ep_spectra", False) for h in root.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._ep_spectra = True
        root.addHandler(handler)
