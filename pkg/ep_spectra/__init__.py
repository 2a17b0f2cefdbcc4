"""비에르미트 해밀토니안의 복소 스펙트럼, 예외점(EP), 위상 강성 분석 도구."""

__version__ = "0.1.0"
