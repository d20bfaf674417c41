from dataclasses import dataclass
from typing import List, Optional


class MeshwaveError(Exception):
    """시뮬레이터에서 발생하는 모든 오류의 기본 클래스"""


class ConfigurationError(MeshwaveError, ValueError):
    """잘못된 입력 파라미터 (음수 간격, k > N, 길이 불일치 등)"""


@dataclass(frozen=True)
class ConfigIssue:
    """시나리오 파일 검증 중 발견된 문제 하나"""
    line: Optional[int]
    key: str
    message: str

    def __str__(self) -> str:
        where = f"{self.line}행" if self.line is not None else "-"
        return f"[{where}] {self.key}: {self.message}"


class ScenarioValidationError(ConfigurationError):
    """
    시나리오 검증 오류. 발견된 모든 문제를 한 번에 담습니다.

    Args:
        issues: 검증 문제 목록
    """

    def __init__(self, issues: List[ConfigIssue]):
        self.issues = list(issues)
        lines = "\n".join(f"  {issue}" for issue in self.issues)
        super().__init__(f"시나리오 검증 실패 ({len(self.issues)}건):\n{lines}")


class StabilityError(ConfigurationError):
    """CFL 안정성 조건 위반 (--force 없이 실행할 수 없음)"""

    def __init__(self, dt: float, dt_max: float):
        self.dt = dt
        self.dt_max = dt_max
        super().__init__(f"시간 간격 dt={dt:.4g} s 가 안정 한계 dt_max={dt_max:.4g} s 를 초과합니다.")


class SingularStencilError(MeshwaveError, ArithmeticError):
    """스텐실 연립방정식이 특이 행렬인 경우 (중복 지지 노드 등)"""

    def __init__(self, message: str, node_index: Optional[int] = None):
        self.node_index = node_index
        if node_index is not None:
            message = f"노드 {node_index}: {message}"
        super().__init__(message)


class NumericalBlowUpError(MeshwaveError, ArithmeticError):
    """시간 적분 중 NaN/Inf 가 검출된 경우"""

    def __init__(self, step_index: int):
        self.step_index = step_index
        super().__init__(f"{step_index}번째 스텝에서 NaN/Inf 가 검출되었습니다 (수치 발산).")


class ArtifactIOError(MeshwaveError, OSError):
    """모델 파일 읽기 또는 결과물 쓰기 실패"""


class StencilConditioningWarning(UserWarning):
    """스텐실 행렬의 조건수가 임계값을 넘었을 때의 경고"""
