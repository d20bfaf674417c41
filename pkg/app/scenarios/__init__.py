from pathlib import Path
from typing import List

from app.errors import ArtifactIOError

SCENARIO_DIR = Path(__file__).resolve().parent
SCENARIO_SUFFIX = ".cfg"


def list_scenarios() -> List[str]:
    """패키지에 포함된 시나리오 이름 목록"""
    return sorted(path.stem for path in SCENARIO_DIR.glob(f"*{SCENARIO_SUFFIX}"))


def get_scenario_path(name: str) -> Path:
    """
    번들 시나리오 이름을 파일 경로로 바꿉니다.

    Args:
        name: 시나리오 이름 (예: "homogeneous", 확장자는 생략 가능)

    Returns:
        Path: 시나리오 파일 경로

    Raises:
        ArtifactIOError: 해당 이름의 시나리오가 없는 경우
    """
    stem = name[: -len(SCENARIO_SUFFIX)] if name.endswith(SCENARIO_SUFFIX) else name
    path = SCENARIO_DIR / f"{stem}{SCENARIO_SUFFIX}"
    if not path.exists():
        available = ", ".join(list_scenarios())
        raise ArtifactIOError(f"번들 시나리오를 찾을 수 없습니다: {name} (사용 가능: {available})")
    return path
