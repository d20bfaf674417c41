import json
import time
import logging
from typing import Dict, List, Any, Optional

from rich.console import Console
from rich.logging import RichHandler

LOG_FORMAT = "%(message)s"


def setup_logging(verbose: bool = False, console: Optional[Console] = None) -> None:
    """
    rich 핸들러로 루트 로거를 설정합니다.

    Args:
        verbose: True 면 DEBUG, 아니면 WARNING 이상만 출력
        console: 출력에 사용할 rich 콘솔
    """
    level = logging.DEBUG if verbose else logging.WARNING
    handler = RichHandler(console=console, show_path=False, rich_tracebacks=True)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root = logging.getLogger()
    for existing in list(root.handlers):
        if isinstance(existing, RichHandler):
            root.removeHandler(existing)
    root.addHandler(handler)
    root.setLevel(logging.DEBUG)
    handler.setLevel(level)


def save_json(data: Dict[str, Any], file_path: str) -> None:
    """
    데이터를 JSON 파일로 저장합니다.

    Args:
        data: 저장할 데이터
        file_path: 저장할 파일 경로
    """
    with open(file_path, 'w', encoding='utf-8') as f:
        json.dump(data, f, ensure_ascii=False, indent=2, sort_keys=True)


def get_timestamp_str() -> str:
    """
    현재 시간을 기반으로 한 타임스탬프 문자열을 생성합니다.

    Returns:
        str: 타임스탬프 문자열 (예: "20240518_123456")
    """
    return time.strftime("%Y%m%d_%H%M%S")


def parse_float_list(text: str) -> List[float]:
    """쉼표로 구분된 실수 목록"""
    return [float(part) for part in text.split(",") if part.strip()]
