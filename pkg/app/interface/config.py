import logging
import math
import os
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

from dotenv import load_dotenv

from app.errors import ArtifactIOError, ConfigIssue, ScenarioValidationError
from app.tools.nodes import DEFAULT_CANDIDATES, DEFAULT_SEPARATION, Rect
from app.tools.media import DEFAULT_SMOOTHING_WINDOW
from app.tools.rbf import DEFAULT_SHAPE, DEFAULT_SUPPORT_SIZE, SHAPE_MODES
from app.tools.source import DEFAULT_EPSILON, RickerSource

logger = logging.getLogger(__name__)

load_dotenv()

BACKENDS = ("rbffd", "fdm")
VELOCITY_MODELS = ("uniform", "two_layer", "gridded")
SPACING_MODES = ("constant", "delayed_jump", "from_velocity")
DEFAULT_OUTPUT_ROOT = "out"


def output_root() -> str:
    """결과 루트 디렉토리 (환경 변수 MESHWAVE_OUT)"""
    return os.getenv("MESHWAVE_OUT", DEFAULT_OUTPUT_ROOT)


def default_threads() -> Optional[int]:
    """스텐실 계산 스레드 수 (환경 변수 MESHWAVE_THREADS)"""
    value = os.getenv("MESHWAVE_THREADS")
    if not value:
        return None
    try:
        threads = int(value)
    except ValueError:
        logger.warning("MESHWAVE_THREADS 값이 정수가 아닙니다: %s", value)
        return None
    return max(threads, 1)


@dataclass(frozen=True)
class VelocitySpec:
    model: str
    v: Optional[float] = None
    v_top: Optional[float] = None
    v_bottom: Optional[float] = None
    interface_depth: Optional[float] = None
    file: Optional[str] = None
    dx: Optional[float] = None
    dz: Optional[float] = None


@dataclass(frozen=True)
class SpacingSpec:
    mode: str
    a: Optional[float] = None
    a_shallow: Optional[float] = None
    a_deep: Optional[float] = None
    jump_depth: Optional[float] = None
    window: float = DEFAULT_SMOOTHING_WINDOW
    nodes_per_wavelength: float = 10.0
    separation: float = DEFAULT_SEPARATION
    candidates: int = DEFAULT_CANDIDATES


@dataclass(frozen=True)
class SourceSpec:
    x: float
    z: float
    sigma_r: float
    s0: float = 1.0
    epsilon: float = DEFAULT_EPSILON
    t_delay: Optional[float] = None

    def build(self) -> RickerSource:
        return RickerSource(
            x=self.x, z=self.z, s0=self.s0, sigma_r=self.sigma_r, epsilon=self.epsilon, t_delay=self.t_delay
        )


@dataclass(frozen=True)
class TimeSpec:
    dt: float
    n_steps: int
    dt_fdm: Optional[float] = None
    cfl_constant: float = 0.7071067811865476


@dataclass(frozen=True)
class RBFSpec:
    support_size: int = DEFAULT_SUPPORT_SIZE
    shape: float = DEFAULT_SHAPE
    shape_mode: str = "absolute"


@dataclass(frozen=True)
class AbcSpec:
    i_max: int = 30


@dataclass(frozen=True)
class FdmSpec:
    h: Optional[float] = None


@dataclass(frozen=True)
class RecordSpec:
    snapshot_times: Tuple[float, ...] = ()
    receivers: Tuple[float, ...] = ()
    receiver_spacing: Optional[float] = None
    receiver_depth: Optional[float] = None
    seismogram_every: int = 1
    probes: Tuple[Tuple[float, float], ...] = ()
    binary_snapshots: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    """시나리오 파일 하나의 내용"""
    name: str
    domain: Rect
    velocity: VelocitySpec
    spacing: SpacingSpec
    source: SourceSpec
    time: TimeSpec
    backend: str = "rbffd"
    seed: int = 0
    rbf: RBFSpec = RBFSpec()
    abc: AbcSpec = AbcSpec()
    fdm: FdmSpec = FdmSpec()
    record: RecordSpec = RecordSpec()
    base_dir: Optional[str] = field(default=None, compare=False)

    @property
    def dt(self) -> float:
        """백엔드에 맞는 시간 간격"""
        if self.backend == "fdm" and self.time.dt_fdm is not None:
            return self.time.dt_fdm
        return self.time.dt

    def with_backend(self, backend: str) -> "ScenarioConfig":
        return replace(self, backend=backend)

    def resolve_path(self, path: str) -> Path:
        candidate = Path(path)
        if not candidate.is_absolute() and self.base_dir:
            candidate = Path(self.base_dir) / candidate
        return candidate


# 섹션별 키 정의: 키 -> (변환 함수, 필수 여부)
def _float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"유한한 수가 아닙니다: {text}")
    return value


def _int(text: str) -> int:
    value = _float(text)
    if value != int(value):
        raise ValueError(f"정수가 아닙니다: {text}")
    return int(value)


def _bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"참/거짓 값이 아닙니다: {text}")


def _float_list(text: str) -> Tuple[float, ...]:
    return tuple(_float(part) for part in re.split(r"[,\s]+", text.strip()) if part)


def _point_list(text: str) -> Tuple[Tuple[float, float], ...]:
    points = []
    for chunk in text.split(";"):
        parts = [part for part in re.split(r"[,\s]+", chunk.strip()) if part]
        if not parts:
            continue
        if len(parts) != 2:
            raise ValueError(f"'x z' 형식이 아닙니다: {chunk.strip()}")
        points.append((_float(parts[0]), _float(parts[1])))
    return tuple(points)


def _choice(options: Tuple[str, ...]) -> Callable[[str], str]:
    def convert(text: str) -> str:
        if text not in options:
            raise ValueError(f"허용 값 {', '.join(options)} 중 하나여야 합니다")
        return text
    return convert


SCHEMA: Dict[str, Dict[str, Tuple[Callable[[str], Any], bool]]] = {
    "scenario": {
        "name": (str, False),
        "backend": (_choice(BACKENDS), False),
        "seed": (_int, False),
    },
    "domain": {
        "x_min": (_float, True),
        "x_max": (_float, True),
        "z_min": (_float, True),
        "z_max": (_float, True),
    },
    "velocity": {
        "model": (_choice(VELOCITY_MODELS), True),
        "v": (_float, False),
        "v_top": (_float, False),
        "v_bottom": (_float, False),
        "interface_depth": (_float, False),
        "file": (str, False),
        "dx": (_float, False),
        "dz": (_float, False),
    },
    "spacing": {
        "mode": (_choice(SPACING_MODES), True),
        "a": (_float, False),
        "a_shallow": (_float, False),
        "a_deep": (_float, False),
        "jump_depth": (_float, False),
        "window": (_float, False),
        "nodes_per_wavelength": (_float, False),
        "separation": (_float, False),
        "candidates": (_int, False),
    },
    "source": {
        "x": (_float, True),
        "z": (_float, True),
        "sigma_r": (_float, True),
        "s0": (_float, False),
        "epsilon": (_float, False),
        "t_delay": (_float, False),
    },
    "time": {
        "dt": (_float, True),
        "n_steps": (_int, True),
        "dt_fdm": (_float, False),
        "cfl_constant": (_float, False),
    },
    "rbf": {
        "support_size": (_int, False),
        "shape": (_float, False),
        "shape_mode": (_choice(SHAPE_MODES), False),
    },
    "abc": {
        "i_max": (_int, False),
    },
    "fdm": {
        "h": (_float, False),
    },
    "record": {
        "snapshot_times": (_float_list, False),
        "receivers": (_float_list, False),
        "receiver_spacing": (_float, False),
        "receiver_depth": (_float, False),
        "seismogram_every": (_int, False),
        "probes": (_point_list, False),
        "binary_snapshots": (_bool, False),
    },
}

# 모델/모드별 추가 필수 키
CONDITIONAL_KEYS = {
    ("velocity", "model", "uniform"): ("v",),
    ("velocity", "model", "two_layer"): ("v_top", "v_bottom", "interface_depth"),
    ("velocity", "model", "gridded"): ("file",),
    ("spacing", "mode", "constant"): ("a",),
    ("spacing", "mode", "delayed_jump"): ("a_shallow", "a_deep", "jump_depth"),
}

_SECTION = re.compile(r"^\[\s*([A-Za-z_][A-Za-z0-9_]*)\s*\]$")
_ENTRY = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*)$")


class _Parsed:
    """파싱된 값과 각 키의 행 번호"""

    def __init__(self):
        self.values: Dict[str, Dict[str, Any]] = {section: {} for section in SCHEMA}
        self.lines: Dict[Tuple[str, str], int] = {}
        self.section_lines: Dict[str, int] = {}
        self.seen: set = set()

    def line(self, section: str, key: Optional[str] = None) -> Optional[int]:
        if key is None:
            return self.section_lines.get(section)
        return self.lines.get((section, key), self.section_lines.get(section))

    def get(self, section: str, key: str, default: Any = None) -> Any:
        return self.values[section].get(key, default)


def _tokenize(text: str, issues: List[ConfigIssue]) -> _Parsed:
    parsed = _Parsed()
    section: Optional[str] = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        match = _SECTION.match(line)
        if match:
            section = match.group(1)
            if section not in SCHEMA:
                issues.append(ConfigIssue(number, section, "알 수 없는 섹션입니다"))
                section = ""
                continue
            parsed.section_lines.setdefault(section, number)
            continue
        match = _ENTRY.match(line)
        if not match:
            issues.append(ConfigIssue(number, line, "'key = value' 형식이 아닙니다"))
            continue
        key, value = match.group(1), match.group(2).strip()
        if section is None:
            issues.append(ConfigIssue(number, key, "섹션 밖에 있는 키입니다"))
            continue
        if not section:
            continue
        spec = SCHEMA[section].get(key)
        qualified = f"{section}.{key}"
        if spec is None:
            issues.append(ConfigIssue(number, qualified, "알 수 없는 키입니다"))
            continue
        if (section, key) in parsed.lines:
            issues.append(ConfigIssue(number, qualified, f"{parsed.lines[(section, key)]}행에서 이미 정의되었습니다"))
            continue
        converter, _ = spec
        parsed.seen.add((section, key))
        try:
            parsed.values[section][key] = converter(value)
        except ValueError as exc:
            issues.append(ConfigIssue(number, qualified, f"잘못된 값 '{value}': {exc}"))
            continue
        parsed.lines[(section, key)] = number
    return parsed


def _check_required(parsed: _Parsed, issues: List[ConfigIssue]) -> None:
    for section, keys in SCHEMA.items():
        for key, (_, required) in keys.items():
            if required and (section, key) not in parsed.seen:
                issues.append(ConfigIssue(None, f"{section}.{key}", "필수 키가 없습니다"))
    for (section, selector, option), keys in CONDITIONAL_KEYS.items():
        if parsed.get(section, selector) != option:
            continue
        for key in keys:
            if key not in parsed.values[section]:
                issues.append(
                    ConfigIssue(parsed.line(section, selector), f"{section}.{key}", f"{selector}={option} 에 필요한 키가 없습니다")
                )


def _check_values(parsed: _Parsed, issues: List[ConfigIssue]) -> None:
    def positive(section: str, key: str, allow_zero: bool = False):
        value = parsed.get(section, key)
        if value is None:
            return
        if not math.isfinite(value) or value < 0 or (value == 0 and not allow_zero):
            condition = "0 이상" if allow_zero else "양수"
            issues.append(ConfigIssue(parsed.line(section, key), f"{section}.{key}", f"{condition}여야 합니다 ({value})"))

    for section, key in [
        ("velocity", "v"), ("velocity", "v_top"), ("velocity", "v_bottom"), ("velocity", "dx"), ("velocity", "dz"),
        ("spacing", "a"), ("spacing", "a_shallow"), ("spacing", "a_deep"), ("spacing", "window"),
        ("spacing", "nodes_per_wavelength"), ("spacing", "separation"),
        ("source", "sigma_r"), ("source", "epsilon"),
        ("time", "dt"), ("time", "dt_fdm"), ("time", "cfl_constant"),
        ("rbf", "shape"), ("fdm", "h"), ("record", "receiver_spacing"), ("record", "seismogram_every"),
    ]:
        positive(section, key)
    for section, key in [("time", "n_steps"), ("abc", "i_max"), ("source", "t_delay"), ("record", "receiver_depth")]:
        positive(section, key, allow_zero=True)

    separation = parsed.get("spacing", "separation")
    if separation is not None and separation >= 1:
        issues.append(ConfigIssue(parsed.line("spacing", "separation"), "spacing.separation", "1 보다 작아야 합니다"))
    support_size = parsed.get("rbf", "support_size")
    if support_size is not None and support_size < 3:
        issues.append(ConfigIssue(parsed.line("rbf", "support_size"), "rbf.support_size", "3 이상이어야 합니다"))
    candidates = parsed.get("spacing", "candidates")
    if candidates is not None and candidates < 3:
        issues.append(ConfigIssue(parsed.line("spacing", "candidates"), "spacing.candidates", "3 이상이어야 합니다"))

    bounds = [parsed.get("domain", key) for key in ("x_min", "x_max", "z_min", "z_max")]
    if None in bounds:
        return
    x_min, x_max, z_min, z_max = bounds
    if not x_min < x_max:
        issues.append(ConfigIssue(parsed.line("domain", "x_max"), "domain.x_max", "x_min 보다 커야 합니다"))
    if not z_min < z_max:
        issues.append(ConfigIssue(parsed.line("domain", "z_max"), "domain.z_max", "z_min 보다 커야 합니다"))

    sx, sz = parsed.get("source", "x"), parsed.get("source", "z")
    if sx is not None and sz is not None and not (x_min < sx < x_max and z_min < sz < z_max):
        issues.append(ConfigIssue(parsed.line("source", "x"), "source", f"음원 ({sx}, {sz}) 이 영역 내부에 있지 않습니다"))
    for x in parsed.get("record", "receivers", ()):
        if not x_min <= x <= x_max:
            issues.append(ConfigIssue(parsed.line("record", "receivers"), "record.receivers", f"수신기 x={x} 가 영역 밖입니다"))
    for x, z in parsed.get("record", "probes", ()):
        if not (x_min <= x <= x_max and z_min <= z <= z_max):
            issues.append(ConfigIssue(parsed.line("record", "probes"), "record.probes", f"프로브 ({x}, {z}) 가 영역 밖입니다"))
    depth = parsed.get("record", "receiver_depth")
    if depth is not None and depth > z_max - z_min:
        issues.append(ConfigIssue(parsed.line("record", "receiver_depth"), "record.receiver_depth", "영역 깊이보다 깊습니다"))

    dt, n_steps = parsed.get("time", "dt"), parsed.get("time", "n_steps")
    if dt is not None and n_steps is not None and dt > 0:
        t_end = max(dt, parsed.get("time", "dt_fdm") or dt) * n_steps
        for t in parsed.get("record", "snapshot_times", ()):
            if t < 0 or t > t_end * (1 + 1e-9):
                issues.append(
                    ConfigIssue(parsed.line("record", "snapshot_times"), "record.snapshot_times", f"시각 {t} s 가 [0, {t_end:.6g}] 밖입니다")
                )


def _build(parsed: _Parsed, name: str, base_dir: Optional[str]) -> ScenarioConfig:
    def section(cls, key: str):
        return cls(**parsed.values[key])

    scenario = parsed.values["scenario"]
    domain = Rect(**parsed.values["domain"])
    return ScenarioConfig(
        name=scenario.get("name", name),
        backend=scenario.get("backend", "rbffd"),
        seed=scenario.get("seed", 0),
        domain=domain,
        velocity=section(VelocitySpec, "velocity"),
        spacing=section(SpacingSpec, "spacing"),
        source=section(SourceSpec, "source"),
        time=section(TimeSpec, "time"),
        rbf=section(RBFSpec, "rbf"),
        abc=section(AbcSpec, "abc"),
        fdm=section(FdmSpec, "fdm"),
        record=section(RecordSpec, "record"),
        base_dir=base_dir,
    )


def parse_config(text: str, name: str = "scenario", base_dir: Optional[str] = None) -> ScenarioConfig:
    """
    시나리오 텍스트를 파싱하고 검증합니다.

    Args:
        text: 시나리오 파일 내용
        name: [scenario] name 이 없을 때 쓸 이름
        base_dir: 상대 경로(속도 모델 파일)의 기준 디렉토리

    Returns:
        ScenarioConfig: 검증된 시나리오

    Raises:
        ScenarioValidationError: 발견된 모든 문제를 행 번호와 함께 담은 오류
    """
    issues: List[ConfigIssue] = []
    parsed = _tokenize(text, issues)
    _check_required(parsed, issues)
    _check_values(parsed, issues)
    if issues:
        raise ScenarioValidationError(issues)
    return _build(parsed, name, base_dir)


def load_config(path: str) -> ScenarioConfig:
    """
    시나리오 파일을 읽어 파싱합니다.

    Raises:
        ArtifactIOError: 파일을 읽을 수 없는 경우
        ScenarioValidationError: 검증 실패
    """
    file_path = Path(path)
    try:
        text = file_path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ArtifactIOError(f"시나리오 파일을 읽을 수 없습니다: {path} ({exc})") from exc
    return parse_config(text, name=file_path.stem, base_dir=str(file_path.resolve().parent))


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return "; ".join(" ".join(repr(float(v)) for v in point) for point in value)
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def dump_config(config: ScenarioConfig) -> str:
    """
    시나리오를 다시 파싱 가능한 텍스트로 변환합니다. 기본값과 같은 키도 모두 기록합니다.
    """
    blocks = [
        ("scenario", {"name": config.name, "backend": config.backend, "seed": config.seed}),
        ("domain", {
            "x_min": float(config.domain.x_min), "x_max": float(config.domain.x_max),
            "z_min": float(config.domain.z_min), "z_max": float(config.domain.z_max),
        }),
    ]
    for key, spec in [
        ("velocity", config.velocity), ("spacing", config.spacing), ("source", config.source),
        ("time", config.time), ("rbf", config.rbf), ("abc", config.abc), ("fdm", config.fdm),
        ("record", config.record),
    ]:
        blocks.append((key, {f.name: getattr(spec, f.name) for f in fields(spec)}))

    lines: List[str] = []
    for section, values in blocks:
        lines.append(f"[{section}]")
        for key, value in values.items():
            if value is None or value == ():
                continue
            lines.append(f"{key} = {_format(value)}")
        lines.append("")
    return "\n".join(lines)
