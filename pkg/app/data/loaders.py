import logging
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from app.errors import ArtifactIOError, ConfigurationError
from app.interface.config import ScenarioConfig
from app.tools.media import Gridded, TwoLayer, Uniform, VelocityModel, delayed_jump_spacing, spacing_from_velocity
from app.tools.nodes import SpacingField

logger = logging.getLogger(__name__)

# 지원되는 속도 모델 파일 형식
SCATTERED_EXTENSIONS = [".csv"]
GRID_EXTENSIONS = [".npy", ".txt", ".dat", ".asc"]


class VelocityFileLoader:
    """
    속도 모델 파일을 읽는 클래스

    .csv 는 x, z, v 열의 산점 샘플, .txt/.dat/.asc 는 `nx nz dx dz` 헤더가 붙은 격자, .npy 는 (nz, nx) 배열입니다.
    """

    def __init__(self, dx: Optional[float] = None, dz: Optional[float] = None, origin: Tuple[float, float] = (0.0, 0.0)):
        self.dx = dx
        self.dz = dz
        self.origin = origin

    def load(self, path: Path) -> Gridded:
        """
        파일을 읽어 Gridded 모델을 만듭니다.

        Raises:
            ArtifactIOError: 파일이 없거나 읽을 수 없는 경우
            ConfigurationError: .npy 격자에 dx/dz 가 없거나 값이 잘못된 경우
        """
        path = Path(path)
        if not path.exists():
            raise ArtifactIOError(f"속도 모델 파일이 없습니다: {path}")
        extension = path.suffix.lower()
        if extension in SCATTERED_EXTENSIONS:
            return self._load_scattered(path)
        if extension in GRID_EXTENSIONS:
            return self._load_grid(path)
        raise ArtifactIOError(f"지원되지 않는 속도 모델 형식: {extension}")

    def _load_scattered(self, path: Path) -> Gridded:
        try:
            data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        except (OSError, ValueError) as exc:
            raise ArtifactIOError(f"속도 샘플 CSV 를 읽을 수 없습니다: {path} ({exc})") from exc
        if data.shape[1] != 3:
            raise ArtifactIOError(f"속도 샘플 CSV 는 x, z, v 3개 열이 필요합니다: {path}")
        logger.info("속도 샘플 %d개 로드: %s", len(data), path)
        return Gridded(points=data[:, :2], values=data[:, 2])

    def _load_grid(self, path: Path) -> Gridded:
        if path.suffix.lower() == ".npy":
            if self.dx is None or self.dz is None:
                raise ConfigurationError(".npy 속도 격자에는 velocity.dx 와 velocity.dz 가 필요합니다.")
            try:
                values = np.load(path)
            except (OSError, ValueError) as exc:
                raise ArtifactIOError(f"속도 격자를 읽을 수 없습니다: {path} ({exc})") from exc
            logger.info("속도 격자 %s 로드: %s", values.shape, path)
            return Gridded.from_grid(values, self.dx, self.dz, origin=self.origin)
        values, dx, dz = read_ascii_grid(path)
        if self.dx is not None and self.dz is not None and (self.dx, self.dz) != (dx, dz):
            logger.warning("velocity.dx/dz (%g, %g) 대신 파일 헤더 값 (%g, %g) 을 사용합니다.", self.dx, self.dz, dx, dz)
        logger.info("속도 격자 %s 로드: %s", values.shape, path)
        return Gridded.from_grid(values, dx, dz, origin=self.origin)


def read_ascii_grid(path: Path) -> Tuple[np.ndarray, float, float]:
    """
    ASCII 격자 속도 파일을 읽습니다.

    첫 줄은 `nx nz dx dz` 헤더이고, 이어서 nx·nz 개 값이 행 우선(지표면 행부터)으로 나옵니다.

    Returns:
        Tuple[np.ndarray, float, float]: ((nz, nx) 속도, dx, dz)

    Raises:
        ArtifactIOError: 파일을 읽을 수 없거나 형식이 맞지 않는 경우
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            header = f.readline().split()
            body = f.read().split()
    except (OSError, UnicodeDecodeError) as exc:
        raise ArtifactIOError(f"속도 격자를 읽을 수 없습니다: {path} ({exc})") from exc
    if len(header) != 4:
        raise ArtifactIOError(f"첫 줄은 'nx nz dx dz' 헤더여야 합니다: {path}")
    try:
        nx, nz = int(header[0]), int(header[1])
        dx, dz = float(header[2]), float(header[3])
        values = np.array([float(token) for token in body])
    except ValueError as exc:
        raise ArtifactIOError(f"속도 격자에 숫자가 아닌 값이 있습니다: {path} ({exc})") from exc
    if nx < 1 or nz < 1:
        raise ArtifactIOError(f"격자 크기가 잘못되었습니다: nx={nx}, nz={nz}")
    if len(values) != nx * nz:
        raise ArtifactIOError(f"값 개수 {len(values)} 가 nx·nz = {nx * nz} 와 다릅니다: {path}")
    return values.reshape(nz, nx), dx, dz


def build_velocity_model(scenario: ScenarioConfig) -> VelocityModel:
    """시나리오의 [velocity] 섹션으로 속도 모델을 만듭니다."""
    spec = scenario.velocity
    if spec.model == "uniform":
        return Uniform(spec.v)
    if spec.model == "two_layer":
        return TwoLayer(spec.v_top, spec.v_bottom, spec.interface_depth)
    if spec.model == "gridded":
        loader = VelocityFileLoader(spec.dx, spec.dz, origin=(scenario.domain.x_min, scenario.domain.z_min))
        return loader.load(scenario.resolve_path(spec.file))
    raise ConfigurationError(f"알 수 없는 속도 모델: {spec.model}")


def build_spacing_field(scenario: ScenarioConfig, model: VelocityModel) -> SpacingField:
    """
    시나리오의 [spacing] 섹션으로 간격 함수를 만듭니다.
    """
    spec = scenario.spacing
    if spec.mode == "constant":
        return SpacingField.constant(spec.a)
    if spec.mode == "delayed_jump":
        return delayed_jump_spacing(spec.a_shallow, spec.a_deep, spec.jump_depth, spec.window)
    if spec.mode == "from_velocity":
        return spacing_from_velocity(
            model, scenario.source.sigma_r, spec.nodes_per_wavelength, spec.window, domain=scenario.domain
        )
    raise ConfigurationError(f"알 수 없는 간격 모드: {spec.mode}")
