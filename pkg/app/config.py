"""
配置管理模块

从单个 YAML 配置文件加载仿真、控制、训练与实验配置，
每个配置段由一个 pydantic-settings 模型校验；
环境变量（前缀 PRUNE_<SECTION>_）优先级高于配置文件。

未知键一律视为错误（防止增益名拼写错误被静默忽略）。
"""

import math
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Type, TypeVar, Union

import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource

from .exceptions import ConfigError


# 项目根目录
PROJECT_ROOT = Path(__file__).parent.parent
CONFIG_DIR = PROJECT_ROOT / "config"
DEFAULT_CONFIG_PATH = CONFIG_DIR / "config.yaml"

CONTROLLER_IDS = ("HC", "CL", "OL", "OL-")

SectionT = TypeVar("SectionT", bound=BaseModel)


def load_yaml_config(config_path: Optional[Path] = None, required: bool = False) -> Dict[str, Any]:
    """
    加载YAML配置文件

    Args:
        config_path: 配置文件路径，为空时使用默认路径
        required: 文件不存在时是否报错

    Returns:
        配置字典
    """
    if config_path is None:
        config_path = DEFAULT_CONFIG_PATH

    config_path = Path(config_path)
    if not config_path.exists():
        if required:
            raise ConfigError(f"配置文件不存在: {config_path}")
        return {}

    try:
        with open(config_path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"配置文件解析失败 {config_path}: {e}") from e

    if not isinstance(data, dict):
        raise ConfigError(f"配置文件顶层必须是映射: {config_path}")
    return data


def validated(model_cls: Type[SectionT], data: Union[BaseModel, Dict[str, Any], None]) -> SectionT:
    """
    按配置模型重新校验一段配置，校验失败统一转换为 ConfigError
    """
    if isinstance(data, BaseModel):
        data = data.model_dump()
    try:
        return model_cls(**(data or {}))
    except ValidationError as e:
        raise ConfigError(f"配置段 {model_cls.__name__} 非法: {e}") from e


class _Section(BaseSettings):
    """配置段基类：环境变量覆盖配置文件，禁止未知键"""

    model_config = {"extra": "forbid", "populate_by_name": True}

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: Type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> Tuple[PydanticBaseSettingsSource, ...]:
        return (env_settings, init_settings)


def _check_len(values: List[float], n: int, name: str) -> List[float]:
    if len(values) != n:
        raise ValueError(f"{name} 需要 {n} 个分量，实际 {len(values)}")
    if not all(math.isfinite(v) for v in values):
        raise ValueError(f"{name} 含有非有限值")
    return values


def _check_range(values: List[float], name: str, positive: bool = True) -> List[float]:
    _check_len(values, 2, name)
    lo, hi = values
    if lo > hi:
        raise ValueError(f"{name} 下界大于上界: {values}")
    if positive and lo <= 0:
        raise ValueError(f"{name} 必须为正: {values}")
    return values


class AppSettings(_Section):
    """应用配置"""

    name: str = Field(default="pruning-sim")
    version: str = Field(default="1.0.0")
    output_dir: str = Field(default="./outputs")

    model_config = {"env_prefix": "PRUNE_APP_", "extra": "forbid"}


class LoggingSettings(_Section):
    """日志配置"""

    level: str = Field(default="INFO")
    format: str = Field(default="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
    file_enabled: bool = Field(default=False)
    file_path: str = Field(default="./logs/pruning.log")

    model_config = {"env_prefix": "PRUNE_LOGGING_", "extra": "forbid"}


class SpindleParams(BaseModel):
    """纺锤形树模型生成参数"""

    leader_height: float = Field(default=1.6, gt=0)
    leader_segments: int = Field(default=5, ge=4, le=6)
    leader_base_radius: float = Field(default=0.014, gt=0)
    leader_tip_radius: float = Field(default=0.008, gt=0)
    # 主干每段端点在 x/z 方向的随机偏移幅度
    leader_wobble: float = Field(default=0.008, ge=0)
    branch_count_range: List[int] = Field(default=[3, 8])
    branch_height_range: List[float] = Field(default=[0.35, 1.45])
    branch_min_gap: float = Field(default=0.05, ge=0)
    branch_length_range: List[float] = Field(default=[0.18, 0.30])
    branch_segments: int = Field(default=3, ge=1)
    branch_base_radius: float = Field(default=0.006, gt=0)
    branch_tip_radius: float = Field(default=0.003, gt=0)
    elevation_range_deg: List[float] = Field(default=[10.0, 40.0])
    azimuth_limit_deg: float = Field(default=25.0, ge=0, lt=90)
    bend_deg: float = Field(default=8.0, ge=0)
    target_arclength: float = Field(default=0.03, gt=0)
    # 侧枝着生高度与铁丝高度保持的最小间距
    wire_clearance: float = Field(default=0.08, ge=0)

    model_config = {"extra": "forbid"}

    @field_validator("branch_count_range")
    @classmethod
    def _branch_count(cls, v: List[int]) -> List[int]:
        if len(v) != 2 or not (3 <= v[0] <= v[1] <= 8):
            raise ValueError(f"侧枝数量范围必须落在 [3, 8] 内: {v}")
        return v

    @field_validator("branch_height_range", "branch_length_range")
    @classmethod
    def _positive_ranges(cls, v: List[float]) -> List[float]:
        return _check_range(v, "range")

    @field_validator("elevation_range_deg")
    @classmethod
    def _elevation(cls, v: List[float]) -> List[float]:
        return _check_range(v, "elevation_range_deg", positive=False)

    @model_validator(mode="after")
    def _radii(self) -> "SpindleParams":
        if self.branch_base_radius >= self.leader_tip_radius:
            raise ValueError("侧枝半径必须小于主干半径")
        if self.branch_length_range[0] / self.branch_segments <= self.target_arclength + 0.005:
            raise ValueError("侧枝首段长度必须大于目标弧长")
        return self


class SceneSettings(_Section):
    """场景配置：棚架、铁丝、纺锤形树与刀具轮廓"""

    frame_width: float = Field(default=2.4, gt=0)
    frame_height: float = Field(default=1.9, gt=0)
    post_width: float = Field(default=0.09, gt=0)
    wire_heights: List[float] = Field(default=[0.6, 1.2])
    wire_z: float = Field(default=0.02)
    wire_radius: float = Field(default=0.0015, gt=0)
    spindle_count: int = Field(default=3, ge=1)
    spindle_spacing: float = Field(default=0.6, gt=0)
    model_count: int = Field(default=8, ge=1, le=8)
    spindle: SpindleParams = Field(default_factory=SpindleParams)

    # 刀具轮廓（刀具 yz 平面，单位 m）
    mouth_opening: float = Field(default=0.030, gt=0)
    mouth_depth: float = Field(default=0.060, gt=0)
    seat_half_width: float = Field(default=0.0048, gt=0)
    seat_depth: float = Field(default=0.0005, gt=0)
    success_extension: float = Field(default=0.010, ge=0)
    failure_band: float = Field(default=0.010, gt=0)
    blade_thickness: float = Field(default=0.001, gt=0)
    mouth_half_width_x: float = Field(default=0.015, gt=0)

    model_config = {"env_prefix": "PRUNE_SCENE_", "extra": "forbid"}

    @field_validator("wire_heights")
    @classmethod
    def _two_wires(cls, v: List[float]) -> List[float]:
        if len(v) != 2 or any(h <= 0 for h in v):
            raise ValueError(f"棚架需要恰好两根正高度的铁丝: {v}")
        return v

    @model_validator(mode="after")
    def _layout(self) -> "SceneSettings":
        if (self.spindle_count - 1) * self.spindle_spacing >= self.frame_width - self.post_width:
            raise ValueError("纺锤树排布超出棚架宽度")
        if self.seat_half_width >= self.mouth_opening / 2:
            raise ValueError("刀座宽度必须小于刀口开口")
        if self.spindle.leader_height >= self.frame_height:
            raise ValueError("主干高度必须低于棚架高度")
        return self


class CameraSettings(_Section):
    """虚拟相机配置"""

    width: int = Field(default=424, gt=0)
    height: int = Field(default=240, gt=0)
    horizontal_fov_deg: float = Field(default=69.0, gt=0, lt=180)
    # 相机原点在刀具坐标系中的位置
    mount_translation: List[float] = Field(default=[0.02, 0.05, -0.10])
    draw_cutter: bool = Field(default=True)
    light_direction: List[float] = Field(default=[-0.3, -0.8, 0.5])
    ambient: float = Field(default=0.3, ge=0, le=1)
    background_value: int = Field(default=64, ge=0, le=255)
    # 裁剪窗口 [x0, y0, w, h] 与缩放目标
    crop: List[int] = Field(default=[64, 60, 360, 180])
    obs_width: int = Field(default=160, gt=0)
    obs_height: int = Field(default=80, gt=0)
    # 训练时再缩小一半（160x80 -> 80x40）
    obs_downscale: bool = Field(default=True)

    model_config = {"env_prefix": "PRUNE_CAMERA_", "extra": "forbid"}

    @field_validator("mount_translation", "light_direction")
    @classmethod
    def _vec3(cls, v: List[float]) -> List[float]:
        return _check_len(v, 3, "vector")

    @model_validator(mode="after")
    def _crop(self) -> "CameraSettings":
        x0, y0, w, h = self.crop
        if x0 < 0 or y0 < 0 or w <= 0 or h <= 0 or x0 + w > self.width or y0 + h > self.height:
            raise ValueError(f"裁剪窗口超出图像范围: {self.crop}")
        return self


class EnvSettings(_Section):
    """视觉阶段 MDP 配置"""

    horizon: float = Field(default=1.0, gt=0)
    dt: float = Field(default=0.10, gt=0)
    n_steps: int = Field(default=10, gt=0)
    d_min: float = Field(default=0.10, gt=0)
    s_forward: float = Field(default=0.30, gt=0)
    slow_s_forward: float = Field(default=0.03, gt=0)
    start_distance_range: List[float] = Field(default=[0.15, 0.20])
    lateral_jitter: float = Field(default=0.01, ge=0)
    yaw_jitter_deg: float = Field(default=3.0, ge=0)
    substep_dt: float = Field(default=0.002, gt=0)
    max_placement_attempts: int = Field(default=20, ge=1)
    # 关闭后观测返回全零图像（用于大批量统计）
    render: bool = Field(default=True)

    model_config = {"env_prefix": "PRUNE_ENV_", "extra": "forbid"}

    @field_validator("start_distance_range")
    @classmethod
    def _start_range(cls, v: List[float]) -> List[float]:
        return _check_range(v, "start_distance_range")

    @model_validator(mode="after")
    def _steps(self) -> "EnvSettings":
        if abs(self.n_steps * self.dt - self.horizon) > 1e-9:
            raise ValueError(f"N_t·dt 必须等于 T: {self.n_steps}·{self.dt} != {self.horizon}")
        ratio = self.dt / self.substep_dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("dt 必须是 substep_dt 的整数倍")
        if self.lateral_jitter * math.sqrt(2) >= self.start_distance_range[0]:
            raise ValueError("横向抖动过大")
        return self

    def slow_mode(self) -> "EnvSettings":
        """慢速模式：s 降为 slow_s_forward，T 按比例放大以保持行程不变"""
        scale = self.s_forward / self.slow_s_forward
        n_steps = int(round(self.n_steps * scale))
        data = self.model_dump()
        data.update(
            s_forward=self.slow_s_forward,
            horizon=n_steps * self.dt,
            n_steps=n_steps,
        )
        return EnvSettings(**data)


class ArchConfig(BaseModel):
    """策略网络结构"""

    # 每层 [输出通道, 卷积核, 步长]
    conv_layers: List[List[int]] = Field(default=[[32, 8, 4], [64, 4, 2], [64, 3, 1]])
    feature_dim: int = Field(default=512, gt=0)
    in_channels: int = Field(default=3, gt=0)
    input_height: int = Field(default=40, gt=0)
    input_width: int = Field(default=80, gt=0)
    log_std_init: float = Field(default=0.0)

    model_config = {"extra": "forbid"}

    @field_validator("conv_layers")
    @classmethod
    def _conv(cls, v: List[List[int]]) -> List[List[int]]:
        if len(v) != 3:
            raise ValueError("特征提取器固定为三层卷积")
        for layer in v:
            if len(layer) != 3 or min(layer) <= 0:
                raise ValueError(f"卷积层定义非法: {layer}")
        return v


class TrainConfig(BaseModel):
    """PPO 训练超参数"""

    clip_ratio: float = Field(default=0.2, gt=0, lt=1)
    gamma: float = Field(default=0.99, gt=0, le=1)
    gae_lambda: float = Field(default=0.95, gt=0, le=1)
    learning_rate: float = Field(default=3e-4, gt=0)
    adam_eps: float = Field(default=1e-5, gt=0)
    rollout_horizon: int = Field(default=2048, gt=0)
    minibatch_size: int = Field(default=64, gt=0)
    epochs_per_update: int = Field(default=10, gt=0)
    total_steps: int = Field(default=200_000, ge=0)
    vf_coef: float = Field(default=0.5, ge=0)
    ent_coef: float = Field(default=0.0, ge=0)
    max_grad_norm: float = Field(default=0.5, gt=0)
    seed: int = Field(default=0, ge=0)

    model_config = {"extra": "forbid"}


class PolicySettings(_Section):
    """策略网络与训练配置"""

    arch: ArchConfig = Field(default_factory=ArchConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    # 训练场景池：每个场景的纺锤树数量与场景个数
    train_spindle_count: int = Field(default=4, ge=1)
    train_scene_count: int = Field(default=8, ge=1)
    eval_episodes: int = Field(default=200, ge=1)
    # 保留场景种子偏移，与训练场景不重叠
    heldout_seed_offset: int = Field(default=100_000, ge=1)

    model_config = {"env_prefix": "PRUNE_POLICY_", "extra": "forbid"}


class AdmittanceSettings(_Section):
    """导纳控制器增益与终止判据"""

    mass: List[float] = Field(default=[0.0, 0.0, 0.0, 0.0, 100.0, 10.0])
    damping: List[float] = Field(default=[0.0, 0.0, 0.0, 0.0, 400.0, 250.0])
    selection: List[int] = Field(default=[0, 0, 0, 0, 1, 1])
    desired_wrench: List[float] = Field(default=[0.0, 0.0, 0.0, 0.0, 0.0, 2.0])
    deadzone: float = Field(default=0.2, ge=0)
    inner_dt: float = Field(default=0.002, gt=0)
    filter_taps: int = Field(default=51, gt=0)
    torque_tolerance: float = Field(default=0.0025, gt=0)
    motion_tolerance: float = Field(default=0.0005, gt=0)
    window_s: float = Field(default=1.0, gt=0)
    desired_torque_x: float = Field(default=0.0)

    model_config = {"env_prefix": "PRUNE_ADMITTANCE_", "extra": "forbid"}

    @field_validator("mass", "damping", "desired_wrench")
    @classmethod
    def _vec6(cls, v: List[float]) -> List[float]:
        return _check_len(v, 6, "wrench vector")

    @field_validator("selection")
    @classmethod
    def _selection(cls, v: List[int]) -> List[int]:
        if len(v) != 6 or any(s not in (0, 1) for s in v):
            raise ValueError(f"选择矩阵对角元必须为 0/1 且长度为 6: {v}")
        return v

    @model_validator(mode="after")
    def _stability(self) -> "AdmittanceSettings":
        for i, sel in enumerate(self.selection):
            if not sel:
                continue
            if self.mass[i] <= 0:
                raise ValueError(f"被选轴 {i} 的虚拟质量必须为正")
            if self.damping[i] * self.inner_dt >= self.mass[i]:
                raise ValueError(f"被选轴 {i} 离散不稳定: B·dt >= M")
        return self


class PlantSettings(_Section):
    """接触对象（柔性枝条 + 力传感器）配置"""

    branch_stiffness: float = Field(default=200.0, gt=0)
    branch_damping: float = Field(default=2.0, ge=0)
    branch_mass: float = Field(default=0.05, gt=0)
    branch_radius: float = Field(default=0.005, gt=0)
    contact_stiffness: float = Field(default=2000.0, gt=0)
    leader_stiffness: float = Field(default=1000.0, gt=0)
    wire_stiffness: float = Field(default=2000.0, gt=0)
    force_noise_std: float = Field(default=0.05, ge=0)
    torque_noise_std: float = Field(default=0.0005, ge=0)
    rate_hz: float = Field(default=500.0, gt=0)

    model_config = {"env_prefix": "PRUNE_PLANT_", "extra": "forbid"}


class SupervisorSettings(_Section):
    """混合监督器与对比控制器配置"""

    contact_threshold: float = Field(default=0.75, gt=0)
    interact_timeout: float = Field(default=30.0, gt=0)
    creep_distance: float = Field(default=0.10, ge=0)
    ol_gain: float = Field(default=2.0, gt=0)
    ol_max_speed: float = Field(default=0.03, gt=0)
    ol_stop_tolerance: float = Field(default=0.001, gt=0)
    ol_timeout: float = Field(default=30.0, gt=0)
    cl_overshoot: float = Field(default=0.10, ge=0)
    home_distance: float = Field(default=0.175, gt=0)
    start_distance: float = Field(default=0.15, gt=0)

    model_config = {"env_prefix": "PRUNE_SUPERVISOR_", "extra": "forbid"}


class EstimateSettings(_Section):
    """目标深度估计误差与标定扰动模型"""

    depth_bias: float = Field(default=-0.015)
    noise_std: float = Field(default=0.005, ge=0)
    miscalibration_translation: float = Field(default=0.01, ge=0)
    miscalibration_rotation_deg: float = Field(default=5.0, ge=0)

    model_config = {"env_prefix": "PRUNE_ESTIMATE_", "extra": "forbid"}


class HarnessSettings(_Section):
    """实验编排配置"""

    controllers: List[str] = Field(default=list(CONTROLLER_IDS))
    n_targets: int = Field(default=7, ge=1)
    trials_per_target: int = Field(default=4, ge=1)
    master_seed: int = Field(default=7, ge=0)
    output_dir: str = Field(default="./outputs")
    policy_checkpoint: str = Field(default="./outputs/policy.ckpt")

    model_config = {"env_prefix": "PRUNE_HARNESS_", "extra": "forbid"}

    @field_validator("controllers")
    @classmethod
    def _controllers(cls, v: List[str]) -> List[str]:
        unknown = [c for c in v if c not in CONTROLLER_IDS]
        if unknown:
            raise ValueError(f"未知控制器: {unknown}，可选 {list(CONTROLLER_IDS)}")
        if len(set(v)) != len(v):
            raise ValueError(f"控制器重复: {v}")
        return v


class TaskQueueSettings(_Section):
    """任务队列配置"""

    # 最大并行工作者数量，0表示使用 CPU 核数
    max_workers: int = Field(default=1, ge=0)
    # 执行模式：thread (默认) 或 process
    execution_mode: str = Field(default="thread")

    model_config = {"env_prefix": "PRUNE_TASK_QUEUE_", "extra": "forbid"}

    @field_validator("execution_mode")
    @classmethod
    def _mode(cls, v: str) -> str:
        if v not in ("thread", "process"):
            raise ValueError(f"execution_mode 只能是 thread 或 process: {v}")
        return v


_SECTIONS: Dict[str, Type[_Section]] = {
    "app": AppSettings,
    "logging": LoggingSettings,
    "scene": SceneSettings,
    "camera": CameraSettings,
    "env": EnvSettings,
    "policy": PolicySettings,
    "admittance": AdmittanceSettings,
    "plant": PlantSettings,
    "supervisor": SupervisorSettings,
    "estimate": EstimateSettings,
    "harness": HarnessSettings,
    "task_queue": TaskQueueSettings,
}


class Settings:
    """
    统一配置管理类

    即实验编排所需的完整配置：场景、环境、增益、接触对象、
    估计误差模型、控制器列表、每目标试验次数、主种子与输出目录。
    """

    def __init__(self, config_path: Optional[Path] = None, required: bool = False):
        yaml_config = load_yaml_config(config_path, required=required)

        unknown = sorted(set(yaml_config) - set(_SECTIONS))
        if unknown:
            raise ConfigError(f"配置文件含未知顶层键: {unknown}")

        self.config_path = Path(config_path) if config_path else DEFAULT_CONFIG_PATH
        for key, section_cls in _SECTIONS.items():
            section = yaml_config.get(key) or {}
            if not isinstance(section, dict):
                raise ConfigError(f"配置段 {key} 必须是映射")
            setattr(self, key, validated(section_cls, section))

    # 以下属性仅为类型提示
    app: AppSettings
    logging: LoggingSettings
    scene: SceneSettings
    camera: CameraSettings
    env: EnvSettings
    policy: PolicySettings
    admittance: AdmittanceSettings
    plant: PlantSettings
    supervisor: SupervisorSettings
    estimate: EstimateSettings
    harness: HarnessSettings
    task_queue: TaskQueueSettings

    def to_dict(self) -> Dict[str, Any]:
        """导出为普通字典（用于跨进程传递与结果归档）"""
        return {key: getattr(self, key).model_dump() for key in _SECTIONS}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Settings":
        """由字典构造（不读取任何文件）"""
        obj = cls.__new__(cls)
        unknown = sorted(set(data) - set(_SECTIONS))
        if unknown:
            raise ConfigError(f"配置含未知顶层键: {unknown}")
        obj.config_path = None
        for key, section_cls in _SECTIONS.items():
            setattr(obj, key, validated(section_cls, data.get(key) or {}))
        return obj

    def with_overrides(self, **sections: Dict[str, Any]) -> "Settings":
        """返回局部覆盖后的新配置，例如 with_overrides(harness={"master_seed": 3})"""
        data = self.to_dict()
        for key, patch in sections.items():
            if key not in _SECTIONS:
                raise ConfigError(f"未知配置段: {key}")
            data[key] = _deep_merge(data[key], patch)
        return Settings.from_dict(data)


def _deep_merge(base: Dict[str, Any], patch: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in patch.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_settings(config: Optional[Union[str, Path]] = None) -> Settings:
    """
    按命令行参数加载配置

    Args:
        config: 配置文件路径；None 或 "default" 表示默认配置文件

    Returns:
        Settings 实例
    """
    if config is None or str(config) == "default":
        return Settings(DEFAULT_CONFIG_PATH)
    return Settings(Path(config), required=True)


@lru_cache()
def get_settings() -> Settings:
    """获取配置单例"""
    return Settings()


# 便捷访问
settings = get_settings()
