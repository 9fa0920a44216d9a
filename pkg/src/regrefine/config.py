"""Pipeline configuration: typed defaults, YAML files, profiles.

Config files are versioned and strict: unknown keys are rejected rather
than silently ignored, and a save/load cycle reproduces the config
exactly. The indoor and outdoor profiles bundle the threshold defaults
appropriate to each scale of scene.
"""

from dataclasses import asdict, dataclass, fields

import yaml

from .aggregation import AggregationConfig
from .errors import ConfigError
from .projection import CameraIntrinsics

CONFIG_VERSION = 1

# Outdoor scenes trade tighter recall thresholds for looser distances.
OUTDOOR_OVERRIDES = {
    "profile": "outdoor",
    "common_threshold": 0.30,
    "tau_a": 0.60,
    "k_final": 500,
    "n_keypoints": 1000,
    "rr_re_deg": 5.0,
    "rr_te_m": 0.60,
}

PROVIDERS = ("none", "synthetic", "files")
MATCH_MODES = ("mutual", "one-way")


@dataclass
class PipelineConfig:
    config_version: int = CONFIG_VERSION
    profile: str = "indoor"
    # virtual camera
    width: int = 640
    height: int = 480
    fx: float = 585.0
    fy: float = 585.0
    cx: float = 319.5
    cy: float = 239.5
    frame_margin: float = 1.05
    densify_kernel: int = 3
    densify_passes: int = 2
    # correspondence
    common_threshold: float = 0.0375
    match_mode: str = "mutual"
    n_keypoints: int = 500
    # features
    provider: str = "synthetic"
    feature_dir: str = ""
    layers: tuple = (0, 3, 6)
    pca_dim: int = 128
    joint_pca: bool = True
    # robust estimation
    tau_a: float = 0.10
    nr: int = 5
    nr_final: int = 0
    k_final: int = 250
    min_pairs: int = 3
    # evaluation
    rr_re_deg: float = 15.0
    rr_te_m: float = 0.30
    # execution
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(int(v) for v in self.layers))
        self.validate()

    def validate(self):
        if self.config_version != CONFIG_VERSION:
            raise ConfigError(
                f"config_version {self.config_version} is not supported "
                f"(expected {CONFIG_VERSION})"
            )
        if self.profile not in ("indoor", "outdoor"):
            raise ConfigError(f"unknown profile {self.profile!r}")
        if self.width < 16 or self.height < 16:
            raise ConfigError("image size must be at least 16x16")
        if self.fx <= 0 or self.fy <= 0:
            raise ConfigError("focal lengths must be positive")
        if self.frame_margin < 1.0:
            raise ConfigError("frame_margin must be >= 1")
        if self.densify_kernel < 1 or self.densify_kernel % 2 == 0:
            raise ConfigError("densify_kernel must be odd and >= 1")
        if self.densify_passes < 0:
            raise ConfigError("densify_passes must be >= 0")
        if self.common_threshold <= 0:
            raise ConfigError("common_threshold must be positive")
        if self.match_mode not in MATCH_MODES:
            raise ConfigError(f"match_mode must be one of {MATCH_MODES}")
        if self.n_keypoints < 3:
            raise ConfigError("n_keypoints must be >= 3")
        if self.provider not in PROVIDERS:
            raise ConfigError(f"provider must be one of {PROVIDERS}")
        if self.provider == "files" and not self.feature_dir:
            raise ConfigError("the files provider requires feature_dir")
        if not self.layers:
            raise ConfigError("layers must not be empty")
        if any(l < 0 or l > 12 for l in self.layers):
            raise ConfigError("layer ids must be in 0..12")
        if self.pca_dim < 1:
            raise ConfigError("pca_dim must be >= 1")
        if self.tau_a <= 0:
            raise ConfigError("tau_a must be positive")
        if self.nr < 0 or self.nr_final < 0:
            raise ConfigError("reweighting rounds must be >= 0")
        if self.k_final < 3:
            raise ConfigError("k_final must be >= 3")
        if self.min_pairs < 3:
            raise ConfigError("min_pairs must be >= 3")
        if self.rr_re_deg <= 0 or self.rr_te_m <= 0:
            raise ConfigError("recall thresholds must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(self.fx, self.fy, self.cx, self.cy,
                                self.width, self.height)

    def aggregation(self) -> AggregationConfig:
        return AggregationConfig(self.tau_a, self.nr, self.k_final,
                                 self.min_pairs, self.nr_final)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layers"] = list(self.layers)
        return d


def default_config(profile: str = "indoor") -> PipelineConfig:
    if profile == "indoor":
        return PipelineConfig()
    if profile == "outdoor":
        return PipelineConfig(**OUTDOOR_OVERRIDES)
    raise ConfigError(f"unknown profile {profile!r}")


def config_from_dict(data: dict) -> PipelineConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    known = {f.name for f in fields(PipelineConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    base = default_config(data.get("profile", "indoor")).to_dict()
    base.update(data)
    return PipelineConfig(**base)


def load_config(path) -> PipelineConfig:
    with open(path) as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    if data is None:
        data = {}
    try:
        return config_from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def save_config(path, cfg: PipelineConfig):
    with open(path, "w") as f:
        yaml.safe_dump(cfg.to_dict(), f, sort_keys=True)
