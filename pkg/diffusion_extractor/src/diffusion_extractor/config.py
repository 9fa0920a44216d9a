from dataclasses import dataclass

from .errors import ConfigError

VALID_LAYERS = tuple(range(13))
BACKEND_NAMES = ("diffusion", "stats")


@dataclass
class ExtractorConfig:
    """Everything one extraction run depends on.

    ``timestep`` is the denoising step at which decoder activations are
    read, counted within ``total_steps`` of the reverse process. The
    target resolution defaults to 704x512 so the coarsest layer grid
    comes out at 8x11; inputs at other sizes are resized first.
    """

    model_id: str = "stabilityai/stable-diffusion-2-depth"
    control_id: str = ""  # optional separate depth-control branch
    timestep: int = 261
    total_steps: int = 1000
    layers: tuple = (0, 3, 6)
    target_height: int = 512
    target_width: int = 704
    channels: int = 16  # stats backend output width; the model path ignores it
    backend: str = "diffusion"
    seed: int = 0
    out_dir: str = "."

    def __post_init__(self):
        self.layers = tuple(int(l) for l in self.layers)
        if not self.layers or any(l not in VALID_LAYERS for l in self.layers):
            raise ConfigError("layers must be a non-empty subset of 0..12")
        if not 0 <= int(self.timestep) < int(self.total_steps):
            raise ConfigError(
                f"timestep must satisfy 0 <= t < total_steps, got "
                f"{self.timestep} of {self.total_steps}"
            )
        if self.target_height < 64 or self.target_width < 64:
            raise ConfigError("target resolution must be at least 64 x 64")
        if self.channels < 1:
            raise ConfigError("channels must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        if self.backend not in BACKEND_NAMES:
            raise ConfigError(
                f"unknown backend {self.backend!r}; choose from {BACKEND_NAMES}"
            )
