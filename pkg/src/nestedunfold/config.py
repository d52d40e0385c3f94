"""Run configuration.

One dataclass per config-file section (``core``, ``degrade``, ``derun``,
``sodun``, ``bui``, ``metrics``).  The file format is JSON; unknown keys are
rejected so typos fail loudly instead of silently falling back to defaults.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Union

from .degrade import DegradationSpec, default_combined_spec


class ConfigError(ValueError):
    pass


@dataclass
class CoreConfig:
    K: int = 4
    n_schedule: list[int] = field(default_factory=lambda: [4, 3, 3, 2])
    binarize_threshold: float = 0.5
    seed: int = 0


@dataclass
class DerunConfig:
    # Ablation switch: False skips the inner loop entirely.
    enabled: bool = True
    # float, or "auto" for 0.9 / ||J||^2 estimated by power iteration at each iterate
    alpha_x: Union[float, str] = "auto"
    # "auto" (descriptor driven), "identity", or "oracle" (built from the degrade section).
    operator: str = "auto"
    # data-term target: "previous" = X_{k-1}^{T1}, "observation" = Y
    reference: str = "observation"

    # descriptor -> operator rules
    dark_window: int = 7
    haze_threshold: float = 0.35
    haze_t_intercept: float = 1.0
    haze_t_slope: float = -0.95
    haze_t_min: float = 0.1
    airlight_percentile: float = 99.0
    dark_threshold: float = 0.3
    dark_gamma_slope: float = 1.2
    dark_gain_floor: float = 0.1
    blur_threshold: float = 2e-4
    blur_scale: int = 2

    # sigma/mu modulation as affine maps of the descriptor vector
    # (mean_luminance, rms_contrast, dark_channel_mean, laplacian_variance)
    sigma_bias: float = 1.0
    sigma_coef: list[float] = field(default_factory=lambda: [0.0, 0.0, 0.0, 0.0])
    mu_bias: float = 0.0
    mu_coef: list[float] = field(default_factory=lambda: [0.0, 0.0, 0.0, 0.0])

    # restoration prox + segmentation cue
    prox: str = "total_variation"
    tv_weight: float = 0.02
    tv_iters: int = 20
    smooth_sigma: float = 1.0
    cue_weight: float = 0.1
    cue_sigma: float = 1.0


@dataclass
class SodunConfig:
    # floats, or "auto" for the safe defaults 0.9/max(X^2) and 0.9
    alpha_m: Union[float, str] = "auto"
    alpha_b: Union[float, str] = "auto"
    mask_prox: str = "guided_fusion"
    fusion_weight: float = 0.95
    # L1 weight on the mask (foreground is sparse); 0 disables the shrinkage
    mask_sparsity: float = 0.06
    guide_radius: int = 4
    guide_eps: float = 1e-3
    complement_norm: float = 1.0
    # Ablation switch: False drops the (1 - B/C) cue from the mask prox.
    background_feedback: bool = True
    background_prox: str = "gaussian_smooth"
    background_tv_weight: float = 0.05
    background_fg_boost: float = 2.0
    background_sigma: float = 16.0
    tv_iters: int = 20


@dataclass
class BuiConfig:
    # Ablation switch: False takes the last inner iterate instead of the IQA argmax.
    enabled: bool = True
    weights: list[float] = field(default_factory=lambda: [1.0, 1.0, 1.0, 1.0])
    sharpness_range: list[float] = field(default_factory=lambda: [0.0, 0.05])
    contrast_range: list[float] = field(default_factory=lambda: [0.0, 0.5])
    exposure_range: list[float] = field(default_factory=lambda: [0.0, 1.0])
    clarity_range: list[float] = field(default_factory=lambda: [0.0, 1.0])
    csc_early_stop: bool = False
    csc_threshold: float = 0.0


@dataclass
class MetricsConfig:
    epsilon: float = 1.0
    beta2: float = 0.3
    weight_radius: int = 2
    bce_delta: float = 1e-7


@dataclass
class RunConfig:
    core: CoreConfig = field(default_factory=CoreConfig)
    degrade: DegradationSpec = field(default_factory=default_combined_spec)
    derun: DerunConfig = field(default_factory=DerunConfig)
    sodun: SodunConfig = field(default_factory=SodunConfig)
    bui: BuiConfig = field(default_factory=BuiConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        core = self.core
        if core.K < 1:
            raise ConfigError(f"K must be >= 1, got {core.K}")
        if len(core.n_schedule) != core.K:
            raise ConfigError(
                f"n_schedule has {len(core.n_schedule)} entries but K={core.K}"
            )
        if any(int(n) < 1 for n in core.n_schedule):
            raise ConfigError(f"every inner count must be >= 1: {core.n_schedule}")
        if not 0.0 < core.binarize_threshold < 1.0:
            raise ConfigError("binarize_threshold must lie in (0, 1)")
        for section, name in (("derun", "alpha_x"), ("sodun", "alpha_m"), ("sodun", "alpha_b")):
            val = getattr(getattr(self, section), name)
            if isinstance(val, str):
                if val != "auto":
                    raise ConfigError(f"{name} must be a positive number or 'auto'")
            elif val <= 0:
                raise ConfigError(f"{name} must be > 0")
        if self.derun.operator not in ("auto", "identity", "oracle"):
            raise ConfigError(f"unknown derun.operator {self.derun.operator!r}")
        if self.derun.reference not in ("previous", "observation"):
            raise ConfigError(f"unknown derun.reference {self.derun.reference!r}")
        if self.derun.prox not in ("identity", "clamp", "gaussian_smooth", "total_variation"):
            raise ConfigError(f"unknown derun.prox {self.derun.prox!r}")
        if self.sodun.mask_prox not in ("clamp_only", "guided_fusion"):
            raise ConfigError(f"unknown sodun.mask_prox {self.sodun.mask_prox!r}")
        if self.sodun.background_prox not in ("identity", "gaussian_smooth", "total_variation"):
            raise ConfigError(f"unknown sodun.background_prox {self.sodun.background_prox!r}")
        if self.sodun.mask_sparsity < 0:
            raise ConfigError("mask_sparsity must be >= 0")
        if not 0.0 <= self.sodun.fusion_weight <= 1.0:
            raise ConfigError("fusion_weight must lie in [0, 1]")
        w = self.bui.weights
        if len(w) != 4 or any(v < 0 for v in w) or not any(v > 0 for v in w):
            raise ConfigError("bui.weights must be 4 nonnegative values, not all zero")
        self.degrade.validate()

    def to_dict(self) -> dict[str, Any]:
        return {
            "core": dataclasses.asdict(self.core),
            "degrade": self.degrade.to_dict(),
            "derun": dataclasses.asdict(self.derun),
            "sodun": dataclasses.asdict(self.sodun),
            "bui": dataclasses.asdict(self.bui),
            "metrics": dataclasses.asdict(self.metrics),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        sections = {
            "core": CoreConfig,
            "derun": DerunConfig,
            "sodun": SodunConfig,
            "bui": BuiConfig,
            "metrics": MetricsConfig,
        }
        unknown = set(data) - set(sections) - {"degrade"}
        if unknown:
            raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
        kwargs: dict[str, Any] = {}
        for name, klass in sections.items():
            if name in data:
                kwargs[name] = _build_section(klass, data[name], name)
        if "degrade" in data:
            kwargs["degrade"] = DegradationSpec.from_dict(data["degrade"])
        return cls(**kwargs)

    def replace(self, **sections: dict[str, Any]) -> "RunConfig":
        """Copy with per-section field overrides, e.g. ``cfg.replace(core={"K": 1})``."""
        data = self.to_dict()
        for name, overrides in sections.items():
            if name not in data:
                raise ConfigError(f"unknown config section {name!r}")
            if name == "degrade":
                data[name] = overrides if isinstance(overrides, dict) else overrides.to_dict()
                continue
            data[name].update(overrides)
        return RunConfig.from_dict(data)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)


def _build_section(klass, values: dict[str, Any], name: str):
    if not isinstance(values, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    known = {f.name for f in dataclasses.fields(klass)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in section {name!r}: {sorted(unknown)}")
    return klass(**values)


def load_config(path: Union[str, Path, None]) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return RunConfig.from_dict(data)
