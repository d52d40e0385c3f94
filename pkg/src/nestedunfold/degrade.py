"""Seeded synthetic degradations: low light, haze, low resolution, and chains of them.

Models used:

* low light: ``gain * x**gamma + n`` with Gaussian ``n``, clamped to [0, 1]
  (noise is added before the clamp);
* haze: Koschmieder scattering ``t*x + A*(1 - t)`` with ``t = exp(-beta*d)``;
* low resolution: area-average downsampling followed by bilinear upsampling
  back to the input size.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np

from .core import as_raster, clamp01

KINDS = ("low_light", "haze", "low_resolution", "composite")
DEPTH_MODES = ("constant", "radial")


@dataclass
class DegradationSpec:
    kind: str
    gamma: float = 1.0
    gain: float = 1.0
    noise_sigma: float = 0.0
    airlight: Union[float, list[float]] = 1.0
    beta: float = 0.0
    depth_mode: str = "constant"
    scale_factor: int = 1
    children: list["DegradationSpec"] = field(default_factory=list)
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown degradation kind {self.kind!r}")
        if self.kind == "composite":
            if len(self.children) < 2:
                raise ValueError("composite degradation needs at least two children")
            for child in self.children:
                child.validate()
            return
        if self.children:
            raise ValueError(f"{self.kind} degradation cannot have children")
        if self.kind == "low_light":
            _check_low_light(self.gamma, self.gain, self.noise_sigma)
        elif self.kind == "haze":
            _check_haze(self.airlight, self.beta, self.depth_mode)
        elif self.kind == "low_resolution":
            _check_scale(self.scale_factor)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "gamma": self.gamma,
            "gain": self.gain,
            "noise_sigma": self.noise_sigma,
            "airlight": list(self.airlight) if isinstance(self.airlight, (list, tuple)) else self.airlight,
            "beta": self.beta,
            "depth_mode": self.depth_mode,
            "scale_factor": self.scale_factor,
            "children": [c.to_dict() for c in self.children],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DegradationSpec":
        if not isinstance(data, dict):
            raise ValueError("degradation spec must be a mapping")
        known = {
            "kind", "gamma", "gain", "noise_sigma", "airlight", "beta",
            "depth_mode", "scale_factor", "children", "seed",
        }
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown key(s) in degradation spec: {sorted(unknown)}")
        if "kind" not in data:
            raise ValueError("degradation spec needs a 'kind'")
        kwargs = dict(data)
        kwargs["children"] = [cls.from_dict(c) for c in data.get("children", [])]
        spec = cls(**kwargs)
        spec.validate()
        return spec

    def leaves(self) -> list["DegradationSpec"]:
        if self.kind != "composite":
            return [self]
        out = []
        for child in self.children:
            out.extend(child.leaves())
        return out


def low_light_spec(gamma=2.2, gain=0.4, noise_sigma=0.01, seed=0) -> DegradationSpec:
    return DegradationSpec("low_light", gamma=gamma, gain=gain, noise_sigma=noise_sigma, seed=seed)


def haze_spec(airlight=0.8, beta=1.0, depth_mode="radial", seed=0) -> DegradationSpec:
    return DegradationSpec("haze", airlight=airlight, beta=beta, depth_mode=depth_mode, seed=seed)


def low_resolution_spec(scale_factor=2) -> DegradationSpec:
    return DegradationSpec("low_resolution", scale_factor=scale_factor)


def default_combined_spec(seed: int = 0) -> DegradationSpec:
    return DegradationSpec(
        "composite",
        children=[
            low_resolution_spec(2),
            low_light_spec(2.2, 0.4, 0.01),
            haze_spec(0.8, 1.0, "radial"),
        ],
        seed=seed,
    )


def _check_low_light(gamma, gain, noise_sigma):
    if gamma < 1:
        raise ValueError(f"low-light gamma must be >= 1, got {gamma}")
    if not 0 < gain <= 1:
        raise ValueError(f"low-light gain must lie in (0, 1], got {gain}")
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")


def _check_haze(airlight, beta, depth_mode):
    a = np.atleast_1d(np.asarray(airlight, dtype=np.float64))
    if np.any(a <= 0) or np.any(a > 1):
        raise ValueError(f"airlight must lie in (0, 1], got {airlight}")
    if beta < 0:
        raise ValueError(f"haze beta must be >= 0, got {beta}")
    if depth_mode not in DEPTH_MODES:
        raise ValueError(f"unknown depth_mode {depth_mode!r}")


def _check_scale(scale_factor):
    if int(scale_factor) != scale_factor or scale_factor < 1:
        raise ValueError(f"scale_factor must be an integer >= 1, got {scale_factor}")


def apply_low_light(x, gamma: float, gain: float, noise_sigma: float, seed: int = 0) -> np.ndarray:
    _check_low_light(gamma, gain, noise_sigma)
    x = as_raster(x, "x")
    out = gain * np.power(clamp01(x), gamma)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        out = out + rng.normal(0.0, noise_sigma, size=x.shape)
    return clamp01(out)


def depth_map(height: int, width: int, depth_mode: str) -> np.ndarray:
    """Scene depth per pixel: 1 everywhere, or 0.5 + distance-to-centre / diagonal."""
    if depth_mode == "constant":
        return np.ones((height, width))
    if depth_mode != "radial":
        raise ValueError(f"unknown depth_mode {depth_mode!r}")
    rows = np.arange(height) - (height - 1) / 2.0
    cols = np.arange(width) - (width - 1) / 2.0
    dist = np.hypot(rows[:, None], cols[None, :])
    return 0.5 + dist / np.hypot(height, width)


def transmission_map(height: int, width: int, beta: float, depth_mode: str) -> np.ndarray:
    return np.exp(-beta * depth_map(height, width, depth_mode))


def airlight_vector(airlight, channels: int) -> np.ndarray:
    a = np.atleast_1d(np.asarray(airlight, dtype=np.float64))
    if a.size == 1:
        return np.full(channels, float(a[0]))
    if a.size != channels:
        raise ValueError(f"airlight has {a.size} values for {channels} channels")
    return a


def apply_haze(x, airlight, beta: float, depth_mode: str = "constant", seed: int = 0) -> np.ndarray:
    """Atmospheric scattering.  Deterministic; ``seed`` is accepted for interface parity."""
    _check_haze(airlight, beta, depth_mode)
    x = as_raster(x, "x")
    h, w, c = x.shape
    t = transmission_map(h, w, beta, depth_mode)[:, :, None]
    a = airlight_vector(airlight, c)
    return clamp01(t * x + a * (1.0 - t))


@lru_cache(maxsize=64)
def resample_matrix(n: int, factor: int) -> np.ndarray:
    """1-D down-then-up resampling matrix of size (n, n).

    Downsampling averages blocks of ``factor`` samples (the last block may be
    shorter); upsampling interpolates linearly between block centres and holds
    the end values beyond the outermost centres.
    """
    n_low = -(-n // factor)
    down = np.zeros((n_low, n))
    centres = np.empty(n_low)
    for j in range(n_low):
        lo, hi = j * factor, min((j + 1) * factor, n)
        down[j, lo:hi] = 1.0 / (hi - lo)
        centres[j] = (lo + hi - 1) / 2.0
    up = np.empty((n, n_low))
    eye = np.eye(n_low)
    pos = np.arange(n, dtype=np.float64)
    for j in range(n_low):
        up[:, j] = np.interp(pos, centres, eye[j])
    out = up @ down
    out.setflags(write=False)
    return out


def resample(x: np.ndarray, factor: int) -> np.ndarray:
    rh = resample_matrix(x.shape[0], factor)
    rw = resample_matrix(x.shape[1], factor)
    tmp = np.tensordot(rh, x, axes=(1, 0))  # (H, W, C)
    return np.tensordot(tmp, rw, axes=(1, 1)).transpose(0, 2, 1)


def resample_adjoint(v: np.ndarray, factor: int) -> np.ndarray:
    rh = resample_matrix(v.shape[0], factor)
    rw = resample_matrix(v.shape[1], factor)
    tmp = np.tensordot(rh.T, v, axes=(1, 0))
    return np.tensordot(tmp, rw.T, axes=(1, 1)).transpose(0, 2, 1)


def apply_low_resolution(x, scale_factor: int) -> np.ndarray:
    _check_scale(scale_factor)
    x = as_raster(x, "x")
    if scale_factor == 1:
        return x.copy()
    return clamp01(resample(x, int(scale_factor)))


def derive_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(1)[0])


def apply_spec(x, spec: DegradationSpec, seed: Optional[int] = None) -> np.ndarray:
    """Apply a (possibly composite) spec, children in listed order.

    ``seed`` defaults to ``spec.seed``.  A leaf spec draws its noise from that
    seed directly; inside a composite, leaf ``i`` of the flattened chain draws
    from a stream derived from ``(seed, i)`` so repeated leaves stay independent.
    """
    spec.validate()
    x = as_raster(x, "x")
    seed = spec.seed if seed is None else seed
    if spec.kind != "composite":
        return _apply_leaf(x, spec, seed)
    for i, leaf in enumerate(spec.leaves()):
        x = _apply_leaf(x, leaf, derive_seed(seed, i))
    return x


def _apply_leaf(x: np.ndarray, leaf: DegradationSpec, seed: int) -> np.ndarray:
    if leaf.kind == "low_light":
        return apply_low_light(x, leaf.gamma, leaf.gain, leaf.noise_sigma, seed)
    if leaf.kind == "haze":
        return apply_haze(x, leaf.airlight, leaf.beta, leaf.depth_mode, seed)
    if leaf.kind == "low_resolution":
        return apply_low_resolution(x, leaf.scale_factor)
    raise ValueError(f"not a leaf kind: {leaf.kind!r}")


def is_identity(spec: DegradationSpec) -> bool:
    for leaf in spec.leaves():
        if leaf.kind == "low_light" and (leaf.gamma, leaf.gain, leaf.noise_sigma) != (1, 1, 0):
            return False
        if leaf.kind == "haze" and leaf.beta != 0:
            return False
        if leaf.kind == "low_resolution" and leaf.scale_factor != 1:
            return False
    return True


def chain(specs: Sequence[DegradationSpec], seed: int = 0) -> DegradationSpec:
    return DegradationSpec("composite", children=list(specs), seed=seed)
