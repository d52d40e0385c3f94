"""Inner restoration unfolding.

Each inner iteration re-reads the degradation of the current iterate from a
handful of image statistics, turns that into a parametric forward operator
with an exact Jacobian-transpose, takes one gradient step on
``0.5*||sigma*D(X) + mu - X_ref||^2`` and then applies a restoration prox
plus a high-frequency cue taken from the current foreground/background split.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import filters
from .core import as_mask, as_raster, check_same_grid, check_same_shape, clamp01
from .degrade import DegradationSpec, airlight_vector, resample, resample_adjoint, transmission_map

FAMILIES = ("identity", "gamma_gain", "haze_affine", "blur_downsample", "composite")


@dataclass(frozen=True)
class DegradationDescriptor:
    mean_luminance: float
    rms_contrast: float
    dark_channel_mean: float
    laplacian_variance: float
    # bright-end luminance percentile; airlight guess for the haze rule
    airlight: float = 1.0

    def as_vector(self) -> np.ndarray:
        return np.array(
            [self.mean_luminance, self.rms_contrast, self.dark_channel_mean, self.laplacian_variance]
        )


def estimate_descriptor(x, window: int = 7, airlight_percentile: float = 99.0) -> DegradationDescriptor:
    x = as_raster(x, "x")
    lum = filters.luminance(x)
    return DegradationDescriptor(
        mean_luminance=float(lum.mean()),
        rms_contrast=float(lum.std()),
        dark_channel_mean=float(filters.dark_channel(x, window).mean()),
        laplacian_variance=filters.laplacian_variance(x),
        airlight=float(np.percentile(lum, airlight_percentile)),
    )


@dataclass
class DegradationOp:
    """Forward model D with its Jacobian-transpose.

    ``sigma_mod``/``mu_mod`` post-compose an affine modulation,
    ``D_mod(u) = sigma*D(u) + mu``.  ``params`` by family:

    * gamma_gain: ``gamma``, ``gain``
    * haze_affine: ``airlight`` plus either ``t`` or ``beta``/``depth_mode``
    * blur_downsample: ``scale_factor``
    * composite: no params; ``children`` are applied in order
    """

    family: str
    params: dict = field(default_factory=dict)
    children: list["DegradationOp"] = field(default_factory=list)
    sigma_mod: float = 1.0
    mu_mod: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown operator family {self.family!r}")
        if self.family == "composite" and not self.children:
            raise ValueError("composite operator needs children")

    @property
    def is_linear(self) -> bool:
        if self.family == "composite":
            return all(c.is_linear for c in self.children)
        return self.family in ("identity", "blur_downsample")

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Unmodulated D(x)."""
        if self.family == "composite":
            for child in self.children:
                x = child.forward(x)
            return x
        return _FORWARD[self.family](x, self.params)

    def jacobian_t(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """J_D(x)^T v for the unmodulated operator."""
        if self.family == "composite":
            inputs = []
            for child in self.children:
                inputs.append(x)
                x = child.forward(x)
            for child, xin in zip(reversed(self.children), reversed(inputs)):
                v = child.jacobian_t(xin, v)
            return v
        return _JAC_T[self.family](x, v, self.params)

    def jacobian(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """J_D(x) u; for affine families this is the linear part applied to u."""
        if self.family == "composite":
            for child in self.children:
                u = child.jacobian(x, u)
                x = child.forward(x)
            return u
        return _JAC[self.family](x, u, self.params)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.sigma_mod * self.forward(x) + self.mu_mod

    def gradient(self, x: np.ndarray, x_ref: np.ndarray) -> np.ndarray:
        """Gradient of 0.5*||D_mod(x) - x_ref||^2 with respect to x."""
        return self.jacobian_t(x, self.sigma_mod * (self.apply(x) - x_ref))

    def fidelity(self, x: np.ndarray, x_ref: np.ndarray) -> float:
        r = self.apply(x) - x_ref
        return 0.5 * float(np.sum(r * r))

    def with_modulation(self, sigma: float, mu: float) -> "DegradationOp":
        return DegradationOp(self.family, dict(self.params), list(self.children), float(sigma), float(mu))


def _haze_t(params: dict, shape) -> np.ndarray:
    if "t" in params:
        t = np.asarray(params["t"], dtype=np.float64)
        return t if t.ndim == 0 else t.reshape(shape[0], shape[1], 1)
    return transmission_map(shape[0], shape[1], params["beta"], params.get("depth_mode", "constant"))[:, :, None]


def _haze_forward(x, p):
    t = _haze_t(p, x.shape)
    return t * x + airlight_vector(p.get("airlight", 1.0), x.shape[2]) * (1.0 - t)


def _haze_linear(x, u, p):
    return _haze_t(p, u.shape) * u


def _gamma_forward(x, p):
    return p["gain"] * np.power(np.maximum(x, 0.0), p["gamma"])


def _gamma_jac_diag(x, p):
    gamma = p["gamma"]
    if gamma == 1:
        return np.full_like(x, p["gain"])
    return p["gain"] * gamma * np.power(np.maximum(x, 0.0), gamma - 1.0)


_FORWARD = {
    "identity": lambda x, p: x,
    "gamma_gain": _gamma_forward,
    "haze_affine": _haze_forward,
    "blur_downsample": lambda x, p: resample(x, int(p["scale_factor"])),
}
_JAC = {
    "identity": lambda x, u, p: u,
    "gamma_gain": lambda x, u, p: _gamma_jac_diag(x, p) * u,
    "haze_affine": _haze_linear,
    "blur_downsample": lambda x, u, p: resample(u, int(p["scale_factor"])),
}
# diagonal or symmetric-structure families reuse the forward Jacobian
_JAC_T = {
    "identity": lambda x, v, p: v,
    "gamma_gain": lambda x, v, p: _gamma_jac_diag(x, p) * v,
    "haze_affine": _haze_linear,
    "blur_downsample": lambda x, v, p: resample_adjoint(v, int(p["scale_factor"])),
}


def identity_operator() -> DegradationOp:
    return DegradationOp("identity")


def operator_from_spec(spec: DegradationSpec) -> DegradationOp:
    """Noise-free operator matching a degradation spec (the oracle operator)."""
    ops = []
    for leaf in spec.leaves():
        if leaf.kind == "low_light":
            ops.append(DegradationOp("gamma_gain", {"gamma": leaf.gamma, "gain": leaf.gain}))
        elif leaf.kind == "haze":
            ops.append(DegradationOp(
                "haze_affine",
                {"airlight": leaf.airlight, "beta": leaf.beta, "depth_mode": leaf.depth_mode},
            ))
        elif leaf.kind == "low_resolution":
            ops.append(DegradationOp("blur_downsample", {"scale_factor": leaf.scale_factor}))
    if not ops:
        return identity_operator()
    if len(ops) == 1:
        return ops[0]
    return DegradationOp("composite", children=ops)


def modulation(desc: DegradationDescriptor, cfg) -> tuple[float, float]:
    d = desc.as_vector()
    sigma = cfg.sigma_bias + float(np.dot(cfg.sigma_coef, d))
    mu = cfg.mu_bias + float(np.dot(cfg.mu_coef, d))
    return sigma, mu


def instantiate_operator(desc: DegradationDescriptor, cfg) -> DegradationOp:
    """Map a descriptor to an operator with fixed, config-exposed rules.

    ``cfg`` is a :class:`~nestedunfold.config.RunConfig` or its ``derun`` section.
    Triggers are checked independently; several triggers give a composite in
    the order blur -> gamma -> haze.
    """
    cfg = getattr(cfg, "derun", cfg)
    ops = []
    if desc.laplacian_variance < cfg.blur_threshold:
        ops.append(DegradationOp("blur_downsample", {"scale_factor": int(cfg.blur_scale)}))
    if desc.mean_luminance < cfg.dark_threshold:
        ratio = desc.mean_luminance / cfg.dark_threshold
        ops.append(DegradationOp("gamma_gain", {
            "gamma": 1.0 + cfg.dark_gamma_slope * (1.0 - ratio),
            "gain": max(ratio, cfg.dark_gain_floor),
        }))
    if desc.dark_channel_mean > cfg.haze_threshold:
        t = float(np.clip(cfg.haze_t_intercept + cfg.haze_t_slope * desc.dark_channel_mean, cfg.haze_t_min, 1.0))
        airlight = float(np.clip(desc.airlight, 1e-3, 1.0))
        ops.append(DegradationOp("haze_affine", {"t": t, "airlight": airlight}))
    if not ops:
        op = identity_operator()
    elif len(ops) == 1:
        op = ops[0]
    else:
        op = DegradationOp("composite", children=ops)
    sigma, mu = modulation(desc, cfg)
    return op.with_modulation(sigma, mu)


def operator_norm_sq(op: DegradationOp, x: np.ndarray, n_iter: int = 100, seed: int = 0) -> float:
    """Largest eigenvalue of (sigma*J)^T (sigma*J) at ``x``, by power iteration."""
    x = as_raster(x, "x")
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(x.shape)
    u /= np.linalg.norm(u)
    lam = 0.0
    for _ in range(n_iter):
        w = op.sigma_mod ** 2 * op.jacobian_t(x, op.jacobian(x, u))
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 0.0
        u = w / lam
    return lam


def gradient_step_x(x_prev, x_ref, op: DegradationOp, alpha_x: float) -> np.ndarray:
    """X_hat = X_prev - alpha * D_mod^T (D_mod(X_prev) - X_ref)."""
    if alpha_x <= 0:
        raise ValueError("alpha_x must be > 0")
    x_prev = as_raster(x_prev, "x_prev")
    x_ref = as_raster(x_ref, "x_ref")
    check_same_shape(x_prev, x_ref)
    return x_prev - alpha_x * op.gradient(x_prev, x_ref)


@dataclass
class RestoreProx:
    kind: str = "total_variation"
    tv_weight: float = 0.02
    tv_iters: int = 20
    sigma: float = 1.0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.kind in ("identity", "clamp"):
            return clamp01(x)
        if self.kind == "gaussian_smooth":
            return clamp01(filters.gaussian_smooth(x, self.sigma))
        if self.kind == "total_variation":
            return clamp01(filters.tv_prox(x, self.tv_weight, self.tv_iters))
        raise ValueError(f"unknown restore prox {self.kind!r}")

    @classmethod
    def from_config(cls, cfg) -> "RestoreProx":
        cfg = getattr(cfg, "derun", cfg)
        return cls(cfg.prox, cfg.tv_weight, cfg.tv_iters, cfg.smooth_sigma)


def segmentation_cue(b, m, y, sigma: float = 1.0) -> np.ndarray:
    """High-frequency residue of M*Y + B."""
    s = m[:, :, None] * y + b
    return s - filters.gaussian_smooth(s, sigma)


def proximal_step_x(x_hat, b, m, y, prox: RestoreProx, cue_weight: float = 0.1, cue_sigma: float = 1.0) -> np.ndarray:
    x_hat = as_raster(x_hat, "x_hat")
    b = as_raster(b, "b")
    m = as_mask(m, "m")
    y = as_raster(y, "y")
    check_same_grid(x_hat, b, m, y)
    check_same_shape(x_hat, b)
    check_same_shape(x_hat, y)
    out = prox(x_hat)
    if cue_weight != 0:
        out = out + cue_weight * segmentation_cue(b, m, y, cue_sigma)
    return clamp01(out)


def select_operator(cfg, desc: DegradationDescriptor, fixed: Optional[DegradationOp] = None) -> DegradationOp:
    if fixed is not None:
        return fixed
    mode = cfg.derun.operator
    if mode == "auto":
        return instantiate_operator(desc, cfg)
    sigma, mu = modulation(desc, cfg.derun)
    if mode == "identity":
        return identity_operator().with_modulation(sigma, mu)
    return operator_from_spec(cfg.degrade).with_modulation(sigma, mu)


def run_inner_unfolding(x_init, x_ref, b, m, y, n_iters: int, cfg, operator: Optional[DegradationOp] = None) -> list[np.ndarray]:
    """Run ``n_iters`` restoration iterations and return every iterate.

    ``operator`` pins the forward model (descriptor re-estimation is then
    skipped entirely); otherwise ``cfg.derun.operator`` decides.
    """
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    d = cfg.derun
    x = as_raster(x_init, "x_init")
    x_ref = as_raster(x_ref, "x_ref")
    prox = RestoreProx.from_config(d)
    iterates = []
    for _ in range(n_iters):
        op = operator
        if op is None:
            desc = estimate_descriptor(x, d.dark_window, d.airlight_percentile)
            op = select_operator(cfg, desc)
        alpha = d.alpha_x
        if alpha == "auto":
            alpha = 0.9 / max(operator_norm_sq(op, x, n_iter=30), 1e-12)
        x_hat = gradient_step_x(x, x_ref, op, alpha)
        x = proximal_step_x(x_hat, b, m, y, prox, d.cue_weight, d.cue_sigma)
        iterates.append(x)
    return iterates
