"""Deterministic reverse-diffusion sandbox over R^d.

The noise predictor is a closed-form Gaussian-mixture score (per-class
conditional mixtures plus a global unconditional one), so the guidance
algebra is testable to numerical precision:

* clean-latent prediction   z0_hat = (z_t - sqrt(1-ab_t) * eps) / sqrt(ab_t)
* guidance vector           g = s_j - z0_hat
* noise correction          d_eps = gamma * g * (-sqrt(ab_t) / sqrt(1-ab_t))

The corrected conditional noise runs through standard classifier-free
guidance (the unconditional branch stays untouched) and a deterministic
DDIM update. Prior-injection steps (PIS) disable the correction for the
final ``pis`` steps of the trajectory. Applying the correction is exactly
the interpolation z0_new = (1-gamma) * z0_hat + gamma * s_j, which the
sampler verifies at every guided step.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BadT, DimMismatch, NumericalUnderflow, ValidationError
from .kmeans import kmeans, kmeans_pp_seeds

UNCOND = None

_COSINE_S = 0.008
_BETA_CLIP = 0.999
_INTERP_TOL = 1e-9


@dataclass(frozen=True)
class DiffusionSchedule:
    T: int
    alpha_bar: np.ndarray  # length T+1, alpha_bar[0] = 1, strictly decreasing

    def __post_init__(self):
        ab = self.alpha_bar
        if len(ab) != self.T + 1 or ab[0] != 1.0:
            raise BadT("alpha_bar must have length T+1 with alpha_bar[0] == 1")
        if not np.all(np.diff(ab) < 0):
            raise BadT("alpha_bar must be strictly decreasing")
        if not (0.0 < ab[-1] < 1e-3):
            raise BadT(f"terminal alpha_bar {ab[-1]} not in (0, 1e-3)")


def make_schedule(T: int, kind: str = "linear-beta") -> DiffusionSchedule:
    """Build a noising schedule whose terminal alpha_bar is below 1e-3.

    "linear-beta" scales the classic linear beta range with 1/T so short
    schedules still reach (near) pure noise; "cosine" is the squared-cosine
    alpha_bar with the usual beta clip at 0.999.
    """
    if T < 2:
        raise BadT(f"T must be >= 2, got {T}")
    if kind == "linear-beta":
        betas = np.linspace(0.1 / T, min(20.0 / T, _BETA_CLIP), T)
    elif kind == "cosine":
        def f(u: float) -> float:
            return math.cos((u + _COSINE_S) / (1 + _COSINE_S) * math.pi / 2) ** 2

        raw = np.array([f(t / T) / f(0.0) for t in range(T + 1)])
        betas = np.clip(1.0 - raw[1:] / raw[:-1], 0.0, _BETA_CLIP)
    else:
        raise ValidationError(f"unknown schedule kind {kind!r}")
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    return DiffusionSchedule(T, alpha_bar)


@dataclass(frozen=True)
class Mixture:
    """Diagonal-covariance Gaussian mixture."""

    weights: np.ndarray    # (k,), positive, sums to 1
    means: np.ndarray      # (k, d)
    variances: np.ndarray  # (k, d), positive diagonals

    def __post_init__(self):
        w, m, v = self.weights, self.means, self.variances
        if m.shape != v.shape or w.shape[0] != m.shape[0]:
            raise ValidationError("mixture arrays must align on components")
        if np.any(w <= 0) or not math.isclose(float(w.sum()), 1.0, rel_tol=1e-9):
            raise ValidationError("weights must be positive and sum to 1")
        if np.any(v <= 0):
            raise ValidationError("variance diagonals must be positive")

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def make_mixture(weights, means, variances) -> Mixture:
    return Mixture(
        np.asarray(weights, dtype=np.float64),
        np.asarray(means, dtype=np.float64),
        np.asarray(variances, dtype=np.float64),
    )


@dataclass(frozen=True)
class ScoreModel:
    """Analytic stand-in for a conditional noise predictor."""

    class_mixtures: dict[int, Mixture]
    uncond: Mixture

    @property
    def dim(self) -> int:
        return self.uncond.dim

    def mixture_for(self, condition) -> Mixture:
        if condition is UNCOND:
            return self.uncond
        if condition not in self.class_mixtures:
            raise ValidationError(f"no mixture for class {condition}")
        return self.class_mixtures[condition]


def diffused_log_density(mix: Mixture, z, alpha_bar_t: float):
    """(log p_t(z), responsibilities, diffused means/variances) at noising level ab_t."""
    z = np.asarray(z, dtype=np.float64)
    means = math.sqrt(alpha_bar_t) * mix.means
    variances = alpha_bar_t * mix.variances + (1.0 - alpha_bar_t)
    diff = z[None, :] - means
    comp_log = (
        np.log(mix.weights)
        - 0.5 * np.sum(np.log(2.0 * math.pi * variances) + diff**2 / variances, axis=1)
    )
    top = comp_log.max()
    if not np.isfinite(top):
        raise NumericalUnderflow("all mixture components underflow at this point")
    logp = top + math.log(np.exp(comp_log - top).sum())
    resp = np.exp(comp_log - logp)
    return logp, resp, means, variances


def score(mix: Mixture, z, alpha_bar_t: float) -> np.ndarray:
    """Gradient of log p_t at z for the diffused mixture."""
    _, resp, means, variances = diffused_log_density(mix, z, alpha_bar_t)
    z = np.asarray(z, dtype=np.float64)
    return -np.sum(resp[:, None] * (z[None, :] - means) / variances, axis=0)


def analytic_eps(model: ScoreModel, z_t, t: int, condition, schedule: DiffusionSchedule) -> np.ndarray:
    """eps = -sqrt(1 - ab_t) * grad log p_t(z_t) for the conditioned mixture."""
    if not 1 <= t <= schedule.T:
        raise ValidationError(f"t={t} outside [1, {schedule.T}]")
    ab = float(schedule.alpha_bar[t])
    return -math.sqrt(1.0 - ab) * score(model.mixture_for(condition), z_t, ab)


def predict_z0(z_t, eps, t: int, schedule: DiffusionSchedule) -> np.ndarray:
    """Closed-form clean-latent estimate from a noisy latent and predicted noise."""
    ab = float(schedule.alpha_bar[t])
    z_t = np.asarray(z_t, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    return (z_t - math.sqrt(1.0 - ab) * eps) / math.sqrt(ab)


def guidance_vector(s_j, z0_hat) -> np.ndarray:
    s_j = np.asarray(s_j, dtype=np.float64)
    z0_hat = np.asarray(z0_hat, dtype=np.float64)
    if s_j.shape != z0_hat.shape:
        raise DimMismatch(f"prototype shape {s_j.shape} != estimate shape {z0_hat.shape}")
    return s_j - z0_hat


def noise_correction(g, t: int, gamma: float, schedule: DiffusionSchedule) -> np.ndarray:
    ab = float(schedule.alpha_bar[t])
    if not 0.0 < ab < 1.0:
        raise ValidationError(f"alpha_bar[{t}]={ab} must lie in (0, 1)")
    return gamma * np.asarray(g, dtype=np.float64) * (-math.sqrt(ab) / math.sqrt(1.0 - ab))


@dataclass(frozen=True)
class GuidanceConfig:
    gamma: float = 0.1
    pis: int = 5
    cfg_scale: float = 5.0
    seed: int = 0

    def validate(self, T: int) -> None:
        if not (np.isfinite(self.gamma) and self.gamma >= 0.0):
            raise ValidationError(f"gamma must be finite and >= 0, got {self.gamma}")
        if not 0 <= self.pis <= T:
            raise ValidationError(f"pis={self.pis} outside [0, T={T}]")


@dataclass
class StepDiagnostics:
    guidance_norm: float
    correction_norm: float
    interp_deviation: float


@dataclass
class Trajectory:
    final: np.ndarray
    guide_index: int
    checksum: str
    steps: list[StepDiagnostics] = field(default_factory=list)
    diverged: bool = False
    max_norm: float = 0.0


@dataclass
class GuidedSampleSet:
    class_id: int
    samples: np.ndarray  # (IPC, d)
    trajectories: list[Trajectory]

    @property
    def any_diverged(self) -> bool:
        return any(t.diverged for t in self.trajectories)


def guided_step(
    z_t,
    t: int,
    model: ScoreModel,
    s_j,
    config: GuidanceConfig,
    schedule: DiffusionSchedule,
    class_id: int,
) -> tuple[np.ndarray, StepDiagnostics]:
    """One reverse step t -> t-1 with the correction folded into CFG.

    The correction is live for the first T - pis steps (t > pis) and skipped
    entirely — bit-identical arithmetic to the unguided baseline — for the
    final pis steps or when gamma == 0.
    """
    z_t = np.asarray(z_t, dtype=np.float64)
    eps_u = analytic_eps(model, z_t, t, UNCOND, schedule)
    eps_c = analytic_eps(model, z_t, t, class_id, schedule)
    diag = StepDiagnostics(0.0, 0.0, 0.0)
    if t > config.pis and config.gamma != 0.0:
        z0_c = predict_z0(z_t, eps_c, t, schedule)
        g = guidance_vector(s_j, z0_c)
        delta = noise_correction(g, t, config.gamma, schedule)
        eps_c = eps_c + delta
        interp = (1.0 - config.gamma) * z0_c + config.gamma * np.asarray(s_j, dtype=np.float64)
        achieved = predict_z0(z_t, eps_c, t, schedule)
        scale = max(float(np.max(np.abs(interp))), float(np.max(np.abs(z0_c))), 1.0)
        deviation = float(np.max(np.abs(achieved - interp)) / scale)
        if np.isfinite(deviation):  # overflowing trajectories are flagged by the caller
            assert deviation <= _INTERP_TOL, f"interpolation identity broke: {deviation}"
        diag = StepDiagnostics(
            float(np.linalg.norm(g)), float(np.linalg.norm(delta)), deviation
        )
    eps = eps_u + config.cfg_scale * (eps_c - eps_u)
    ab_prev = float(schedule.alpha_bar[t - 1])
    z0 = predict_z0(z_t, eps, t, schedule)
    z_prev = math.sqrt(ab_prev) * z0 + math.sqrt(1.0 - ab_prev) * eps
    return z_prev, diag


def sample_trajectory(
    model: ScoreModel,
    class_id: int,
    s_j,
    guide_index: int,
    config: GuidanceConfig,
    schedule: DiffusionSchedule,
    rng: np.random.Generator,
) -> Trajectory:
    d = model.dim
    z = rng.standard_normal(d)
    hasher = hashlib.sha256(z.tobytes())
    limit = 1e4 * max(1.0, float(np.linalg.norm(np.asarray(s_j, dtype=np.float64))))
    steps: list[StepDiagnostics] = []
    diverged = False
    max_norm = float(np.linalg.norm(z))
    for t in range(schedule.T, 0, -1):
        try:
            z, diag = guided_step(z, t, model, s_j, config, schedule, class_id)
        except NumericalUnderflow:
            diverged = True
            break
        steps.append(diag)
        hasher.update(z.tobytes())
        norm = float(np.linalg.norm(z))
        max_norm = max(max_norm, norm)
        if not np.isfinite(norm) or norm > limit:
            diverged = True
            break
    return Trajectory(z, guide_index, hasher.hexdigest(), steps, diverged, max_norm)


def generate_class_set(
    model: ScoreModel,
    class_id: int,
    prototypes,
    config: GuidanceConfig,
    schedule: DiffusionSchedule,
    rng_factory,
) -> GuidedSampleSet:
    """IPC independent trajectories, trajectory j bound to prototype j throughout.

    ``rng_factory(j)`` must return the dedicated RNG stream for trajectory j;
    divergent trajectories are flagged on the result, never silently dropped.
    """
    prototypes = np.asarray(prototypes, dtype=np.float64)
    config.validate(schedule.T)
    if prototypes.ndim != 2 or prototypes.shape[1] != model.dim:
        raise DimMismatch(
            f"prototypes shape {prototypes.shape} incompatible with dim {model.dim}"
        )
    trajectories = [
        sample_trajectory(model, class_id, prototypes[j], j, config, schedule, rng_factory(j))
        for j in range(prototypes.shape[0])
    ]
    samples = np.stack([t.final for t in trajectories])
    return GuidedSampleSet(class_id, samples, trajectories)


def fit_score_model(
    vectors_by_class: dict[int, np.ndarray],
    components: int,
    rng: np.random.Generator,
    variance_floor: float = 1e-3,
) -> ScoreModel:
    """Moment-matched diagonal mixtures per class plus their class-prior marginal.

    Stand-in for the generative backbone at desk scale: per-class modes come
    from seeded k-means, the unconditional mixture is the size-weighted union.
    """
    class_mixtures: dict[int, Mixture] = {}
    union_w, union_m, union_v = [], [], []
    total = sum(len(v) for v in vectors_by_class.values())
    for class_id in sorted(vectors_by_class):
        X = np.asarray(vectors_by_class[class_id], dtype=np.float64)
        k = min(components, X.shape[0])
        if k <= 1:
            weights = np.array([1.0])
            means = X.mean(axis=0, keepdims=True)
            variances = np.maximum(X.var(axis=0, keepdims=True), variance_floor)
        else:
            seeds = kmeans_pp_seeds(X, k, rng)
            outcome = kmeans(X, k, seeds)
            weights = np.bincount(outcome.assignment, minlength=k) / X.shape[0]
            means = outcome.centroids
            variances = np.empty_like(means)
            for j in range(k):
                member = X[outcome.assignment == j]
                variances[j] = np.maximum(member.var(axis=0), variance_floor)
        mix = make_mixture(weights, means, variances)
        class_mixtures[class_id] = mix
        prior = X.shape[0] / total
        union_w.append(prior * weights)
        union_m.append(means)
        union_v.append(variances)
    uncond = make_mixture(
        np.concatenate(union_w), np.vstack(union_m), np.vstack(union_v)
    )
    return ScoreModel(class_mixtures, uncond)
