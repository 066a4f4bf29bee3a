"""Supervision over all iterations, the optimizer loop, gradient clipping,
schedule, warmup, and seeding."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from .data import SceneSample
from .grad import Tensor, ops
from .nn import Module
from .updater import DepthModel


class UnusableSampleError(ValueError):
    """A sample with no valid ground-truth pixels cannot be supervised."""


class TrainingAborted(RuntimeError):
    """Raised when a step produces a non-finite loss."""


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    decay_epochs: Tuple[int, ...] = (4, 8)
    decay_factor: float = 0.5
    epochs: int = 20
    batch_size: int = 4
    t_train: int = 12
    t_infer: int = 24
    t_pose: Optional[int] = None          # defaults to t/2 inside the model
    gamma: float = 0.9
    clip_low: float = -1.0
    clip_high: float = 1.0
    lambda_photo: float = 1.0
    pose_depth_prob: float = 0.6
    warmup_epochs_pose: int = 1
    weight_decay: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    d_min: float = 0.25
    d_max: float = 20.0
    seed: int = 0

    def validate(self):
        if not (0 < self.gamma <= 1):
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.clip_low != -self.clip_high:
            raise ValueError("clip bounds must be symmetric")
        if self.t_train < 1 or self.t_infer < 1:
            raise ValueError("iteration counts must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


def depth_loss(depths: Sequence[Tensor], gt_depth: np.ndarray,
               valid_range: Tuple[float, float], gamma: float = 0.9) -> Tensor:
    """Inverse-depth L1 over the iteration sequence.

    Each iteration's mean absolute inverse-depth error over the valid
    pixels is weighted by gamma^(T - t); valid means finite ground truth
    inside the depth range.
    """
    gt = np.asarray(gt_depth, dtype=np.float64)
    lo, hi = valid_range
    valid = np.isfinite(gt) & (gt >= lo) & (gt <= hi)
    n_valid = int(np.count_nonzero(valid))
    if n_valid == 0:
        raise UnusableSampleError("no valid ground-truth pixels in range")
    inv_gt = np.zeros_like(gt)
    inv_gt[valid] = 1.0 / gt[valid]
    t_total = len(depths)
    total: Optional[Tensor] = None
    for t, pred in enumerate(depths, start=1):
        inv_pred = ops.div(1.0, pred)
        err = ops.absolute(ops.sub(inv_pred, inv_gt.astype(pred.dtype)))
        masked = ops.mul(err, valid.astype(pred.dtype))
        term = ops.mul(masked.sum(), gamma ** (t_total - t) / n_valid)
        total = term if total is None else ops.add(total, term)
    return total


def iteration_weights(t_total: int, gamma: float) -> np.ndarray:
    return gamma ** (t_total - np.arange(1, t_total + 1, dtype=np.float64))


def lr_schedule(epoch: int, config: TrainConfig) -> float:
    """Base rate halved at each decay epoch passed."""
    if epoch < 0:
        raise ValueError("epoch must be nonnegative")
    passed = sum(1 for d in config.decay_epochs if epoch >= d)
    return config.learning_rate * config.decay_factor ** passed


def clip_gradients(params: Dict[str, Tensor], lo: float, hi: float) -> None:
    """Element-wise value clipping, idempotent."""
    for p in params.values():
        if p.grad is not None:
            np.clip(p.grad, lo, hi, out=p.grad)


class AdamW:
    """Decoupled-weight-decay adaptive-moment optimizer."""

    def __init__(self, params: Dict[str, Tensor], config: TrainConfig):
        self.params = dict(params)
        self.beta1 = config.adam_beta1
        self.beta2 = config.adam_beta2
        self.eps = config.adam_eps
        self.weight_decay = config.weight_decay
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.t = 0

    def step(self, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            m_hat = self.m[name] / (1 - b1 ** self.t)
            v_hat = self.v[name] / (1 - b2 ** self.t)
            update = m_hat / (np.sqrt(v_hat) + self.eps) \
                + self.weight_decay * p.data
            p.data = (p.data - lr * update).astype(p.data.dtype)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()


@dataclass
class StepLosses:
    depth: float
    photometric: float
    total: float


def _sample_rng(seed: int, step: int, index: int,
                phase: int = 0) -> np.random.Generator:
    """Deterministic per-sample stream: (master seed, phase, step, sample)."""
    return np.random.default_rng([seed, phase, step, index])


def train_step(batch: Sequence[SceneSample], model: DepthModel,
               optimizer: AdamW, config: TrainConfig, lr: float,
               step: int) -> StepLosses:
    """One optimization step over a batch of samples.

    Forward runs per sample (losses averaged), gradients are value-clipped
    to the configured range, and the decoupled-moment update is applied.
    A non-finite loss aborts with diagnostics before any weight changes.
    """
    model.train()
    optimizer.zero_grad()
    depth_total: Optional[Tensor] = None
    photo_total: Optional[Tensor] = None
    for i, sample in enumerate(batch):
        result = model.run(sample, config.t_train, t_pose=config.t_pose,
                           training=True,
                           rng=_sample_rng(config.seed, step, i),
                           pose_depth_prob=config.pose_depth_prob)
        term = depth_loss(result.depths, sample.gt_depth,
                          (config.d_min, config.d_max), config.gamma)
        depth_total = term if depth_total is None else ops.add(
            depth_total, term)
        if result.photometric is not None:
            photo_total = result.photometric if photo_total is None else \
                ops.add(photo_total, result.photometric)

    n = len(batch)
    depth_mean = ops.mul(depth_total, 1.0 / n)
    if photo_total is not None:
        photo_mean = ops.mul(photo_total, 1.0 / n)
        total = ops.add(depth_mean, ops.mul(photo_mean, config.lambda_photo))
        photo_value = float(photo_mean.data)
    else:
        total = depth_mean
        photo_value = 0.0

    if not np.isfinite(total.data):
        raise TrainingAborted(
            f"non-finite loss at step {step}: depth={float(depth_mean.data)} "
            f"photo={photo_value}")
    total.backward()
    clip_gradients(optimizer.params, config.clip_low, config.clip_high)
    if lr != 0.0:
        optimizer.step(lr)
    return StepLosses(depth=float(depth_mean.data), photometric=photo_value,
                      total=float(total.data))


def pose_parameters(model: DepthModel) -> Dict[str, Tensor]:
    return {name: p for name, p in model.named_parameters()
            if name.startswith("pose_net.")}


def frozen_checksum(model: DepthModel) -> float:
    """Sum over every non-pose parameter, for freeze verification."""
    return float(sum(p.data.sum() for name, p in model.named_parameters()
                     if not name.startswith("pose_net.")))


def warmup_pose(model: DepthModel, samples: Sequence[SceneSample],
                config: TrainConfig,
                log: Optional[TextIO] = None) -> None:
    """Photometric-only epochs updating just the residual pose network.

    All other parameters are untouched (verified cheaply by the caller via
    ``frozen_checksum``).  A no-op when the model has no pose branch or
    ``warmup_epochs_pose`` is 0.
    """
    if not model.use_pose or config.warmup_epochs_pose <= 0:
        return
    params = pose_parameters(model)
    optimizer = AdamW(params, config)
    step = 0
    for _ in range(config.warmup_epochs_pose):
        for start in range(0, len(samples), config.batch_size):
            batch = samples[start:start + config.batch_size]
            model.train()
            optimizer.zero_grad()
            total: Optional[Tensor] = None
            for i, sample in enumerate(batch):
                result = model.run(sample, config.t_train,
                                   t_pose=config.t_pose, training=True,
                                   rng=_sample_rng(config.seed, step, i,
                                                   phase=1),
                                   pose_depth_prob=config.pose_depth_prob)
                if result.photometric is None:
                    continue
                total = result.photometric if total is None else ops.add(
                    total, result.photometric)
            if total is None:
                continue
            loss = ops.mul(total, 1.0 / len(batch))
            if not np.isfinite(loss.data):
                raise TrainingAborted(f"non-finite warmup loss at step {step}")
            loss.backward()
            clip_gradients(params, config.clip_low, config.clip_high)
            optimizer.step(config.learning_rate)
            if log is not None:
                log.write(f"warmup {step} {float(loss.data):.6f}\n")
            step += 1


def train_loop(model: DepthModel, samples: Sequence[SceneSample],
               config: TrainConfig, total_steps: int,
               log: Optional[TextIO] = None) -> List[StepLosses]:
    """Deterministic round-robin training for a fixed number of steps.

    Log format: one line per step, "step loss_depth loss_photo lr seconds".
    """
    config.validate()
    optimizer = AdamW(dict(model.named_parameters()), config)
    history: List[StepLosses] = []
    n = len(samples)
    for step in range(total_steps):
        epoch = step * config.batch_size // max(n, 1)
        lr = lr_schedule(epoch, config)
        batch = [samples[(step * config.batch_size + j) % n]
                 for j in range(config.batch_size)]
        begin = time.perf_counter()
        losses = train_step(batch, model, optimizer, config, lr, step)
        seconds = time.perf_counter() - begin
        history.append(losses)
        if log is not None:
            log.write(f"{step} {losses.depth:.6f} {losses.photometric:.6f} "
                      f"{lr:.6e} {seconds:.3f}\n")
            log.flush()
    return history
