"""Mini-batch SGD with momentum, per-layer-group learning rates, freezing,
and the two-phase fine-tuning schedule.

The loss is exactly tensor.mse(model.forward(lr), hr) for the batch, no
hidden scaling.  Convolution and PReLU parameters share one learning rate,
the deconvolution another (its input features are much larger than image
values, so it needs a smaller step).  Freezing skips the update but never
the gradient computation upstream of a trainable layer, so frozen and
unfrozen runs see identical deconvolution gradients on the same batch.

Validation PSNR during training is computed from the aggregate MSE over
all validation pairs (no border shave on the small patches); the best
checkpoint by that number is what the train entry points return.
"""

from __future__ import annotations

import copy
import math
import time
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from . import model as model_mod
from . import tensor
from .data import SamplePair
from .layers import ConvLayer, DeconvLayer, PReLULayer
from .model import Model, transplant_conv_layers
from .tensor import DTYPE, axpy_into


@dataclass
class TrainConfig:
    lr_conv: float = 1e-3
    lr_deconv: float = 1e-4
    finetune_halving: bool = True   # halve all rates when fine-tuning
    momentum: float = 0.9
    batch_size: int = 64
    max_iterations: int = 10_000
    eval_every: int = 100
    rng_seed: int = 0
    freeze_conv: bool = False       # train the deconvolution layer only
    saturation_window: int = 5      # evaluations, for the two-step schedule
    saturation_gain_db: float = 0.01

    def __post_init__(self):
        if self.lr_conv <= 0 or self.lr_deconv <= 0:
            raise ValueError("learning rates must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")


@dataclass
class TrainReport:
    losses: list[tuple[int, float]] = field(default_factory=list)
    val_psnr: list[tuple[int, float]] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)   # wall-clock per iteration
    final_checksum: int = 0


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, loss: float, lr_conv: float, lr_deconv: float):
        super().__init__(
            f"loss became {loss} at iteration {iteration} "
            f"(lr_conv={lr_conv:g}, lr_deconv={lr_deconv:g}); lower the learning rates")
        self.iteration = iteration


class SaturationDetector:
    """Fires once validation PSNR gains less than `min_gain_db` across the
    last `window` evaluations (a strictly flat curve fires on the window-th)."""

    def __init__(self, window: int, min_gain_db: float):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self.min_gain_db = min_gain_db
        self.history: list[float] = []

    def update(self, psnr: float) -> bool:
        self.history.append(psnr)
        if len(self.history) < self.window:
            return False
        recent = self.history[-self.window:]
        return max(recent) - recent[0] < self.min_gain_db


def _stack_pairs(pairs: list[SamplePair]) -> tuple[np.ndarray, np.ndarray]:
    lr = np.concatenate([p.lr for p in pairs], axis=0)
    hr = np.concatenate([p.hr for p in pairs], axis=0)
    return np.ascontiguousarray(lr, dtype=DTYPE), np.ascontiguousarray(hr, dtype=DTYPE)


def validation_psnr(model: Model, pairs: list[SamplePair], batch_size: int = 256) -> float:
    """PSNR of the aggregate MSE over all pairs."""
    lr, hr = _stack_pairs(pairs)
    se = 0.0
    count = 0
    for i in range(0, lr.shape[0], batch_size):
        pred = model.forward(lr[i:i + batch_size])
        d = (pred - hr[i:i + batch_size]).astype(np.float64)
        se += float(np.sum(d * d))
        count += d.size
    m = se / count
    if m == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / m)


def _layer_rate(layer, cfg: TrainConfig) -> float:
    return cfg.lr_deconv if isinstance(layer, DeconvLayer) else cfg.lr_conv


def _is_trainable(layer, cfg: TrainConfig) -> bool:
    if not layer.trainable:
        return False
    if cfg.freeze_conv and not isinstance(layer, DeconvLayer):
        return False
    return True


class _Sgd:
    """One optimizer state bound to a model; shared across schedule phases."""

    def __init__(self, model: Model, cfg: TrainConfig):
        self.model = model
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.rng_seed)
        self.velocity = {}
        self.trainable = {}
        for idx, layer in enumerate(model.layers):
            self.trainable[idx] = _is_trainable(layer, cfg)
            if isinstance(layer, PReLULayer):
                params = [layer.slopes]
            else:
                params = [layer.weights, layer.bias]
            self.velocity[idx] = [np.zeros_like(p) for p in params]
        # Backprop may stop at the earliest trainable layer: gradients
        # upstream of it are never used.
        trainable_idx = [i for i, t in self.trainable.items() if t]
        self.first_trainable = min(trainable_idx) if trainable_idx else len(model.layers)

    def step(self, x: np.ndarray, target: np.ndarray) -> float:
        layers = self.model.layers
        acts = [x]
        for layer in layers:
            acts.append(layer.forward(acts[-1]))
        pred = acts[-1]
        loss = tensor.mse(pred, target)

        grad = (pred - target) * DTYPE(2.0 / pred.size)
        cfg = self.cfg
        for idx in range(len(layers) - 1, self.first_trainable - 1, -1):
            layer = layers[idx]
            if isinstance(layer, PReLULayer):
                grad_prev, ga = layer.backward(acts[idx], grad)
                grads = [ga]
            else:
                grad_prev, gw, gb = layer.backward(acts[idx], grad)
                grads = [gw, gb]
            if self.trainable[idx]:
                lr = _layer_rate(layer, cfg)
                params = [layer.slopes] if isinstance(layer, PReLULayer) \
                    else [layer.weights, layer.bias]
                for p, v, g in zip(params, self.velocity[idx], grads):
                    v *= DTYPE(cfg.momentum)
                    axpy_into(v, -lr, g)
                    axpy_into(p, 1.0, v)
            grad = grad_prev
        return loss


def _run_phase(opt: _Sgd, pairs: list[SamplePair], valset: list[SamplePair] | None,
               budget: int, start_iter: int, report: TrainReport,
               best: dict, stop_on_saturation: bool = False) -> int:
    """Run up to `budget` iterations; returns the number actually run."""
    cfg = opt.cfg
    lr_all, hr_all = _stack_pairs(pairs)
    count = lr_all.shape[0]
    detector = SaturationDetector(cfg.saturation_window, cfg.saturation_gain_db)
    order = np.empty(0, dtype=np.int64)
    pos = 0
    done = 0
    for it in range(start_iter + 1, start_iter + budget + 1):
        if pos + cfg.batch_size > order.size:
            order = opt.rng.permutation(count)
            pos = 0
        idx = order[pos:pos + min(cfg.batch_size, count)]
        pos += idx.size
        t0 = time.perf_counter()
        loss = opt.step(lr_all[idx], hr_all[idx])
        report.seconds.append(time.perf_counter() - t0)
        report.losses.append((it, loss))
        done += 1
        if not math.isfinite(loss):
            raise TrainingDiverged(it, loss, cfg.lr_conv, cfg.lr_deconv)
        if valset and it % cfg.eval_every == 0:
            psnr = validation_psnr(opt.model, valset)
            report.val_psnr.append((it, psnr))
            if psnr > best["psnr"]:
                best["psnr"] = psnr
                best["model"] = opt.model.copy()
            if detector.update(psnr) and stop_on_saturation:
                break
    return done


def _finish(opt: _Sgd, report: TrainReport, best: dict) -> tuple[Model, TrainReport]:
    result = best["model"] if best["model"] is not None else opt.model.copy()
    report.final_checksum = zlib.crc32(model_mod.save(result))
    return result, report


def _check_scales(model: Model, pairs: list[SamplePair]) -> None:
    if not pairs:
        raise ValueError("training set is empty")
    bad = {p.scale for p in pairs} - {model.scale}
    if bad:
        raise ValueError(f"dataset scale {sorted(bad)} does not match model x{model.scale}")


def train(model: Model, dataset: list[SamplePair], valset: list[SamplePair] | None,
          cfg: TrainConfig) -> tuple[Model, TrainReport]:
    """SGD on the given pairs; returns the best-validation-PSNR checkpoint.

    The passed model is updated in place and holds the final iterate;
    without a validation set the final iterate is returned.  Runs with the
    same seed, data, and thread count reproduce bit-identical models.
    """
    _check_scales(model, dataset)
    opt = _Sgd(model, cfg)
    report = TrainReport()
    best = {"psnr": -math.inf, "model": None}
    _run_phase(opt, dataset, valset, cfg.max_iterations, 0, report, best)
    return _finish(opt, report, best)


def finetune_for_scale(src_model: Model, target_scale: int, dataset: list[SamplePair],
                       valset: list[SamplePair] | None, cfg: TrainConfig
                       ) -> tuple[Model, TrainReport]:
    """Cross-scale transfer: keep every convolution, retrain the deconvolution.

    Convolution and PReLU parameters are copied bit-exactly from the
    source and frozen; only the freshly initialized deconvolution (stride
    = target scale) trains, at half rates when finetune_halving is set.
    """
    new_model = transplant_conv_layers(src_model, target_scale, rng_seed=cfg.rng_seed)
    cfg = replace(cfg, freeze_conv=True,
                  lr_conv=cfg.lr_conv / 2 if cfg.finetune_halving else cfg.lr_conv,
                  lr_deconv=cfg.lr_deconv / 2 if cfg.finetune_halving else cfg.lr_deconv)
    return train(new_model, dataset, valset, cfg)


def two_step_schedule(model: Model, base_set: list[SamplePair],
                      extra_set: list[SamplePair], valset: list[SamplePair] | None,
                      cfg: TrainConfig) -> tuple[Model, TrainReport]:
    """Train on the base set until validation PSNR saturates, then continue
    on base plus extra data at halved learning rates for the rest of the
    iteration budget."""
    _check_scales(model, base_set)
    if extra_set:
        _check_scales(model, extra_set)
    opt = _Sgd(model, cfg)
    report = TrainReport()
    best = {"psnr": -math.inf, "model": None}
    used = _run_phase(opt, base_set, valset, cfg.max_iterations, 0, report, best,
                      stop_on_saturation=True)
    remaining = cfg.max_iterations - used
    if remaining > 0:
        opt.cfg = replace(cfg, lr_conv=cfg.lr_conv / 2, lr_deconv=cfg.lr_deconv / 2)
        _run_phase(opt, base_set + extra_set, valset, remaining, used, report, best)
    return _finish(opt, report, best)
