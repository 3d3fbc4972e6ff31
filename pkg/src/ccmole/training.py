"""Amplitude regression: loss, autograd gradients, Adam with step decay, checkpoints."""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from .cc.ccsd import AmplitudeSet, mp2_amplitudes
from .cc.integrals import IntegralSet
from .model.config import ModelConfig, TrainConfig
from .model.layers import DTYPE
from .model.mole import MoleModel, PreparedInput, check_consistent
from .model.system import MolecularSystem

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "molecp/1"


class NonFiniteError(ArithmeticError):
    pass


def _check_shapes(pred: AmplitudeSet, target: AmplitudeSet) -> None:
    if pred.t1.shape != target.t1.shape or pred.t2.shape != target.t2.shape:
        raise ValueError(f"amplitude shapes differ: {pred.t1.shape}/{pred.t2.shape} vs {target.t1.shape}/{target.t2.shape}")


def loss(pred: AmplitudeSet, target: AmplitudeSet) -> float:
    """Sum of squared errors over all t1 and t2 entries."""
    _check_shapes(pred, target)
    return float(((pred.t1 - target.t1) ** 2).sum() + ((pred.t2 - target.t2) ** 2).sum())


def mean_absolute_error(pred: AmplitudeSet, target: AmplitudeSet) -> float:
    _check_shapes(pred, target)
    diff = np.concatenate([(pred.t1 - target.t1).ravel(), (pred.t2 - target.t2).ravel()])
    return float(np.abs(diff).mean()) if diff.size else 0.0


@dataclass
class TrainingSample:
    system: MolecularSystem
    integrals: IntegralSet
    target: AmplitudeSet

    def __post_init__(self):
        check_consistent(self.system, self.integrals)
        want = (self.integrals.n_occ, self.integrals.n_virt)
        if self.target.t1.shape != want:
            raise ValueError(f"target t1 shape {self.target.t1.shape}, expected {want}")


class _Prepared:
    """Per-sample tensors that do not depend on parameters."""

    def __init__(self, model: MoleModel, sample: TrainingSample):
        self.inp: PreparedInput = model.prepare(sample.system)
        self.mp2 = torch.as_tensor(mp2_amplitudes(sample.integrals).t2, dtype=DTYPE)
        self.t1 = torch.as_tensor(sample.target.t1, dtype=DTYPE)
        self.t2 = torch.as_tensor(sample.target.t2, dtype=DTYPE)

    def loss(self, model: MoleModel) -> torch.Tensor:
        t1, t2 = model(self.inp, self.mp2)
        return ((t1 - self.t1) ** 2).sum() + ((t2 - self.t2) ** 2).sum()


def loss_and_gradient(model: MoleModel, sample: "TrainingSample | _Prepared") -> tuple[float, np.ndarray]:
    """Loss and its exact gradient w.r.t. the flat parameter vector (reverse mode)."""
    prep = sample if isinstance(sample, _Prepared) else _Prepared(model, sample)
    model.zero_grad(set_to_none=True)
    value = prep.loss(model)
    if not torch.isfinite(value):
        raise NonFiniteError("non-finite loss")
    value.backward()
    grads = [p.grad if p.grad is not None else torch.zeros_like(p) for p in model.parameters()]
    g = torch.cat([x.reshape(-1) for x in grads]).numpy().copy()
    if not np.all(np.isfinite(g)):
        raise NonFiniteError("non-finite gradient")
    return float(value.detach()), g


def gradient(model: MoleModel, sample: TrainingSample) -> np.ndarray:
    return loss_and_gradient(model, sample)[1]


def loss_at(model: MoleModel, sample: "TrainingSample | _Prepared", flat: np.ndarray) -> float:
    prep = sample if isinstance(sample, _Prepared) else _Prepared(model, sample)
    saved = model.get_flat()
    try:
        model.set_flat(flat)
        with torch.no_grad():
            return float(prep.loss(model))
    finally:
        model.set_flat(saved)


def finite_difference_gradient(model: MoleModel, sample: TrainingSample, h: float = 1e-4) -> np.ndarray:
    """Central differences ``(L(x + h e_k) - L(x - h e_k)) / 2h`` for every parameter."""
    prep = _Prepared(model, sample)
    x0 = model.get_flat()
    out = np.empty_like(x0)
    for k in range(x0.size):
        xp, xm = x0.copy(), x0.copy()
        xp[k] += h
        xm[k] -= h
        out[k] = (loss_at(model, prep, xp) - loss_at(model, prep, xm)) / (2.0 * h)
    return out


def random_parameters(model: MoleModel, seed: int, eps_range: tuple[float, float] = (0.1, 1.0)) -> np.ndarray:
    """Flat vector from the seeded init, with every norm epsilon redrawn in ``eps_range``.

    The default epsilon (1e-3) sits ten finite-difference steps from the
    ``|eps|`` kink, where a central difference with ``h = 1e-4`` is itself
    inaccurate; gradient checks use this draw instead.
    """
    x = MoleModel(model.cfg, seed=seed).get_flat()
    rng = np.random.default_rng(seed)
    for entry in model.index_map():
        if entry["name"].rsplit(".", 1)[-1].startswith("eps"):
            k = int(np.prod(entry["shape"]))
            x[entry["offset"] : entry["offset"] + k] = rng.uniform(*eps_range, k)
    return x


def gradient_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``max_k |g_k - n_k| / max(|g_k|, |n_k|, 1e-3 * max|n|)``.

    The floor keeps components that are numerically zero from dividing
    rounding noise by itself.
    """
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-3 * np.abs(numeric).max(initial=0.0))
    scale = np.where(scale > 0, scale, 1.0)
    return float((np.abs(analytic - numeric) / scale).max(initial=0.0))


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class OptimizerState:
    lr: float
    decay_step: int
    gamma: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: "np.ndarray | None" = None
    v: "np.ndarray | None" = None

    @classmethod
    def from_config(cls, cfg: TrainConfig, n_params: int) -> "OptimizerState":
        return cls(cfg.lr, cfg.decay_step, cfg.gamma, cfg.beta1, cfg.beta2, cfg.adam_eps, 0, np.zeros(n_params), np.zeros(n_params))

    def learning_rate(self, epoch: int) -> float:
        """Step decay: ``lr * gamma ** (epoch // decay_step)``."""
        return self.lr * self.gamma ** (epoch // self.decay_step)

    def to_json(self) -> dict:
        return {
            "lr": self.lr, "decay_step": self.decay_step, "gamma": self.gamma,
            "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps, "step": self.step,
            "m": self.m.tolist(), "v": self.v.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "OptimizerState":
        doc = dict(doc)
        doc["m"] = np.array(doc["m"], dtype=np.float64)
        doc["v"] = np.array(doc["v"], dtype=np.float64)
        return cls(**doc)


def optimizer_step(state: OptimizerState, params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
    """Bias-corrected Adam update; advances ``state`` in place and returns new params."""
    if params.shape != grad.shape or state.m.shape != params.shape:
        raise ValueError("parameter, gradient and moment lengths must match")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    state.m = b1 * state.m + (1.0 - b1) * grad
    state.v = b2 * state.v + (1.0 - b2) * grad * grad
    m_hat = state.m / (1.0 - b1**state.step)
    v_hat = state.v / (1.0 - b2**state.step)
    return params - lr * m_hat / (np.sqrt(v_hat) + state.eps)


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    model_config: ModelConfig
    train_config: TrainConfig
    seed: int
    params: np.ndarray
    optimizer: OptimizerState
    loss_history: list[float] = field(default_factory=list)
    index_map: list[dict] = field(default_factory=list)

    def model(self) -> MoleModel:
        m = MoleModel(self.model_config)
        m.set_flat(self.params)
        return m

    def to_json(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "model_config": self.model_config.to_dict(),
            "train_config": self.train_config.to_dict(),
            "seed": self.seed,
            "params": self.params.tolist(),
            "index_map": self.index_map,
            "optimizer": self.optimizer.to_json(),
            "loss_history": list(self.loss_history),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Checkpoint":
        if doc.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"not a {CHECKPOINT_FORMAT} document")
        return cls(
            ModelConfig.from_dict(doc["model_config"]),
            TrainConfig.from_dict(doc["train_config"]),
            int(doc["seed"]),
            np.array(doc["params"], dtype=np.float64),
            OptimizerState.from_json(doc["optimizer"]),
            [float(x) for x in doc["loss_history"]],
            doc.get("index_map", []),
        )


def save_checkpoint(ck: Checkpoint, path: "str | os.PathLike") -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(ck.to_json()))
    os.replace(tmp, path)


def load_checkpoint(path: "str | os.PathLike") -> Checkpoint:
    return Checkpoint.from_json(json.loads(Path(path).read_text()))


def initial_checkpoint(model_cfg: ModelConfig, train_cfg: TrainConfig, seed: int) -> Checkpoint:
    model = MoleModel(model_cfg, seed=seed)
    return Checkpoint(
        model_cfg, train_cfg, seed, model.get_flat(),
        OptimizerState.from_config(train_cfg, model.n_params()), [], model.index_map(),
    )


def zero_checkpoint(model_cfg: ModelConfig, train_cfg: "TrainConfig | None" = None) -> Checkpoint:
    ck = initial_checkpoint(model_cfg, train_cfg or TrainConfig(), 0)
    ck.params = np.zeros_like(ck.params)
    return ck


# ---------------------------------------------------------------------------
# training loop


def epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    """Sample order for one epoch; depends only on (seed, epoch)."""
    return np.random.default_rng([seed, epoch]).permutation(n)


def train(
    samples: Sequence[TrainingSample],
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    seed: int = 0,
    *,
    resume: "Checkpoint | None" = None,
    log_path: "str | os.PathLike | None" = None,
    checkpoint_path: "str | os.PathLike | None" = None,
    on_step: "Callable[[int, float], None] | None" = None,
) -> Checkpoint:
    """Batch-size-1 Adam on the summed squared amplitude error.

    Steps run until ``train_cfg.steps`` in total; with ``resume`` the run
    continues from the checkpoint's step and reproduces the uninterrupted
    trajectory exactly. The scheduler ticks once per epoch.
    """
    if not samples:
        raise ValueError("training needs at least one sample")
    ck = resume if resume is not None else initial_checkpoint(model_cfg, train_cfg, seed)
    if resume is not None:
        model_cfg, seed = ck.model_config, ck.seed
        ck.train_config = train_cfg
    model = ck.model()
    prepared = [_Prepared(model, s) for s in samples]
    params = ck.params.copy()
    opt = ck.optimizer
    history = list(ck.loss_history)
    n = len(samples)
    log_file = open(log_path, "a") if log_path else None
    try:
        start = opt.step
        for step in range(start, train_cfg.steps):
            t0 = time.perf_counter()
            epoch, pos = divmod(step, n)
            idx = int(epoch_order(seed, epoch, n)[pos])
            model.set_flat(params)
            value, g = loss_and_gradient(model, prepared[idx])
            lr = opt.learning_rate(epoch)
            params = optimizer_step(opt, params, g, lr)
            history.append(value)
            wall_ms = (time.perf_counter() - t0) * 1e3
            if log_file and (step % max(train_cfg.log_every, 1) == 0 or step == train_cfg.steps - 1):
                log_file.write(json.dumps({"step": step, "loss": value, "lr": lr, "wall_ms": wall_ms}) + "\n")
            if on_step:
                on_step(step, value)
            ck = Checkpoint(model_cfg, train_cfg, seed, params, opt, history, ck.index_map or model.index_map())
            if checkpoint_path and train_cfg.checkpoint_every and (step + 1) % train_cfg.checkpoint_every == 0:
                save_checkpoint(ck, checkpoint_path)
    finally:
        if log_file:
            log_file.close()
    ck = Checkpoint(model_cfg, train_cfg, seed, params, opt, history, ck.index_map or model.index_map())
    if checkpoint_path:
        save_checkpoint(ck, checkpoint_path)
    return ck


def evaluate(ck: Checkpoint, samples: Sequence[TrainingSample]) -> dict:
    model = ck.model()
    losses, maes = [], []
    for s in samples:
        from .model.mole import predict

        pred = predict(model, s.system, s.integrals)
        losses.append(loss(pred, s.target))
        maes.append(mean_absolute_error(pred, s.target))
    return {"loss": float(np.mean(losses)), "mae": float(np.mean(maes))}
