"""Cross-entropy training with AdaDelta, gradient clipping, weight-noise
annealing, and WER-based early stopping.

Training runs in two phases: phase 1 without weight noise, then phase 2
restarts from the phase-1 best with Gaussian noise added to the weights at
every gradient computation (the clean weights receive the updates). The
returned checkpoint is the overall validation-WER best.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .attention import attend, init_attention_state, project_annotations
from .decoder import decode_step, init_state
from .encoder import encode
from .errors import TrainingError
from .ink_io import EOS_INDEX, SOS_INDEX
from .numerics import ModelParams, Tensor, add, backward, log, neg, pick
from .preprocess import FeatureSequence

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    rho: float = 0.95
    epsilon: float = 1e-6
    clip_norm: float = 5.0
    weight_noise_std: float = 0.05
    max_epochs: int = 500
    patience: int = 15
    seed: int = 0
    batch_size: int = 8
    eval_beam: int = 1
    max_updates: int | None = None
    loss_goal: float | None = None
    wer_goal: float | None = None

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise TrainingError(f"rho must lie in (0, 1), got {self.rho}")
        if self.epsilon <= 0.0:
            raise TrainingError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_epochs < 1:
            raise TrainingError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.batch_size < 1:
            raise TrainingError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class OptimState:
    """AdaDelta accumulators E[g^2] and E[dx^2], keyed like the parameters."""

    e_g2: dict[str, np.ndarray]
    e_dx2: dict[str, np.ndarray]

    @classmethod
    def zeros(cls, params: ModelParams) -> "OptimState":
        return cls(
            e_g2={k: np.zeros_like(t.data) for k, t in params.tensors.items()},
            e_dx2={k: np.zeros_like(t.data) for k, t in params.tensors.items()},
        )


@dataclass
class Sample:
    """One training example: features plus label token indices (no EOS)."""

    sample_id: str
    features: FeatureSequence
    label: list[int]


@dataclass
class EpochLog:
    epoch: int
    phase: int
    mean_loss: float
    valid_wer: float
    valid_exprate: float
    seconds: float
    updates: int

    def line(self) -> str:
        return (f"{self.epoch}\t{self.mean_loss:.6f}\t{self.valid_wer:.6f}"
                f"\t{self.valid_exprate:.6f}\t{self.seconds:.3f}")

    def deterministic_fields(self) -> tuple:
        # Everything except wall-clock time, for run-to-run comparisons.
        return (self.epoch, self.phase, self.mean_loss, self.valid_wer,
                self.valid_exprate, self.updates)


@dataclass
class TrainResult:
    params: ModelParams
    log: list[EpochLog]
    best_wer: float
    updates_used: int


def sequence_loss(params: ModelParams, x: FeatureSequence,
                  y: list[int]) -> Tensor:
    """Teacher-forced cross entropy, summed over tokens including EOS.

    ``y`` must end with the end-of-sequence index; the first decoder input
    is the reserved start-of-sequence token.
    """
    if not y:
        raise TrainingError("sequence_loss requires a non-empty target")
    if y[-1] != EOS_INDEX:
        raise TrainingError("target sequence must end with the EOS token")
    annotations = encode(x, params)
    proj = project_annotations(annotations.a, params)
    s = init_state(annotations, params)
    att_state = init_attention_state(annotations.length)
    y_prev = SOS_INDEX
    loss: Tensor | None = None
    for target in y:
        _, context, att_state = attend(s, annotations, att_state, params,
                                       proj_annotations=proj)
        step = decode_step(y_prev, s, context, params)
        term = neg(log(pick(step.y_dist, target)))
        loss = term if loss is None else add(loss, term)
        s = step.s
        y_prev = target
    return loss


def clip_gradients(grads: dict[str, np.ndarray],
                   clip_norm: float) -> tuple[dict[str, np.ndarray], float]:
    """Global L2 clipping: scale all gradients when the norm exceeds the cap."""
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if clip_norm > 0 and total > clip_norm:
        factor = clip_norm / total
        grads = {k: g * factor for k, g in grads.items()}
    return grads, total


def adadelta_step(params: ModelParams, grads: dict[str, np.ndarray],
                  opt: OptimState, cfg: TrainConfig) -> bool:
    """One AdaDelta update in place; returns False for a rejected step.

    Gradients must already be clipped. A non-finite gradient rejects the
    step and leaves parameters and accumulators untouched.
    """
    for name, g in grads.items():
        if not np.isfinite(g).all():
            logger.warning("rejecting update: non-finite gradient in %s", name)
            return False
    rho, eps = cfg.rho, cfg.epsilon
    for name, tensor in params.tensors.items():
        g = grads[name]
        e_g2 = opt.e_g2[name]
        e_dx2 = opt.e_dx2[name]
        e_g2 *= rho
        e_g2 += (1.0 - rho) * g * g
        dx = -np.sqrt(e_dx2 + eps) / np.sqrt(e_g2 + eps) * g
        e_dx2 *= rho
        e_dx2 += (1.0 - rho) * dx * dx
        tensor.data += dx
    return True


def edit_distance(ref: list, hyp: list) -> int:
    """Token-level Levenshtein distance."""
    if len(ref) < len(hyp):
        ref, hyp = hyp, ref
    prev = list(range(len(hyp) + 1))
    for i, rtok in enumerate(ref, start=1):
        cur = [i]
        for j, htok in enumerate(hyp, start=1):
            cost = 0 if rtok == htok else 1
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost))
        prev = cur
    return prev[-1]


def wer(ref: list, hyp: list) -> float:
    """Edit distance over reference length; empty reference counts hyp tokens."""
    if not ref:
        return 0.0 if not hyp else float(len(hyp))
    return edit_distance(ref, hyp) / len(ref)


def _batch_gradients(params: ModelParams, batch: list[Sample]) -> tuple[dict, float]:
    params.zero_grads()
    total_loss = 0.0
    for sample in batch:
        loss = sequence_loss(params, sample.features, sample.label + [EOS_INDEX])
        value = float(loss.data)
        if not np.isfinite(value):
            return {name: np.full_like(t.data, np.nan)
                    for name, t in params.tensors.items()}, value
        total_loss += value
        backward(loss)
    grads = {k: g / len(batch) for k, g in params.grads().items()}
    params.zero_grads()
    return grads, total_loss


def _evaluate(params: ModelParams, valid_set: list[Sample],
              beam: int) -> tuple[float, float]:
    """Corpus WER and ExpRate of beam decodes against the labels."""
    from .infer import beam_search, strip_eos

    dist_total = 0
    ref_total = 0
    exact = 0
    for sample in valid_set:
        result = beam_search([params], sample.features, beam=beam)
        hyp = strip_eos(result.tokens)
        d = edit_distance(sample.label, hyp)
        dist_total += d
        ref_total += len(sample.label)
        exact += int(d == 0)
    corpus_wer = dist_total / ref_total if ref_total else float(dist_total > 0)
    return corpus_wer, exact / len(valid_set)


def _run_phase(params: ModelParams, dataset: list[Sample],
               valid_set: list[Sample], cfg: TrainConfig, phase: int,
               epoch_offset: int, updates_offset: int,
               best: dict, log: list[EpochLog], noise_std: float) -> tuple[int, int, bool]:
    """One training phase. Returns (epochs run, updates run, goal reached)."""
    opt = OptimState.zeros(params)
    order_rng = np.random.default_rng([cfg.seed, phase])
    since_improvement = 0
    updates = 0
    goal_reached = False
    for epoch_idx in range(cfg.max_epochs):
        start = time.monotonic()
        epoch = epoch_offset + epoch_idx + 1
        perm = order_rng.permutation(len(dataset))
        epoch_loss = 0.0
        samples_kept = 0
        rejected = 0
        batch_count = 0
        stop_on_cap = False
        for lo in range(0, len(dataset), cfg.batch_size):
            batch = [dataset[i] for i in perm[lo:lo + cfg.batch_size]]
            step_index = updates_offset + updates
            model_for_grads = params
            if noise_std > 0.0:
                noise_rng = np.random.default_rng([cfg.seed, 0, step_index])
                model_for_grads = params.with_noise(noise_rng, noise_std)
            grads, batch_loss = _batch_gradients(model_for_grads, batch)
            grads, _ = clip_gradients(grads, cfg.clip_norm)
            if adadelta_step(params, grads, opt, cfg):
                epoch_loss += batch_loss
                samples_kept += len(batch)
            else:
                rejected += 1
            updates += 1
            batch_count += 1
            if cfg.max_updates is not None and updates_offset + updates >= cfg.max_updates:
                stop_on_cap = True
                break
        if rejected == batch_count:
            raise TrainingError(
                f"epoch {epoch}: every update rejected (non-finite gradients); "
                f"last mean loss {log[-1].mean_loss if log else float('nan')}"
            )
        mean_loss = epoch_loss / samples_kept
        valid_wer, valid_exprate = _evaluate(params, valid_set, cfg.eval_beam)
        entry = EpochLog(epoch=epoch, phase=phase, mean_loss=mean_loss,
                         valid_wer=valid_wer, valid_exprate=valid_exprate,
                         seconds=time.monotonic() - start,
                         updates=updates_offset + updates)
        log.append(entry)
        logger.info("phase %d epoch %d: loss %.6f wer %.4f exprate %.4f",
                    phase, epoch, mean_loss, valid_wer, valid_exprate)
        if valid_wer < best["wer"]:
            best["wer"] = valid_wer
            best["params"] = params.copy()
            since_improvement = 0
        else:
            since_improvement += 1
        if cfg.loss_goal is not None and mean_loss < cfg.loss_goal and (
                cfg.wer_goal is None or valid_wer <= cfg.wer_goal):
            # Return the model that actually met the goal, not an earlier
            # WER tie: the loss condition is a property of these weights.
            best["wer"] = valid_wer
            best["params"] = params.copy()
            goal_reached = True
            break
        if stop_on_cap or since_improvement >= cfg.patience:
            break
    return epoch_idx + 1, updates, goal_reached


def train_loop(dataset: list[Sample], valid_set: list[Sample],
               params: ModelParams, cfg: TrainConfig) -> TrainResult:
    """Two-phase AdaDelta training; returns the WER-best checkpoint and log."""
    if not dataset:
        raise TrainingError("training dataset is empty")
    if not valid_set:
        raise TrainingError("validation set is empty")
    log: list[EpochLog] = []
    best = {"wer": float("inf"), "params": params.copy()}

    epochs1, updates1, goal = _run_phase(
        params, dataset, valid_set, cfg, phase=1, epoch_offset=0,
        updates_offset=0, best=best, log=log, noise_std=0.0)

    updates2 = 0
    budget_left = cfg.max_updates is None or updates1 < cfg.max_updates
    if not goal and budget_left:
        phase2_params = best["params"].copy()
        _, updates2, _ = _run_phase(
            phase2_params, dataset, valid_set, cfg, phase=2,
            epoch_offset=epochs1, updates_offset=updates1,
            best=best, log=log, noise_std=cfg.weight_noise_std)

    return TrainResult(params=best["params"], log=log, best_wer=best["wer"],
                       updates_used=updates1 + updates2)


def format_log(log: list[EpochLog]) -> str:
    """Tab-separated training log: epoch, loss, WER, ExpRate, seconds."""
    return "".join(entry.line() + "\n" for entry in log)
