"""Beam-search decoding, multi-model ensembling, and attention-trace capture.

Beam search keeps the top ``beam`` live hypotheses per step; every expansion
that emits end-of-sequence retires to a finished pool. The search stops when
the best finished hypothesis outscores every live one (log probabilities
only fall as sequences grow) or at ``max_len``. Scores are raw summed log
probabilities with no length normalization; ensembles average per-model
probabilities arithmetically before the log.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .attention import AttentionState, attend, init_attention_state, project_annotations
from .decoder import decode_step, init_state
from .encoder import AnnotationSequence, encode
from .errors import ConfigError, DataError
from .ink_io import EOS_INDEX, SOS_INDEX, Ink
from .numerics import ModelParams, Tensor, no_grad
from .preprocess import FeatureSequence


@dataclass
class BeamHypothesis:
    """One partial decode: emitted tokens, score, and per-model states."""

    tokens: tuple[int, ...]
    log_prob: float
    s: list[Tensor]
    att: list[AttentionState]
    finished: bool = False

    @property
    def last_token(self) -> int:
        return self.tokens[-1] if self.tokens else SOS_INDEX


@dataclass
class AttentionTrace:
    """Per-step attention rows of the winning hypothesis (model 0)."""

    steps: np.ndarray
    point_span: list[tuple[int, int]]
    tokens: list[str]


@dataclass
class DecodeResult:
    tokens: list[int]
    log_prob: float
    trace: AttentionTrace | None
    truncated: bool


@dataclass
class _ModelRun:
    """Per-model per-input precomputation shared by every hypothesis."""

    params: ModelParams
    annotations: AnnotationSequence
    proj: Tensor


def _prepare(models: list[ModelParams], x: FeatureSequence) -> list[_ModelRun]:
    if not models:
        raise ConfigError("beam search requires at least one model")
    k = models[0].config.vocab_size
    for m in models[1:]:
        if m.config.vocab_size != k:
            raise ConfigError(
                f"ensemble vocabulary mismatch: K={k} vs K={m.config.vocab_size}"
            )
    runs = []
    for params in models:
        annotations = encode(x, params)
        runs.append(_ModelRun(params, annotations,
                              project_annotations(annotations.a, params)))
    return runs


def _expand(hyp: BeamHypothesis, runs: list[_ModelRun]) -> tuple[np.ndarray, list, list]:
    """Averaged next-token distribution plus the shared successor states."""
    dists = []
    new_s = []
    new_att = []
    for m, run in enumerate(runs):
        _, context, att = attend(hyp.s[m], run.annotations, hyp.att[m],
                                 run.params, proj_annotations=run.proj)
        step = decode_step(hyp.last_token, hyp.s[m], context, run.params)
        dists.append(step.y_dist.data)
        new_s.append(step.s)
        new_att.append(att)
    return np.mean(dists, axis=0), new_s, new_att


def _token_strings(params: ModelParams, tokens: list[int]) -> list[str]:
    vocab = params.config.tokens
    if vocab is not None:
        return [vocab[t] for t in tokens]
    return [str(t) for t in tokens]


def beam_search(models: list[ModelParams] | ModelParams, x: FeatureSequence,
                beam: int = 10, max_len: int = 200,
                collect_trace: bool = True) -> DecodeResult:
    """Decode one feature sequence with an ensemble of models."""
    if isinstance(models, ModelParams):
        models = [models]
    if beam < 1:
        raise ConfigError(f"beam width must be >= 1, got {beam}")
    if max_len < 1:
        raise ConfigError(f"max_len must be >= 1, got {max_len}")
    with no_grad():
        runs = _prepare(models, x)
        k = runs[0].params.config.vocab_size
        live = [BeamHypothesis(
            tokens=(), log_prob=0.0,
            s=[init_state(r.annotations, r.params) for r in runs],
            att=[init_attention_state(r.annotations.length) for r in runs])]
        pool: list[BeamHypothesis] = []
        for _ in range(max_len):
            candidates: list[BeamHypothesis] = []
            for hyp in live:
                probs, new_s, new_att = _expand(hyp, runs)
                with np.errstate(divide="ignore"):
                    logs = np.log(probs)
                for tok in range(k):
                    child = BeamHypothesis(
                        tokens=hyp.tokens + (tok,),
                        log_prob=hyp.log_prob + float(logs[tok]),
                        s=new_s, att=new_att, finished=tok == EOS_INDEX)
                    if child.finished:
                        pool.append(child)
                    else:
                        candidates.append(child)
            candidates.sort(key=lambda h: -h.log_prob)
            live = candidates[:beam]
            if not live:
                break
            if pool and max(h.log_prob for h in pool) >= live[0].log_prob:
                break
        if pool:
            best = max(pool, key=lambda h: h.log_prob)
            truncated = False
        else:
            best = max(live, key=lambda h: h.log_prob)
            truncated = True
        trace = None
        if collect_trace:
            history = best.att[0].alpha_history
            steps = (np.stack([a.data for a in history])
                     if history else np.zeros((0, runs[0].annotations.length)))
            trace = AttentionTrace(
                steps=steps,
                point_span=list(runs[0].annotations.point_span),
                tokens=_token_strings(runs[0].params, list(best.tokens)))
    return DecodeResult(tokens=list(best.tokens), log_prob=best.log_prob,
                        trace=trace, truncated=truncated)


def ensemble_log_prob(models: list[ModelParams] | ModelParams,
                      x: FeatureSequence, tokens: list[int]) -> float:
    """Teacher-forced score of a token sequence under the averaged ensemble.

    Sums log(mean_m p_m(token)) left to right — the exact quantity beam
    search accumulates, so returned hypotheses re-score to the same value.
    """
    if isinstance(models, ModelParams):
        models = [models]
    with no_grad():
        runs = _prepare(models, x)
        hyp = BeamHypothesis(
            tokens=(), log_prob=0.0,
            s=[init_state(r.annotations, r.params) for r in runs],
            att=[init_attention_state(r.annotations.length) for r in runs])
        total = 0.0
        for tok in tokens:
            probs, new_s, new_att = _expand(hyp, runs)
            with np.errstate(divide="ignore"):
                total += float(np.log(probs[tok]))
            hyp = BeamHypothesis(tokens=hyp.tokens + (tok,), log_prob=total,
                                 s=new_s, att=new_att)
    return total


def strip_eos(tokens: list[int]) -> list[int]:
    """Drop one trailing end-of-sequence marker if present."""
    if tokens and tokens[-1] == EOS_INDEX:
        return tokens[:-1]
    return list(tokens)


@dataclass(frozen=True)
class ExpRates:
    """Exact-match rate plus error-tolerant rates at edit distance 1..3."""

    exact: float
    le1: float
    le2: float
    le3: float
    corpus_wer: float


def exprate(refs: list[list], hyps: list[list]) -> ExpRates:
    """Expression-level accuracy at edit-distance tolerances 0 through 3."""
    from .train import edit_distance

    if len(refs) != len(hyps):
        raise DataError(f"{len(refs)} references vs {len(hyps)} hypotheses")
    if not refs:
        raise DataError("cannot evaluate an empty corpus")
    within = [0, 0, 0, 0]
    dist_total = 0
    ref_total = 0
    for ref, hyp in zip(refs, hyps):
        d = edit_distance(ref, hyp)
        dist_total += d
        ref_total += len(ref)
        for tol in range(4):
            within[tol] += int(d <= tol)
    n = len(refs)
    corpus_wer = dist_total / ref_total if ref_total else float(dist_total > 0)
    return ExpRates(within[0] / n, within[1] / n, within[2] / n, within[3] / n,
                    corpus_wer)


def _point_masses(alpha: np.ndarray, spans: list[tuple[int, int]],
                  n_points: int) -> np.ndarray:
    """Spread each annotation's attention mass uniformly over its span."""
    masses = np.zeros(n_points)
    for value, (lo, hi) in zip(alpha, spans):
        masses[lo:hi + 1] = value / (hi - lo + 1)
    return masses


def render_heatmap(ink: Ink, masses: np.ndarray, margin: int = 4) -> np.ndarray:
    """Rasterize trajectory points; pixel intensity = attention mass, max 255."""
    xs = np.array([p.x for p in ink.points])
    ys = np.array([p.y for p in ink.points])
    width = int(np.ceil(xs.max() - xs.min())) + 1 + 2 * margin
    height = int(np.ceil(ys.max() - ys.min())) + 1 + 2 * margin
    image = np.zeros((height, width), dtype=np.uint8)
    peak = float(masses.max())
    cols = np.rint(xs - xs.min()).astype(int) + margin
    rows = np.rint(ys.max() - ys).astype(int) + margin
    for row, col, mass in zip(rows, cols, masses):
        level = 0 if peak <= 0.0 else int(round(255.0 * mass / peak))
        image[row, col] = max(image[row, col], level)
    return image


def write_pgm(image: np.ndarray, sink) -> None:
    """Write a grayscale image as binary PGM (P5, maxval 255)."""
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii")
    if hasattr(sink, "write"):
        sink.write(header + image.tobytes())
    else:
        with open(sink, "wb") as fh:
            fh.write(header + image.tobytes())


def export_attention(trace: AttentionTrace, ink: Ink, sink) -> None:
    """Write attention JSON plus one PGM heatmap per decode step.

    ``ink`` must be the normalized, resampled trajectory whose points map
    one-to-one onto the feature rows the trace was produced from; ``sink``
    is a directory.
    """
    n_points = len(ink.points)
    if not trace.point_span or trace.point_span[-1][1] != n_points - 1:
        covered = trace.point_span[-1][1] + 1 if trace.point_span else 0
        raise DataError(
            f"trace spans cover {covered} points but ink has {n_points}"
        )
    os.makedirs(sink, exist_ok=True)
    doc = {
        "tokens": trace.tokens,
        "L": len(trace.point_span),
        "spans": [[lo, hi] for lo, hi in trace.point_span],
        "rows": [row.tolist() for row in trace.steps],
    }
    with open(os.path.join(sink, "attention.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    for step_index, alpha in enumerate(trace.steps):
        masses = _point_masses(alpha, trace.point_span, n_points)
        image = render_heatmap(ink, masses)
        write_pgm(image, os.path.join(sink, f"step_{step_index:03d}.pgm"))
