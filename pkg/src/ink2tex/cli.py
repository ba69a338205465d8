"""Command-line entry point: synth, preprocess, train, decode, evaluate.

Flag resolution order is flag > config file > built-in default. The config
file is flat ``key=value`` text with ``#`` comments; keys are flag names
with dashes or underscores. Exit codes: 0 success, 1 usage error (bad
flags, missing files), 2 data error (malformed inputs, model mismatch).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import synth as synth_mod
from .errors import ConfigError, Ink2TexError
from .infer import beam_search, export_attention, exprate, strip_eos
from .ink_io import (
    Ink,
    Vocabulary,
    load_vocabulary,
    parse_inkml,
    parse_points,
    serialize_points,
)
from .numerics import ModelConfig, init_params, load_model, save_model
from .preprocess import (
    DEFAULT_SPACING,
    FeatureSequence,
    extract_features,
    format_features,
    normalize,
    parse_features,
    resample,
)
from .train import Sample, TrainConfig, format_log, train_loop

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.tsv"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so main() owns exit codes."""

    def error(self, message):
        raise _UsageError(message)


def _load_config(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    if not os.path.isfile(path):
        raise _UsageError(f"config file not found: {path}")
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
            key, value = line.split("=", 1)
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _opt_int(text: str):
    return None if text.lower() == "none" else int(text)


def _opt_float(text: str):
    return None if text.lower() == "none" else float(text)


def _layer_list(text: str):
    if text.lower() == "none":
        return None
    return tuple(int(part) for part in text.split(",") if part.strip())


def _resolve(args: argparse.Namespace, config: dict[str, str],
             key: str, default, cast):
    """flag > config file > default."""
    flag_value = getattr(args, key)
    if flag_value is not None:
        return flag_value
    if key in config:
        return cast(config[key])
    return default


# ---------------------------------------------------------------------------
# dataset archive


def _write_archive(out_dir: str, samples: list[tuple[str, FeatureSequence, list[str]]]):
    os.makedirs(out_dir, exist_ok=True)
    lines = []
    for sample_id, features, label in samples:
        feat_name = sample_id + ".feat"
        with open(os.path.join(out_dir, feat_name), "w", encoding="utf-8") as fh:
            fh.write(format_features(features))
        lines.append(f"{sample_id}\t{feat_name}\t{' '.join(label)}\n")
    with open(os.path.join(out_dir, MANIFEST_NAME), "w", encoding="utf-8") as fh:
        fh.writelines(lines)


def _read_archive(archive_dir: str) -> list[tuple[str, FeatureSequence, list[str]]]:
    manifest = os.path.join(archive_dir, MANIFEST_NAME)
    if not os.path.isfile(manifest):
        raise _UsageError(f"no {MANIFEST_NAME} in {archive_dir}")
    out = []
    with open(manifest, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise Ink2TexError(
                    f"{manifest}:{lineno}: expected 3 tab-separated fields"
                )
            sample_id, feat_name, label_text = fields
            with open(os.path.join(archive_dir, feat_name), encoding="utf-8") as feat:
                features = parse_features(feat.read())
            out.append((sample_id, features, label_text.split()))
    if not out:
        raise Ink2TexError(f"{manifest} lists no samples")
    return out


def _load_ink(path: str) -> Ink:
    if path.endswith(".inkml"):
        with open(path, "rb") as fh:
            return parse_inkml(fh.read())
    with open(path, encoding="utf-8") as fh:
        return parse_points(fh.read())


def _featurize_file(path: str, spacing: float) -> FeatureSequence:
    ink = _load_ink(path)
    return extract_features(resample(normalize(ink), spacing))


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args: argparse.Namespace, config: dict[str, str]) -> int:
    count = _resolve(args, config, "count", 20, int)
    seed = _resolve(args, config, "seed", 7, int)
    depth = _resolve(args, config, "depth", 1, int)
    symbols_text = _resolve(
        args, config, "symbols", ",".join(synth_mod.SynthSpec().symbols), str)
    symbols = tuple(s for s in symbols_text.split(",") if s)
    spec = synth_mod.SynthSpec(symbols=symbols, depth=depth, seed=seed)
    inks = synth_mod.generate(spec, count)
    os.makedirs(args.out_dir, exist_ok=True)
    for i, ink in enumerate(inks):
        path = os.path.join(args.out_dir, f"sample_{i:04d}.points")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(serialize_points(ink))
    vocab = synth_mod.vocabulary_for(spec)
    with open(os.path.join(args.out_dir, "vocab.txt"), "w", encoding="utf-8") as fh:
        fh.write(vocab.content_text())
    print(f"wrote {count} samples to {args.out_dir}")
    return 0


def cmd_preprocess(args: argparse.Namespace, config: dict[str, str]) -> int:
    spacing = _resolve(args, config, "spacing", DEFAULT_SPACING, float)
    workers = _resolve(args, config, "workers", os.cpu_count() or 1, int)
    if not os.path.isdir(args.in_dir):
        raise _UsageError(f"input directory not found: {args.in_dir}")
    names = sorted(n for n in os.listdir(args.in_dir)
                   if n.endswith((".points", ".inkml")))
    if not names:
        raise _UsageError(f"no .points or .inkml files in {args.in_dir}")
    paths = [os.path.join(args.in_dir, n) for n in names]
    if workers > 1 and len(paths) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            feature_list = list(pool.map(_featurize_file, paths,
                                         [spacing] * len(paths)))
    else:
        feature_list = [_featurize_file(p, spacing) for p in paths]
    samples = []
    for name, path, features in zip(names, paths, feature_list):
        label = _load_ink(path).label or []
        samples.append((os.path.splitext(name)[0], features, label))
    _write_archive(args.out_dir, samples)
    print(f"wrote {len(samples)} samples to {args.out_dir}")
    return 0


def _vocabulary_for_training(args, archive) -> Vocabulary:
    if args.vocab is not None:
        if not os.path.isfile(args.vocab):
            raise _UsageError(f"vocabulary file not found: {args.vocab}")
        with open(args.vocab, encoding="utf-8") as fh:
            return load_vocabulary(fh.read())
    tokens = sorted({tok for _, _, label in archive for tok in label})
    if not tokens:
        raise Ink2TexError("cannot derive a vocabulary: archive has no labels")
    return Vocabulary.from_content_tokens(tokens)


def cmd_train(args: argparse.Namespace, config: dict[str, str]) -> int:
    archive = _read_archive(args.dataset)
    valid_archive = _read_archive(args.valid) if args.valid else archive
    vocab = _vocabulary_for_training(args, archive)

    model_cfg = ModelConfig(
        vocab_size=len(vocab),
        encoder_layers=_resolve(args, config, "enc_layers", 4, int),
        encoder_hidden=_resolve(args, config, "enc_hidden", 250, int),
        pooled_layers=_resolve(args, config, "pooled_layers", None, _layer_list),
        dec_hidden=_resolve(args, config, "dec_hidden", 256, int),
        embed_dim=_resolve(args, config, "embed_dim", 256, int),
        att_dim=_resolve(args, config, "att_dim", 500, int),
        cov_width=_resolve(args, config, "cov_width", 11, int),
        cov_channels=_resolve(args, config, "cov_channels", 5, int),
        spacing=_resolve(args, config, "spacing", DEFAULT_SPACING, float),
        tokens=tuple(vocab.tokens),
    )
    seed = _resolve(args, config, "seed", 0, int)
    train_cfg = TrainConfig(
        rho=_resolve(args, config, "rho", 0.95, float),
        epsilon=_resolve(args, config, "epsilon", 1e-6, float),
        clip_norm=_resolve(args, config, "clip_norm", 5.0, float),
        weight_noise_std=_resolve(args, config, "noise_std", 0.05, float),
        max_epochs=_resolve(args, config, "max_epochs", 500, int),
        patience=_resolve(args, config, "patience", 15, int),
        seed=seed,
        batch_size=_resolve(args, config, "batch_size", 8, int),
        eval_beam=_resolve(args, config, "eval_beam", 1, int),
        max_updates=_resolve(args, config, "max_updates", None, _opt_int),
        loss_goal=_resolve(args, config, "loss_goal", None, _opt_float),
        wer_goal=_resolve(args, config, "wer_goal", None, _opt_float),
    )

    def to_samples(entries):
        return [Sample(sid, feats, vocab.encode_label(label))
                for sid, feats, label in entries]

    params = init_params(model_cfg, seed)
    result = train_loop(to_samples(archive), to_samples(valid_archive),
                        params, train_cfg)
    save_model(result.params, args.model_out)
    log_path = args.log or args.model_out + ".log"
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write(format_log(result.log))
    print(f"trained {result.updates_used} updates; best WER {result.best_wer:.4f}; "
          f"model saved to {args.model_out}")
    return 0


def cmd_decode(args: argparse.Namespace, config: dict[str, str]) -> int:
    beam = _resolve(args, config, "beam", 10, int)
    max_len = _resolve(args, config, "max_len", 200, int)
    spacing = _resolve(args, config, "spacing", DEFAULT_SPACING, float)
    models = []
    for path in args.models:
        if not os.path.isfile(path):
            raise _UsageError(f"model file not found: {path}")
        models.append(load_model(path))
    vocab_tokens = models[0].config.tokens
    if vocab_tokens is None:
        raise Ink2TexError("model carries no vocabulary tokens; cannot decode")

    if os.path.isdir(args.input):
        entries = [(sid, feats) for sid, feats, _ in _read_archive(args.input)]
        inks = {}
    else:
        ink = _load_ink(args.input)
        prepared = resample(normalize(ink), spacing)
        entries = [(os.path.basename(args.input), extract_features(prepared))]
        inks = {entries[0][0]: prepared}

    lines = []
    for sample_id, features in entries:
        result = beam_search(models, features, beam=beam, max_len=max_len)
        tokens = [vocab_tokens[t] for t in strip_eos(result.tokens)]
        fields = [" ".join(tokens), f"{result.log_prob:.6f}"]
        if result.truncated:
            fields.append("[truncated]")
        lines.append("\t".join(fields) + "\n")
        if args.attention_out and result.trace is not None:
            if sample_id not in inks:
                raise _UsageError(
                    "--attention-out needs a single ink input, not an archive")
            export_attention(result.trace, inks[sample_id],
                             os.path.join(args.attention_out, sample_id))
    text = "".join(lines)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _read_token_lines(path: str) -> list[list[str]]:
    """Token sequences from plain lines, decode output, or a manifest."""
    if not os.path.isfile(path):
        raise _UsageError(f"file not found: {path}")
    out = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) == 3 and fields[1].endswith(".feat"):
                out.append(fields[2].split())
            else:
                out.append(fields[0].split())
    return out


def cmd_evaluate(args: argparse.Namespace, config: dict[str, str]) -> int:
    refs = _read_token_lines(args.refs)
    hyps = _read_token_lines(args.hyps)
    rates = exprate(refs, hyps)
    print(f"ExpRate {100.0 * rates.exact:.2f}")
    print(f"<=1     {100.0 * rates.le1:.2f}")
    print(f"<=2     {100.0 * rates.le2:.2f}")
    print(f"<=3     {100.0 * rates.le3:.2f}")
    print(f"WER     {100.0 * rates.corpus_wer:.2f}")
    return 0


# ---------------------------------------------------------------------------
# argument wiring


def _build_parser() -> _Parser:
    parser = _Parser(prog="ink2tex",
                     description="Handwritten-math trajectory to LaTeX tokens.")
    parser.add_argument("--config", default=None,
                        help="flat key=value config file (flag > config > default)")
    parser.add_argument("--verbose", action="store_true",
                        help="log INFO-level progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    p.add_argument("out_dir")
    p.add_argument("--count", type=int, default=None, help="samples (default 20)")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (default 7)")
    p.add_argument("--depth", type=int, default=None,
                   help="expression nesting depth (default 1)")
    p.add_argument("--symbols", default=None,
                   help="comma-separated symbol inventory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="ink files -> feature archive")
    p.add_argument("in_dir")
    p.add_argument("out_dir")
    p.add_argument("--spacing", type=float, default=None,
                   help=f"resampling arc-length step (default {DEFAULT_SPACING})")
    p.add_argument("--workers", type=int, default=None,
                   help="parallel workers (default: available cores)")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train a model on a feature archive")
    p.add_argument("dataset", help="training archive directory")
    p.add_argument("model_out", help="output model file")
    p.add_argument("--valid", default=None,
                   help="validation archive (default: the training archive)")
    p.add_argument("--vocab", default=None,
                   help="vocabulary file (default: derived from labels)")
    p.add_argument("--log", default=None,
                   help="training log path (default: MODEL_OUT.log)")
    for name, typ, help_text in [
        ("enc-layers", int, "encoder layers (default 4)"),
        ("enc-hidden", int, "encoder units per direction (default 250)"),
        ("dec-hidden", int, "decoder units (default 256)"),
        ("embed-dim", int, "embedding size (default 256)"),
        ("att-dim", int, "attention size (default 500)"),
        ("cov-width", int, "coverage filter width (default 11)"),
        ("cov-channels", int, "coverage channels (default 5)"),
        ("max-epochs", int, "epoch cap (default 500)"),
        ("patience", int, "early-stop patience (default 15)"),
        ("batch-size", int, "sequences per update (default 8)"),
        ("seed", int, "init/order/noise seed (default 0)"),
        ("eval-beam", int, "validation beam width (default 1)"),
        ("rho", float, "AdaDelta decay (default 0.95)"),
        ("epsilon", float, "AdaDelta epsilon (default 1e-6)"),
        ("clip-norm", float, "global gradient-norm cap (default 5)"),
        ("noise-std", float, "phase-2 weight noise (default 0.05)"),
        ("spacing", float, "feature spacing recorded in the model"),
    ]:
        p.add_argument(f"--{name}", type=typ, default=None, help=help_text)
    p.add_argument("--pooled-layers", type=_layer_list, default=None,
                   help="comma-separated layer indices whose input is pooled")
    p.add_argument("--max-updates", type=_opt_int, default=None,
                   help="hard cap on gradient updates (default none)")
    p.add_argument("--loss-goal", type=_opt_float, default=None,
                   help="stop when mean train loss drops below this")
    p.add_argument("--wer-goal", type=_opt_float, default=None,
                   help="loss-goal stop also requires WER <= this")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("decode", help="beam-search decode an archive or one ink")
    p.add_argument("input", help="feature archive directory or a single ink file")
    p.add_argument("models", nargs="+", help="model file(s); >1 forms an ensemble")
    p.add_argument("--beam", type=int, default=None, help="beam width (default 10)")
    p.add_argument("--max-len", type=int, default=None,
                   help="decode length cap (default 200)")
    p.add_argument("--spacing", type=float, default=None,
                   help="resampling step for raw ink input")
    p.add_argument("--out", default=None, help="output file (default stdout)")
    p.add_argument("--attention-out", default=None,
                   help="directory for attention JSON + PGM heatmaps")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("evaluate", help="ExpRate / error-tolerant rates / WER")
    p.add_argument("refs", help="reference token lines or manifest.tsv")
    p.add_argument("hyps", help="hypothesis token lines or decode output")
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s")
        config = _load_config(args.config)
        return args.func(args, config)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except Ink2TexError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
