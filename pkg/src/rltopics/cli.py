"""Command-line entry point: preprocess / train / eval / topics / sweep / report.

Exit codes: 0 success, 1 usage error, 2 data or file-format error,
3 numerical abort during training.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .corpus import (
    PreprocessRules,
    build_vocabulary,
    preprocess,
    read_container,
    read_raw_corpus,
    to_bow,
    write_container,
)
from .embeddings import BowInputs, read_embeddings
from .errors import DataFormatError, NumericalAbort
from .metrics import MetricsTrace
from .model import ModelConfig
from .rng import generate_seeds
from .trainer import RunResult, TrainConfig, evaluate, sweep, train


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--topics", type=int, default=20, help="number of topics")
    p.add_argument("--lambda", dest="kl_weight", type=float, default=5.0,
                   help="weight on the KL term of the training objective")
    p.add_argument("--layers", default="128,128",
                   help="comma-separated inference layer sizes")
    p.add_argument("--inference-dropout", type=float, default=0.2,
                   help="dropout after each inference layer")
    p.add_argument("--policy-dropout", type=float, default=0.0,
                   help="dropout on the sampled topic-weight vector")
    p.add_argument("--theta-softmax", action="store_true",
                   help="apply a softmax to the topic weights before decoding")
    p.add_argument("--no-rl-policy", action="store_true",
                   help="train as a reparameterized VAE instead of the policy-gradient objective")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=1000, help="training epochs")
    p.add_argument("--batch-size", type=int, default=1024, help="documents per batch")
    p.add_argument("--lr", type=float, default=3e-4, help="AdamW learning rate")
    p.add_argument("--beta1", type=float, default=0.9, help="AdamW first-moment decay")
    p.add_argument("--beta2", type=float, default=0.999, help="AdamW second-moment decay")
    p.add_argument("--weight-decay", type=float, default=0.01, help="decoupled weight decay")
    p.add_argument("--clip-norm", type=float, default=1.0, help="global gradient-norm clip")
    p.add_argument("--k", type=int, default=10, help="top-K words for coherence/diversity")
    p.add_argument("--eval-every", type=int, default=1, help="metric cadence in epochs")
    p.add_argument("--metric-cadence", choices=["epoch", "batch"], default="epoch",
                   help="evaluate metrics per epoch or per batch")


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--corpus", required=True, help="preprocessed corpus container (NTMC1)")
    p.add_argument("--embeddings", help="EMB1 document-embedding file")
    p.add_argument("--embedding-source", choices=["file", "bow"],
                   help="model input source (default: file when --embeddings is given, else bow)")


def _add_seed_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="run seed")
    p.add_argument("--meta-seed", type=int, help="derive run seeds from this meta-seed")
    p.add_argument("--num-seeds", type=int, default=1, help="number of seeds drawn from --meta-seed")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="rltopics",
        description="Topic modeling trained with a single-step continuous-action policy gradient.",
    )
    parser.add_argument("--version", action="version", version=f"rltopics {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("preprocess", help="tokenize a raw corpus and write the NTMC1 container",
                       formatter_class=fmt)
    p.add_argument("--input", required=True, help="raw corpus, one document per line")
    p.add_argument("--output", required=True, help="container path to write")
    p.add_argument("--vocab-size", type=int, default=2000, help="max vocabulary size")
    p.add_argument("--min-word-len", type=int, default=3, help="minimum letters per token")
    p.add_argument("--stopwords", help="stopword file, one word per line")
    p.add_argument("--no-lowercase", action="store_true", help="keep original casing")
    p.add_argument("--keep-non-alpha", action="store_true",
                   help="split on whitespace only instead of non-alphabetic runs")
    p.add_argument("--vocab-from", help="reuse the vocabulary of an existing container")

    p = sub.add_parser("train", help="train a model and write a run directory", formatter_class=fmt)
    _add_data_flags(p)
    _add_model_flags(p)
    _add_train_flags(p)
    _add_seed_flags(p)
    p.add_argument("--out-dir", required=True, help="run directory to create")

    p = sub.add_parser("eval", help="evaluate a checkpoint against a corpus", formatter_class=fmt)
    p.add_argument("--checkpoint", required=True, help="NTM1 checkpoint")
    _add_data_flags(p)
    p.add_argument("--k", type=int, default=10, help="top-K words for coherence/diversity")
    p.add_argument("--theta-softmax", action="store_true",
                   help="apply the softmax to topic weights at inference")
    p.add_argument("--batch-size", type=int, default=1024, help="documents per forward batch")

    p = sub.add_parser("topics", help="print the top-K words of every topic", formatter_class=fmt)
    p.add_argument("--checkpoint", required=True, help="NTM1 checkpoint")
    p.add_argument("--corpus", required=True, help="container providing the vocabulary")
    p.add_argument("--k", type=int, default=10, help="words per topic")

    p = sub.add_parser("sweep", help="run a hyperparameter grid", formatter_class=fmt)
    p.add_argument("--grid", required=True, help="JSON file: {parameter: [values...]}")
    _add_data_flags(p)
    _add_model_flags(p)
    _add_train_flags(p)
    p.add_argument("--meta-seed", type=int, required=True, help="meta-seed generating per-run seeds")
    p.add_argument("--num-seeds", type=int, default=1, help="seeds per grid cell")
    p.add_argument("--out-dir", required=True, help="sweep output directory")
    p.add_argument("--workers", type=int, default=1, help="parallel training processes")

    p = sub.add_parser("report", help="render trace figures for a run or sweep directory",
                       formatter_class=fmt)
    p.add_argument("--run-dir", required=True, help="directory containing trace.csv (searched recursively)")

    return parser


def _load_inputs(args, bow):
    source = args.embedding_source
    if source is None:
        source = "file" if args.embeddings else "bow"
    if source == "file":
        if not args.embeddings:
            raise ValueError("--embedding-source file requires --embeddings")
        matrix = read_embeddings(args.embeddings)
        if matrix.num_docs != bow.num_docs:
            raise DataFormatError(
                f"{args.embeddings}: {matrix.num_docs} embedding rows for a corpus "
                f"of {bow.num_docs} documents"
            )
        return matrix
    return BowInputs(bow)


def _train_config(args, input_dim: int, vocab_size: int) -> TrainConfig:
    layers = tuple(int(v) for v in str(args.layers).split(",") if v != "")
    model = ModelConfig(
        num_topics=args.topics,
        vocab_size=vocab_size,
        input_dim=input_dim,
        hidden_layers=layers,
        inference_dropout=args.inference_dropout,
        policy_dropout=args.policy_dropout,
        kl_weight=args.kl_weight,
        theta_softmax=args.theta_softmax,
        use_rl_policy=not args.no_rl_policy,
    )
    return TrainConfig(
        model=model,
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        beta1=args.beta1,
        beta2=args.beta2,
        weight_decay=args.weight_decay,
        clip_norm=args.clip_norm,
        seed=getattr(args, "seed", 0),
        top_k=args.k,
        eval_every=args.eval_every,
        metric_cadence=args.metric_cadence,
    )


def _cmd_preprocess(args) -> int:
    raw = read_raw_corpus(args.input)
    stopwords: frozenset[str] = frozenset()
    if args.stopwords:
        stopwords = frozenset(
            w.strip() for w in Path(args.stopwords).read_text(encoding="utf-8").split() if w.strip()
        )
    rules = PreprocessRules(
        lowercase=not args.no_lowercase,
        strip_non_alpha=not args.keep_non_alpha,
        min_word_len=args.min_word_len,
        stopwords=stopwords,
    )
    docs = [preprocess(d, rules) for d in raw]
    if args.vocab_from:
        _, vocab, _ = read_container(args.vocab_from)
    else:
        vocab = build_vocabulary(docs, args.vocab_size)
    bow = to_bow(docs, vocab)
    write_container(args.output, rules, vocab, bow)
    print(
        f"wrote {args.output}: {bow.num_docs} documents, {len(vocab)} words"
        + (f", {bow.empty_rows} empty" if bow.empty_rows else "")
    )
    return 0


def _print_run(result: RunResult, label: str = "") -> None:
    prefix = f"[{label}] " if label else ""
    r = result.report
    last = result.trace.records[-1] if result.trace.records else None
    ppl = f" perplexity {last.perplexity:.6g}" if last else ""
    print(
        f"{prefix}coherence {r.coherence:.6g} diversity {r.diversity:.6g} "
        f"quality {r.quality:.6g}{ppl} ({result.seconds:.1f}s)"
    )


def _cmd_train(args) -> int:
    _, vocab, bow = read_container(args.corpus)
    inputs = _load_inputs(args, bow)
    config = _train_config(args, inputs.dim, len(vocab))
    out_dir = Path(args.out_dir)
    if args.meta_seed is not None:
        seeds = generate_seeds(args.meta_seed, args.num_seeds)
        for i, seed in enumerate(seeds):
            result = train(replace(config, seed=seed), vocab, bow, inputs, out_dir / f"seed{i:02d}")
            _print_run(result, label=f"seed {seed}")
    else:
        result = train(replace(config, seed=args.seed), vocab, bow, inputs, out_dir)
        _print_run(result)
    return 0


def _cmd_eval(args) -> int:
    _, vocab, bow = read_container(args.corpus)
    inputs = None
    if args.embeddings or args.embedding_source:
        inputs = _load_inputs(args, bow)
    report, ppl = evaluate(
        args.checkpoint,
        vocab,
        bow,
        inputs=inputs,
        k=args.k,
        batch_size=args.batch_size,
        theta_softmax=args.theta_softmax or None,
    )
    print(f"coherence {report.coherence:.6g}")
    print(f"diversity {report.diversity:.6g}")
    print(f"quality {report.quality:.6g}")
    if ppl is not None:
        print(f"perplexity {ppl:.6g}")
    return 0


def _cmd_topics(args) -> int:
    from .model import load_checkpoint
    from .metrics import top_k_words

    _, vocab, _ = read_container(args.corpus)
    params, config = load_checkpoint(args.checkpoint)
    if config.vocab_size != len(vocab):
        raise DataFormatError(
            f"checkpoint vocab size {config.vocab_size} does not match corpus ({len(vocab)})"
        )
    for ids in top_k_words(params["beta"].data, args.k):
        print(" ".join(vocab.words[w] for w in ids))
    return 0


def _cmd_sweep(args) -> int:
    try:
        grid = json.loads(Path(args.grid).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise DataFormatError(f"cannot read sweep grid: {err}") from err
    if not isinstance(grid, dict) or not all(isinstance(v, list) for v in grid.values()):
        raise DataFormatError(f"{args.grid}: grid must be a JSON object of parameter arrays")
    _, vocab, bow = read_container(args.corpus)
    inputs = _load_inputs(args, bow)
    config = _train_config(args, inputs.dim, len(vocab))
    cells = sweep(
        grid, config, vocab, bow, inputs,
        out_dir=args.out_dir,
        meta_seed=args.meta_seed,
        num_seeds=args.num_seeds,
        workers=args.workers,
    )
    for cell in cells:
        s = cell.summary()
        settings = " ".join(f"{k}={s[k]}" for k in grid.keys())
        print(
            f"cell {cell.index:3d} {settings}: coherence {s['coherence_mean']:.6g} "
            f"+/- {s['coherence_ci90']:.6g}, diversity {s['diversity_mean']:.6g}"
        )
    print(f"wrote {Path(args.out_dir) / 'sweep.csv'}")
    return 0


def _cmd_report(args) -> int:
    from .plots import render_trace, render_traces

    root = Path(args.run_dir)
    direct = root / "trace.csv"
    if direct.exists():
        figures = render_trace(MetricsTrace.from_csv(direct), root / "figures", title=root.name)
    else:
        traces = sorted(root.glob("**/trace.csv"))
        if not traces:
            raise DataFormatError(f"{root}: no trace.csv found")
        figures = render_traces(
            [MetricsTrace.from_csv(t) for t in traces], root / "figures", title=root.name
        )
    for path in figures:
        print(f"wrote {path}")
    return 0


_COMMANDS = {
    "preprocess": _cmd_preprocess,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "topics": _cmd_topics,
    "sweep": _cmd_sweep,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except DataFormatError as err:
        print(f"rltopics: data error: {err}", file=sys.stderr)
        return 2
    except NumericalAbort as err:
        print(f"rltopics: numerical abort: {err}", file=sys.stderr)
        return 3
    except FileNotFoundError as err:
        print(f"rltopics: data error: {err}", file=sys.stderr)
        return 2
    except ValueError as err:
        print(f"rltopics: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
