"""Seeded training runs: batching, per-epoch metrics, checkpoints, sweeps.

A run directory holds ``run.json`` (resolved config), ``trace.csv`` (the
per-epoch metrics), ``model.ntm1`` (checkpoint) and ``topics.txt`` (one
topic per line, top-K words space-separated).
"""

from __future__ import annotations

import itertools
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .corpus import SparseDocTermMatrix, Vocabulary
from .errors import NumericalAbort
from .metrics import (
    CooccurrenceCache,
    EpochRecord,
    MetricsTrace,
    TopicReport,
    build_cache,
    npmi_coherence,
    top_k_words,
    topic_diversity,
    topic_quality,
)
from .model import (
    ModelConfig,
    PolicyParameters,
    decode,
    infer,
    load_checkpoint,
    negative_log_likelihood,
    save_checkpoint,
    training_loss,
)
from .optim import AdamWState, adamw_step, clip_global_norm
from .rng import RandomSource, generate_seeds
from .tensor import Tape, backward

log = logging.getLogger(__name__)

# 90% two-sided normal interval
_Z90 = 1.6448536269514722


@dataclass(frozen=True)
class TrainConfig:
    """Model config plus everything the training loop needs."""

    model: ModelConfig
    epochs: int = 1000
    batch_size: int = 1024
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.01
    clip_norm: float = 1.0
    seed: int = 0
    top_k: int = 10
    eval_every: int = 1
    metric_cadence: str = "epoch"  # or "batch"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.metric_cadence not in ("epoch", "batch"):
            raise ValueError("metric_cadence must be 'epoch' or 'batch'")


@dataclass
class RunResult:
    report: TopicReport
    trace: MetricsTrace
    checkpoint_path: Path | None
    seconds: float


def _config_dict(config: TrainConfig) -> dict:
    d = asdict(config)
    d["model"]["hidden_layers"] = list(config.model.hidden_layers)
    return d


def _counts_csr(bow: SparseDocTermMatrix):
    from scipy import sparse

    indptr = [0]
    indices: list[int] = []
    values: list[float] = []
    for row in bow.rows:
        for wid, cnt in row:
            indices.append(wid)
            values.append(float(cnt))
        indptr.append(len(indices))
    return sparse.csr_matrix(
        (np.array(values), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
        shape=(bow.num_docs, bow.vocab_size),
    )


def _topic_report(beta: np.ndarray, vocab: Vocabulary, cache: CooccurrenceCache, k: int) -> TopicReport:
    topics = top_k_words(beta, k)
    per_topic, coherence = npmi_coherence(topics, cache)
    diversity = topic_diversity(topics)
    return TopicReport(
        topics=topics,
        words=[[vocab.words[w] for w in ids] for ids in topics],
        k=k,
        per_topic_coherence=per_topic,
        coherence=coherence,
        diversity=diversity,
        quality=topic_quality(coherence, diversity),
    )


def _write_run_dir(out_dir: Path, config: TrainConfig, params, trace: MetricsTrace, report: TopicReport) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "run.json", "w") as fh:
        json.dump(_config_dict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")
    trace.to_csv(out_dir / "trace.csv")
    ckpt = out_dir / "model.ntm1"
    save_checkpoint(params, ckpt)
    with open(out_dir / "topics.txt", "w") as fh:
        for words in report.words:
            fh.write(" ".join(words) + "\n")
    return ckpt


def train(
    config: TrainConfig,
    vocab: Vocabulary,
    bow: SparseDocTermMatrix,
    inputs,
    out_dir: str | Path | None = None,
) -> RunResult:
    """Run one seeded training job and (optionally) write its run directory.

    ``inputs`` provides the per-document model inputs (an EmbeddingMatrix or
    BowInputs); its row count must match the corpus.
    """
    mc = config.model
    if inputs.num_docs != bow.num_docs:
        raise ValueError(
            f"inputs hold {inputs.num_docs} documents but the corpus has {bow.num_docs}"
        )
    if inputs.dim != mc.input_dim:
        raise ValueError(f"inputs dim {inputs.dim} does not match model input_dim {mc.input_dim}")
    if mc.vocab_size != len(vocab):
        raise ValueError("model vocab_size does not match vocabulary")

    start = time.perf_counter()
    rng = RandomSource(config.seed)
    params = PolicyParameters(mc, rng)
    opt = AdamWState.for_params(
        params.trainable(),
        decay=params.decay_flags(),
        lr=config.lr,
        beta1=config.beta1,
        beta2=config.beta2,
        weight_decay=config.weight_decay,
    )
    counts = _counts_csr(bow)
    cache = build_cache(bow)
    total_tokens = bow.total_tokens()
    num_docs = bow.num_docs
    trainable = params.trainable()
    trace = MetricsTrace()
    per_batch = config.metric_cadence == "batch"
    step = 0

    for epoch in range(1, config.epochs + 1):
        order = rng.stream("shuffle").permutation(num_docs)
        loss_sum = kl_sum = nll_sum = 0.0
        for lo in range(0, num_docs, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            x = inputs.take(idx)
            c = np.asarray(counts[idx].todense(), dtype=np.float64)
            step += 1
            try:
                with Tape() as tape:
                    loss, result = training_loss(x, c, params, rng, train=True)
                grad_map = backward(loss, tape)
            except (NumericalAbort, FloatingPointError) as err:
                raise NumericalAbort(
                    f"numerical abort at epoch {epoch}, batch {lo // config.batch_size}: {err}",
                    epoch=epoch,
                    batch=lo // config.batch_size,
                ) from err
            grads = [grad_map.get(t, np.zeros_like(t.data)) for t in trainable]
            grads, _ = clip_global_norm(grads, config.clip_norm)
            adamw_step(trainable, grads, opt)
            # the traced loss is the weighted-ELBO objective (the negated
            # reward), not the policy-gradient surrogate
            batch_elbo = mc.kl_weight * result.kl + result.nll
            loss_sum += float(batch_elbo.sum())
            kl_sum += float(result.kl.sum())
            nll_sum += float(result.nll.sum())
            if per_batch and step % config.eval_every == 0:
                report = _topic_report(params["beta"].data, vocab, cache, config.top_k)
                batch_tokens = float(c.sum())
                trace.append(
                    EpochRecord(
                        epoch=step,
                        loss=float(batch_elbo.mean()),
                        kl=float(result.kl.mean()),
                        nll=float(result.nll.mean()),
                        coherence=report.coherence,
                        diversity=report.diversity,
                        quality=report.quality,
                        perplexity=float(np.exp(result.nll.sum() / batch_tokens)) if batch_tokens else float("nan"),
                    )
                )
        if not per_batch and (epoch % config.eval_every == 0 or epoch == config.epochs):
            report = _topic_report(params["beta"].data, vocab, cache, config.top_k)
            trace.append(
                EpochRecord(
                    epoch=epoch,
                    loss=loss_sum / num_docs,
                    kl=kl_sum / num_docs,
                    nll=nll_sum / num_docs,
                    coherence=report.coherence,
                    diversity=report.diversity,
                    quality=report.quality,
                    perplexity=float(np.exp(nll_sum / total_tokens)),
                )
            )

    report = _topic_report(params["beta"].data, vocab, cache, config.top_k)
    ckpt_path = None
    if out_dir is not None:
        ckpt_path = _write_run_dir(Path(out_dir), config, params, trace, report)
    seconds = time.perf_counter() - start
    return RunResult(report=report, trace=trace, checkpoint_path=ckpt_path, seconds=seconds)


def evaluate(
    checkpoint: str | Path,
    vocab: Vocabulary,
    bow: SparseDocTermMatrix,
    inputs=None,
    k: int = 10,
    batch_size: int = 1024,
    theta_softmax: bool | None = None,
) -> tuple[TopicReport, float | None]:
    """Topic metrics from a checkpoint against a reference corpus.

    Coherence and diversity depend only on the topic-word matrix, so they are
    identical for train and test corpora over the same vocabulary. Perplexity
    is computed when ``inputs`` are supplied, using the deterministic action
    theta = mu.
    """
    overrides = {} if theta_softmax is None else {"theta_softmax": theta_softmax}
    params, config = load_checkpoint(checkpoint, **overrides)
    if config.vocab_size != len(vocab):
        raise ValueError(
            f"checkpoint vocab size {config.vocab_size} does not match corpus ({len(vocab)})"
        )
    cache = build_cache(bow)
    report = _topic_report(params["beta"].data, vocab, cache, k)
    ppl = None
    if inputs is not None:
        if inputs.num_docs != bow.num_docs:
            raise ValueError("inputs row count does not match corpus")
        counts = _counts_csr(bow)
        total_nll = 0.0
        for lo in range(0, bow.num_docs, batch_size):
            idx = np.arange(lo, min(lo + batch_size, bow.num_docs))
            x = inputs.take(idx)
            mu, _ = infer(x, params, train=False)
            log_probs = decode(mu, params)
            c = np.asarray(counts[idx].todense(), dtype=np.float64)
            nll = negative_log_likelihood(log_probs, c)
            total_nll += float(nll.data.sum())
        total_tokens = bow.total_tokens()
        if total_tokens == 0:
            raise ValueError("cannot compute perplexity of a corpus with zero tokens")
        ppl = float(np.exp(total_nll / total_tokens))
    return report, ppl


# ---------------------------------------------------------------------------
# hyperparameter sweeps

_MODEL_KEYS = {
    "topics": "num_topics",
    "lambda": "kl_weight",
    "layers": "hidden_layers",
    "inference_dropout": "inference_dropout",
    "policy_dropout": "policy_dropout",
    "theta_softmax": "theta_softmax",
    "rl_policy": "use_rl_policy",
}
_TRAIN_KEYS = {
    "epochs": "epochs",
    "batch_size": "batch_size",
    "lr": "lr",
    "weight_decay": "weight_decay",
    "clip_norm": "clip_norm",
    "k": "top_k",
    "eval_every": "eval_every",
}


def apply_override(config: TrainConfig, key: str, value) -> TrainConfig:
    """Return a config with one sweep-grid entry applied."""
    if key in _MODEL_KEYS:
        attr = _MODEL_KEYS[key]
        if attr == "hidden_layers":
            value = tuple(int(v) for v in value)
        return replace(config, model=replace(config.model, **{attr: value}))
    if key in _TRAIN_KEYS:
        return replace(config, **{_TRAIN_KEYS[key]: value})
    raise ValueError(f"unknown sweep parameter {key!r}")


def expand_grid(grid: dict[str, list]) -> list[dict]:
    """Cartesian product of the grid, in the file's key order."""
    if not grid:
        raise ValueError("sweep grid is empty")
    keys = list(grid)
    cells = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        cells.append(dict(zip(keys, combo)))
    return cells


@dataclass
class SweepCell:
    index: int
    overrides: dict
    seeds: list[int]
    coherence: list[float] = field(default_factory=list)
    diversity: list[float] = field(default_factory=list)
    quality: list[float] = field(default_factory=list)
    final_loss: list[float] = field(default_factory=list)

    def summary(self) -> dict:
        def agg(values: list[float]) -> tuple[float, float]:
            arr = np.asarray(values, dtype=np.float64)
            mean = float(arr.mean())
            if arr.size < 2:
                return mean, 0.0
            ci = _Z90 * float(arr.std(ddof=1)) / np.sqrt(arr.size)
            return mean, float(ci)

        out = {"cell": self.index, **self.overrides, "num_seeds": len(self.seeds)}
        for name, values in (
            ("coherence", self.coherence),
            ("diversity", self.diversity),
            ("quality", self.quality),
            ("final_loss", self.final_loss),
        ):
            mean, ci = agg(values)
            out[f"{name}_mean"] = mean
            out[f"{name}_ci90"] = ci
        return out


def _run_sweep_job(args) -> tuple[int, int, float, float, float, float]:
    cell_idx, seed_idx, config, vocab, bow, inputs, run_dir = args
    result = train(config, vocab, bow, inputs, out_dir=run_dir)
    return (
        cell_idx,
        seed_idx,
        result.report.coherence,
        result.report.diversity,
        result.report.quality,
        result.trace.records[-1].loss if result.trace.records else float("nan"),
    )


def sweep(
    grid: dict[str, list],
    base: TrainConfig,
    vocab: Vocabulary,
    bow: SparseDocTermMatrix,
    inputs,
    out_dir: str | Path,
    meta_seed: int,
    num_seeds: int,
    workers: int = 1,
) -> list[SweepCell]:
    """Run every grid cell with ``num_seeds`` independent seeds.

    Results are aggregated per cell as mean and 90% normal-approximation
    confidence interval, merged in deterministic grid order, and written to
    ``sweep.csv`` under the output directory.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = expand_grid(grid)
    seeds = generate_seeds(meta_seed, num_seeds)
    results = [SweepCell(index=i, overrides=dict(cell), seeds=list(seeds)) for i, cell in enumerate(cells)]

    jobs = []
    for i, cell in enumerate(cells):
        config = base
        for key, value in cell.items():
            config = apply_override(config, key, value)
        for j, seed in enumerate(seeds):
            run_config = replace(config, seed=seed)
            run_dir = out_dir / f"cell{i:03d}" / f"seed{j:02d}"
            jobs.append((i, j, run_config, vocab, bow, inputs, run_dir))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_sweep_job, jobs))
    else:
        outcomes = [_run_sweep_job(job) for job in jobs]

    for cell_idx, _seed_idx, coh, div, qual, loss in outcomes:
        cell = results[cell_idx]
        cell.coherence.append(coh)
        cell.diversity.append(div)
        cell.quality.append(qual)
        cell.final_loss.append(loss)

    _write_sweep_csv(out_dir / "sweep.csv", grid, results)
    return results


def _write_sweep_csv(path: Path, grid: dict[str, list], results: list[SweepCell]) -> None:
    import csv

    metric_cols = [
        "coherence_mean", "coherence_ci90",
        "diversity_mean", "diversity_ci90",
        "quality_mean", "quality_ci90",
        "final_loss_mean", "final_loss_ci90",
    ]
    header = ["cell", *grid.keys(), "num_seeds", *metric_cols]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for cell in results:
            summary = cell.summary()
            row = [summary["cell"]]
            row += [summary[k] for k in grid.keys()]
            row.append(summary["num_seeds"])
            row += [f"{summary[k]:.6g}" for k in metric_cols]
            writer.writerow(row)
