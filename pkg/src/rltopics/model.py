"""Policy network, product-of-experts decoder, and the REINFORCE loss.

The inference network maps a document vector to the mean and log-variance of
a diagonal Gaussian over topic weights. Training treats each document as a
one-step episode: the sampled topic-weight vector is the action, and the
negated weighted-ELBO loss is the reward. With the policy formulation off,
the same network trains as a reparameterized VAE.

Gradient routing in policy mode: the reward is detached inside the score-
function term, the KL term flows pathwise into the encoder heads and the
trainable prior, and the reconstruction term flows into the topic-word
matrix and decoder affine only (the action enters the decoder as a
constant).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import DataFormatError, NumericalAbort
from .rng import RandomSource
from .tensor import Tensor

LOG_2PI = math.log(2.0 * math.pi)
LOGVAR_CLAMP = 10.0  # log-variance head output is clamped to +/- this
INIT_STD = 0.02
LN_EPS = 1e-5

_CKPT_MAGIC = b"NTM1"
_CKPT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    num_topics: int
    vocab_size: int
    input_dim: int
    hidden_layers: tuple[int, ...] = (128, 128)
    inference_dropout: float = 0.2
    policy_dropout: float = 0.0
    kl_weight: float = 5.0
    theta_softmax: bool = False
    use_rl_policy: bool = True

    def __post_init__(self):
        if self.num_topics < 1 or self.vocab_size < 1 or self.input_dim < 1:
            raise ValueError("num_topics, vocab_size and input_dim must be >= 1")
        if any(h < 1 for h in self.hidden_layers):
            raise ValueError("hidden layer sizes must be >= 1")
        for p in (self.inference_dropout, self.policy_dropout):
            if not 0.0 <= p < 1.0:
                raise ValueError("dropout probabilities must be in [0, 1)")
        if self.kl_weight < 0:
            raise ValueError("kl_weight must be >= 0")
        object.__setattr__(self, "hidden_layers", tuple(self.hidden_layers))


def laplace_prior_init(alpha: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian mean/variance approximating a symmetric Dirichlet(alpha).

    mu_k = log a_k - (1/n) sum_i log a_i (zero for a symmetric prior) and
    var_k = (1/a_k)(1 - 2/n) + (1/n^2) sum_i 1/a_i. Needs n >= 2: at n = 1
    the variance collapses to zero for every alpha.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if n < 2:
        raise ValueError("prior needs at least 2 topics (variance degenerates at n=1)")
    var = (1.0 / alpha) * (1.0 - 2.0 / n) + (1.0 / (n * n)) * (n / alpha)
    return np.zeros(n), np.full(n, var)


class PolicyParameters:
    """All trainable tensors, in a fixed enumeration order.

    Affine weights and biases (including the topic-word matrix) initialize
    from N(0, std=0.02) and receive weight decay; layer-norm gains/biases
    start at identity and, like the trainable prior, are decay-exempt.
    """

    def __init__(self, config: ModelConfig, rng: RandomSource | None = None):
        self.config = config
        self._tensors: dict[str, Tensor] = {}
        self._decay: dict[str, bool] = {}
        gen = rng.stream("init") if rng is not None else None

        def normal(shape):
            if gen is None:
                return np.zeros(shape)
            return gen.normal(0.0, INIT_STD, size=shape)

        def register(name, data, decay):
            self._tensors[name] = Tensor(data, requires_grad=True)
            self._decay[name] = decay

        in_dim = config.input_dim
        for i, width in enumerate(config.hidden_layers):
            register(f"layer{i}.weight", normal((in_dim, width)), True)
            register(f"layer{i}.bias", normal((width,)), True)
            register(f"layer{i}.ln_gain", np.ones(width), False)
            register(f"layer{i}.ln_bias", np.zeros(width), False)
            in_dim = width
        n = config.num_topics
        for head in ("mu_head", "logvar_head"):
            register(f"{head}.weight", normal((in_dim, n)), True)
            register(f"{head}.bias", normal((n,)), True)
            register(f"{head}.ln_gain", np.ones(n), False)
            register(f"{head}.ln_bias", np.zeros(n), False)
        register("beta", normal((n, config.vocab_size)), True)
        register("decoder.ln_gain", np.ones(config.vocab_size), False)
        register("decoder.ln_bias", np.zeros(config.vocab_size), False)
        prior_mu, prior_var = laplace_prior_init(1.0 / n, n)
        register("prior_mean", prior_mu, False)
        register("prior_logvar", np.log(prior_var), False)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def names(self) -> list[str]:
        return list(self._tensors)

    def trainable(self) -> list[Tensor]:
        return list(self._tensors.values())

    def decay_flags(self) -> list[bool]:
        return [self._decay[n] for n in self._tensors]

    def num_trainable_scalars(self) -> int:
        return sum(t.data.size for t in self._tensors.values())


def parameter_count(config: ModelConfig) -> int:
    """Headline parameter count: layer units + prior topics + topic-word matrix.

    This reproduces the published accounting (it counts each inference layer
    as its unit count and the prior once); the exact number of trainable
    scalars is :meth:`PolicyParameters.num_trainable_scalars`.
    """
    layer_total = sum(config.hidden_layers)
    return layer_total + config.num_topics + config.vocab_size * config.num_topics


@dataclass
class ForwardResult:
    """Values captured from one forward pass (plain arrays, for reporting)."""

    mu: np.ndarray
    logvar: np.ndarray
    action: np.ndarray
    log_policy: np.ndarray | None
    word_log_probs: np.ndarray
    kl: np.ndarray
    nll: np.ndarray
    loss: float


def infer(
    x: np.ndarray | Tensor,
    params: PolicyParameters,
    train: bool,
    rng: RandomSource | None = None,
) -> tuple[Tensor, Tensor]:
    """Run the inference stack; returns (mu, log-variance) per document."""
    config = params.config
    h = T.as_tensor(x)
    if h.data.ndim != 2 or h.data.shape[1] != config.input_dim:
        raise ValueError(f"input width {h.data.shape} does not match input_dim {config.input_dim}")
    if train and config.inference_dropout > 0 and rng is None:
        raise ValueError("training with dropout requires a random source")
    for i in range(len(config.hidden_layers)):
        h = T.matmul(h, params[f"layer{i}.weight"]) + params[f"layer{i}.bias"]
        h = T.layer_norm(h, params[f"layer{i}.ln_gain"], params[f"layer{i}.ln_bias"], LN_EPS)
        h = T.gelu(h)
        if train and config.inference_dropout > 0:
            h = T.dropout(h, config.inference_dropout, rng.stream("dropout"), train)
    mu = T.matmul(h, params["mu_head.weight"]) + params["mu_head.bias"]
    mu = T.layer_norm(mu, params["mu_head.ln_gain"], params["mu_head.ln_bias"], LN_EPS)
    logvar = T.matmul(h, params["logvar_head.weight"]) + params["logvar_head.bias"]
    logvar = T.layer_norm(logvar, params["logvar_head.ln_gain"], params["logvar_head.ln_bias"], LN_EPS)
    logvar = T.clamp(logvar, -LOGVAR_CLAMP, LOGVAR_CLAMP)
    return mu, logvar


def _sample_raw(mu: Tensor, logvar: Tensor, rng: RandomSource | None, train: bool) -> Tensor:
    """Reparameterized draw from N(mu, exp(logvar)); the mean when evaluating."""
    if not train:
        return mu
    if rng is None:
        raise ValueError("sampling requires a random source")
    eps = rng.stream("action").standard_normal(mu.data.shape)
    sigma = T.exp(0.5 * logvar)
    return mu + sigma * Tensor(eps)


def sample_action(
    mu: Tensor,
    logvar: Tensor,
    rng: RandomSource | None,
    policy_dropout: float,
    train: bool,
) -> Tensor:
    """Sampled topic-weight vector, with inverted-scaling dropout applied."""
    theta = _sample_raw(mu, logvar, rng, train)
    if train and policy_dropout > 0:
        theta = T.dropout(theta, policy_dropout, rng.stream("policy_dropout"), train)
    return theta


def log_policy_density(a: np.ndarray | Tensor, mu: Tensor, logvar: Tensor) -> Tensor:
    """Per-example log-density of the diagonal Gaussian policy at action a."""
    a = T.as_tensor(a)
    if a.data.shape != mu.data.shape or mu.data.shape != logvar.data.shape:
        raise ValueError("action, mean and log-variance shapes must match")
    diff = a - mu
    quad = T.square(diff) * T.exp(-logvar)
    per_dim = -0.5 * (Tensor(LOG_2PI) + logvar + quad)
    return per_dim.sum(axis=1)


def decode(theta: Tensor, params: PolicyParameters) -> Tensor:
    """Product-of-experts word log-probabilities for each document.

    Logits are theta @ beta, passed through the decoder layer-norm affine and
    a row softmax. When the config requests it, theta is replaced by
    softmax(theta) first.
    """
    config = params.config
    if theta.data.ndim != 2 or theta.data.shape[1] != config.num_topics:
        raise ValueError(f"theta shape {theta.data.shape} does not match {config.num_topics} topics")
    if config.theta_softmax:
        theta = T.softmax(theta)
    logits = T.matmul(theta, params["beta"])
    logits = T.layer_norm(logits, params["decoder.ln_gain"], params["decoder.ln_bias"], LN_EPS)
    return T.log_softmax(logits)


def negative_log_likelihood(word_log_probs: Tensor, counts: np.ndarray | Tensor) -> Tensor:
    """Per-example -sum_w count(w) * log p(w); an empty row contributes 0."""
    counts = T.as_tensor(counts)
    return -(word_log_probs * counts).sum(axis=1)


def kl_divergence(mu_p: Tensor, logvar_p: Tensor, mu_q: Tensor, logvar_q: Tensor) -> Tensor:
    """Per-example KL of the posterior from the prior, diagonal Gaussians."""
    diff = mu_p - mu_q
    inv_var_q = T.exp(-logvar_q)
    term = T.square(diff) * inv_var_q + T.exp(logvar_p - logvar_q) - (logvar_p - logvar_q) - Tensor(1.0)
    return 0.5 * term.sum(axis=1)


def weighted_elbo_loss(kl: Tensor, nll: Tensor, kl_weight: float) -> Tensor:
    """kl_weight * KL + NLL; the negated reward used by the policy update."""
    if kl_weight < 0:
        raise ValueError("kl_weight must be >= 0")
    return kl_weight * kl + nll


def training_loss(
    x: np.ndarray,
    counts: np.ndarray,
    params: PolicyParameters,
    rng: RandomSource | None,
    train: bool = True,
) -> tuple[Tensor, ForwardResult]:
    """Assemble the per-batch loss; returns (scalar loss, captured values).

    Policy mode: loss_i = (lam*kl_i + nll_i).detach() * log pi(a_i) +
    lam*kl_i + nll_i, mean over the batch. VAE mode: plain reparameterized
    lam*kl_i + nll_i. Evaluation always reports the plain weighted loss with
    the deterministic action theta = mu.
    """
    config = params.config
    if x.shape[0] != counts.shape[0]:
        raise ValueError("inputs and count rows must align")
    lam = config.kl_weight
    mu, logvar = infer(x, params, train, rng)
    kl = kl_divergence(mu, logvar, params["prior_mean"], params["prior_logvar"])

    raw = _sample_raw(mu, logvar, rng, train)
    use_score = config.use_rl_policy and train
    theta = raw.detach() if use_score else raw
    if train and config.policy_dropout > 0:
        theta = T.dropout(theta, config.policy_dropout, rng.stream("policy_dropout"), train)
    log_probs = decode(theta, params)
    nll = negative_log_likelihood(log_probs, counts)
    elbo_loss = weighted_elbo_loss(kl, nll, lam)

    log_policy = None
    if use_score:
        log_policy = log_policy_density(raw.detach(), mu, logvar)
        reward = -(elbo_loss.data)  # detached return G
        per_example = Tensor(-reward) * log_policy + elbo_loss
    else:
        per_example = elbo_loss
    loss = per_example.mean()
    if not math.isfinite(loss.item()):
        raise NumericalAbort(f"non-finite loss {loss.item()!r}")
    result = ForwardResult(
        mu=mu.data,
        logvar=logvar.data,
        action=raw.data,
        log_policy=None if log_policy is None else log_policy.data,
        word_log_probs=log_probs.data,
        kl=kl.data,
        nll=nll.data,
        loss=loss.item(),
    )
    return loss, result


# ---------------------------------------------------------------------------
# checkpoint IO (NTM1)

def save_checkpoint(params: PolicyParameters, path: str | Path) -> None:
    """Write the versioned binary checkpoint; tensors as little-endian f32."""
    config = params.config
    out = bytearray()
    out += _CKPT_MAGIC
    out += struct.pack("<H", _CKPT_VERSION)
    out += struct.pack(
        "<III", config.num_topics, config.vocab_size, config.input_dim
    )
    out += struct.pack("<I", len(config.hidden_layers))
    for width in config.hidden_layers:
        out += struct.pack("<I", width)
    names = params.names()
    out += struct.pack("<I", len(names))
    for name in names:
        blob = name.encode("utf-8")
        data = params[name].data
        out += struct.pack("<I", len(blob))
        out += blob
        out += struct.pack("<I", data.ndim)
        for dim in data.shape:
            out += struct.pack("<I", dim)
        out += data.astype("<f4").tobytes()
    Path(path).write_bytes(bytes(out))


def load_checkpoint(path: str | Path, **config_overrides) -> tuple[PolicyParameters, ModelConfig]:
    """Read an NTM1 checkpoint.

    The file stores the structural config (topics, vocab, input width, layer
    sizes); behavioral fields like dropout or the softmax flag take their
    defaults unless overridden via keyword arguments.
    """
    try:
        blob = Path(path).read_bytes()
    except OSError as err:
        raise DataFormatError(f"cannot read checkpoint: {err}") from err
    pos = 0

    def unpack(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(blob):
            raise DataFormatError(f"{path}: truncated checkpoint")
        vals = struct.unpack_from(fmt, blob, pos)
        pos += size
        return vals

    if blob[:4] != _CKPT_MAGIC:
        raise DataFormatError(f"{path}: bad magic {blob[:4]!r}, expected {_CKPT_MAGIC!r}")
    pos = 4
    (version,) = unpack("<H")
    if version != _CKPT_VERSION:
        raise DataFormatError(f"{path}: unsupported checkpoint version {version}")
    n, v, input_dim = unpack("<III")
    (num_layers,) = unpack("<I")
    layers = tuple(unpack("<I")[0] for _ in range(num_layers))
    config = ModelConfig(
        num_topics=n, vocab_size=v, input_dim=input_dim, hidden_layers=layers,
        **config_overrides,
    )
    params = PolicyParameters(config, rng=None)
    (count,) = unpack("<I")
    expected = set(params.names())
    seen = set()
    for _ in range(count):
        (name_len,) = unpack("<I")
        if pos + name_len > len(blob):
            raise DataFormatError(f"{path}: truncated checkpoint")
        name = blob[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (rank,) = unpack("<I")
        dims = tuple(unpack("<I")[0] for _ in range(rank))
        size = int(np.prod(dims)) if dims else 1
        nbytes = size * 4
        if pos + nbytes > len(blob):
            raise DataFormatError(f"{path}: truncated tensor payload for {name!r}")
        data = np.frombuffer(blob, dtype="<f4", count=size, offset=pos).reshape(dims)
        pos += nbytes
        if name not in expected:
            raise DataFormatError(f"{path}: unexpected tensor {name!r}")
        if params[name].data.shape != dims:
            raise DataFormatError(
                f"{path}: tensor {name!r} has shape {dims}, expected {params[name].data.shape}"
            )
        params[name].data = data.astype(np.float64)
        seen.add(name)
    if pos != len(blob):
        raise DataFormatError(f"{path}: trailing bytes after tensors")
    if seen != expected:
        raise DataFormatError(f"{path}: missing tensors {sorted(expected - seen)}")
    return params, config
