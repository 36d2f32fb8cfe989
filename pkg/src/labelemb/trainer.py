"""Model assembly, Nadam optimisation and the epoch loop."""
from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import neural
from .corpus import Corpus, Vocab
from .evaluation import conll_f1
from .model import MODES, SlotTagger, init_params

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    mode: str = "le-window"
    batch_size: int = 32
    lr: float = 0.004
    epochs: int = 30
    patience: int = 3
    min_improvement: float = 1e-6
    l2_reg: float = 1e-6
    reg_window: bool = False
    dropout: float = 0.5
    gru_units: int = 60
    embed_dim: int = 300
    embed_init_std: float = 0.1
    window: int = 5
    pool_stride: int = 10
    loss: str = "crf"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    schedule_decay: float = 0.004
    seed: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.loss not in ("crf", "softmax"):
            raise ValueError(f"loss must be 'crf' or 'softmax', got {self.loss!r}")
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("window must be a positive odd width (2q+1)")
        for name in ("batch_size", "epochs", "patience", "gru_units", "embed_dim", "pool_stride"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.lr < 0 or self.l2_reg < 0:
            raise ValueError("lr and l2_reg must be non-negative")

    @property
    def half_window(self) -> int:
        return self.window // 2

    def to_text(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)}\n" for f in dataclasses.fields(self))

    @classmethod
    def from_text(cls, text: str, source="<config>", **overrides) -> "TrainConfig":
        """Parse flat ``key=value`` lines; ``#`` starts a comment."""
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        values = {}
        for line_no, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, raw = (s.strip() for s in line.partition("="))
            if not sep or key not in types:
                raise ValueError(f"{source}:{line_no}: unknown or malformed entry {line!r}")
            values[key] = _coerce(raw, types[key], f"{source}:{line_no}")
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @classmethod
    def load(cls, path, **overrides) -> "TrainConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"), str(path), **overrides)


def _coerce(raw, kind, where):
    try:
        if kind in ("bool", bool):
            if raw.lower() not in ("true", "false", "1", "0"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1")
        if kind in ("int", int):
            return int(raw)
        if kind in ("float", float):
            return float(raw)
        return raw
    except ValueError:
        raise ValueError(f"{where}: cannot parse {raw!r} as {kind}") from None


def assemble_model(cfg: TrainConfig, vocab: Vocab, cooccurrence=None, embeddings=None) -> SlotTagger:
    if cfg.mode != "bl":
        if cooccurrence is None or not getattr(cooccurrence, "finalized", True):
            raise ValueError(f"mode {cfg.mode} requires a finalized co-occurrence matrix")
    values = getattr(cooccurrence, "values", cooccurrence)
    rng = np.random.default_rng(cfg.seed)
    params = init_params(cfg, vocab, rng, embeddings)
    return SlotTagger(params, vocab, cfg, values if cfg.mode != "bl" else None)


class NonFiniteError(FloatingPointError):
    pass


@dataclass
class NadamState:
    first: dict[str, np.ndarray]
    second: dict[str, np.ndarray]
    step: int = 0
    momentum_product: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    schedule_decay: float = 0.004

    @classmethod
    def fresh(cls, params, **kw) -> "NadamState":
        return cls(
            {k: np.zeros_like(v) for k, v in params.items()},
            {k: np.zeros_like(v) for k, v in params.items()},
            **kw,
        )

    def momentum(self, t):
        return self.beta1 * (1.0 - 0.5 * 0.96 ** (t * self.schedule_decay))


def nadam_step(params, grads, state: NadamState, lr):
    """One Nesterov-accelerated Adam update, in place.

    Uses the warming momentum schedule mu_t = beta1 (1 - 0.5 * 0.96^(t * decay))
    with bias correction on both moments.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for {name}")
    state.step += 1
    t = state.step
    mu_t, mu_next = state.momentum(t), state.momentum(t + 1)
    prod_t = state.momentum_product * mu_t
    prod_next = prod_t * mu_next
    state.momentum_product = prod_t
    for name, g in grads.items():
        m = state.first[name]
        v = state.second[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_bar = (1.0 - mu_t) * g / (1.0 - prod_t) + mu_next * m / (1.0 - prod_next)
        v_hat = v / (1.0 - state.beta2 ** t)
        params[name] -= lr * m_bar / (np.sqrt(v_hat) + state.eps)
    return params


class PlateauHalving:
    """Halve the learning rate after ``patience`` epochs without improvement."""

    def __init__(self, lr, patience=3, min_improvement=1e-6):
        self.lr = lr
        self.patience = patience
        self.min_improvement = min_improvement
        self.best = -math.inf
        self.wait = 0

    def update(self, score) -> bool:
        """Record an epoch score; returns True if it was a new best."""
        if score >= self.best + self.min_improvement:
            self.best = score
            self.wait = 0
            return True
        self.wait += 1
        if self.wait >= self.patience:
            self.lr /= 2
            self.wait = 0
        return False


def length_batches(corpus: Corpus, batch_size, rng) -> list[list[int]]:
    """Groups of utterance indices with similar lengths, in random order."""
    lengths = np.array([len(u) for u in corpus])
    order = np.lexsort((rng.random(len(lengths)), lengths))
    batches = [order[i:i + batch_size].tolist() for i in range(0, len(order), batch_size)]
    return [batches[i] for i in rng.permutation(len(batches))]


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_f1: float
    lr: float
    seconds: float
    best: bool

    def record(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class TrainResult:
    model: SlotTagger
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_dev_f1: float = -1.0


def evaluate_f1(model: SlotTagger, corpus: Corpus) -> float:
    return conll_f1(corpus, model.predict(corpus)).f1


def train(model: SlotTagger, train_corpus: Corpus, dev: Corpus, cfg: TrainConfig | None = None,
          on_epoch=None) -> TrainResult:
    """Train with Nadam and keep the parameters of the best dev-F1 epoch.

    Raises :class:`NonFiniteError` naming the batch when the loss diverges.
    """
    cfg = cfg or model.config
    if not train_corpus.labeled or not dev.labeled:
        raise ValueError("training and dev corpora must be labeled")
    rng = np.random.default_rng(cfg.seed + 1)
    state = NadamState.fresh(model.params, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps,
                             schedule_decay=cfg.schedule_decay)
    schedule = PlateauHalving(cfg.lr, cfg.patience, cfg.min_improvement)
    result = TrainResult(model)
    best_params = {k: v.copy() for k, v in model.params.items()}
    utts = list(train_corpus)

    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        lr = schedule.lr
        losses = []
        for batch_no, batch in enumerate(length_batches(train_corpus, cfg.batch_size, rng)):
            ids, lengths, labels = model.encode([utts[i] for i in batch])
            masks = neural.recurrent_masks(rng, len(batch), model.hidden, cfg.dropout)
            loss, grads = model.loss_and_grads(ids, lengths, labels, masks)
            if not math.isfinite(loss):
                raise NonFiniteError(f"non-finite loss at epoch {epoch}, batch {batch_no}")
            nadam_step(model.params, grads, state, lr)
            losses.append(loss)
        dev_f1 = evaluate_f1(model, dev)
        improved = schedule.update(dev_f1)
        if improved:
            best_params = {k: v.copy() for k, v in model.params.items()}
            result.best_epoch, result.best_dev_f1 = epoch, dev_f1
        rec = EpochRecord(epoch, float(np.mean(losses)), dev_f1, lr,
                          time.perf_counter() - started, improved)
        result.history.append(rec)
        logger.info("epoch %d loss %.4f dev F1 %.4f lr %.5f", epoch, rec.train_loss, dev_f1, lr)
        if on_epoch is not None:
            on_epoch(rec)

    model.params.update(best_params)
    return result


def save_model(model: SlotTagger, directory) -> None:
    """Checkpoint directory: tensors, vocabulary, config and co-occurrence matrix."""
    from .cooccurrence import CooccurrenceMatrix

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    neural.save_tensors(directory / "model.npz", model.params, {"mode": model.mode})
    model.vocab.save(directory / "vocab")
    (directory / "config.txt").write_text(model.config.to_text(), encoding="utf-8")
    if model.cooccurrence is not None:
        m, n = model.cooccurrence.shape
        CooccurrenceMatrix(np.zeros((m, n)), model.cooccurrence).save(directory / "cooccurrence.txt")


def load_model(directory) -> SlotTagger:
    from .cooccurrence import CooccurrenceMatrix

    directory = Path(directory)
    cfg = TrainConfig.load(directory / "config.txt")
    vocab = Vocab.load(directory / "vocab")
    params, _ = neural.load_tensors(directory / "model.npz")
    cooc = None
    if cfg.mode != "bl":
        cooc = CooccurrenceMatrix.load(directory / "cooccurrence.txt").values
    if params["embed"].shape[0] != vocab.n or params["crf.trans"].shape[0] != vocab.m:
        raise ValueError(f"{directory}: checkpoint does not match its vocabulary")
    return SlotTagger(params, vocab, cfg, cooc)
