"""Unified and two-phase word-guessing models: training loops, streaming
inference and transition prediction."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .corpus import Corpus, CorpusError, FeatureConfig, RasterFeatureExtractor
from .evaluation import EvalConfig, localization_accuracy, mean_sequence_accuracy
from .lexicon import NO_GUESS, EmbeddingTable, knn
from .neural import (Adagrad, ClassWeights, LossConfig, LstmParams, NeuralError,
                     OptimizerConfig, compute_loss, init_lstm_params,
                     load_checkpoint, lstm_backward, lstm_forward, lstm_step,
                     orthogonal_init, ranking_loss, save_checkpoint, sigmoid,
                     transition_weights, weighted_bce)

PHASE1_ARCHS = ("lstm", "ff")
PHASE1_LOSSES = ("plain", "transition-weighted", "ranking")


@dataclass(frozen=True)
class TrainConfig:
    """One reproducible training run, loadable from a manifest file."""

    hidden_dim: int = 128
    epochs: int = 50
    seed: int = 0
    init_gain: float = 1.1
    loss: LossConfig = field(default_factory=LossConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    # phase-1 settings follow the transition-predictor training recipe
    phase1_optimizer: OptimizerConfig = field(default_factory=lambda: OptimizerConfig(
        learning_rate=5e-5, momentum=0.9))
    phase1_arch: str = "lstm"
    phase1_loss: str = "plain"
    alpha: float = 7.0
    lambda_s: float = 1.0
    lambda_r: float = 0.5
    k_values: tuple[int, ...] = (1, 3, 5)
    eval_mode: str = "GUESS_PORTION"
    neighbor_k: int = 5

    def __post_init__(self):
        if self.epochs < 0 or self.hidden_dim < 1:
            raise ValueError("bad epochs/hidden_dim")
        if self.phase1_arch not in PHASE1_ARCHS:
            raise ValueError(f"unknown phase-1 architecture {self.phase1_arch!r}")
        if self.phase1_loss not in PHASE1_LOSSES:
            raise ValueError(f"unknown phase-1 loss {self.phase1_loss!r}")

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        obj = dict(obj)
        if "loss" in obj:
            obj["loss"] = LossConfig(**obj["loss"])
        if "optimizer" in obj:
            obj["optimizer"] = OptimizerConfig(**obj["optimizer"])
        if "phase1_optimizer" in obj:
            obj["phase1_optimizer"] = OptimizerConfig(**obj["phase1_optimizer"])
        for key in ("k_values",):
            if key in obj:
                obj[key] = tuple(obj[key])
        return cls(**obj)

    def to_dict(self) -> dict:
        obj = asdict(self)
        obj["k_values"] = list(self.k_values)
        return obj


class EpochLog(NamedTuple):
    epoch: int
    train_loss: float
    val_acc: dict[int, float]

    def line(self) -> str:
        accs = "\t".join(f"{self.val_acc.get(k, float('nan')):.6f}" for k in (1, 3, 5))
        return f"{self.epoch}\t{self.train_loss:.6f}\t{accs}"


class StepGuess(NamedTuple):
    vector: np.ndarray
    neighbors: list[tuple[str, float]]
    is_no_guess: bool


# ---------------------------------------------------------------------------
# feature plumbing
# ---------------------------------------------------------------------------


class FeatureNorm:
    """Per-dimension min/max computed on the training split only."""

    def __init__(self, lo: np.ndarray, hi: np.ndarray):
        self.lo = np.asarray(lo, dtype=np.float64)
        span = np.asarray(hi, dtype=np.float64) - self.lo
        span[span == 0.0] = 1.0
        self.hi = np.asarray(hi, dtype=np.float64)
        self._span = span

    @classmethod
    def fit(cls, feature_arrays) -> "FeatureNorm":
        stacked = np.concatenate(list(feature_arrays), axis=0)
        return cls(stacked.min(axis=0), stacked.max(axis=0))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.lo) / self._span


def _featurize(corpus: Corpus, extractor) -> list[np.ndarray]:
    return [extractor.sequence_features(sseq) for sseq, _ in corpus.records]


def _target_words(gseq) -> list[str]:
    return [g if g else NO_GUESS for g in gseq.guesses]


def transition_index(gseq) -> int:
    """1-based step of the first guess; sequences must contain one."""
    for i, g in enumerate(gseq.guesses):
        if g:
            return i + 1
    raise CorpusError(f"sequence {gseq.sketch_id!r} has no guesses")


def binary_targets(gseq) -> np.ndarray:
    """Guess/no-guess labels of the form 0^k 1^(N-k)."""
    k = transition_index(gseq) - 1
    labels = np.zeros(len(gseq.guesses), dtype=np.int64)
    labels[k:] = 1
    return labels


# ---------------------------------------------------------------------------
# unified model
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class GuesserModel:
    """LSTM word-embedding regressor over per-step sketch features."""

    params: LstmParams
    table: EmbeddingTable
    extractor: object
    loss_cfg: LossConfig
    optimizer_cfg: OptimizerConfig
    norm: FeatureNorm
    seed: int = 0
    neighbor_k: int = 5
    training_log: list[EpochLog] = field(default_factory=list)
    oov_skipped: int = 0
    feature_cfg: FeatureConfig | None = None

    def _step_guess(self, y: np.ndarray) -> StepGuess:
        k = min(self.neighbor_k, len(self.table))
        neighbors = knn(self.table, y, k)
        return StepGuess(vector=y, neighbors=neighbors,
                         is_no_guess=neighbors[0][0] == NO_GUESS)

    def infer_sequence(self, features: np.ndarray) -> list[StepGuess]:
        """Whole-sequence inference over raw (unnormalized) feature rows."""
        xs = self.norm.apply(features)
        _, ys = lstm_forward(self.params, xs)
        return [self._step_guess(y) for y in ys]

    def stream(self) -> "GuessStream":
        return GuessStream(self)

    def predictions(self, features: np.ndarray) -> np.ndarray:
        xs = self.norm.apply(features)
        _, ys = lstm_forward(self.params, xs)
        return ys

    def save(self, path) -> None:
        config = {
            "type": "unified",
            "loss": asdict(self.loss_cfg),
            "optimizer": asdict(self.optimizer_cfg),
            "neighbor_k": self.neighbor_k,
            "dims": [self.params.input_dim, self.params.hidden_dim, self.params.output_dim],
            "oov_skipped": self.oov_skipped,
            "feature": asdict(self.feature_cfg) if self.feature_cfg else None,
        }
        tensors = dict(self.params.tensors())
        tensors["feat_lo"] = self.norm.lo
        tensors["feat_hi"] = self.norm.hi
        save_checkpoint(path, config, self.seed, tensors)

    @classmethod
    def load(cls, path, table: EmbeddingTable, extractor=None) -> "GuesserModel":
        config, seed, tensors = load_checkpoint(path)
        if config.get("type") != "unified":
            raise NeuralError(f"{path}: not a unified-model checkpoint")
        feature_cfg = FeatureConfig(**config["feature"]) if config.get("feature") else None
        if extractor is None:
            extractor = RasterFeatureExtractor(feature_cfg or FeatureConfig())
        params = LstmParams(wx=tensors["wx"], wh=tensors["wh"], b=tensors["b"],
                            w_out=tensors["w_out"], b_out=tensors["b_out"])
        return cls(params=params, table=table, extractor=extractor,
                   loss_cfg=LossConfig(**config["loss"]),
                   optimizer_cfg=OptimizerConfig(**config["optimizer"]),
                   norm=FeatureNorm(tensors["feat_lo"], tensors["feat_hi"]),
                   seed=seed, neighbor_k=config["neighbor_k"],
                   oov_skipped=config.get("oov_skipped", 0),
                   feature_cfg=feature_cfg)


class GuessStream:
    """Stateful step-by-step inference; one stream per live session."""

    def __init__(self, model: GuesserModel):
        self._model = model
        self._h = np.zeros(model.params.hidden_dim)
        self._c = np.zeros(model.params.hidden_dim)

    def step(self, features: np.ndarray) -> StepGuess:
        x = self._model.norm.apply(features)
        if x.shape != (self._model.params.input_dim,):
            raise NeuralError(f"feature dimension {x.shape} != "
                              f"{self._model.params.input_dim}")
        self._h, self._c, y, _, _ = lstm_step(self._model.params, x, self._h, self._c)
        return self._model._step_guess(y)


class _NegativeSampler:
    """Draws loss negatives from the dictionary or from other categories."""

    def __init__(self, table: EmbeddingTable, categories, mode: str, rng):
        self.table = table
        self.rng = rng
        self.mode = mode
        if mode == "other-category":
            self.pool = sorted(c for c in categories if c in table)
            if len(self.pool) < 2:
                raise NeuralError("other-category sampling needs >= 2 known categories")
        else:
            self.pool = sorted(w for w in table.words if w != NO_GUESS)

    def draw(self, target_word: str) -> np.ndarray:
        while True:
            word = self.pool[int(self.rng.integers(len(self.pool)))]
            if word != target_word:
                return self.table.vector(word)


def _needs_negative(cfg: LossConfig) -> bool:
    return cfg.kind in ("HINGE_RANK", "CONVEX")


def _train_regressor(train_seqs, val_eval, table: EmbeddingTable, cfg: TrainConfig,
                     categories, norm: FeatureNorm, extractor, feature_cfg,
                     log_path=None):
    """Shared LSTM embedding-regression loop.

    train_seqs: list of (normalized features (N, D), target words list with
    None marking skipped steps). val_eval(model) scores the validation split
    after every epoch and drives early stopping at the smallest k.
    """
    dim = train_seqs[0][0].shape[1]
    params = init_lstm_params(dim, cfg.hidden_dim, table.dim,
                              seed=cfg.seed, gain=cfg.init_gain)
    model = GuesserModel(params=params, table=table, extractor=extractor,
                         loss_cfg=cfg.loss, optimizer_cfg=cfg.optimizer,
                         norm=norm, seed=cfg.seed, neighbor_k=cfg.neighbor_k,
                         feature_cfg=feature_cfg)
    oov = sum(1 for _, words in train_seqs for w in words if w is None)
    model.oov_skipped = oov
    if cfg.epochs == 0:
        return model

    rng = np.random.default_rng([cfg.seed, 1])
    sampler = _NegativeSampler(table, categories, cfg.loss.negative_sampling, rng) \
        if _needs_negative(cfg.loss) else None
    opt = Adagrad(params.tensors(), cfg.optimizer)
    best_acc = -np.inf
    best_params = params.copy()
    bad_epochs = 0
    log_fh = open(log_path, "a", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(len(train_seqs))
            loss_sum, step_count = 0.0, 0
            for idx in order:
                xs, words = train_seqs[idx]
                trace = lstm_forward(params, xs, return_trace=True)
                d_ys = np.zeros_like(trace.ys)
                for t, word in enumerate(words):
                    if word is None:
                        continue
                    target = table.vector(word)
                    negative = sampler.draw(word) if sampler else None
                    loss, grad = compute_loss(cfg.loss, trace.ys[t], target, negative)
                    d_ys[t] = grad
                    loss_sum += loss
                    step_count += 1
                opt.step(lstm_backward(params, trace, d_ys))
            val_acc = val_eval(model)
            entry = EpochLog(epoch=epoch,
                             train_loss=loss_sum / max(step_count, 1),
                             val_acc=val_acc)
            model.training_log.append(entry)
            if log_fh:
                log_fh.write(entry.line() + "\n")
            acc1 = val_acc[min(cfg.k_values)]
            if acc1 > best_acc:
                best_acc = acc1
                best_params = params.copy()
                bad_epochs = 0
            else:
                bad_epochs += 1
                if bad_epochs >= cfg.optimizer.early_stop_patience:
                    break
    finally:
        if log_fh:
            log_fh.close()
    model.params = best_params
    return model


def train_unified(train: Corpus, val: Corpus, table: EmbeddingTable,
                  cfg: TrainConfig, extractor=None, log_path=None) -> GuesserModel:
    """Train the full-sequence guesser; no-guess steps target the "#" token."""
    if not train.records or not val.records:
        raise CorpusError("training and validation corpora must be non-empty")
    feature_cfg = None
    if extractor is None:
        extractor = RasterFeatureExtractor()
        feature_cfg = extractor.cfg
    elif isinstance(extractor, RasterFeatureExtractor):
        feature_cfg = extractor.cfg
    train_feats = _featurize(train, extractor)
    norm = FeatureNorm.fit(train_feats)
    train_seqs = []
    for feats, (_, gseq) in zip(train_feats, train.records):
        words = [w if w in table.index else None for w in _target_words(gseq)]
        train_seqs.append((norm.apply(feats), words))
    val_pairs = [(extractor.sequence_features(sseq), gseq) for sseq, gseq in val.records]
    eval_cfg = EvalConfig(k_values=cfg.k_values, mode=cfg.eval_mode)

    def val_eval(model):
        return mean_sequence_accuracy(
            [(model.predictions(f), g) for f, g in val_pairs], table, eval_cfg)

    return _train_regressor(train_seqs, val_eval, table, cfg,
                            train.categories, norm, extractor, feature_cfg, log_path)


def evaluate_unified(model: GuesserModel, corpus: Corpus,
                     cfg: EvalConfig = EvalConfig()) -> dict[int, float]:
    pairs = [(model.predictions(model.extractor.sequence_features(sseq)), gseq)
             for sseq, gseq in corpus.records]
    return mean_sequence_accuracy(pairs, model.table, cfg)


# ---------------------------------------------------------------------------
# two-phase model
# ---------------------------------------------------------------------------


class TransitionPrediction(NamedTuple):
    index: int      # 1-based step of the predicted transition
    found: bool     # False when no step cleared the threshold


def first_transition(probs, threshold: float = 0.5) -> TransitionPrediction:
    """First step whose probability clears the threshold; last step otherwise.

    Live sessions must always terminate, so a sequence that never fires
    falls back to its final step with found=False.
    """
    probs = list(probs)
    if not probs:
        raise NeuralError("empty probability sequence")
    for i, p in enumerate(probs):
        if p >= threshold:
            return TransitionPrediction(index=i + 1, found=True)
    return TransitionPrediction(index=len(probs), found=False)


@dataclass(eq=False)
class TwoPhaseModel:
    """Phase 1 localizes the no-guess/guess transition; phase 2 guesses."""

    phase1_arch: str
    phase1_params: dict[str, np.ndarray] | LstmParams
    phase2: GuesserModel
    norm: FeatureNorm
    extractor: object
    threshold: float = 0.5
    seed: int = 0
    feature_cfg: FeatureConfig | None = None
    training_log: list = field(default_factory=list)

    def transition_scores(self, features: np.ndarray) -> np.ndarray:
        """Per-step guess probability over raw feature rows."""
        xs = self.norm.apply(features)
        if self.phase1_arch == "lstm":
            _, ys = lstm_forward(self.phase1_params, xs)
            return sigmoid(ys[:, 0])
        return sigmoid(xs @ self.phase1_params["w"][:, 0] + self.phase1_params["b"][0])

    def predict_transition(self, features: np.ndarray) -> TransitionPrediction:
        """First step with guess probability >= threshold, else the last step."""
        return first_transition(self.transition_scores(features), self.threshold)

    def full_sequence_predictions(self, features: np.ndarray) -> np.ndarray:
        """Predicted embeddings for all steps using the predicted transition.

        Steps before the transition emit the no-guess embedding; from the
        transition on, phase 2 runs over the remaining prefix features.
        """
        p = self.predict_transition(features).index
        no_guess = self.phase2.table.vector(NO_GUESS)
        preds = np.tile(no_guess, (features.shape[0], 1))
        preds[p - 1:] = self.phase2.predictions(features[p - 1:])
        return preds

    def guess_portion_predictions(self, features: np.ndarray,
                                  truth_transition: int) -> np.ndarray:
        """Phase-2 predictions assuming perfectly localized transition."""
        no_guess = self.phase2.table.vector(NO_GUESS)
        preds = np.tile(no_guess, (features.shape[0], 1))
        preds[truth_transition - 1:] = self.phase2.predictions(
            features[truth_transition - 1:])
        return preds

    def save(self, path) -> None:
        config = {
            "type": "two-phase",
            "phase1_arch": self.phase1_arch,
            "threshold": self.threshold,
            "phase2": {
                "loss": asdict(self.phase2.loss_cfg),
                "optimizer": asdict(self.phase2.optimizer_cfg),
                "neighbor_k": self.phase2.neighbor_k,
                "oov_skipped": self.phase2.oov_skipped,
            },
            "feature": asdict(self.feature_cfg) if self.feature_cfg else None,
        }
        tensors = {}
        if self.phase1_arch == "lstm":
            for k, v in self.phase1_params.tensors().items():
                tensors[f"p1_{k}"] = v
        else:
            for k, v in self.phase1_params.items():
                tensors[f"p1_{k}"] = v
        for k, v in self.phase2.params.tensors().items():
            tensors[f"p2_{k}"] = v
        tensors["feat_lo"] = self.norm.lo
        tensors["feat_hi"] = self.norm.hi
        save_checkpoint(path, config, self.seed, tensors)

    @classmethod
    def load(cls, path, table: EmbeddingTable, extractor=None) -> "TwoPhaseModel":
        config, seed, tensors = load_checkpoint(path)
        if config.get("type") != "two-phase":
            raise NeuralError(f"{path}: not a two-phase checkpoint")
        feature_cfg = FeatureConfig(**config["feature"]) if config.get("feature") else None
        if extractor is None:
            extractor = RasterFeatureExtractor(feature_cfg or FeatureConfig())
        norm = FeatureNorm(tensors["feat_lo"], tensors["feat_hi"])
        arch = config["phase1_arch"]
        if arch == "lstm":
            phase1 = LstmParams(wx=tensors["p1_wx"], wh=tensors["p1_wh"], b=tensors["p1_b"],
                                w_out=tensors["p1_w_out"], b_out=tensors["p1_b_out"])
        else:
            phase1 = {"w": tensors["p1_w"], "b": tensors["p1_b"]}
        p2cfg = config["phase2"]
        phase2_params = LstmParams(wx=tensors["p2_wx"], wh=tensors["p2_wh"], b=tensors["p2_b"],
                                   w_out=tensors["p2_w_out"], b_out=tensors["p2_b_out"])
        phase2 = GuesserModel(params=phase2_params, table=table, extractor=extractor,
                              loss_cfg=LossConfig(**p2cfg["loss"]),
                              optimizer_cfg=OptimizerConfig(**p2cfg["optimizer"]),
                              norm=norm, seed=seed, neighbor_k=p2cfg["neighbor_k"],
                              oov_skipped=p2cfg.get("oov_skipped", 0),
                              feature_cfg=feature_cfg)
        return cls(phase1_arch=arch, phase1_params=phase1, phase2=phase2, norm=norm,
                   extractor=extractor, threshold=config["threshold"], seed=seed,
                   feature_cfg=feature_cfg)


def _phase1_step_grads(probs, labels, weights, cfg: TrainConfig):
    """Per-step loss values and gradients w.r.t. the logits."""
    n = len(labels)
    losses = np.zeros(n)
    d_logits = np.zeros(n)
    for t in range(n):
        label = int(labels[t])
        loss, _ = weighted_bce(probs[t], label, weights)
        losses[t] = loss
        d_logits[t] = weights.weight(label) * (probs[t] - label)
    if cfg.phase1_loss == "plain":
        return float(losses.mean()), d_logits / n
    if cfg.phase1_loss == "transition-weighted":
        k = int(np.argmax(labels)) if labels[-1] == 1 else n - 1
        tw = transition_weights(k, n, cfg.alpha)
        total = float(losses.mean() + (tw * losses).mean())
        return total, d_logits * (1.0 + tw) / n
    # ranking: convex combination of the weighted sequence loss and rank terms
    scores = np.where(labels == 1, probs, 1.0 - probs)
    rank_total, d_scores, _ = ranking_loss(scores, labels, lam_s=0.0, lam_r=1.0)
    total = float(cfg.lambda_s * losses.mean() + cfg.lambda_r * rank_total / n)
    ds_dp = np.where(labels == 1, 1.0, -1.0)
    d_logits = (cfg.lambda_s * d_logits
                + cfg.lambda_r * d_scores * ds_dp * probs * (1.0 - probs)) / n
    return total, d_logits


def train_two_phase(train: Corpus, val: Corpus, table: EmbeddingTable,
                    cfg: TrainConfig, extractor=None, log_path=None) -> TwoPhaseModel:
    """Train the transition predictor, then the guess regressor on suffixes."""
    if not train.records or not val.records:
        raise CorpusError("training and validation corpora must be non-empty")
    feature_cfg = None
    if extractor is None:
        extractor = RasterFeatureExtractor()
        feature_cfg = extractor.cfg
    elif isinstance(extractor, RasterFeatureExtractor):
        feature_cfg = extractor.cfg

    train_feats = _featurize(train, extractor)
    norm = FeatureNorm.fit(train_feats)
    train_xs = [norm.apply(f) for f in train_feats]
    train_labels = [binary_targets(gseq) for _, gseq in train.records]
    val_feats = _featurize(val, extractor)
    val_xs = [norm.apply(f) for f in val_feats]
    val_transitions = [transition_index(gseq) for _, gseq in val.records]

    n_one = sum(int(lbl.sum()) for lbl in train_labels)
    n_zero = sum(lbl.size for lbl in train_labels) - n_one
    weights = ClassWeights.from_counts(max(n_zero, 1), max(n_one, 1))

    dim = train_xs[0].shape[1]
    rng = np.random.default_rng([cfg.seed, 2])
    if cfg.phase1_arch == "lstm":
        phase1 = init_lstm_params(dim, cfg.hidden_dim, 1, seed=cfg.seed + 1,
                                  gain=cfg.init_gain)
        p1_tensors = phase1.tensors()
    else:
        phase1 = {"w": orthogonal_init(dim, 1, gain=cfg.init_gain, seed=cfg.seed + 1),
                  "b": np.zeros(1)}
        p1_tensors = phase1

    model = TwoPhaseModel(phase1_arch=cfg.phase1_arch, phase1_params=phase1,
                          phase2=None, norm=norm, extractor=extractor,
                          seed=cfg.seed, feature_cfg=feature_cfg)

    def val_localization() -> float:
        preds = [model.predict_transition(f).index for f in val_feats]
        return localization_accuracy(preds, val_transitions, 0)

    if cfg.epochs > 0:
        opt = Adagrad(p1_tensors, cfg.phase1_optimizer)
        best = -np.inf
        best_snapshot = {k: v.copy() for k, v in p1_tensors.items()}
        bad = 0
        log_fh = open(log_path, "a", encoding="utf-8") if log_path else None
        try:
            for epoch in range(1, cfg.epochs + 1):
                order = rng.permutation(len(train_xs))
                loss_sum = 0.0
                for idx in order:
                    xs, labels = train_xs[idx], train_labels[idx]
                    if cfg.phase1_arch == "lstm":
                        trace = lstm_forward(phase1, xs, return_trace=True)
                        probs = sigmoid(trace.ys[:, 0])
                        loss, d_logits = _phase1_step_grads(probs, labels, weights, cfg)
                        grads = lstm_backward(phase1, trace, d_logits[:, None])
                    else:
                        logits = xs @ phase1["w"][:, 0] + phase1["b"][0]
                        probs = sigmoid(logits)
                        loss, d_logits = _phase1_step_grads(probs, labels, weights, cfg)
                        grads = {"w": (xs * d_logits[:, None]).sum(axis=0)[:, None],
                                 "b": np.array([d_logits.sum()])}
                    loss_sum += loss
                    opt.step(grads)
                acc = val_localization()
                model.training_log.append((epoch, loss_sum / len(train_xs), acc))
                if log_fh:
                    log_fh.write(f"phase1\t{epoch}\t{loss_sum / len(train_xs):.6f}"
                                 f"\t{acc:.6f}\n")
                if acc > best:
                    best = acc
                    best_snapshot = {k: v.copy() for k, v in p1_tensors.items()}
                    bad = 0
                else:
                    bad += 1
                    if bad >= cfg.phase1_optimizer.early_stop_patience:
                        break
        finally:
            if log_fh:
                log_fh.close()
        for k in p1_tensors:
            p1_tensors[k][...] = best_snapshot[k]

    # phase 2 trains only on the guess-word suffixes
    train_seqs = []
    for xs, (_, gseq) in zip(train_xs, train.records):
        k = transition_index(gseq) - 1
        words = [w if w in table.index else None
                 for w in gseq.guesses[k:]]
        train_seqs.append((xs[k:], words))
    val_suffixes = [(feats, transition_index(gseq), gseq)
                    for feats, (_, gseq) in zip(val_feats, val.records)]
    eval_cfg = EvalConfig(k_values=cfg.k_values, mode="GUESS_PORTION")
    no_guess_vec = table.vector(NO_GUESS)

    def val_eval(p2_model):
        # assume perfect localization: phase 2 starts at the true transition
        pairs = []
        for feats, truth_k, gseq in val_suffixes:
            preds = np.tile(no_guess_vec, (feats.shape[0], 1))
            preds[truth_k - 1:] = p2_model.predictions(feats[truth_k - 1:])
            pairs.append((preds, gseq))
        return mean_sequence_accuracy(pairs, table, eval_cfg)

    phase2 = _train_regressor(train_seqs, val_eval, table,
                              replace(cfg, eval_mode="GUESS_PORTION"),
                              train.categories, norm, extractor, feature_cfg,
                              log_path)
    model.phase2 = phase2
    return model


def evaluate_two_phase(model: TwoPhaseModel, corpus: Corpus,
                       cfg: EvalConfig = EvalConfig()) -> dict:
    """Accuracy per k plus transition localization per delta.

    GUESS_PORTION assumes perfect localization (phase 2 starts at the true
    transition); FULL runs phase 1 first and scores every step.
    """
    pairs = []
    loc_preds, loc_truths = [], []
    for sseq, gseq in corpus.records:
        feats = model.extractor.sequence_features(sseq)
        truth_k = transition_index(gseq)
        loc_preds.append(model.predict_transition(feats).index)
        loc_truths.append(truth_k)
        if cfg.mode == "FULL":
            preds = model.full_sequence_predictions(feats)
        else:
            preds = model.guess_portion_predictions(feats, truth_k)
        pairs.append((preds, gseq))
    accuracy = mean_sequence_accuracy(pairs, model.phase2.table, cfg)
    localization = {d: localization_accuracy(loc_preds, loc_truths, d)
                    for d in cfg.deltas}
    return {"accuracy": accuracy, "localization": localization}
