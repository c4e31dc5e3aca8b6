"""Linear token classifier over context-window features.

Each token is scored from one-hot features of (previous, current, next)
word: logits_i = W_prev[w_{i-1}] + W_cur[w_i] + W_next[w_{i+1}] + b, with a
softmax over the seven BIO-with-polarity tags and the per-sentence-averaged
cross-entropy loss minimized by mini-batch gradient descent. Small enough
to train on CPU in milliseconds, real enough to memorize a toy corpus and
exercise every wire contract.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from laca.corpus import LabeledExample, SentimentTuple
from laca.tagging import ALL_TAGS, decode_bio, encode_bio, repair_tags, tokenize

PAD = "<s>"
UNK = "<unk>"

TAG_INDEX = {tag: i for i, tag in enumerate(ALL_TAGS)}


def _words(text: str) -> list[str]:
    return [t.text.casefold() for t in tokenize(text)]


def build_vocab(texts: list[str], base: list[str] | None = None) -> list[str]:
    vocab = list(base) if base else [PAD, UNK]
    seen = set(vocab)
    for text in texts:
        for w in _words(text):
            if w not in seen:
                seen.add(w)
                vocab.append(w)
    return vocab


@dataclass
class TokenClassifier:
    vocab: list[str]
    weights: np.ndarray  # (3, V, n_tags): prev / cur / next feature tables
    bias: np.ndarray  # (n_tags,)

    def __post_init__(self):
        self._index = {w: i for i, w in enumerate(self.vocab)}

    @classmethod
    def init(cls, vocab: list[str], seed: int) -> "TokenClassifier":
        rng = np.random.default_rng(seed)
        weights = rng.normal(0.0, 0.01, size=(3, len(vocab), len(ALL_TAGS)))
        return cls(vocab, weights, np.zeros(len(ALL_TAGS)))

    def _ids(self, text: str) -> np.ndarray:
        unk = self._index[UNK]
        ids = [self._index.get(w, unk) for w in _words(text)]
        return np.array(ids, dtype=np.int64)

    def _context(self, ids: np.ndarray) -> np.ndarray:
        pad = self._index[PAD]
        prev_ids = np.concatenate(([pad], ids[:-1]))
        next_ids = np.concatenate((ids[1:], [pad]))
        return np.stack([prev_ids, ids, next_ids])  # (3, n)

    def _logits(self, ctx: np.ndarray) -> np.ndarray:
        return (
            self.weights[0, ctx[0]] + self.weights[1, ctx[1]] + self.weights[2, ctx[2]] + self.bias
        )

    def predict_tags(self, text: str) -> list[str]:
        ids = self._ids(text)
        if ids.size == 0:
            return []
        logits = self._logits(self._context(ids))
        return repair_tags([ALL_TAGS[i] for i in logits.argmax(axis=1)])

    def predict_tuples(self, text: str) -> set[SentimentTuple]:
        tokens = tokenize(text)
        if not tokens:
            return set()
        return decode_bio(tokens, self.predict_tags(text), text)

    def to_arrays(self) -> dict:
        return {"weights": self.weights, "bias": self.bias}


def gold_tags(example: LabeledExample) -> list[str]:
    return encode_bio(tokenize(example.text), example.tuples)


def train_token_classifier(
    examples: list[LabeledExample],
    learning_rate: float,
    epochs: int,
    batch_size: int,
    seed: int,
    init_from: TokenClassifier | None = None,
) -> tuple[TokenClassifier, list[float]]:
    """Mini-batch gradient descent on per-sentence-averaged cross-entropy.

    Returns the trained model and the per-step loss history. ``init_from``
    continues training from an existing model, extending its vocabulary
    with unseen words.
    """
    if not examples:
        raise ValueError("training requires a non-empty dataset")
    texts = [e.text for e in examples]
    if init_from is not None:
        vocab = build_vocab(texts, base=init_from.vocab)
        model = TokenClassifier.init(vocab, seed)
        model.weights[:, : len(init_from.vocab), :] = init_from.weights
        model.bias = init_from.bias.copy()
    else:
        model = TokenClassifier.init(build_vocab(texts), seed)

    prepared = []
    for e in examples:
        ids = model._ids(e.text)
        if ids.size == 0:
            continue
        labels = np.array([TAG_INDEX[t] for t in gold_tags(e)], dtype=np.int64)
        prepared.append((model._context(ids), labels))

    rng = np.random.default_rng(seed + 1)
    history: list[float] = []
    n = len(prepared)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = [prepared[i] for i in order[start : start + batch_size]]
            grad_w = np.zeros_like(model.weights)
            grad_b = np.zeros_like(model.bias)
            loss = 0.0
            for ctx, labels in batch:
                logits = model._logits(ctx)
                logits -= logits.max(axis=1, keepdims=True)
                probs = np.exp(logits)
                probs /= probs.sum(axis=1, keepdims=True)
                n_tokens = len(labels)
                loss += -np.log(probs[np.arange(n_tokens), labels] + 1e-12).mean()
                dlogits = probs
                dlogits[np.arange(n_tokens), labels] -= 1.0
                dlogits /= n_tokens * len(batch)
                for slot in range(3):
                    np.add.at(grad_w[slot], ctx[slot], dlogits)
                grad_b += dlogits.sum(axis=0)
            model.weights -= learning_rate * grad_w
            model.bias -= learning_rate * grad_b
            history.append(loss / len(batch))
    return model, history
