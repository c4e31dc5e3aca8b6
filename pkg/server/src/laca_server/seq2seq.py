"""Minimal conditional sequence generator for the tuple-text output format.

A bag-of-words encoder averages input word embeddings into a context vector
e; the decoder predicts each output token from

    softmax(U e + C c_t + V1[y_{t-1}] + V2[y_{t-2}] + P[t] + b)

where c_t is a coverage bag (input-word presence minus the words already
emitted, clipped at zero) so that the copy boost for an aspect term
disappears once it has been generated, V1/V2 are previous-token tables (the
second-order one lets the polarity choice see the aspect word across the
[P] marker) and P is a per-position table. Targets serialize tuples in canonical aspect order, so
the whole mapping stays a function of the input bag. Training minimizes
token-averaged cross-entropy with teacher forcing; decoding is greedy, and
the wire layer parses the decoded tuple-format string back into tuples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from laca.corpus import LabeledExample, SentimentTuple
from laca.genformat import parse_tuples, serialize_tuples
from laca.tagging import tokenize

BOS = "<bos>"
EOS = "<eos>"
UNK = "<unk>"

MAX_DECODE_LEN = 64
EMBED_DIM = 32


def _input_words(text: str) -> list[str]:
    return [t.text.casefold() for t in tokenize(text)]


def _target_tokens(example: LabeledExample) -> list[str]:
    if not example.tuples:
        return []
    ordered = sorted(example.tuples, key=lambda t: (t.aspect.casefold(), t.polarity.value))
    return serialize_tuples(ordered).split(" ")


@dataclass
class Seq2Seq:
    in_vocab: list[str]
    out_vocab: list[str]
    embeddings: np.ndarray  # (V_in, d)
    proj: np.ndarray  # (V_out, d)
    copy_table: np.ndarray  # (V_out, V_in)
    transitions: np.ndarray  # (V_out, V_out): y_{t-1} table
    transitions2: np.ndarray  # (V_out, V_out): y_{t-2} table
    positions: np.ndarray  # (MAX_DECODE_LEN, V_out)
    bias: np.ndarray  # (V_out,)

    def __post_init__(self):
        self._in_index = {w: i for i, w in enumerate(self.in_vocab)}
        self._out_index = {w: i for i, w in enumerate(self.out_vocab)}

    @classmethod
    def init(cls, in_vocab: list[str], out_vocab: list[str], seed: int) -> "Seq2Seq":
        rng = np.random.default_rng(seed)
        return cls(
            in_vocab,
            out_vocab,
            rng.normal(0.0, 0.1, size=(len(in_vocab), EMBED_DIM)),
            rng.normal(0.0, 0.1, size=(len(out_vocab), EMBED_DIM)),
            np.zeros((len(out_vocab), len(in_vocab))),
            np.zeros((len(out_vocab), len(out_vocab))),
            np.zeros((len(out_vocab), len(out_vocab))),
            np.zeros((MAX_DECODE_LEN, len(out_vocab))),
            np.zeros(len(out_vocab)),
        )

    def _input_ids(self, text: str) -> np.ndarray:
        unk = self._in_index[UNK]
        ids = [self._in_index.get(w, unk) for w in _input_words(text)]
        return np.array(ids or [unk], dtype=np.int64)

    def _presence(self, ids: np.ndarray) -> np.ndarray:
        bag = np.zeros(len(self.in_vocab))
        bag[ids] = 1.0
        return bag

    def _consume(self, coverage: np.ndarray, out_id: int) -> None:
        """Remove an emitted output word from the coverage bag, if it is an
        input word too (aspect terms are; markers and polarities are not)."""
        word = self.out_vocab[out_id]
        in_id = self._in_index.get(word)
        if in_id is not None and coverage[in_id] > 0:
            coverage[in_id] -= 1.0

    def _step_logits(
        self,
        context: np.ndarray,
        coverage: np.ndarray,
        prev_id: int,
        prev2_id: int,
        position: int,
    ) -> np.ndarray:
        return (
            self.proj @ context
            + self.copy_table @ coverage
            + self.transitions[:, prev_id]
            + self.transitions2[:, prev2_id]
            + self.positions[min(position, MAX_DECODE_LEN - 1)]
            + self.bias
        )

    def greedy_decode(self, text: str) -> str:
        ids = self._input_ids(text)
        context = self.embeddings[ids].mean(axis=0)
        coverage = self._presence(ids)
        prev2 = prev = self._out_index[BOS]
        eos = self._out_index[EOS]
        out: list[str] = []
        for position in range(MAX_DECODE_LEN):
            logits = self._step_logits(context, coverage, prev, prev2, position)
            prev2, prev = prev, int(logits.argmax())
            if prev == eos:
                break
            out.append(self.out_vocab[prev])
            self._consume(coverage, prev)
        return " ".join(out)

    def predict_tuples(self, text: str) -> set[SentimentTuple]:
        decoded = self.greedy_decode(text)
        if not decoded.strip():
            return set()
        tuples, _issues = parse_tuples(decoded)
        return tuples

    def to_arrays(self) -> dict:
        return {
            "embeddings": self.embeddings,
            "proj": self.proj,
            "copy_table": self.copy_table,
            "transitions": self.transitions,
            "transitions2": self.transitions2,
            "positions": self.positions,
            "bias": self.bias,
        }


def _build_vocabs(
    examples: list[LabeledExample], base: "Seq2Seq | None"
) -> tuple[list[str], list[str]]:
    in_vocab = list(base.in_vocab) if base else [UNK]
    out_vocab = list(base.out_vocab) if base else [BOS, EOS, UNK]
    seen_in, seen_out = set(in_vocab), set(out_vocab)
    for e in examples:
        for w in _input_words(e.text):
            if w not in seen_in:
                seen_in.add(w)
                in_vocab.append(w)
        for tok in _target_tokens(e):
            if tok not in seen_out:
                seen_out.add(tok)
                out_vocab.append(tok)
    return in_vocab, out_vocab


def train_seq2seq(
    examples: list[LabeledExample],
    learning_rate: float,
    epochs: int,
    batch_size: int,
    seed: int,
    init_from: Seq2Seq | None = None,
) -> tuple[Seq2Seq, list[float]]:
    """Teacher-forced cross-entropy training; returns model and loss history."""
    if not examples:
        raise ValueError("training requires a non-empty dataset")
    in_vocab, out_vocab = _build_vocabs(examples, init_from)
    model = Seq2Seq.init(in_vocab, out_vocab, seed)
    if init_from is not None:
        n_in, n_out = len(init_from.in_vocab), len(init_from.out_vocab)
        model.embeddings[:n_in] = init_from.embeddings
        model.proj[:n_out] = init_from.proj
        model.copy_table[:n_out, :n_in] = init_from.copy_table
        model.transitions[:n_out, :n_out] = init_from.transitions
        model.transitions2[:n_out, :n_out] = init_from.transitions2
        model.positions[:, :n_out] = init_from.positions
        model.bias[:n_out] = init_from.bias

    prepared = []
    for e in examples:
        ids = model._input_ids(e.text)
        target = [model._out_index[BOS]]
        target += [model._out_index.get(tok, model._out_index[UNK]) for tok in _target_tokens(e)]
        target.append(model._out_index[EOS])
        prepared.append((ids, np.array(target, dtype=np.int64)))

    rng = np.random.default_rng(seed + 1)
    history: list[float] = []
    n = len(prepared)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = [prepared[i] for i in order[start : start + batch_size]]
            grad_e = np.zeros_like(model.embeddings)
            grad_p = np.zeros_like(model.proj)
            grad_c = np.zeros_like(model.copy_table)
            grad_t = np.zeros_like(model.transitions)
            grad_t2 = np.zeros_like(model.transitions2)
            grad_pos = np.zeros_like(model.positions)
            grad_b = np.zeros_like(model.bias)
            loss = 0.0
            for ids, target in batch:
                context = model.embeddings[ids].mean(axis=0)
                coverage = model._presence(ids)
                steps = len(target) - 1
                d_context = np.zeros_like(context)
                bos = model._out_index[BOS]
                for t in range(steps):
                    prev_id, label = int(target[t]), int(target[t + 1])
                    prev2_id = int(target[t - 1]) if t >= 1 else bos
                    logits = model._step_logits(context, coverage, prev_id, prev2_id, t)
                    logits -= logits.max()
                    probs = np.exp(logits)
                    probs /= probs.sum()
                    loss += -np.log(probs[label] + 1e-12) / steps
                    dlogits = probs
                    dlogits[label] -= 1.0
                    dlogits /= steps * len(batch)
                    grad_p += np.outer(dlogits, context)
                    grad_c += np.outer(dlogits, coverage)
                    grad_t[:, prev_id] += dlogits
                    grad_t2[:, prev2_id] += dlogits
                    grad_pos[min(t, MAX_DECODE_LEN - 1)] += dlogits
                    grad_b += dlogits
                    d_context += model.proj.T @ dlogits
                    model._consume(coverage, label)  # teacher-forced coverage
                np.add.at(grad_e, ids, d_context / len(ids))
            model.embeddings -= learning_rate * grad_e
            model.proj -= learning_rate * grad_p
            model.copy_table -= learning_rate * grad_c
            model.transitions -= learning_rate * grad_t
            model.transitions2 -= learning_rate * grad_t2
            model.positions -= learning_rate * grad_pos
            model.bias -= learning_rate * grad_b
            history.append(loss / len(batch))
    return model, history
