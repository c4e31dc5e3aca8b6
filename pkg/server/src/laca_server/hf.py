"""HuggingFace-backed backbones (optional; requires torch + transformers
plus locally available pretrained weights).

Token classification (mbert, xlm-r): first-subword labelling with the
ignore index on continuation subwords, AdamW, argmax decode, tag repair,
span recovery through the tokenizer's offset mapping. Seq2seq (mt5):
fine-tuning on tuple-format target strings with greedy decoding.

These paths support full-scale runs given data and hardware; the builtin
tiny backbones cover all desk-scale testing.
"""

from __future__ import annotations

import hashlib
import logging

from laca.corpus import LabeledExample, SentimentTuple
from laca.genformat import parse_tuples, serialize_tuples
from laca.tagging import ALL_TAGS, decode_bio, encode_bio, repair_tags, tokenize

from .service_errors import ServiceError

logger = logging.getLogger(__name__)

PRETRAINED_NAMES = {
    "mbert": "bert-base-multilingual-cased",
    "xlm-r": "xlm-roberta-base",
    "mt5": "google/mt5-base",
}

IGNORE_INDEX = -100


def _imports():
    try:
        import torch
        import transformers
    except ImportError as e:
        raise ServiceError(
            501, f"backbone requires torch and transformers to be installed: {e}"
        ) from e
    return torch, transformers


def _word_labels(example: LabeledExample) -> tuple[list[str], list[int]]:
    tokens = tokenize(example.text)
    tags = encode_bio(tokens, example.tuples)
    return [t.text for t in tokens], [ALL_TAGS.index(tag) for tag in tags]


class _HfTokenClassifier:
    """Wraps a fine-tuned token-classification checkpoint for prediction."""

    def __init__(self, model, tokenizer, device):
        self.model = model
        self.tokenizer = tokenizer
        self.device = device

    def predict_tuples(self, text: str) -> set[SentimentTuple]:
        import torch

        words = tokenize(text)
        if not words:
            return set()
        encoding = self.tokenizer(
            [w.text for w in words],
            is_split_into_words=True,
            return_tensors="pt",
            truncation=True,
        ).to(self.device)
        with torch.no_grad():
            logits = self.model(**encoding).logits[0]
        word_ids = encoding.word_ids(0)
        tags = ["O"] * len(words)
        seen = set()
        for position, word_id in enumerate(word_ids):
            if word_id is None or word_id in seen:
                continue  # first subword carries the label
            seen.add(word_id)
            tags[word_id] = ALL_TAGS[int(logits[position].argmax())]
        return decode_bio(words, repair_tags(tags), text)


class _HfSeq2Seq:
    def __init__(self, model, tokenizer, device, max_new_tokens: int = 128):
        self.model = model
        self.tokenizer = tokenizer
        self.device = device
        self.max_new_tokens = max_new_tokens

    def predict_tuples(self, text: str) -> set[SentimentTuple]:
        import torch

        inputs = self.tokenizer(text, return_tensors="pt", truncation=True).to(self.device)
        with torch.no_grad():
            # greedy search keeps predictions deterministic
            output = self.model.generate(
                **inputs, max_new_tokens=self.max_new_tokens, do_sample=False, num_beams=1
            )
        decoded = self.tokenizer.decode(output[0], skip_special_tokens=True)
        tuples, _issues = parse_tuples(decoded)
        return tuples


def train(store, examples: list[LabeledExample], spec, epochs: int) -> str:
    torch, transformers = _imports()
    torch.manual_seed(spec.seed)
    name = spec.init_from or spec.extra.get("pretrained") or PRETRAINED_NAMES[spec.backbone]
    device = "cuda" if torch.cuda.is_available() else "cpu"
    try:
        tokenizer = transformers.AutoTokenizer.from_pretrained(name)
        if spec.backbone == "mt5":
            model = transformers.AutoModelForSeq2SeqLM.from_pretrained(name)
        else:
            model = transformers.AutoModelForTokenClassification.from_pretrained(
                name, num_labels=len(ALL_TAGS), ignore_mismatched_sizes=True
            )
    except OSError as e:
        raise ServiceError(501, f"pretrained weights for {name!r} unavailable: {e}") from e
    model.to(device).train()
    optimizer = torch.optim.AdamW(model.parameters(), lr=spec.learning_rate)

    if spec.backbone == "mt5":
        batches = _seq2seq_batches(examples, tokenizer, spec.batch_size, device)
    else:
        batches = _token_batches(examples, tokenizer, spec.batch_size, device)

    for epoch in range(epochs):
        total = 0.0
        for batch in batches:
            optimizer.zero_grad()
            loss = model(**batch).loss
            loss.backward()
            optimizer.step()
            total += float(loss)
        logger.info("%s epoch %d/%d loss %.4f", spec.backbone, epoch + 1, epochs, total / len(batches))

    model.eval()
    out_dir = store.model_dir / _hf_model_id(spec, epochs, examples)
    model.save_pretrained(out_dir)
    tokenizer.save_pretrained(out_dir)
    wrapper = (
        _HfSeq2Seq(model, tokenizer, device)
        if spec.backbone == "mt5"
        else _HfTokenClassifier(model, tokenizer, device)
    )
    store._cache[out_dir.name] = wrapper
    return out_dir.name


def _hf_model_id(spec, epochs: int, examples) -> str:
    h = hashlib.sha256()
    h.update(repr((spec.backbone, spec.learning_rate, epochs, spec.batch_size, spec.seed)).encode())
    for e in examples:
        h.update(e.id.encode())
        h.update(e.text.encode())
    return f"{spec.backbone}-{h.hexdigest()[:12]}"


def _token_batches(examples, tokenizer, batch_size, device):
    import torch

    batches = []
    for start in range(0, len(examples), batch_size):
        chunk = examples[start : start + batch_size]
        words, labels = zip(*(_word_labels(e) for e in chunk))
        encoding = tokenizer(
            list(words), is_split_into_words=True, padding=True, truncation=True,
            return_tensors="pt",
        )
        aligned = torch.full(encoding["input_ids"].shape, IGNORE_INDEX, dtype=torch.long)
        for row in range(len(chunk)):
            seen = set()
            for position, word_id in enumerate(encoding.word_ids(row)):
                if word_id is None or word_id in seen:
                    continue
                seen.add(word_id)
                aligned[row, position] = labels[row][word_id]
        batch = {k: v.to(device) for k, v in encoding.items()}
        batch["labels"] = aligned.to(device)
        batches.append(batch)
    return batches


def _seq2seq_batches(examples, tokenizer, batch_size, device):
    batches = []
    for start in range(0, len(examples), batch_size):
        chunk = examples[start : start + batch_size]
        targets = [serialize_tuples(e.tuples) if e.tuples else "" for e in chunk]
        encoding = tokenizer(
            [e.text for e in chunk], text_target=targets, padding=True, truncation=True,
            return_tensors="pt",
        )
        batches.append({k: v.to(device) for k, v in encoding.items()})
    return batches


def load(store, model_id: str):
    """Reload a fine-tuned checkpoint saved by train()."""
    torch, transformers = _imports()
    out_dir = store.model_dir / model_id
    if not out_dir.is_dir():
        raise ServiceError(404, f"unknown model {model_id!r}")
    device = "cuda" if torch.cuda.is_available() else "cpu"
    tokenizer = transformers.AutoTokenizer.from_pretrained(out_dir)
    if model_id.startswith("mt5"):
        model = transformers.AutoModelForSeq2SeqLM.from_pretrained(out_dir).to(device).eval()
        return _HfSeq2Seq(model, tokenizer, device)
    model = transformers.AutoModelForTokenClassification.from_pretrained(out_dir).to(device).eval()
    return _HfTokenClassifier(model, tokenizer, device)
