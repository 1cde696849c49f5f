"""Portable checkpoint directory.

Layout::

    manifest.json   format version, dims, mode/scoring/seed/epoch, group shapes
    <group>.bin     raw little-endian float64, row-major, one per group
    vocab.txt       one token per line, line number = token id
    relations.txt   one relation name per line, line number = relation id

Raw arrays rather than a serialized object graph keep the format
byte-compatible across languages; saving, loading, and saving again must
reproduce identical bytes.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .attention import RelationAttentionParams
from .data import RelationSchema, Vocab
from .encoder import EncoderParams
from .training import PARAM_GROUPS, ModelParams, OutputParams

FORMAT_VERSION = 1


def save_checkpoint(path, model: ModelParams, vocab: Vocab,
                    schema: RelationSchema, mode: str, scoring: str,
                    seed: int, epoch: int) -> None:
    os.makedirs(path, exist_ok=True)
    arrays = model.as_dict()
    manifest = {
        "format_version": FORMAT_VERSION,
        "dims": {
            "n": model.encoder.n_filters,
            "d_w": model.encoder.d_word,
            "d_p": model.encoder.d_pos,
            "n_r": model.n_relations,
            "m": model.encoder.max_len,
            "clip": model.encoder.clip,
            "window": model.encoder.window,
            "vocab_size": len(vocab),
        },
        "mode": mode,
        "scoring": scoring,
        "seed": seed,
        "epoch": epoch,
        "keep_prob": model.output.keep_prob,
        "groups": {name: list(arrays[name].shape) for name in PARAM_GROUPS},
    }
    with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name in PARAM_GROUPS:
        with open(os.path.join(path, f"{name}.bin"), "wb") as fh:
            fh.write(np.ascontiguousarray(arrays[name], dtype="<f8").tobytes())
    with open(os.path.join(path, "vocab.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(vocab.id_to_token) + "\n")
    with open(os.path.join(path, "relations.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(schema.id_to_name) + "\n")


def _read_array(path, name, shape) -> np.ndarray:
    expected = int(np.prod(shape)) * 8
    with open(os.path.join(path, f"{name}.bin"), "rb") as fh:
        raw = fh.read()
    if len(raw) != expected:
        raise ValueError(f"checkpoint group {name}: {len(raw)} bytes"
                         f" != manifest shape {shape} ({expected} bytes)")
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)


def load_checkpoint(path):
    """Returns (model, vocab, schema, manifest)."""
    with open(os.path.join(path, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"checkpoint format version {version!r}, expected {FORMAT_VERSION}")

    arrays = {name: _read_array(path, name, shape)
              for name, shape in manifest["groups"].items()}
    dims = manifest["dims"]

    with open(os.path.join(path, "vocab.txt"), encoding="utf-8") as fh:
        tokens = fh.read().splitlines()
    vocab = Vocab(tokens[2:])  # PAD/UNK are re-pinned by the constructor
    if len(vocab) != dims["vocab_size"]:
        raise ValueError("vocabulary size does not match the manifest")

    schema = RelationSchema.from_file(os.path.join(path, "relations.txt"))
    if len(schema) != dims["n_r"]:
        raise ValueError("relation count does not match the manifest")

    enc = EncoderParams(
        word_emb=arrays["word_emb"],
        pos_emb1=arrays["pos_emb1"],
        pos_emb2=arrays["pos_emb2"],
        filters=arrays["filters"],
        bias=arrays["bias"],
        clip=dims["clip"],
        max_len=dims["m"],
    )
    model = ModelParams(
        encoder=enc,
        attention=RelationAttentionParams(R=arrays["R"]),
        output=OutputParams(W=arrays["W"], keep_prob=manifest["keep_prob"]),
    )
    return model, vocab, schema, manifest
