"""Small factories shared by the test modules."""

import numpy as np

from crossbag.data import LabeledSentence, SentenceBag, SuperBag
from crossbag.encoder import EncoderParams
from crossbag.numeric import SeededRng


def random_sentence(rng: SeededRng, vocab_size=10, length=8, clip=4,
                    pair=("e1", "e2"), relation=1) -> LabeledSentence:
    """Random tokens with two distinct entity positions."""
    ids = np.array([2 + rng.below(vocab_size - 2) for _ in range(length)],
                   dtype=np.int64)
    e1 = rng.below(length)
    e2 = rng.below(length)
    while e2 == e1:
        e2 = rng.below(length)
    d1 = tuple(max(-clip, min(clip, i - e1)) for i in range(length))
    d2 = tuple(max(-clip, min(clip, i - e2)) for i in range(length))
    return LabeledSentence(ids, e1, e2, pair, relation, d1, d2)


def small_encoder_params(rng: SeededRng, vocab_size=10, d_word=6, d_pos=2,
                         n_filters=4, window=3, clip=4, max_len=12) -> EncoderParams:
    word_emb = rng.normal_array((vocab_size, d_word), std=0.3)
    word_emb[0] = 0.0  # PAD row
    return EncoderParams.initialize(word_emb, d_pos, n_filters, window,
                                    clip, max_len, rng)


def random_superbag(rng: SeededRng, n_bags=2, n_sentences=2, relation=1,
                    vocab_size=10, length=8, clip=4) -> SuperBag:
    bags = []
    for b in range(n_bags):
        pair = (f"p{b}", "q")
        sentences = [random_sentence(rng, vocab_size, length, clip, pair, relation)
                     for _ in range(n_sentences)]
        bags.append(SentenceBag(pair, relation, sentences))
    return SuperBag(relation, bags)
