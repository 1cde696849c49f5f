"""Deterministic synthetic benchmark for noise-robust training.

Each relation owns disjoint trigger tokens. A clean sentence for a pair
labeled k embeds one k-trigger between the two entity tokens, surrounded
by filler; a noisy sentence borrows its trigger from a different
relation. A configurable share of bags is fully noisy (every sentence
mistriggered), modeling knowledge-base facts that the corpus never
expresses; the count of such bags per relation is exact, not sampled, so
a 31% rate over 100 bags yields exactly 31. The test corpus uses fresh
entity pairs and is noise-free.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .data import NA_RELATION
from .numeric import SeededRng


@dataclass
class SyntheticSpec:
    n_relations: int = 10
    vocab_size: int = 200              # filler tokens
    triggers_per_relation: int = 3
    sentences_per_bag: int = 4
    bags_per_relation: int = 50
    sentence_noise: float = 0.3        # per-sentence mistrigger rate in clean bags
    noisy_bag_rate: float = 0.31       # share of bags with no correct sentence
    test_bags_per_relation: int = 10
    seed: int = 7

    def __post_init__(self):
        for name in ("sentence_noise", "noisy_bag_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.n_relations < 2:
            raise ValueError("need at least 2 relations so noise can borrow a trigger")
        if self.triggers_per_relation < 1:
            raise ValueError("every relation needs at least one trigger token")
        for name in ("vocab_size", "sentences_per_bag", "bags_per_relation",
                     "test_bags_per_relation"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


def spec_from_config(cfg) -> SyntheticSpec:
    return SyntheticSpec(
        n_relations=cfg.synth_relations,
        vocab_size=cfg.synth_vocab_size,
        triggers_per_relation=cfg.synth_triggers_per_relation,
        sentences_per_bag=cfg.synth_sentences_per_bag,
        bags_per_relation=cfg.synth_bags_per_relation,
        sentence_noise=cfg.synth_sentence_noise,
        noisy_bag_rate=cfg.synth_noisy_bag_rate,
        test_bags_per_relation=cfg.synth_test_bags_per_relation,
        seed=cfg.seed,
    )


@dataclass
class SyntheticData:
    train_lines: list[str]
    test_lines: list[str]
    gold_facts: set                    # {(e1_id, e2_id, relation_name)}
    noisy_train_pairs: set             # pair keys of fully-noisy bags
    relation_names: list[str]          # without NA
    tokens: list[str] = field(default_factory=list)  # full vocabulary, sorted


def _trigger(rel_idx: int, t: int) -> str:
    return f"trig{rel_idx:02d}_{t}"


def _sentence(rng: SeededRng, fillers, e1: str, e2: str, trigger: str) -> str:
    def pad(max_n):
        return [fillers[rng.below(len(fillers))] for _ in range(rng.below(max_n + 1))]

    words = pad(2) + [e1] + pad(2) + [trigger] + pad(2) + [e2] + pad(2)
    return " ".join(words)


def _other_relation(rng: SeededRng, n: int, own: int) -> int:
    other = rng.below(n - 1)
    return other if other < own else other + 1


def generate_synthetic(spec: SyntheticSpec) -> SyntheticData:
    rng = SeededRng(spec.seed)
    relation_names = [f"rel_{k:02d}" for k in range(spec.n_relations)]
    fillers = [f"w{i:04d}" for i in range(spec.vocab_size)]
    triggers = {k: [_trigger(k, t) for t in range(spec.triggers_per_relation)]
                for k in range(spec.n_relations)}

    train_lines = []
    noisy_pairs = set()
    for k in range(spec.n_relations):
        n_noisy = round(spec.noisy_bag_rate * spec.bags_per_relation)
        noisy_bags = set(rng.sample_indices(spec.bags_per_relation, n_noisy))
        for b in range(spec.bags_per_relation):
            e1, e2 = f"e{k:02d}_{b:03d}_a", f"e{k:02d}_{b:03d}_b"
            if b in noisy_bags:
                noisy_pairs.add((e1, e2))
            for _ in range(spec.sentences_per_bag):
                if b in noisy_bags or rng.random() < spec.sentence_noise:
                    trig_rel = _other_relation(rng, spec.n_relations, k)
                else:
                    trig_rel = k
                trig = triggers[trig_rel][rng.below(spec.triggers_per_relation)]
                text = _sentence(rng, fillers, e1, e2, trig)
                train_lines.append("\t".join(
                    [e1, e2, e1, e2, relation_names[k], text]))

    test_lines = []
    gold = set()
    for k in range(spec.n_relations):
        for b in range(spec.test_bags_per_relation):
            e1, e2 = f"t{k:02d}_{b:03d}_a", f"t{k:02d}_{b:03d}_b"
            gold.add((e1, e2, relation_names[k]))
            for _ in range(spec.sentences_per_bag):
                trig = triggers[k][rng.below(spec.triggers_per_relation)]
                text = _sentence(rng, fillers, e1, e2, trig)
                test_lines.append("\t".join(
                    [e1, e2, e1, e2, relation_names[k], text]))

    tokens = set(fillers)
    for ts in triggers.values():
        tokens.update(ts)
    for line in train_lines + test_lines:
        fields = line.split("\t")
        tokens.add(fields[2])
        tokens.add(fields[3])

    return SyntheticData(
        train_lines=train_lines,
        test_lines=test_lines,
        gold_facts=gold,
        noisy_train_pairs=noisy_pairs,
        relation_names=relation_names,
        tokens=sorted(tokens),
    )


def write_word_vectors(path, tokens, dim: int, seed: int, std: float = 0.3) -> None:
    """Random N(0, std^2) vectors in word2vec text format, one per token.

    The 0.3 scale keeps early conv activations (and so gradients) large
    enough that desk-scale training converges in tens of epochs.
    """
    rng = SeededRng(seed)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(tokens)} {dim}\n")
        for tok in tokens:
            vec = rng.normal_array((dim,), std=std)
            fh.write(tok + " " + " ".join(f"{v:.6f}" for v in vec) + "\n")


def write_corpora(data: SyntheticData, out_dir, word_dim: int, seed: int) -> dict:
    """Write train/test TSVs, gold facts, relation names, bag-quality
    metadata, and the seeded word-vectors file. Returns the path map."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "train": os.path.join(out_dir, "train.tsv"),
        "test": os.path.join(out_dir, "test.tsv"),
        "gold": os.path.join(out_dir, "gold.tsv"),
        "relations": os.path.join(out_dir, "relations.txt"),
        "bag_quality": os.path.join(out_dir, "bag_quality.tsv"),
        "vectors": os.path.join(out_dir, "vectors.txt"),
    }
    with open(paths["train"], "w", encoding="utf-8") as fh:
        fh.write("\n".join(data.train_lines) + "\n")
    with open(paths["test"], "w", encoding="utf-8") as fh:
        fh.write("\n".join(data.test_lines) + "\n")
    with open(paths["gold"], "w", encoding="utf-8") as fh:
        for e1, e2, rel in sorted(data.gold_facts):
            fh.write(f"{e1}\t{e2}\t{rel}\n")
    with open(paths["relations"], "w", encoding="utf-8") as fh:
        fh.write("\n".join([NA_RELATION] + data.relation_names) + "\n")
    with open(paths["bag_quality"], "w", encoding="utf-8") as fh:
        for e1, e2 in sorted(data.noisy_train_pairs):
            fh.write(f"{e1}\t{e2}\tfully_noisy\n")
    write_word_vectors(paths["vectors"], data.tokens, word_dim, seed)
    return paths
