"""Corpus ingestion: word vectors, labeled sentences, bags, superbags.

File formats
------------
Word vectors (word2vec text format)::

    <count> <dim>
    <token> <v1> <v2> ... <v_dim>

Corpus (UTF-8 TSV, one sentence per line)::

    e1_id <TAB> e2_id <TAB> e1_surface <TAB> e2_surface <TAB> relation
         <TAB> space-tokenized sentence [<TAB> e1_offset <TAB> e2_offset]

Entity positions default to the first token equal to the surface form
(first match at a distinct position for the second entity); the optional
integer offset fields override matching. Sentences are truncated to
``max_len`` first; a sentence whose entities cannot both be located
afterwards is dropped and counted, never an error.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ParseError, SchemaError
from .numeric import SeededRng

PAD_TOKEN = "<PAD>"
UNK_TOKEN = "<UNK>"
PAD_ID = 0
UNK_ID = 1

NA_RELATION = "NA"
NA_ID = 0

DEFAULT_CLIP = 30
DEFAULT_MAX_BAG_SIZE = 20


def pad_bucket(clip: int) -> int:
    """Bucket id reserved for padding positions."""
    return 2 * clip + 1


def n_position_buckets(clip: int) -> int:
    return 2 * clip + 2


def relative_positions(sentence_len: int, e_pos: int, clip: int) -> list[int]:
    """Position bucket ids for the real tokens of a sentence.

    The raw distance ``i - e_pos`` is clamped to [-clip, clip] and shifted
    by ``clip`` into [0, 2*clip]. Padding beyond ``sentence_len`` is not
    produced here; it uses the dedicated bucket ``pad_bucket(clip)``.
    """
    if e_pos >= sentence_len:
        raise ValueError(f"entity position {e_pos} outside sentence of length {sentence_len}")
    return [max(-clip, min(clip, i - e_pos)) + clip for i in range(sentence_len)]


class Vocab:
    """Token ids, dense in [0, size); PAD=0 and UNK=1 are always present."""

    def __init__(self, tokens: list[str] | None = None):
        self.id_to_token = [PAD_TOKEN, UNK_TOKEN]
        self.token_to_id = {PAD_TOKEN: PAD_ID, UNK_TOKEN: UNK_ID}
        for tok in tokens or []:
            self.add(tok)

    def add(self, token: str) -> int:
        if token in self.token_to_id:
            return self.token_to_id[token]
        idx = len(self.id_to_token)
        self.id_to_token.append(token)
        self.token_to_id[token] = idx
        return idx

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id


class RelationSchema:
    """Relation name -> dense id map with NA pinned to id 0."""

    def __init__(self, names):
        ordered = [NA_RELATION] + [n for n in names if n != NA_RELATION]
        self.id_to_name = ordered
        self.name_to_id = {n: i for i, n in enumerate(ordered)}
        if len(self.name_to_id) != len(ordered):
            raise SchemaError("duplicate relation names")

    @classmethod
    def from_file(cls, path) -> "RelationSchema":
        with open(path, encoding="utf-8") as fh:
            names = [line.strip() for line in fh if line.strip()]
        return cls(names)

    def id_of(self, name: str) -> int:
        try:
            return self.name_to_id[name]
        except KeyError:
            raise SchemaError(f"unknown relation {name!r}") from None

    def __len__(self) -> int:
        return len(self.id_to_name)


@dataclass(eq=False)
class LabeledSentence:
    """One distantly-labeled sentence with both entity heads located.

    ``token_ids``/``d1``/``d2`` cover the kept (possibly truncated) tokens
    only; padding to the model length happens at embedding time. ``d1`` and
    ``d2`` are raw clipped distances, so ``d1[e1_pos] == 0``.
    """

    token_ids: np.ndarray
    e1_pos: int
    e2_pos: int
    pair_key: tuple[str, str]
    relation: int
    d1: tuple[int, ...]
    d2: tuple[int, ...]
    e1_id: str = ""
    e2_id: str = ""
    e1_surface: str = ""
    e2_surface: str = ""
    relation_name: str = ""
    text: str = ""
    explicit_offsets: tuple[int, int] | None = None

    def __post_init__(self):
        n = len(self.token_ids)
        if self.e1_pos == self.e2_pos:
            raise ValueError("entity positions must differ")
        if not (0 <= self.e1_pos < n and 0 <= self.e2_pos < n):
            raise ValueError("entity position outside sentence")
        if self.d1[self.e1_pos] != 0 or self.d2[self.e2_pos] != 0:
            raise ValueError("distance of an entity to itself must be 0")

    @property
    def true_len(self) -> int:
        return len(self.token_ids)


def serialize_sentence(s: LabeledSentence) -> str:
    """Inverse of corpus parsing for kept sentences (byte-lossless)."""
    fields = [s.e1_id, s.e2_id, s.e1_surface, s.e2_surface, s.relation_name, s.text]
    if s.explicit_offsets is not None:
        fields += [str(s.explicit_offsets[0]), str(s.explicit_offsets[1])]
    return "\t".join(fields)


@dataclass(eq=False)
class SentenceBag:
    """All kept sentences for one (entity pair, relation) key."""

    pair_key: tuple[str, str]
    relation: int
    sentences: list[LabeledSentence]

    def __post_init__(self):
        if not self.sentences:
            raise ValueError("empty sentence bag")
        for s in self.sentences:
            if s.pair_key != self.pair_key or s.relation != self.relation:
                raise ValueError("bag members must share pair key and relation")

    def __len__(self) -> int:
        return len(self.sentences)


@dataclass(eq=False)
class SuperBag:
    """A label-pure group of sentence bags; the training unit."""

    relation: int
    bags: list[SentenceBag]

    def __post_init__(self):
        if not self.bags:
            raise ValueError("empty superbag")
        for b in self.bags:
            if b.relation != self.relation:
                raise ValueError("superbag members must share the relation label")

    def __len__(self) -> int:
        return len(self.bags)


@dataclass
class CorpusStats:
    """Counts over the raw corpus plus what survived ingestion."""

    total_sentences: int = 0
    kept: int = 0
    dropped_entity_not_found: int = 0
    pairs: int = 0
    kb_facts: int = 0

    def report(self) -> str:
        lines = [
            f"sentences total        {self.total_sentences}",
            f"sentences kept         {self.kept}",
            f"sentences dropped      {self.dropped_entity_not_found} (entity not found after truncation)",
            f"distinct entity pairs  {self.pairs}",
            f"distinct KB facts      {self.kb_facts} (non-NA pair/relation combinations)",
        ]
        return "\n".join(lines)


@dataclass
class ParsedCorpus:
    sentences: list[LabeledSentence]
    stats: CorpusStats


def load_word_vectors(path, rng: SeededRng, expected_dim: int | None = None):
    """Read a word2vec text file into (Vocab, float64 embedding matrix).

    The PAD row is all-zero and the UNK row is drawn N(0, 0.01) from
    ``rng``. A duplicate token keeps its first vector. ``expected_dim``
    guards against configs that disagree with the file.
    """
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        parts = header.split()
        if len(parts) != 2:
            raise ParseError(path, 1, f"expected 'count dim' header, got {header.strip()!r}")
        try:
            _count, dim = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(path, 1, f"non-integer header fields {header.strip()!r}") from None
        if expected_dim is not None and dim != expected_dim:
            raise ConfigError(f"word_dim: vector file has dimension {dim}, config says {expected_dim}")

        vocab = Vocab()
        rows = [np.zeros(dim), rng.normal_array((dim,), std=0.01)]
        for line_no, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            fields = line.rstrip("\n").split()
            if len(fields) != dim + 1:
                raise ParseError(path, line_no,
                                 f"expected token + {dim} floats, got {len(fields)} fields")
            token = fields[0]
            if token in vocab:
                continue
            try:
                vec = np.array([float(x) for x in fields[1:]], dtype=np.float64)
            except ValueError:
                raise ParseError(path, line_no, "non-numeric vector component") from None
            vocab.add(token)
            rows.append(vec)

    return vocab, np.vstack(rows)


def _locate_entities(tokens, e1_surface, e2_surface, offsets):
    """First-token-match entity localization; explicit offsets override.

    Returns (e1_pos, e2_pos) or None when either entity is missing from
    the (already truncated) token list.
    """
    n = len(tokens)
    if offsets is not None:
        p1, p2 = offsets
        if 0 <= p1 < n and 0 <= p2 < n and p1 != p2:
            return p1, p2
        return None
    p1 = next((i for i, t in enumerate(tokens) if t == e1_surface), None)
    if p1 is None:
        return None
    p2 = next((i for i, t in enumerate(tokens) if t == e2_surface and i != p1), None)
    if p2 is None:
        return None
    return p1, p2


def parse_corpus(path, vocab: Vocab, schema: RelationSchema, max_len: int,
                 clip: int = DEFAULT_CLIP) -> ParsedCorpus:
    """Parse a corpus TSV into LabeledSentences plus raw-corpus statistics.

    Statistics (sentence, pair, and KB-fact counts) are taken over the raw
    file so they match the published dataset card regardless of drops.
    """
    sentences = []
    stats = CorpusStats()
    seen_pairs = set()
    seen_facts = set()

    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) < 6:
                raise ParseError(path, line_no, f"expected >= 6 tab-separated fields, got {len(fields)}")
            if len(fields) not in (6, 8):
                raise ParseError(path, line_no, f"expected 6 or 8 fields, got {len(fields)}")
            e1_id, e2_id, e1_surface, e2_surface, relation_name, text = fields[:6]
            offsets = None
            if len(fields) == 8:
                try:
                    offsets = (int(fields[6]), int(fields[7]))
                except ValueError:
                    raise ParseError(path, line_no, "entity offsets must be integers") from None

            relation = schema.id_of(relation_name)
            stats.total_sentences += 1
            pair = (e1_id, e2_id)
            seen_pairs.add(pair)
            if relation != NA_ID:
                seen_facts.add((pair, relation))

            tokens = text.split()[:max_len]
            located = _locate_entities(tokens, e1_surface, e2_surface, offsets)
            if located is None:
                stats.dropped_entity_not_found += 1
                continue
            e1_pos, e2_pos = located
            d1 = tuple(max(-clip, min(clip, i - e1_pos)) for i in range(len(tokens)))
            d2 = tuple(max(-clip, min(clip, i - e2_pos)) for i in range(len(tokens)))
            sentences.append(LabeledSentence(
                token_ids=np.array([vocab.lookup(t) for t in tokens], dtype=np.int64),
                e1_pos=e1_pos,
                e2_pos=e2_pos,
                pair_key=pair,
                relation=relation,
                d1=d1,
                d2=d2,
                e1_id=e1_id,
                e2_id=e2_id,
                e1_surface=e1_surface,
                e2_surface=e2_surface,
                relation_name=relation_name,
                text=text,
                explicit_offsets=offsets,
            ))
            stats.kept += 1

    stats.pairs = len(seen_pairs)
    stats.kb_facts = len(seen_facts)
    return ParsedCorpus(sentences=sentences, stats=stats)


def corpus_gold_facts(path, schema: RelationSchema) -> set:
    """Raw (pair_key, relation_id) facts with relation != NA, over every
    line of the corpus (drops do not remove facts from the gold set)."""
    facts = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) < 6:
                raise ParseError(path, line_no, "expected >= 6 tab-separated fields")
            relation = schema.id_of(fields[4])
            if relation != NA_ID:
                facts.add(((fields[0], fields[1]), relation))
    return facts


def corpus_pairs(path) -> set:
    """All (e1_id, e2_id) pair keys occurring in a corpus file."""
    pairs = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) >= 2:
                pairs.add((fields[0], fields[1]))
    return pairs


def scan_relation_names(path) -> list[str]:
    """Distinct relation names in a corpus, sorted, for schema building
    when no relation file is configured."""
    names = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            fields = line.rstrip("\n").split("\t")
            if len(fields) >= 6:
                names.add(fields[4])
    return sorted(names)


def build_bags(sentences, max_bag_size: int = DEFAULT_MAX_BAG_SIZE,
               rng: SeededRng | None = None) -> list[SentenceBag]:
    """Group sentences into one bag per (pair, relation), in input order.

    An entity pair labeled with several relations yields one bag per
    relation so every bag has a single well-defined label. Oversized bags
    are uniformly subsampled (order-preserving) with ``rng``.
    """
    if rng is None:
        rng = SeededRng(0)
    groups: "OrderedDict[tuple, list]" = OrderedDict()
    for s in sentences:
        groups.setdefault((s.pair_key, s.relation), []).append(s)
    bags = []
    for (pair, relation), members in groups.items():
        if len(members) > max_bag_size:
            keep = rng.sample_indices(len(members), max_bag_size)
            members = [members[i] for i in keep]
        bags.append(SentenceBag(pair_key=pair, relation=relation, sentences=members))
    return bags


def assemble_superbags(bags, n_s: int, rng: SeededRng,
                       na_ratio: float | None = None) -> list[SuperBag]:
    """Shuffle each relation's bags and chunk them into superbags of n_s.

    A final short chunk is kept as a smaller superbag. With n_s=1 every bag
    is its own superbag. When ``na_ratio`` is given, NA superbags are
    downsampled to at most ``na_ratio * (non-NA superbag count)``; call this
    once per epoch so groupings (and the NA subsample) differ across epochs.
    """
    if n_s < 1:
        raise ValueError("superbag size must be >= 1")
    by_relation: dict[int, list] = {}
    for b in bags:
        by_relation.setdefault(b.relation, []).append(b)

    superbags = []
    na_superbags = []
    for relation in sorted(by_relation):
        members = list(by_relation[relation])
        rng.shuffle(members)
        chunks = [members[i:i + n_s] for i in range(0, len(members), n_s)]
        target = na_superbags if relation == NA_ID else superbags
        target.extend(SuperBag(relation=relation, bags=chunk) for chunk in chunks)

    if na_ratio is not None and na_superbags:
        cap = int(round(na_ratio * len(superbags)))
        if len(na_superbags) > cap:
            rng.shuffle(na_superbags)
            na_superbags = na_superbags[:cap]
    return superbags + na_superbags
