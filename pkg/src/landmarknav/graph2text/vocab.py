"""Token/type vocabularies shared between encoder input and decoder output."""

from __future__ import annotations

from ..route_graph import NODE_TYPES

PAD = "<pad>"
BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
SPECIALS = (PAD, BOS, EOS, UNK)


class Vocab:
    def __init__(self, tokens):
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")

    @classmethod
    def build(cls, items):
        """Specials first, then the items sorted for reproducibility."""
        seen = set(SPECIALS)
        extra = sorted({t for t in items if t not in seen})
        return cls(list(SPECIALS) + extra)

    def encode(self, token: str) -> int:
        return self.index.get(token, self.index[UNK])

    def decode(self, idx: int) -> str:
        return self.tokens[idx]

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.tokens == other.tokens

    def to_list(self):
        return list(self.tokens)


def type_vocab() -> Vocab:
    """Node-type vocabulary; fixed by the route-graph schema."""
    return Vocab(list(SPECIALS) + list(NODE_TYPES))


def token_vocab_from_pairs(pairs) -> Vocab:
    """One shared vocabulary over node tokens and target words.

    pairs: iterables of (source, text) where source is a RouteGraph or a
    token list (sequence mode) and text is the whitespace-joined target.
    """
    items = set()
    for source, text in pairs:
        if hasattr(source, "nodes"):
            items.update(n.token for n in source.nodes)
        else:
            items.update(source)
        items.update(text.split())
    return Vocab.build(items)
