"""Authorization policies for collectively owned objects.

A policy is a tree of terms: public-key and object-inclusion leaves, local
time windows, external-event leaves, and weighted-threshold / all / any
branches. An object stores only a commitment (the Merkle root over the
optionally nonce-blinded tree), so a complex policy is indistinguishable
from a plain single-owner address until used. A transaction proves
authorization by revealing just the branches a chosen path needs, keeping
the rest of the policy hidden.

Node hashing rules (fixed so commitments are reproducible):

    leaf   digest = sha256(b"authleaf:" + label + payload + nonce_part)
    branch digest = sha256(b"authnode:" + label + params
                           + u32(count) + child digests + nonce_part)

where `label` is the single kind byte, `payload`/`params` are the encodings
below, and `nonce_part` is 0x00 for no nonce or 0x01 plus the 32-byte nonce.

    PublicKey       label 0x01  payload = 32-byte key
    IncludesObject  label 0x02  payload = 32-byte object id
    BeforeTime      label 0x03  payload = u64 tick
    AfterTime       label 0x04  payload = u64 tick
    EventObserved   label 0x05  payload = str(chain) + str(event)
    Threshold       label 0x06  params  = u64 need + u32(count) + u64 weights
    AllOf           label 0x07  params  = empty
    AnyOf           label 0x08  params  = empty
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

from .encoding import (
    digest,
    enc_bytes,
    enc_opt,
    enc_seq,
    enc_str,
    enc_u32,
    enc_u64,
)

MAX_DEPTH = 32

LABEL_PK = 0x01
LABEL_OID = 0x02
LABEL_BEFORE = 0x03
LABEL_AFTER = 0x04
LABEL_EVENT = 0x05
LABEL_THRESHOLD = 0x06
LABEL_ALL = 0x07
LABEL_ANY = 0x08

_LEAF_LABELS = {LABEL_PK, LABEL_OID, LABEL_BEFORE, LABEL_AFTER, LABEL_EVENT}


class PathError(Exception):
    """The path does not fit the shape of the term it claims to satisfy."""


class RevealError(Exception):
    """The reveal is structurally unusable (a needed branch is hidden)."""


class TermDepthError(Exception):
    """Term tree exceeds the supported depth bound."""


# --- terms ------------------------------------------------------------------

@dataclass(frozen=True)
class PublicKey:
    pk: bytes
    label = LABEL_PK


@dataclass(frozen=True)
class IncludesObject:
    oid: bytes
    label = LABEL_OID


@dataclass(frozen=True)
class BeforeTime:
    tick: int
    label = LABEL_BEFORE


@dataclass(frozen=True)
class AfterTime:
    tick: int
    label = LABEL_AFTER


@dataclass(frozen=True)
class EventObserved:
    chain: str
    event: str
    label = LABEL_EVENT


@dataclass(frozen=True)
class Threshold:
    need: int
    weights: tuple[int, ...]
    children: tuple["AuthTerm", ...]
    label = LABEL_THRESHOLD

    def __post_init__(self):
        if self.need < 1:
            raise ValueError("threshold must be at least 1")
        if len(self.weights) != len(self.children) or not self.children:
            raise ValueError("threshold needs one weight per child")
        if any(w < 1 for w in self.weights):
            raise ValueError("threshold weights must be positive")

    @classmethod
    def of(cls, need: int, *branches: tuple[int, "AuthTerm"]) -> "Threshold":
        weights = tuple(w for w, _ in branches)
        children = tuple(t for _, t in branches)
        return cls(need, weights, children)


@dataclass(frozen=True)
class AllOf:
    children: tuple["AuthTerm", ...]
    label = LABEL_ALL

    def __post_init__(self):
        if not self.children:
            raise ValueError("AllOf needs at least one child")


@dataclass(frozen=True)
class AnyOf:
    children: tuple["AuthTerm", ...]
    label = LABEL_ANY

    def __post_init__(self):
        if not self.children:
            raise ValueError("AnyOf needs at least one child")


AuthTerm = Union[
    PublicKey, IncludesObject, BeforeTime, AfterTime, EventObserved,
    Threshold, AllOf, AnyOf,
]


# --- paths ------------------------------------------------------------------

@dataclass(frozen=True)
class LeafPath:
    pass


LEAF = LeafPath()


@dataclass(frozen=True)
class AllPath:
    children: tuple["AuthPath", ...]


@dataclass(frozen=True)
class AnyPath:
    index: int
    child: "AuthPath"


@dataclass(frozen=True)
class ThresholdPath:
    selected: tuple[tuple[int, "AuthPath"], ...]


AuthPath = Union[LeafPath, AllPath, AnyPath, ThresholdPath]


# --- context ----------------------------------------------------------------

def _no_events(chain: str, event: str) -> bool:
    return False


@dataclass(frozen=True)
class AuthContext:
    """What a validator knows when judging a policy.

    `local_time` is the receiving validator's own clock; validators with
    skewed clocks legitimately disagree about time terms.
    """

    signers: frozenset[bytes] = frozenset()
    included_oids: frozenset[bytes] = frozenset()
    local_time: int = 0
    event_oracle: Callable[[str, str], bool] = _no_events


def event_facts(pairs) -> Callable[[str, str], bool]:
    """Oracle backed by a fixed fact set of (chain, event) pairs."""
    facts = frozenset(tuple(p) for p in pairs)
    return lambda chain, event: (chain, event) in facts


# --- shared node plumbing ----------------------------------------------------

def _fields_bytes(label: int, fields: tuple) -> bytes:
    if label == LABEL_PK or label == LABEL_OID:
        return fields[0]
    if label == LABEL_BEFORE or label == LABEL_AFTER:
        return enc_u64(fields[0])
    if label == LABEL_EVENT:
        return enc_str(fields[0]) + enc_str(fields[1])
    if label == LABEL_THRESHOLD:
        need, weights = fields
        return enc_u64(need) + enc_seq(enc_u64(w) for w in weights)
    return b""


def _term_fields(term: AuthTerm) -> tuple:
    label = term.label
    if label == LABEL_PK:
        return (term.pk,)
    if label == LABEL_OID:
        return (term.oid,)
    if label in (LABEL_BEFORE, LABEL_AFTER):
        return (term.tick,)
    if label == LABEL_EVENT:
        return (term.chain, term.event)
    if label == LABEL_THRESHOLD:
        return (term.need, term.weights)
    return ()


def _term_children(term: AuthTerm) -> tuple:
    return () if term.label in _LEAF_LABELS else term.children


def _node_digest(label: int, fields: tuple, child_digests: list[bytes],
                 nonce: bytes | None) -> bytes:
    if label in _LEAF_LABELS:
        return digest(b"authleaf:" + bytes([label]) + _fields_bytes(label, fields)
                      + enc_opt(nonce))
    return digest(b"authnode:" + bytes([label]) + _fields_bytes(label, fields)
                  + enc_seq(child_digests) + enc_opt(nonce))


def term_depth(term: AuthTerm) -> int:
    children = _term_children(term)
    if not children:
        return 1
    return 1 + max(term_depth(c) for c in children)


def check_depth(term: AuthTerm) -> None:
    if term_depth(term) > MAX_DEPTH:
        raise TermDepthError(f"term deeper than {MAX_DEPTH}")


# --- evaluation --------------------------------------------------------------

def _leaf_true(label: int, fields: tuple, ctx: AuthContext) -> bool:
    if label == LABEL_PK:
        return fields[0] in ctx.signers
    if label == LABEL_OID:
        return fields[0] in ctx.included_oids
    if label == LABEL_BEFORE:
        return ctx.local_time < fields[0]
    if label == LABEL_AFTER:
        return ctx.local_time > fields[0]
    return ctx.event_oracle(fields[0], fields[1])


def _eval(node, path: AuthPath, ctx: AuthContext, depth: int) -> bool:
    if depth > MAX_DEPTH:
        raise TermDepthError(f"term deeper than {MAX_DEPTH}")
    if isinstance(node, Hidden):
        raise RevealError("path descends into a hidden branch")
    label, fields, children = _view(node)

    if label in _LEAF_LABELS:
        if not isinstance(path, LeafPath):
            raise PathError("leaf term given a branch path")
        return _leaf_true(label, fields, ctx)

    if label == LABEL_ALL:
        if not isinstance(path, AllPath) or len(path.children) != len(children):
            raise PathError("AllOf path must cover every child")
        return all(_eval(c, p, ctx, depth + 1)
                   for c, p in zip(children, path.children))

    if label == LABEL_ANY:
        if not isinstance(path, AnyPath):
            raise PathError("AnyOf term needs a selection path")
        if not 0 <= path.index < len(children):
            raise PathError("AnyOf selection out of range")
        return _eval(children[path.index], path.child, ctx, depth + 1)

    # threshold: sum the weights of selected children that hold
    if not isinstance(path, ThresholdPath):
        raise PathError("Threshold term needs a selection path")
    need, weights = fields
    seen = set()
    total = 0
    for index, sub in path.selected:
        if not 0 <= index < len(children) or index in seen:
            raise PathError("Threshold selection out of range or duplicated")
        seen.add(index)
        if _eval(children[index], sub, ctx, depth + 1):
            total += weights[index]
    return total >= need


def _view(node) -> tuple[int, tuple, tuple]:
    if isinstance(node, Revealed):
        return node.kind, node.fields, node.children
    return node.label, _term_fields(node), _term_children(node)


def evaluate(term: AuthTerm, path: AuthPath, ctx: AuthContext) -> bool:
    """True iff the path-selected subterms all hold under `ctx`.

    A path that does not fit the term raises PathError rather than
    returning False, so callers can tell bad evidence from a false policy.
    """
    return _eval(term, path, ctx, 1)


def find_path(term: AuthTerm, ctx: AuthContext) -> AuthPath | None:
    """Prover-side search for a satisfying path; None if nothing satisfies.

    Selections are made in child order, and threshold selection stops as
    soon as enough weight accumulates, keeping the eventual reveal small.
    """
    label, fields, children = _view(term)
    if label in _LEAF_LABELS:
        return LEAF if _leaf_true(label, fields, ctx) else None
    if label == LABEL_ALL:
        subs = []
        for child in children:
            sub = find_path(child, ctx)
            if sub is None:
                return None
            subs.append(sub)
        return AllPath(tuple(subs))
    if label == LABEL_ANY:
        for i, child in enumerate(children):
            sub = find_path(child, ctx)
            if sub is not None:
                return AnyPath(i, sub)
        return None
    need, weights = fields
    picked = []
    total = 0
    for i, child in enumerate(children):
        if total >= need:
            break
        sub = find_path(child, ctx)
        if sub is not None:
            picked.append((i, sub))
            total += weights[i]
    if total >= need:
        return ThresholdPath(tuple(picked))
    return None


# --- commitments -------------------------------------------------------------

class NonceStream:
    """Deterministic stream of per-node blinding nonces."""

    def __init__(self, seed: bytes):
        self._seed = seed
        self._counter = 0

    def take(self) -> bytes:
        nonce = digest(b"nonce:" + self._seed + enc_u64(self._counter))
        self._counter += 1
        return nonce


@dataclass
class _Annotated:
    term: AuthTerm
    nonce: bytes | None
    children: tuple["_Annotated", ...]
    node_digest: bytes


def _annotate(term: AuthTerm, stream: NonceStream | None, depth: int) -> _Annotated:
    if depth > MAX_DEPTH:
        raise TermDepthError(f"term deeper than {MAX_DEPTH}")
    nonce = stream.take() if stream is not None else None
    children = tuple(_annotate(c, stream, depth + 1) for c in _term_children(term))
    node = _node_digest(term.label, _term_fields(term),
                        [c.node_digest for c in children], nonce)
    return _Annotated(term, nonce, children, node)


def commit(term: AuthTerm, nonce_source: NonceStream | None = None) -> bytes:
    """Merkle root over the (optionally nonce-blinded) term tree.

    Nonces are drawn from the stream in pre-order, one per node, so the
    owner can later regenerate them for reveals. Without nonces the
    commitment of a bare PublicKey leaf doubles as a plain address.
    """
    return _annotate(term, nonce_source, 1).node_digest


# --- reveals ------------------------------------------------------------------

@dataclass(frozen=True)
class Hidden:
    node_digest: bytes


@dataclass(frozen=True)
class Revealed:
    kind: int
    fields: tuple
    nonce: bytes | None
    children: tuple["RevealNode", ...] = ()


RevealNode = Union[Revealed, Hidden]


def build_reveal(term: AuthTerm, path: AuthPath,
                 nonce_source: NonceStream | None = None) -> RevealNode:
    """Reveal exactly the branches `path` needs; everything else stays a digest."""
    check_depth(term)
    ann = _annotate(term, nonce_source, 1)
    return _reveal_from(ann, path)


def _reveal_from(ann: _Annotated, path: AuthPath) -> RevealNode:
    label = ann.term.label
    fields = _term_fields(ann.term)
    if label in _LEAF_LABELS:
        if not isinstance(path, LeafPath):
            raise PathError("leaf term given a branch path")
        return Revealed(label, fields, ann.nonce)
    if label == LABEL_ALL:
        if not isinstance(path, AllPath) or len(path.children) != len(ann.children):
            raise PathError("AllOf path must cover every child")
        kids = tuple(_reveal_from(c, p) for c, p in zip(ann.children, path.children))
        return Revealed(label, fields, ann.nonce, kids)
    if label == LABEL_ANY:
        if not isinstance(path, AnyPath) or not 0 <= path.index < len(ann.children):
            raise PathError("AnyOf selection out of range")
        kids = tuple(
            _reveal_from(c, path.child) if i == path.index else Hidden(c.node_digest)
            for i, c in enumerate(ann.children))
        return Revealed(label, fields, ann.nonce, kids)
    if not isinstance(path, ThresholdPath):
        raise PathError("Threshold term needs a selection path")
    chosen = dict(path.selected)
    kids = tuple(
        _reveal_from(c, chosen[i]) if i in chosen else Hidden(c.node_digest)
        for i, c in enumerate(ann.children))
    return Revealed(label, fields, ann.nonce, kids)


def reveal_root(node: RevealNode) -> bytes:
    if isinstance(node, Hidden):
        return node.node_digest
    child_digests = [reveal_root(c) for c in node.children]
    return _node_digest(node.kind, node.fields, child_digests, node.nonce)


def verify_reveal(commitment: bytes, reveal: RevealNode, path: AuthPath,
                  ctx: AuthContext) -> bool:
    """True iff the reveal hashes back to the commitment and the path holds.

    A digest mismatch is an ordinary False; a reveal whose shape cannot be
    evaluated (path leads into a hidden branch) raises RevealError.
    """
    if reveal_root(reveal) != commitment:
        return False
    return _eval(reveal, path, ctx, 1)


# --- wire encodings -----------------------------------------------------------

def encode_term(term: AuthTerm) -> bytes:
    label = term.label
    body = _fields_bytes(label, _term_fields(term))
    kids = enc_seq(encode_term(c) for c in _term_children(term))
    return bytes([label]) + enc_bytes(body) + kids


def encode_path(path: AuthPath) -> bytes:
    if isinstance(path, LeafPath):
        return b"\x00"
    if isinstance(path, AllPath):
        return b"\x01" + enc_seq(encode_path(c) for c in path.children)
    if isinstance(path, AnyPath):
        return b"\x02" + enc_u32(path.index) + encode_path(path.child)
    return b"\x03" + enc_seq(enc_u32(i) + encode_path(p) for i, p in path.selected)


def encode_reveal(node: RevealNode) -> bytes:
    if isinstance(node, Hidden):
        return b"\x00" + node.node_digest
    body = _fields_bytes(node.kind, node.fields)
    kids = enc_seq(encode_reveal(c) for c in node.children)
    return b"\x01" + bytes([node.kind]) + enc_bytes(body) + enc_opt(node.nonce) + kids


def decode_reveal(data: bytes) -> RevealNode:
    node, rest = _decode_reveal(data)
    if rest:
        raise RevealError("trailing bytes after reveal")
    return node


def _decode_reveal(data: bytes) -> tuple[RevealNode, bytes]:
    if not data:
        raise RevealError("truncated reveal")
    marker, data = data[0], data[1:]
    if marker == 0x00:
        if len(data) < 32:
            raise RevealError("truncated hidden digest")
        return Hidden(data[:32]), data[32:]
    if marker != 0x01:
        raise RevealError("bad reveal marker")
    label, data = data[0], data[1:]
    size = int.from_bytes(data[:4], "big")
    body, data = data[4:4 + size], data[4 + size:]
    fields = _decode_fields(label, body)
    nonce = None
    flag, data = data[0], data[1:]
    if flag == 0x01:
        nonce, data = data[:32], data[32:]
    count = int.from_bytes(data[:4], "big")
    data = data[4:]
    kids = []
    for _ in range(count):
        kid, data = _decode_reveal(data)
        kids.append(kid)
    return Revealed(label, fields, nonce, tuple(kids)), data


def _decode_fields(label: int, body: bytes) -> tuple:
    if label in (LABEL_PK, LABEL_OID):
        return (body,)
    if label in (LABEL_BEFORE, LABEL_AFTER):
        return (int.from_bytes(body, "big"),)
    if label == LABEL_EVENT:
        size = int.from_bytes(body[:4], "big")
        chain = body[4:4 + size].decode("utf-8")
        rest = body[4 + size:]
        size2 = int.from_bytes(rest[:4], "big")
        return (chain, rest[4:4 + size2].decode("utf-8"))
    if label == LABEL_THRESHOLD:
        need = int.from_bytes(body[:8], "big")
        count = int.from_bytes(body[8:12], "big")
        weights = tuple(
            int.from_bytes(body[12 + 8 * i:20 + 8 * i], "big") for i in range(count))
        return (need, weights)
    if label in (LABEL_ALL, LABEL_ANY):
        return ()
    raise RevealError(f"unknown node label {label}")


# --- transaction evidence ------------------------------------------------------

@dataclass(frozen=True)
class Evidence:
    """Signatures plus per-object reveals carried alongside a transaction.

    Evidence is conceptually part of the signature layer: it is excluded
    from the digests that get countersigned, so the authorizing logic never
    leaks into the transaction identity.
    """

    signatures: tuple[tuple[bytes, bytes], ...] = ()
    reveals: tuple[tuple[bytes, RevealNode, AuthPath], ...] = ()

    def canonical_bytes(self) -> bytes:
        sigs = enc_seq(enc_bytes(pk) + enc_bytes(sig) for pk, sig in self.signatures)
        revs = enc_seq(
            enc_bytes(oid) + enc_bytes(encode_reveal(rev)) + enc_bytes(encode_path(p))
            for oid, rev, p in self.reveals)
        return sigs + revs

    def signer_set(self, message: bytes, scheme) -> frozenset[bytes]:
        return frozenset(pk for pk, sig in self.signatures
                         if scheme.verify(pk, message, sig))

    def for_object(self, oid: bytes):
        for entry_oid, rev, path in self.reveals:
            if entry_oid == oid:
                return rev, path
        return None

    @staticmethod
    def build(message: bytes, signer_keys, reveals, scheme) -> "Evidence":
        sigs = tuple(sorted(
            (pk, scheme.sign(sk, message)) for sk, pk in signer_keys))
        revs = tuple(sorted(reveals, key=lambda r: r[0]))
        return Evidence(sigs, revs)
