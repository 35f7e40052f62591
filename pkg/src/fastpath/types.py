"""Core value types: objects, transactions, certificates, and quorum math.

Everything here is an immutable value with a canonical byte encoding, so
digests agree across validators and across runs. Object state is named by
an (object id, version) pair; a version is consumed exactly once and every
successful mutation produces version + 1.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

from . import crypto
from .authenticators import Evidence
from .encoding import (
    digest,
    enc_bytes,
    enc_i64,
    enc_opt,
    enc_seq,
    enc_str,
    enc_u64,
    tagged_digest,
)

ValidatorId = int
GAS_FEE = 1


class ErrorCode(str, enum.Enum):
    CONFLICTING_LOCK = "ConflictingLock"
    MISSING_OBJECT = "MissingObject"
    STALE_VERSION = "StaleVersion"
    BAD_EVIDENCE = "BadEvidence"
    OBJECT_UNLOCKED = "ObjectUnlocked"
    WRONG_EPOCH = "WrongEpoch"
    INVALID_CERTIFICATE = "InvalidCertificate"
    ALREADY_CONFIRMED = "AlreadyConfirmed"
    BAD_GAS = "BadGas"
    INVALID_UNLOCK_CERT = "InvalidUnlockCert"
    INSUFFICIENT_BALANCE = "InsufficientBalance"
    INSUFFICIENT_GAS = "InsufficientGas"
    BUDGET_EXHAUSTED = "Rejected"
    BAD_TRANSACTION = "BadTransaction"
    MALFORMED_COMMITTEE = "MalformedCommittee"
    INVALID_ITEM = "InvalidItem"
    PAUSED = "Paused"
    INCOMPLETE = "Incomplete"
    MIXED_REQUESTS = "MixedRequests"
    INSUFFICIENT_REPLIES = "InsufficientReplies"


class ProtocolError(Exception):
    def __init__(self, code: ErrorCode, detail: str = "", keys: tuple = ()):
        super().__init__(f"{code.value}: {detail}" if detail else code.value)
        self.code = code
        self.detail = detail
        self.keys = keys  # object keys the error is about, when that helps


# --- committee ---------------------------------------------------------------

@dataclass(frozen=True)
class CommitteeParams:
    n: int
    f: int

    def __post_init__(self):
        if self.f < 0 or self.n < 3 * self.f + 1:
            raise ProtocolError(ErrorCode.MALFORMED_COMMITTEE,
                                f"n={self.n} f={self.f} violates n >= 3f+1")


def quorum(params: CommitteeParams) -> int:
    """Smallest vote count whose every pair overlaps in f+1 members.

    This is n - f, which meets the protocol's "at least 2f+1" requirement
    and equals exactly 2f+1 for the tight committees (n = 3f+1) used
    throughout; for looser committees 2f+1 alone would not guarantee the
    f+1 honest overlap that safety rests on.
    """
    return params.n - params.f


def validity_threshold(params: CommitteeParams) -> int:
    """Vote count guaranteeing at least one honest member: f+1."""
    return params.f + 1


def validator_key(index: ValidatorId) -> bytes:
    return crypto.validator_public_key(index)


# --- objects -------------------------------------------------------------------

class ObjectKind(str, enum.Enum):
    READ_ONLY = "read_only"
    OWNED = "owned"
    SHARED = "shared"
    COMMUTATIVE = "commutative"


@dataclass(frozen=True)
class ObjectKey:
    object_id: bytes
    version: int

    def canonical_bytes(self) -> bytes:
        return enc_bytes(self.object_id) + enc_u64(self.version)

    def bump(self) -> "ObjectKey":
        return ObjectKey(self.object_id, self.version + 1)

    def __repr__(self):
        return f"ObjectKey({self.object_id[:4].hex()}..,v{self.version})"


@dataclass(frozen=True)
class IntValue:
    amount: int

    def canonical_bytes(self) -> bytes:
        return b"\x01" + enc_i64(self.amount)


@dataclass(frozen=True)
class BlobValue:
    data: bytes

    def canonical_bytes(self) -> bytes:
        return b"\x02" + enc_bytes(self.data)


@dataclass(frozen=True)
class CounterValue:
    """Contents of a commutative object.

    `flavor` selects the replication discipline (grow, uset, pnset, or
    bounded); `limit` is the spendable credit of a bounded counter at the
    current consolidation version and zero for the other flavors.
    """

    flavor: str
    limit: int = 0

    def canonical_bytes(self) -> bytes:
        return b"\x03" + enc_str(self.flavor) + enc_u64(self.limit)


Contents = IntValue | BlobValue | CounterValue


@dataclass(frozen=True)
class Object:
    key: ObjectKey
    kind: ObjectKind
    owner: bytes | None
    contents: Contents

    def __post_init__(self):
        has_owner = self.owner is not None
        needs_owner = self.kind in (ObjectKind.OWNED, ObjectKind.COMMUTATIVE)
        if has_owner != needs_owner:
            raise ValueError(f"{self.kind.value} object owner mismatch")

    def canonical_bytes(self) -> bytes:
        return (self.key.canonical_bytes() + enc_str(self.kind.value)
                + enc_opt(self.owner) + self.contents.canonical_bytes())


# --- transactions ----------------------------------------------------------------

class TxKind(str, enum.Enum):
    TRANSFER = "transfer"
    SWAP = "swap"
    NOOP = "noop"
    MINT = "mint"
    CREDIT = "credit"
    DEBIT = "debit"


@dataclass(frozen=True)
class TxParams:
    amount: int = 0
    new_owner: bytes | None = None
    new_object_id: bytes | None = None
    item: bytes | None = None
    memo: bytes = b""

    def canonical_bytes(self) -> bytes:
        return (enc_i64(self.amount) + enc_opt(self.new_owner)
                + enc_opt(self.new_object_id) + enc_opt(self.item)
                + enc_bytes(self.memo))


@dataclass(frozen=True)
class Transaction:
    inputs: tuple[ObjectKey, ...]
    shared_inputs: tuple[bytes, ...]
    kind: TxKind
    params: TxParams
    gas: ObjectKey
    epoch: int
    evidence: Evidence | None = None

    def signing_bytes(self) -> bytes:
        # evidence is part of the signature layer, never of the identity
        return (enc_seq(k.canonical_bytes() for k in self.inputs)
                + enc_seq(enc_bytes(oid) for oid in self.shared_inputs)
                + enc_str(self.kind.value)
                + self.params.canonical_bytes()
                + self.gas.canonical_bytes()
                + enc_u64(self.epoch))

    @cached_property
    def digest(self) -> bytes:
        return tagged_digest("tx", self.signing_bytes())

    def validate(self) -> None:
        if len({k for k in self.inputs}) != len(self.inputs):
            raise ProtocolError(ErrorCode.BAD_TRANSACTION, "duplicate inputs")
        if len(set(self.shared_inputs)) != len(self.shared_inputs):
            raise ProtocolError(ErrorCode.BAD_TRANSACTION, "duplicate shared inputs")
        if self.gas not in self.inputs:
            raise ProtocolError(ErrorCode.BAD_TRANSACTION, "gas must be an input")

    def with_evidence(self, evidence: Evidence) -> "Transaction":
        return Transaction(self.inputs, self.shared_inputs, self.kind,
                           self.params, self.gas, self.epoch, evidence)


# --- certificates -----------------------------------------------------------------

@dataclass(frozen=True)
class CertSign:
    tx_digest: bytes
    signer: ValidatorId
    signature: bytes

    @staticmethod
    def make(tx: Transaction, signer: ValidatorId, scheme) -> "CertSign":
        sig = scheme.sign(validator_key(signer), b"cert:" + tx.digest)
        return CertSign(tx.digest, signer, sig)

    def verify(self, scheme) -> bool:
        return scheme.verify(validator_key(self.signer),
                             b"cert:" + self.tx_digest, self.signature)


@dataclass(frozen=True)
class Certificate:
    tx: Transaction
    signs: tuple[CertSign, ...]

    @cached_property
    def digest(self) -> bytes:
        body = self.tx.digest + enc_seq(
            enc_u64(s.signer) + enc_bytes(s.signature)
            for s in sorted(self.signs, key=lambda s: s.signer))
        return tagged_digest("cert", body)

    def signers(self) -> set[ValidatorId]:
        return {s.signer for s in self.signs}

    def semantically_same(self, other: "Certificate") -> bool:
        """Same transaction, regardless of which quorum signed."""
        return self.tx.digest == other.tx.digest


def verify_certificate(cert: Certificate, params: CommitteeParams,
                       scheme=crypto.DEFAULT_SCHEME) -> bool:
    """Quorum of distinct committee members, each signature over the tx digest."""
    seen: set[ValidatorId] = set()
    for sign in cert.signs:
        if sign.signer in seen or not 0 <= sign.signer < params.n:
            return False
        if sign.tx_digest != cert.tx.digest or not sign.verify(scheme):
            return False
        seen.add(sign.signer)
    return len(seen) >= quorum(params)


# --- execution effects ---------------------------------------------------------------

@dataclass(frozen=True)
class CounterDelta:
    object_id: bytes
    flavor: str
    delta: int
    item: bytes | None = None

    def canonical_bytes(self) -> bytes:
        return (enc_bytes(self.object_id) + enc_str(self.flavor)
                + enc_i64(self.delta) + enc_opt(self.item))


@dataclass(frozen=True)
class EffectSummary:
    tx_digest: bytes
    consumed: tuple[ObjectKey, ...]
    produced: tuple[Object, ...]
    counter_deltas: tuple[CounterDelta, ...] = ()

    @cached_property
    def digest(self) -> bytes:
        body = (self.tx_digest
                + enc_seq(k.canonical_bytes() for k in self.consumed)
                + enc_seq(o.canonical_bytes() for o in self.produced)
                + enc_seq(d.canonical_bytes() for d in self.counter_deltas))
        return tagged_digest("effects", body)


@dataclass(frozen=True)
class EffectSign:
    effects: EffectSummary
    signer: ValidatorId
    signature: bytes

    @staticmethod
    def make(effects: EffectSummary, signer: ValidatorId, scheme) -> "EffectSign":
        sig = scheme.sign(validator_key(signer), b"effects:" + effects.digest)
        return EffectSign(effects, signer, sig)

    def verify(self, scheme) -> bool:
        return scheme.verify(validator_key(self.signer),
                             b"effects:" + self.effects.digest, self.signature)


@dataclass(frozen=True)
class EffectCert:
    effects: EffectSummary
    signs: tuple[EffectSign, ...]


def verify_effect_cert(cert: EffectCert, params: CommitteeParams,
                       scheme=crypto.DEFAULT_SCHEME) -> bool:
    """Quorum of distinct signers, all over bit-identical effects."""
    seen: set[ValidatorId] = set()
    for sign in cert.signs:
        if sign.signer in seen or not 0 <= sign.signer < params.n:
            return False
        if sign.effects.digest != cert.effects.digest or not sign.verify(scheme):
            return False
        seen.add(sign.signer)
    return len(seen) >= quorum(params)
