"""Per-validator state machine.

A validator answers three client-facing requests (sign a transaction,
execute a certificate, vote on an unlock) and three sequenced inputs
(unlock certificates, checkpointed certificates, end-of-epoch markers).
State lives in per-key tables: the object store (full version history per
object id), the lock table mapping each object version to the transaction
or certificate holding it, and the unlock table recording whether a
version is reserved for the consensus path ("unlocked") or settled by a
sequenced execution ("confirmed"). Unlock entries only move forward:
none -> unlocked -> confirmed, or none -> confirmed.

Fast-path executions are provisional until sequenced: the pre-image of
each consumed key is retained so that a no-commit unlock can undo exactly
one layer before re-executing on the consensus path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import crypto
from .authenticators import AuthContext, PathError, RevealError, verify_reveal
from .client import UnlockCert, UnlockRqt, UnlockVote
from .counters import (
    FLAVOR_BOUNDED,
    FLAVOR_GROW,
    FLAVOR_PNSET,
    FLAVOR_USET,
    CounterLocal,
    credit_half,
    initial_budget,
)
from .encoding import tagged_digest
from .types import (
    GAS_FEE,
    CertSign,
    Certificate,
    CommitteeParams,
    CounterDelta,
    CounterValue,
    EffectSign,
    EffectSummary,
    ErrorCode,
    IntValue,
    Object,
    ObjectKey,
    ObjectKind,
    ProtocolError,
    Transaction,
    TxKind,
    quorum,
    verify_certificate,
)

UNLOCKED = "unlocked"
CONFIRMED = "confirmed"

FAULT_HONEST = "honest"
FAULT_EQUIVOCATOR = "equivocator"
FAULT_STALE_REPLIER = "stale_replier"
FAULT_INFINITE_BUDGET = "infinite_budget"


def _nothing(kind: str, **fields) -> None:
    return None


@dataclass
class LockEntry:
    holder: bytes  # tx digest, or unlock request digest for unlock gas
    tx: Transaction | None = None
    cert: Certificate | None = None
    unlock_gas: bool = False


@dataclass(frozen=True)
class ExecPlan:
    effects: EffectSummary
    produced: tuple[Object, ...]


@dataclass(frozen=True)
class CertOutcome:
    status: str  # executed | deferred | superseded
    sign: EffectSign | None = None
    forward: Certificate | None = None
    reason: str = ""


@dataclass(frozen=True)
class UnlockProcessed:
    status: str  # executed | ignored
    signs: tuple[EffectSign, ...] = ()
    confirmed: tuple[ObjectKey, ...] = ()  # listed keys already settled


@dataclass(frozen=True)
class CheckpointOutcome:
    status: str  # executed | already | skipped
    sign: EffectSign | None = None
    reason: str = ""


@dataclass
class FastRecord:
    tx_digest: bytes
    consumed: tuple[ObjectKey, ...]
    produced: tuple[ObjectKey, ...]
    deltas: tuple[CounterDelta, ...]


# --- pure execution -------------------------------------------------------------

def execute(tx: Transaction, loaded: dict[ObjectKey, Object],
            shared: tuple[Object, ...] = (), fee: int = GAS_FEE) -> ExecPlan:
    """Deterministic execution of the toy instruction set.

    `loaded` maps every key in tx.inputs to its object; `shared` holds the
    consensus-resolved shared objects, in tx.shared_inputs order. Owned and
    shared inputs are consumed (reappearing at version + 1); commutative
    inputs only contribute deltas; read-only inputs are untouched. The gas
    input always pays the flat fee.
    """
    gas_obj = loaded[tx.gas]
    if gas_obj.kind != ObjectKind.OWNED or not isinstance(gas_obj.contents, IntValue):
        raise ProtocolError(ErrorCode.BAD_TRANSACTION, "gas must be an owned balance")
    if gas_obj.contents.amount < fee:
        raise ProtocolError(ErrorCode.INSUFFICIENT_GAS,
                            f"gas balance {gas_obj.contents.amount} < fee {fee}")

    working = [loaded[k] for k in tx.inputs
               if k != tx.gas and loaded[k].kind == ObjectKind.OWNED]
    commutative = [loaded[k] for k in tx.inputs
                   if loaded[k].kind == ObjectKind.COMMUTATIVE]
    if len(commutative) > 1:
        raise ProtocolError(ErrorCode.BAD_TRANSACTION,
                            "at most one commutative input per transaction")

    produced: list[Object] = []
    deltas: list[CounterDelta] = []
    kind, params = tx.kind, tx.params

    if kind == TxKind.TRANSFER:
        if params.new_owner is None or not working:
            raise ProtocolError(ErrorCode.BAD_TRANSACTION, "transfer needs a recipient")
        for obj in working:
            produced.append(Object(obj.key.bump(), obj.kind, params.new_owner,
                                   obj.contents))
    elif kind == TxKind.SWAP:
        if len(working) != 2:
            raise ProtocolError(ErrorCode.BAD_TRANSACTION, "swap takes two objects")
        a, b = working
        produced.append(Object(a.key.bump(), a.kind, b.owner, a.contents))
        produced.append(Object(b.key.bump(), b.kind, a.owner, b.contents))
    elif kind == TxKind.NOOP:
        for obj in working:
            produced.append(Object(obj.key.bump(), obj.kind, obj.owner, obj.contents))
    elif kind == TxKind.MINT:
        if params.new_object_id is None:
            raise ProtocolError(ErrorCode.BAD_TRANSACTION, "mint needs an object id")
        minted_owner = params.new_owner if params.new_owner else gas_obj.owner
        produced.append(Object(ObjectKey(params.new_object_id, 0), ObjectKind.OWNED,
                               minted_owner, IntValue(params.amount)))
    elif kind in (TxKind.CREDIT, TxKind.DEBIT):
        signed = params.amount if kind == TxKind.CREDIT else -params.amount
        if params.amount < 0:
            raise ProtocolError(ErrorCode.BAD_TRANSACTION, "negative amount")
        if commutative:
            target = commutative[0]
            flavor = target.contents.flavor
            if kind == TxKind.DEBIT and flavor in (FLAVOR_GROW, FLAVOR_USET):
                raise ProtocolError(ErrorCode.BAD_TRANSACTION,
                                    f"{flavor} objects are credit-only")
            if flavor in (FLAVOR_USET, FLAVOR_PNSET) and params.item is None:
                raise ProtocolError(ErrorCode.BAD_TRANSACTION, "set ops need an item")
            deltas.append(CounterDelta(target.key.object_id, flavor, signed,
                                       params.item))
        else:
            if len(working) != 1 or not isinstance(working[0].contents, IntValue):
                raise ProtocolError(ErrorCode.BAD_TRANSACTION,
                                    "credit/debit needs one balance target")
            target = working[0]
            balance = target.contents.amount + signed
            if balance < 0:
                raise ProtocolError(ErrorCode.INSUFFICIENT_BALANCE,
                                    f"{target.contents.amount} - {params.amount} < 0")
            produced.append(Object(target.key.bump(), target.kind, target.owner,
                                   IntValue(balance)))

    for obj in shared:
        produced.append(Object(obj.key.bump(), obj.kind, obj.owner, obj.contents))
    produced.append(Object(gas_obj.key.bump(), gas_obj.kind, gas_obj.owner,
                           IntValue(gas_obj.contents.amount - fee)))

    consumed = tuple(k for k in tx.inputs
                     if loaded[k].kind == ObjectKind.OWNED)
    consumed += tuple(obj.key for obj in shared)
    effects = EffectSummary(tx.digest, consumed, tuple(produced), tuple(deltas))
    return ExecPlan(effects, tuple(produced))


# --- validator state --------------------------------------------------------------

class ValidatorState:
    def __init__(self, vid: int, params: CommitteeParams, *,
                 scheme=crypto.DEFAULT_SCHEME, auto_unlock_delay: int = 100,
                 fault: str = FAULT_HONEST, event_oracle=None, sink=None):
        self.vid = vid
        self.params = params
        self.scheme = scheme
        self.auto_unlock_delay = auto_unlock_delay
        self.fault = fault
        self.event_oracle = event_oracle
        self.sink = sink or _nothing

        self.epoch = 0
        self.clock = 0
        self.objects: dict[bytes, dict[int, Object]] = {}
        self.latest: dict[bytes, int] = {}
        self.lock_db: dict[ObjectKey, LockEntry] = {}
        self.unlock_db: dict[ObjectKey, str] = {}
        self.lock_times: dict[ObjectKey, int] = {}
        self.executed: dict[bytes, EffectSign] = {}
        self.counters: dict[bytes, CounterLocal] = {}
        self.pending_checkpoint: list[Certificate] = []
        self.forwarded: set[bytes] = set()
        self.sequenced_certs: set[bytes] = set()
        self.executed_unsequenced: set[bytes] = set()
        self.fast_records: dict[bytes, FastRecord] = {}
        self.key_fast_tx: dict[ObjectKey, bytes] = {}
        self.unlock_outcomes: dict[bytes, UnlockProcessed] = {}
        self.paused = False
        self.eoe_sent = False
        self.eoe_seen: set[int] = set()

    # -- plumbing --

    def emit(self, kind: str, **fields) -> None:
        self.sink(kind, **fields)

    def seed_object(self, obj: Object) -> None:
        """Install a genesis object (and counter bookkeeping if commutative)."""
        self._put_object(obj)
        if obj.kind == ObjectKind.COMMUTATIVE:
            contents = obj.contents
            budget = (initial_budget(contents.limit, self.params)
                      if contents.flavor == FLAVOR_BOUNDED else 0)
            self.counters[obj.key.object_id] = CounterLocal(
                flavor=contents.flavor, limit=contents.limit, budget=budget,
                version=obj.key.version)

    def _put_object(self, obj: Object) -> None:
        oid = obj.key.object_id
        versions = self.objects.setdefault(oid, {})
        versions[obj.key.version] = obj
        if obj.key.version > self.latest.get(oid, -1):
            self.latest[oid] = obj.key.version

    def latest_key(self, oid: bytes) -> ObjectKey | None:
        if oid not in self.latest:
            return None
        return ObjectKey(oid, self.latest[oid])

    def get_object(self, key: ObjectKey) -> Object | None:
        return self.objects.get(key.object_id, {}).get(key.version)

    def _check_key(self, key: ObjectKey, allow_stale: bool = False) -> Object:
        oid = key.object_id
        if oid not in self.latest or key.version > self.latest[oid]:
            raise ProtocolError(ErrorCode.MISSING_OBJECT, repr(key))
        if key.version < self.latest[oid]:
            obj = self.objects[oid].get(key.version)
            if allow_stale and obj is not None:
                return obj
            raise ProtocolError(ErrorCode.STALE_VERSION,
                                f"{key!r} behind v{self.latest[oid]}")
        return self.objects[oid][key.version]

    def _auth_ctx(self, signers: frozenset[bytes], oids) -> AuthContext:
        oracle = self.event_oracle or (lambda c, e: False)
        return AuthContext(signers=signers, included_oids=frozenset(oids),
                           local_time=self.clock, event_oracle=oracle)

    def _evidence_ok(self, evidence, obj: Object, ctx: AuthContext) -> bool:
        if evidence is None or obj.owner is None:
            return False
        pair = evidence.for_object(obj.key.object_id)
        if pair is None:
            return False
        reveal, path = pair
        try:
            return verify_reveal(obj.owner, reveal, path, ctx)
        except (PathError, RevealError):
            return False

    def _set_unlock(self, key: ObjectKey, state: str) -> None:
        prev = self.unlock_db.get(key)
        if prev == state:
            return
        if prev == CONFIRMED:
            return  # confirmed entries never move backwards
        self.unlock_db[key] = state
        self.emit("unlock_db_set", key=[key.object_id.hex(), key.version],
                  prev=prev or "none", state=state)

    def _confirm(self, key: ObjectKey) -> None:
        self._set_unlock(key, CONFIRMED)
        # a sequenced outcome settled this key: the fast layer is no longer undoable
        tx_digest = self.key_fast_tx.get(key)
        if tx_digest is not None:
            rec = self.fast_records.pop(tx_digest, None)
            if rec:
                for k in rec.consumed:
                    self.key_fast_tx.pop(k, None)

    # -- transaction signing (fast-path step one) --

    def process_tx(self, tx: Transaction) -> CertSign:
        if self.paused:
            raise ProtocolError(ErrorCode.PAUSED, "epoch change in progress")
        if tx.epoch != self.epoch:
            raise ProtocolError(ErrorCode.WRONG_EPOCH,
                                f"tx epoch {tx.epoch} != {self.epoch}")
        tx.validate()
        if tx.digest in self.executed:
            return CertSign.make(tx, self.vid, self.scheme)

        allow_stale = self.fault == FAULT_STALE_REPLIER
        loaded: dict[ObjectKey, Object] = {}
        for key in tx.inputs:
            obj = self._check_key(key, allow_stale=allow_stale)
            if obj.kind == ObjectKind.SHARED:
                raise ProtocolError(ErrorCode.BAD_TRANSACTION,
                                    "shared objects go in shared_inputs")
            loaded[key] = obj
        for oid in tx.shared_inputs:
            if oid not in self.latest:
                raise ProtocolError(ErrorCode.MISSING_OBJECT, oid.hex())

        owned = [k for k in tx.inputs if loaded[k].kind == ObjectKind.OWNED]
        commutative = [k for k in tx.inputs
                       if loaded[k].kind == ObjectKind.COMMUTATIVE]

        evidence = tx.evidence
        signers = (evidence.signer_set(tx.digest, self.scheme)
                   if evidence else frozenset())
        oids = {k.object_id for k in tx.inputs} | set(tx.shared_inputs)
        ctx = self._auth_ctx(signers, oids)
        for key in owned:
            if not self._evidence_ok(evidence, loaded[key], ctx):
                raise ProtocolError(ErrorCode.BAD_EVIDENCE, repr(key))
        if tx.kind == TxKind.DEBIT:
            for key in commutative:
                if not self._evidence_ok(evidence, loaded[key], ctx):
                    raise ProtocolError(ErrorCode.BAD_EVIDENCE, repr(key))

        for key in tx.inputs:
            if self.unlock_db.get(key) == UNLOCKED:
                raise ProtocolError(ErrorCode.OBJECT_UNLOCKED, repr(key))

        if tx.kind == TxKind.MINT and tx.params.new_object_id in self.latest:
            raise ProtocolError(ErrorCode.BAD_TRANSACTION, "minted id exists")
        execute(tx, loaded)  # dry run: reject unexecutable transactions up front

        if self.fault != FAULT_EQUIVOCATOR:
            for key in owned:
                entry = self.lock_db.get(key)
                if entry is not None and entry.holder != tx.digest:
                    raise ProtocolError(ErrorCode.CONFLICTING_LOCK, repr(key))

        if tx.kind == TxKind.DEBIT and commutative:
            local = self.counters[commutative[0].object_id]
            if local.flavor == FLAVOR_BOUNDED and self.fault != FAULT_INFINITE_BUDGET:
                if not local.try_debit(tx.params.amount):
                    self.emit("budget_reject", counter=commutative[0].object_id.hex(),
                              amount=tx.params.amount, budget=local.budget)
                    raise ProtocolError(ErrorCode.BUDGET_EXHAUSTED,
                                        f"budget {local.budget} < {tx.params.amount}")
                self.emit("budget_debit", counter=commutative[0].object_id.hex(),
                          amount=tx.params.amount, budget=local.budget)

        for key in owned:
            if key not in self.lock_db:
                self.lock_db[key] = LockEntry(holder=tx.digest, tx=tx)
                self.lock_times.setdefault(key, self.clock)
                self.emit("lock_set", key=[key.object_id.hex(), key.version],
                          tx=tx.digest.hex())
        self.emit("tx_signed", tx=tx.digest.hex())
        return CertSign.make(tx, self.vid, self.scheme)

    # -- certificate execution (fast-path step two) --

    def process_cert(self, cert: Certificate) -> CertOutcome:
        if cert.tx.epoch != self.epoch or not verify_certificate(
                cert, self.params, self.scheme):
            raise ProtocolError(ErrorCode.INVALID_CERTIFICATE, "bad quorum or epoch")
        tx = cert.tx
        forward = None
        if tx.digest not in self.forwarded:
            self.forwarded.add(tx.digest)
            self.pending_checkpoint.append(cert)
            forward = cert
            self.emit("cert_forwarded", tx=tx.digest.hex())

        if tx.digest in self.executed:
            return CertOutcome("executed", self.executed[tx.digest], forward)

        # make the certificate retrievable by unlock votes
        loaded: dict[ObjectKey, Object] = {}
        for key in tx.inputs:
            obj = self.get_object(key)
            if obj is None:
                if key.object_id not in self.latest:
                    raise ProtocolError(ErrorCode.MISSING_OBJECT, repr(key))
                obj = None
            loaded[key] = obj
        for key in tx.inputs:
            obj = loaded[key]
            if obj is not None and obj.kind == ObjectKind.OWNED:
                entry = self.lock_db.get(key)
                if entry is None or entry.cert is None:
                    self.lock_db[key] = LockEntry(holder=tx.digest, tx=tx, cert=cert)
                    self.lock_times.setdefault(key, self.clock)
            if obj is not None and obj.kind == ObjectKind.COMMUTATIVE:
                local = self.counters[key.object_id]
                if tx.digest not in local.settled:
                    local.seen.setdefault(tx.digest, cert)

        states = [self.unlock_db.get(k) for k in tx.inputs]
        if any(s == CONFIRMED for s in states):
            return CertOutcome("superseded", None, forward, "key settled by consensus")
        if any(s == UNLOCKED for s in states):
            self.emit("cert_deferred", tx=tx.digest.hex(), reason="unlocked")
            return CertOutcome("deferred", None, forward, "unlock in progress")
        if tx.shared_inputs:
            self.emit("cert_deferred", tx=tx.digest.hex(), reason="shared")
            return CertOutcome("deferred", None, forward, "awaiting sequencing")

        strict = {k: self._check_key(k) for k in tx.inputs}
        plan = execute(tx, strict)
        self._apply_fast(cert, plan)
        sign = EffectSign.make(plan.effects, self.vid, self.scheme)
        self.executed[tx.digest] = sign
        if tx.digest not in self.sequenced_certs:
            self.executed_unsequenced.add(tx.digest)
        self.emit("fast_exec", tx=tx.digest.hex(),
                  effects=plan.effects.digest.hex(),
                  consumed=[[k.object_id.hex(), k.version]
                            for k in plan.effects.consumed],
                  produced=[[o.key.object_id.hex(), o.key.version]
                            for o in plan.produced])
        return CertOutcome("executed", sign, forward)

    def _apply_fast(self, cert: Certificate, plan: ExecPlan) -> None:
        for obj in plan.produced:
            self._put_object(obj)
        for delta in plan.effects.counter_deltas:
            self._apply_delta(cert.tx.digest, delta)
        rec = FastRecord(cert.tx.digest, plan.effects.consumed,
                         tuple(o.key for o in plan.produced),
                         plan.effects.counter_deltas)
        self.fast_records[cert.tx.digest] = rec
        for key in plan.effects.consumed:
            self.key_fast_tx[key] = cert.tx.digest

    def _apply_delta(self, tx_digest: bytes, delta: CounterDelta) -> None:
        local = self.counters[delta.object_id]
        if delta.flavor == FLAVOR_GROW:
            local.grow.accept(tx_digest, delta.delta)
        elif delta.flavor in (FLAVOR_USET, FLAVOR_PNSET):
            if delta.delta >= 0:
                local.pnset.add(delta.item)
            else:
                local.pnset.remove(delta.item)
        elif delta.flavor == FLAVOR_BOUNDED and delta.delta > 0:
            local.refund(credit_half(delta.delta))
            self.emit("budget_credit", counter=delta.object_id.hex(),
                      amount=credit_half(delta.delta), budget=local.budget)

    def _unapply_delta(self, tx_digest: bytes, delta: CounterDelta) -> None:
        local = self.counters[delta.object_id]
        if delta.flavor == FLAVOR_GROW:
            local.grow.accepted.pop(tx_digest, None)
        elif delta.flavor in (FLAVOR_USET, FLAVOR_PNSET):
            if delta.delta >= 0:
                local.pnset.additions.items.discard(delta.item)
            else:
                local.pnset.tombstones.items.discard(delta.item)
        elif delta.flavor == FLAVOR_BOUNDED and delta.delta > 0:
            local.budget = max(local.budget - credit_half(delta.delta), 0)

    # -- unlock votes (consensus-path entry) --

    def unlock_authorized(self, rqt: UnlockRqt) -> bool:
        if rqt.evidence is None:
            return False
        signers = rqt.evidence.signer_set(rqt.signing_digest, self.scheme)
        oids = {k.object_id for k in rqt.object_keys} | {rqt.gas.object_id}
        ctx = self._auth_ctx(signers, oids)
        for key in rqt.object_keys:
            obj = self.get_object(key)
            if obj is None or not self._evidence_ok(rqt.evidence, obj, ctx):
                return False
        return True

    def check_auto_unlock(self, rqt: UnlockRqt, now: int, delta: int) -> bool:
        """Unauthenticated requests are honored only after every listed key
        has been locked for at least `delta` ticks; authenticated requests
        pass immediately."""
        if self.unlock_authorized(rqt):
            return True
        for key in rqt.object_keys:
            locked_at = self.lock_times.get(key)
            if locked_at is None or now - locked_at < delta:
                return False
        return True

    def process_unlock_rqt(self, rqt: UnlockRqt) -> UnlockVote:
        if rqt.epoch != self.epoch:
            raise ProtocolError(ErrorCode.WRONG_EPOCH, "unlock epoch mismatch")
        if not rqt.object_keys or len(set(rqt.object_keys)) != len(rqt.object_keys):
            raise ProtocolError(ErrorCode.BAD_TRANSACTION, "bad unlock key list")
        for key in rqt.object_keys:
            oid = key.object_id
            if oid not in self.latest or key.version > self.latest[oid]:
                raise ProtocolError(ErrorCode.MISSING_OBJECT, repr(key))
        settled = tuple(k for k in rqt.object_keys
                        if self.unlock_db.get(k) == CONFIRMED)
        if settled:
            raise ProtocolError(ErrorCode.ALREADY_CONFIRMED,
                                f"{len(settled)} keys settled", keys=settled)

        if not self.check_auto_unlock(rqt, self.clock, self.auto_unlock_delay):
            raise ProtocolError(ErrorCode.BAD_EVIDENCE, "unlock not authorized")
        if rqt.replacement_tx is not None:
            self._check_replacement_evidence(rqt)
        self._lock_unlock_gas(rqt)

        carried: dict[bytes, Certificate] = {}
        if self.fault != FAULT_STALE_REPLIER:
            for key in rqt.object_keys:
                entry = self.lock_db.get(key)
                if entry is not None and entry.cert is not None:
                    carried.setdefault(entry.cert.tx.digest, entry.cert)
                local = self.counters.get(key.object_id)
                if local is not None and local.flavor == FLAVOR_BOUNDED:
                    for d in sorted(local.seen):
                        if d not in local.settled:
                            carried.setdefault(d, local.seen[d])

        # single protocol reserves the keys unconditionally; the multi
        # protocol only when nothing was certified. Bounded counters are
        # always reserved so no further fast-path spend can finalize
        # between this vote and the consolidation.
        reserve_all = (not rqt.multi) or not carried
        for key in rqt.object_keys:
            local = self.counters.get(key.object_id)
            bounded = local is not None and local.flavor == FLAVOR_BOUNDED
            if reserve_all or bounded:
                self._set_unlock(key, UNLOCKED)

        ordered = tuple(carried[d] for d in sorted(carried))
        self.emit("unlock_vote", rqt=rqt.digest.hex(),
                  carried=[c.tx.digest.hex() for c in ordered])
        return UnlockVote.make(rqt.digest, ordered, self.vid, self.scheme)

    def _check_replacement_evidence(self, rqt: UnlockRqt) -> None:
        tx = rqt.replacement_tx
        tx.validate()
        signers = (tx.evidence.signer_set(tx.digest, self.scheme)
                   if tx.evidence else frozenset())
        oids = {k.object_id for k in tx.inputs}
        ctx = self._auth_ctx(signers, oids)
        for key in tx.inputs:
            obj = self.get_object(key) or (
                self.get_object(self.latest_key(key.object_id))
                if key.object_id in self.latest else None)
            if obj is None:
                raise ProtocolError(ErrorCode.MISSING_OBJECT, repr(key))
            if obj.kind == ObjectKind.OWNED and not self._evidence_ok(
                    tx.evidence, obj, ctx):
                raise ProtocolError(ErrorCode.BAD_EVIDENCE,
                                    f"replacement input {key!r}")

    def _lock_unlock_gas(self, rqt: UnlockRqt) -> None:
        key = rqt.gas
        oid = key.object_id
        if (oid not in self.latest or key.version != self.latest[oid]):
            raise ProtocolError(ErrorCode.BAD_GAS, "gas not current")
        obj = self.objects[oid][key.version]
        if obj.kind != ObjectKind.OWNED or not isinstance(obj.contents, IntValue) \
                or obj.contents.amount < GAS_FEE:
            raise ProtocolError(ErrorCode.BAD_GAS, "gas unusable")
        if rqt.evidence is None:
            raise ProtocolError(ErrorCode.BAD_GAS, "gas needs owner evidence")
        signers = rqt.evidence.signer_set(rqt.signing_digest, self.scheme)
        ctx = self._auth_ctx(signers, {oid})
        if not self._evidence_ok(rqt.evidence, obj, ctx):
            raise ProtocolError(ErrorCode.BAD_GAS, "gas evidence invalid")
        entry = self.lock_db.get(key)
        if entry is not None and entry.holder != rqt.digest:
            raise ProtocolError(ErrorCode.BAD_GAS, "gas already locked")
        if entry is None:
            self.lock_db[key] = LockEntry(holder=rqt.digest, unlock_gas=True)
            self.lock_times.setdefault(key, self.clock)

    # -- sequenced unlock certificates --

    def process_unlock_cert(self, ucert: UnlockCert) -> UnlockProcessed:
        rqt = ucert.rqt
        if rqt.digest in self.unlock_outcomes:
            return self.unlock_outcomes[rqt.digest]
        if rqt.epoch != self.epoch or not ucert.verify(self.params, self.scheme):
            raise ProtocolError(ErrorCode.INVALID_UNLOCK_CERT, "bad unlock cert")

        self._consume_unlock_gas(rqt)

        settled = tuple(k for k in rqt.object_keys
                        if self.unlock_db.get(k) == CONFIRMED)
        if settled:
            out = UnlockProcessed("ignored", confirmed=settled)
            self.unlock_outcomes[rqt.digest] = out
            self.emit("unlock_ignored", rqt=rqt.digest.hex())
            return out

        carried = ucert.carried_union()
        signs: list[EffectSign] = []
        if not carried:
            # no-commit case: nothing over these keys can ever finalize on
            # the fast path, so discard the provisional layer and replace it
            for key in rqt.object_keys:
                self._undo_fast(key)
            if rqt.multi:
                sign = self._execute_sequenced(rqt.replacement_tx, via="unlock")
                if sign is not None:
                    signs.append(sign)
                consolidated = self._consolidate_listed(rqt)
                if consolidated is not None:
                    signs.append(consolidated)
            else:
                signs.append(self._execute_noop(rqt))
            for key in rqt.object_keys:
                self._confirm(key)
            branch = "replacement" if rqt.multi else "noop"
        else:
            for cert in carried:
                owned_keys = self._owned_input_keys(cert.tx)
                if any(self.unlock_db.get(k) == CONFIRMED for k in owned_keys):
                    self.emit("unlock_cert_skip", rqt=rqt.digest.hex(),
                              tx=cert.tx.digest.hex())
                    continue
                sign = self._execute_sequenced(cert.tx, via="unlock", cert=cert)
                if sign is not None:
                    signs.append(sign)
                for key in owned_keys:
                    self._confirm(key)
            consolidated = self._consolidate_listed(rqt)
            if consolidated is not None:
                signs.append(consolidated)
            # listed keys the carried executions did not touch stay
            # unlocked: a later no-commit unlock can still release them
            branch = "carried"

        out = UnlockProcessed("executed", tuple(signs))
        self.unlock_outcomes[rqt.digest] = out
        self.emit("unlock_exec", rqt=rqt.digest.hex(), branch=branch,
                  effects=[s.effects.digest.hex() for s in signs],
                  produced=[[o.key.object_id.hex(), o.key.version]
                            for s in signs for o in s.effects.produced])
        return out

    def _owned_input_keys(self, tx: Transaction) -> list[ObjectKey]:
        keys = []
        for key in tx.inputs:
            obj = self.get_object(key)
            if obj is None or obj.kind == ObjectKind.OWNED:
                keys.append(key)
        return keys

    def _consume_unlock_gas(self, rqt: UnlockRqt) -> None:
        key = rqt.gas
        oid = key.object_id
        if self.latest.get(oid) != key.version:
            return  # already paid (or never existed here); versions never rewind
        obj = self.objects[oid][key.version]
        if not isinstance(obj.contents, IntValue) or obj.contents.amount < GAS_FEE:
            return
        self._put_object(Object(key.bump(), obj.kind, obj.owner,
                                IntValue(obj.contents.amount - GAS_FEE)))
        self.emit("gas_consumed", rqt=rqt.digest.hex(),
                  key=[oid.hex(), key.version])

    def _undo_fast(self, key: ObjectKey) -> None:
        tx_digest = self.key_fast_tx.pop(key, None)
        if tx_digest is None:
            return
        rec = self.fast_records.pop(tx_digest, None)
        if rec is None:
            return
        for k in rec.consumed:
            self.key_fast_tx.pop(k, None)
        for k in rec.produced:
            versions = self.objects.get(k.object_id, {})
            versions.pop(k.version, None)
            if versions:
                self.latest[k.object_id] = max(versions)
            else:
                self.objects.pop(k.object_id, None)
                self.latest.pop(k.object_id, None)
        for delta in rec.deltas:
            self._unapply_delta(tx_digest, delta)
        self.executed.pop(tx_digest, None)
        self.executed_unsequenced.discard(tx_digest)
        self.emit("undo", tx=tx_digest.hex(),
                  keys=[[k.object_id.hex(), k.version] for k in rec.consumed])

    def _execute_noop(self, rqt: UnlockRqt) -> EffectSign:
        """Version-bumping no-op over the listed keys; contents untouched."""
        produced = []
        applied = []
        for key in rqt.object_keys:
            obj = self._check_key(key)
            local = self.counters.get(key.object_id)
            if local is not None and local.flavor == FLAVOR_BOUNDED:
                fresh = self._reissue_counter(key, obj)
            else:
                fresh = Object(key.bump(), obj.kind, obj.owner, obj.contents)
            produced.append(fresh)
            applied.append([key.object_id.hex(), key.version,
                            fresh.key.version, fresh.contents == obj.contents])
        for obj in produced:
            self._put_object(obj)
        effects = EffectSummary(tagged_digest("unlock-noop", rqt.digest),
                                tuple(rqt.object_keys), tuple(produced))
        self.emit("noop_applied", rqt=rqt.digest.hex(), keys=applied)
        self._emit_seq_exec(effects, via="noop")
        return EffectSign.make(effects, self.vid, self.scheme)

    def _consolidate_listed(self, rqt: UnlockRqt) -> EffectSign | None:
        """Reissue every listed bounded counter at the next version."""
        consumed = []
        consolidated = []
        for key in rqt.object_keys:
            local = self.counters.get(key.object_id)
            if local is None or local.flavor != FLAVOR_BOUNDED:
                continue
            if self.unlock_db.get(key) == CONFIRMED:
                continue
            obj = self.get_object(key)
            fresh = self._reissue_counter(key, obj)
            self._put_object(fresh)
            consumed.append(key)
            consolidated.append(fresh)
            self._confirm(key)
        if not consolidated:
            return None
        effects = EffectSummary(tagged_digest("consolidate", rqt.digest),
                                tuple(consumed), tuple(consolidated))
        self._emit_seq_exec(effects, via="consolidate")
        return EffectSign.make(effects, self.vid, self.scheme)

    def _reissue_counter(self, key: ObjectKey, obj: Object) -> Object:
        local = self.counters[key.object_id]
        outstanding = local.outstanding()
        fresh = Object(key.bump(), ObjectKind.COMMUTATIVE, obj.owner,
                       CounterValue(FLAVOR_BOUNDED, outstanding))
        self._reset_counter(key.object_id, local)
        return fresh

    def _reset_counter(self, oid: bytes, local: CounterLocal) -> None:
        outstanding = local.outstanding()
        local.limit = outstanding
        local.budget = initial_budget(outstanding, self.params)
        local.version += 1
        local.settled = {}
        local.seen = {}
        self.emit("consolidate", counter=oid.hex(), limit=outstanding,
                  budget=local.budget, version=local.version)

    def _settle_delta(self, tx_digest: bytes, deltas) -> None:
        for delta in deltas:
            local = self.counters.get(delta.object_id)
            if local is None:
                continue
            local.seen.pop(tx_digest, None)
            if delta.flavor in (FLAVOR_BOUNDED, FLAVOR_GROW):
                local.settled.setdefault(tx_digest, delta.delta)

    def _emit_seq_exec(self, effects: EffectSummary, via: str) -> None:
        self.emit("seq_exec", tx=effects.tx_digest.hex(),
                  effects=effects.digest.hex(), via=via,
                  consumed=[[k.object_id.hex(), k.version]
                            for k in effects.consumed],
                  counters=[[d.object_id.hex(), d.delta]
                            for d in effects.counter_deltas])

    def _execute_sequenced(self, tx: Transaction, via: str,
                           cert: Certificate | None = None) -> EffectSign | None:
        """Execute on the consensus path; idempotent over the tx digest."""
        if tx.digest in self.executed:
            sign = self.executed[tx.digest]
            self._settle_delta(tx.digest, sign.effects.counter_deltas)
            self._emit_seq_exec(sign.effects, via=f"{via}_ack")
            return sign
        try:
            loaded = {k: self._check_key(k) for k in tx.inputs}
            shared = tuple(self.objects[oid][self.latest[oid]]
                           for oid in tx.shared_inputs)
            plan = execute(tx, loaded, shared)
        except ProtocolError as err:
            self.emit("sequenced_exec_failed", tx=tx.digest.hex(),
                      via=via, code=err.code.value)
            return None
        for obj in plan.produced:
            self._put_object(obj)
        for delta in plan.effects.counter_deltas:
            self._apply_delta(tx.digest, delta)
        self._settle_delta(tx.digest, plan.effects.counter_deltas)
        sign = EffectSign.make(plan.effects, self.vid, self.scheme)
        self.executed[tx.digest] = sign
        self.sequenced_certs.add(tx.digest)
        self._emit_seq_exec(plan.effects, via=via)
        return sign

    # -- sequenced checkpoint certificates --

    def process_checkpoint_cert(self, cert: Certificate) -> CheckpointOutcome:
        tx = cert.tx
        self.sequenced_certs.add(tx.digest)
        self.executed_unsequenced.discard(tx.digest)
        self.pending_checkpoint = [c for c in self.pending_checkpoint
                                   if c.tx.digest != tx.digest]
        if tx.epoch != self.epoch:
            self.emit("checkpoint_skip", tx=tx.digest.hex(), reason="stale_epoch")
            return CheckpointOutcome("skipped", reason="stale_epoch")

        if tx.digest in self.executed:
            sign = self.executed[tx.digest]
            self._settle_delta(tx.digest, sign.effects.counter_deltas)
            self._emit_seq_exec(sign.effects, via="checkpoint_ack")
            for key in sign.effects.consumed:
                self._confirm(key)
            self.emit("checkpoint_exec", tx=tx.digest.hex(), mode="already",
                      effects=sign.effects.digest.hex())
            return CheckpointOutcome("already", sign)

        owned_keys = self._owned_input_keys(tx)
        if any(self.unlock_db.get(k) == CONFIRMED for k in owned_keys):
            self.emit("checkpoint_skip", tx=tx.digest.hex(), reason="confirmed")
            return CheckpointOutcome("skipped", reason="confirmed")

        sign = self._execute_sequenced(tx, via="checkpoint", cert=cert)
        if sign is None:
            return CheckpointOutcome("skipped", reason="unexecutable")
        for key in sign.effects.consumed:
            self._confirm(key)
        self.emit("checkpoint_exec", tx=tx.digest.hex(), mode="fresh",
                  effects=sign.effects.digest.hex())
        return CheckpointOutcome("executed", sign)

    # -- epoch change --

    def begin_epoch_change(self) -> list[Certificate]:
        """Pause signing and surface every certificate still needing a
        checkpoint slot."""
        self.paused = True
        self.emit("epoch_pause", epoch=self.epoch)
        return list(self.pending_checkpoint)

    def end_of_epoch_ready(self) -> bool:
        return self.paused and not self.executed_unsequenced and not self.eoe_sent

    def make_end_of_epoch(self) -> tuple[int, int]:
        self.eoe_sent = True
        self.emit("end_of_epoch_sent", epoch=self.epoch)
        return (self.vid, self.epoch)

    def note_end_of_epoch(self, sender: int, epoch: int) -> bool:
        """Returns True when this marker completed the epoch change."""
        if epoch != self.epoch:
            return False
        self.eoe_seen.add(sender)
        if self.paused and len(self.eoe_seen) >= quorum(self.params):
            self._advance_epoch()
            return True
        return False

    def _advance_epoch(self) -> None:
        self.epoch += 1
        self.lock_db.clear()
        self.lock_times.clear()
        self.unlock_db = {k: v for k, v in self.unlock_db.items() if v == CONFIRMED}
        self.pending_checkpoint.clear()
        self.executed_unsequenced.clear()
        self.fast_records.clear()
        self.key_fast_tx.clear()
        self.paused = False
        self.eoe_sent = False
        self.eoe_seen = set()
        self.emit("epoch_advanced", epoch=self.epoch)

    # -- snapshots --

    def snapshot(self) -> dict:
        objects = {}
        for oid in sorted(self.objects):
            versions = self.objects[oid]
            objects[oid.hex()] = {
                str(v): versions[v].canonical_bytes().hex()[:32]
                for v in sorted(versions)}
        return {
            "validator": self.vid,
            "epoch": self.epoch,
            "objects": objects,
            "latest": {oid.hex(): v for oid, v in sorted(self.latest.items())},
            "unlock_db": {f"{k.object_id.hex()}:{k.version}": v
                          for k, v in sorted(self.unlock_db.items(),
                                             key=lambda kv: (kv[0].object_id,
                                                             kv[0].version))},
            "locks": {f"{k.object_id.hex()}:{k.version}": e.holder.hex()
                      for k, e in sorted(self.lock_db.items(),
                                         key=lambda kv: (kv[0].object_id,
                                                         kv[0].version))},
            "executed": sorted(d.hex() for d in self.executed),
            "counters": {oid.hex(): self.counters[oid].snapshot()
                         for oid in sorted(self.counters)},
        }
