"""Client-side protocol drivers and the unlock message triple.

Drivers are event-driven state machines: the surrounding harness feeds
them replies and timer ticks, and they broadcast requests, assemble
quorums, and settle on an outcome. The fast path takes two request/reply
rounds (transaction votes, then certificate effects); the unlock path
takes a vote round followed by sequencer submission and a wait for the
sequenced execution's effect signatures.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

from . import crypto
from .authenticators import Evidence
from .encoding import enc_bytes, enc_opt, enc_seq, enc_str, enc_u64, tagged_digest
from .types import (
    CertSign,
    Certificate,
    CommitteeParams,
    EffectCert,
    EffectSign,
    ErrorCode,
    ObjectKey,
    ProtocolError,
    Transaction,
    quorum,
    validator_key,
    validity_threshold,
    verify_certificate,
)

RETRY_DELAY = 50
MAX_RETRIES = 20


# --- unlock messages ----------------------------------------------------------

@dataclass(frozen=True)
class UnlockRqt:
    """Request to move the listed object versions off the fast path.

    With a replacement transaction this runs the multi-object protocol
    (the replacement executes if no prior certificate surfaces); without
    one, each listed key is released by a version-bumping no-op. A fresh
    gas object pays for the sequenced step. `evidence` may be absent for
    delay-gated unauthenticated requests.
    """

    object_keys: tuple[ObjectKey, ...]
    replacement_tx: Transaction | None
    gas: ObjectKey
    epoch: int
    requester: bytes
    evidence: Evidence | None = None

    def signing_bytes(self) -> bytes:
        return (enc_seq(k.canonical_bytes() for k in self.object_keys)
                + enc_opt(self.replacement_tx.digest if self.replacement_tx else None)
                + self.gas.canonical_bytes()
                + enc_u64(self.epoch)
                + enc_bytes(self.requester))

    @cached_property
    def signing_digest(self) -> bytes:
        return tagged_digest("unlock-rqt-sign", self.signing_bytes())

    @cached_property
    def digest(self) -> bytes:
        extra = self.evidence.canonical_bytes() if self.evidence else b""
        repl = (self.replacement_tx.signing_bytes()
                if self.replacement_tx else b"")
        return tagged_digest("unlock-rqt",
                             self.signing_bytes() + enc_bytes(repl) + extra)

    @property
    def multi(self) -> bool:
        return self.replacement_tx is not None


@dataclass(frozen=True)
class UnlockVote:
    rqt_digest: bytes
    carried: tuple[Certificate, ...]
    signer: int
    signature: bytes

    @staticmethod
    def _message(rqt_digest: bytes, carried) -> bytes:
        return (b"unlock-vote:" + rqt_digest
                + enc_seq(c.tx.digest for c in carried))

    @staticmethod
    def make(rqt_digest: bytes, carried, signer: int, scheme) -> "UnlockVote":
        carried = tuple(sorted(carried, key=lambda c: c.tx.digest))
        sig = scheme.sign(validator_key(signer),
                          UnlockVote._message(rqt_digest, carried))
        return UnlockVote(rqt_digest, carried, signer, sig)

    def verify(self, scheme) -> bool:
        return scheme.verify(validator_key(self.signer),
                             self._message(self.rqt_digest, self.carried),
                             self.signature)


@dataclass(frozen=True)
class UnlockCert:
    rqt: UnlockRqt
    votes: tuple[UnlockVote, ...]

    @cached_property
    def digest(self) -> bytes:
        body = self.rqt.digest + enc_seq(
            enc_u64(v.signer) + enc_bytes(v.signature) for v in self.votes)
        return tagged_digest("unlock-cert", body)

    def carried_union(self) -> tuple[Certificate, ...]:
        by_digest = {}
        for vote in self.votes:
            for cert in vote.carried:
                by_digest.setdefault(cert.tx.digest, cert)
        return tuple(by_digest[d] for d in sorted(by_digest))

    def verify(self, params: CommitteeParams, scheme=crypto.DEFAULT_SCHEME) -> bool:
        seen = set()
        for vote in self.votes:
            if vote.signer in seen or not 0 <= vote.signer < params.n:
                return False
            if vote.rqt_digest != self.rqt.digest or not vote.verify(scheme):
                return False
            seen.add(vote.signer)
        if len(seen) < quorum(params):
            return False
        return all(verify_certificate(c, params, scheme)
                   for c in self.carried_union())


def assemble_unlock_cert(votes, rqt: UnlockRqt, params: CommitteeParams,
                         scheme=crypto.DEFAULT_SCHEME) -> UnlockCert:
    """Combine a quorum of votes over one request; certificate sets union.

    An empty union is the no-commit case: proof that no fast-path
    execution of the listed keys can ever finalize.
    """
    good = {}
    for vote in votes:
        if vote.rqt_digest != rqt.digest:
            raise ProtocolError(ErrorCode.MIXED_REQUESTS,
                                "votes span different unlock requests")
        if vote.verify(scheme) and 0 <= vote.signer < params.n:
            good.setdefault(vote.signer, vote)
    if len(good) < quorum(params):
        raise ProtocolError(ErrorCode.INCOMPLETE,
                            f"{len(good)} votes < quorum {quorum(params)}")
    ordered = tuple(good[s] for s in sorted(good))
    return UnlockCert(rqt, ordered)


def retry_after_unlock(tx: Transaction, unlock_effects: EffectCert) -> Transaction:
    """Rebuild a transaction against the versions the unlock produced.

    Inputs whose object ids appear in the unlock's produced set move to
    the fresh versions; evidence is dropped since the rebuilt transaction
    has a new digest and must be re-signed.
    """
    bumped = {obj.key.object_id: obj.key.version
              for obj in unlock_effects.effects.produced}

    def remap(key: ObjectKey) -> ObjectKey:
        if key.object_id in bumped:
            return ObjectKey(key.object_id, bumped[key.object_id])
        return key

    return Transaction(
        inputs=tuple(remap(k) for k in tx.inputs),
        shared_inputs=tx.shared_inputs,
        kind=tx.kind,
        params=tx.params,
        gas=remap(tx.gas),
        epoch=tx.epoch,
        evidence=None,
    )


# --- wire messages -------------------------------------------------------------

@dataclass(frozen=True)
class SubmitTx:
    tx: Transaction
    reply_to: str

    def material(self) -> bytes:
        return b"submit-tx" + self.tx.digest + enc_str(self.reply_to)


@dataclass(frozen=True)
class TxVoteMsg:
    vote: CertSign

    def material(self) -> bytes:
        return (b"tx-vote" + self.vote.tx_digest + enc_u64(self.vote.signer)
                + self.vote.signature)


@dataclass(frozen=True)
class TxErrorMsg:
    tx_digest: bytes
    code: str
    signer: int

    def material(self) -> bytes:
        return b"tx-err" + self.tx_digest + enc_str(self.code) + enc_u64(self.signer)


@dataclass(frozen=True)
class SubmitCert:
    cert: Certificate
    reply_to: str

    def material(self) -> bytes:
        return b"submit-cert" + self.cert.digest + enc_str(self.reply_to)


@dataclass(frozen=True)
class CertReply:
    tx_digest: bytes
    status: str  # executed | deferred | superseded | error
    signer: int
    sign: EffectSign | None = None
    code: str = ""

    def material(self) -> bytes:
        extra = self.sign.effects.digest if self.sign else b""
        return (b"cert-reply" + self.tx_digest + enc_str(self.status)
                + enc_u64(self.signer) + enc_str(self.code) + extra)


@dataclass(frozen=True)
class SubmitUnlockRqt:
    rqt: UnlockRqt
    reply_to: str

    def material(self) -> bytes:
        return b"submit-unlock" + self.rqt.digest + enc_str(self.reply_to)


@dataclass(frozen=True)
class UnlockVoteMsg:
    vote: UnlockVote

    def material(self) -> bytes:
        return (b"unlock-vote-msg" + self.vote.rqt_digest
                + enc_u64(self.vote.signer) + self.vote.signature)


@dataclass(frozen=True)
class UnlockErrorMsg:
    rqt_digest: bytes
    code: str
    signer: int
    keys: tuple[ObjectKey, ...] = ()

    def material(self) -> bytes:
        body = b"".join(k.canonical_bytes() for k in self.keys)
        return (b"unlock-err" + self.rqt_digest + enc_str(self.code)
                + enc_u64(self.signer) + body)


@dataclass(frozen=True)
class UnlockOutcomeMsg:
    rqt_digest: bytes
    status: str  # executed | ignored
    signer: int
    signs: tuple[EffectSign, ...] = ()
    confirmed: tuple[ObjectKey, ...] = ()

    def material(self) -> bytes:
        body = b"".join(s.effects.digest for s in self.signs)
        body += b"".join(k.canonical_bytes() for k in self.confirmed)
        return (b"unlock-outcome" + self.rqt_digest + enc_str(self.status)
                + enc_u64(self.signer) + body)


# --- drivers ---------------------------------------------------------------------

def _produced_fields(effects) -> list:
    """Trace form of produced objects: id, version, and a state fingerprint
    that final snapshots can be diffed against."""
    return [[o.key.object_id.hex(), o.key.version,
             o.canonical_bytes().hex()[:32]] for o in effects.produced]


@dataclass
class DriverResult:
    status: str
    effect_certs: list[EffectCert] = field(default_factory=list)
    codes: list[str] = field(default_factory=list)
    confirmed_keys: list[ObjectKey] = field(default_factory=list)


class FastPathDriver:
    """Drives one transaction: collect votes, form the certificate,
    collect matching effect signatures."""

    def __init__(self, driver_id: str, tx: Transaction, params: CommitteeParams,
                 scheme=crypto.DEFAULT_SCHEME, on_done=None, first_to=None,
                 cert_to=None):
        self.driver_id = driver_id
        self.tx = tx
        self.params = params
        self.scheme = scheme
        self.on_done = on_done
        self.first_to = first_to  # initial partial broadcast; retries reach everyone
        self.cert_to = cert_to  # submit the certificate here and walk away
        self.phase = "vote"
        self.votes: dict[int, CertSign] = {}
        self.rejections: dict[int, str] = {}
        self.effect_groups: dict[bytes, dict[int, EffectSign]] = {}
        self.superseded: set[int] = set()
        self.cert: Certificate | None = None
        self.result: DriverResult | None = None
        self.round_trips = 0
        self.retries = 0

    def start(self, env) -> None:
        self.round_trips = 1
        if self.first_to is not None:
            for vid in self.first_to:
                env.send_validator(vid, SubmitTx(self.tx, self.driver_id))
        else:
            env.broadcast(SubmitTx(self.tx, self.driver_id))
        env.set_timer(RETRY_DELAY, self.driver_id)

    def _finish(self, env, result: DriverResult) -> None:
        if self.result is None:
            self.result = result
            self.phase = "done"
            env.emit("fast_driver_finished", tx=self.tx.digest.hex(),
                     status=result.status, rounds=self.round_trips,
                     retries=self.retries)
            if self.on_done:
                self.on_done(env, self, result)

    def _impossible(self) -> bool:
        # too many distinct rejectors for any quorum to remain reachable
        return len(self.rejections) > self.params.n - quorum(self.params)

    def on_message(self, env, msg) -> None:
        if self.phase == "done":
            return
        if isinstance(msg, TxVoteMsg) and self.phase == "vote":
            vote = msg.vote
            if vote.tx_digest == self.tx.digest and vote.verify(self.scheme):
                self.votes.setdefault(vote.signer, vote)
            if len(self.votes) >= quorum(self.params) and self.cert is None:
                signs = tuple(self.votes[s] for s in sorted(self.votes))
                self.cert = Certificate(self.tx, signs)
                self.phase = "exec"
                self.round_trips += 1
                env.emit("cert_assembled", tx=self.tx.digest.hex(),
                         signers=sorted(self.votes))
                if self.cert_to is not None:
                    for vid in self.cert_to:
                        env.send_validator(vid, SubmitCert(self.cert,
                                                           self.driver_id))
                    self._finish(env, DriverResult("certified_abandoned"))
                    return
                env.broadcast(SubmitCert(self.cert, self.driver_id))
        elif isinstance(msg, TxErrorMsg) and self.phase == "vote":
            if msg.tx_digest == self.tx.digest:
                self.rejections.setdefault(msg.signer, msg.code)
                if self._impossible():
                    codes = sorted(set(self.rejections.values()))
                    status = ("locked" if ErrorCode.CONFLICTING_LOCK.value in codes
                              else "rejected")
                    env.emit("fast_path_blocked", tx=self.tx.digest.hex(),
                             status=status, codes=codes)
                    self._finish(env, DriverResult(status, codes=codes))
        elif isinstance(msg, CertReply) and self.phase == "exec":
            if msg.tx_digest != self.tx.digest:
                return
            if msg.status == "executed" and msg.sign and msg.sign.verify(self.scheme):
                group = self.effect_groups.setdefault(msg.sign.effects.digest, {})
                group.setdefault(msg.sign.signer, msg.sign)
                if len(group) >= quorum(self.params):
                    cert = EffectCert(msg.sign.effects,
                                      tuple(group[s] for s in sorted(group)))
                    env.emit("effect_cert", tx=self.tx.digest.hex(),
                             effects=msg.sign.effects.digest.hex(),
                             produced=_produced_fields(msg.sign.effects),
                             tx_kind=self.tx.kind.value,
                             amount=self.tx.params.amount,
                             counters=[[d.object_id.hex(), d.delta]
                                       for d in msg.sign.effects.counter_deltas],
                             path="fast")
                    self._finish(env, DriverResult("finalized",
                                                   effect_certs=[cert]))
            elif msg.status == "superseded":
                self.superseded.add(msg.signer)
                if len(self.superseded) >= quorum(self.params):
                    self._finish(env, DriverResult("superseded"))
            # deferred replies just mean: ask again later

    def on_timer(self, env) -> None:
        if self.phase == "done":
            return
        self.retries += 1
        if self.retries > MAX_RETRIES:
            self._finish(env, DriverResult("timeout"))
            return
        if self.phase == "vote":
            # re-poll voters too: their state may have moved to a terminal
            # answer (executed elsewhere, unlocked, confirmed) since
            for vid in range(self.params.n):
                if vid not in self.rejections:
                    env.send_validator(vid, SubmitTx(self.tx, self.driver_id))
        else:
            answered = set().union(*[set(g) for g in self.effect_groups.values()]) \
                if self.effect_groups else set()
            for vid in range(self.params.n):
                if vid not in answered:
                    env.send_validator(vid, SubmitCert(self.cert, self.driver_id))
        env.set_timer(RETRY_DELAY, self.driver_id)


class FastUnlockDriver:
    """Drives an unlock: gather votes, sequence the unlock certificate,
    and collect the sequenced execution's effect signatures."""

    def __init__(self, driver_id: str, rqt: UnlockRqt, params: CommitteeParams,
                 scheme=crypto.DEFAULT_SCHEME, authorized: bool = True,
                 on_done=None, wait_all: bool = False):
        self.driver_id = driver_id
        self.rqt = rqt
        self.params = params
        self.scheme = scheme
        self.authorized = authorized
        self.on_done = on_done
        self.wait_all = wait_all  # gather every validator's vote, not just a quorum
        self.phase = "vote"
        self.votes: dict[int, UnlockVote] = {}
        self.rejections: dict[int, str] = {}
        self.outcome_groups: dict[tuple, dict[int, UnlockOutcomeMsg]] = {}
        self.ignored: set[int] = set()
        self._confirmed_seen: set[ObjectKey] = set()
        self.ucert: UnlockCert | None = None
        self.result: DriverResult | None = None
        self.round_trips = 0
        self.retries = 0

    def start(self, env) -> None:
        self.round_trips = 1
        env.emit("unlock_started", rqt=self.rqt.digest.hex(),
                 authorized=self.authorized,
                 keys=[[k.object_id.hex(), k.version]
                       for k in self.rqt.object_keys])
        env.broadcast(SubmitUnlockRqt(self.rqt, self.driver_id))
        env.set_timer(RETRY_DELAY, self.driver_id)

    def _finish(self, env, result: DriverResult) -> None:
        if self.result is None:
            self.result = result
            self.phase = "done"
            env.emit("unlock_driver_finished", rqt=self.rqt.digest.hex(),
                     status=result.status, rounds=self.round_trips,
                     retries=self.retries)
            if self.on_done:
                self.on_done(env, self, result)

    def on_message(self, env, msg) -> None:
        if self.phase == "done":
            return
        if isinstance(msg, UnlockVoteMsg) and self.phase == "vote":
            vote = msg.vote
            if vote.rqt_digest == self.rqt.digest and vote.verify(self.scheme):
                self.votes.setdefault(vote.signer, vote)
            enough = len(self.votes) >= quorum(self.params)
            if self.wait_all:
                enough = (len(self.votes) >= quorum(self.params)
                          and len(self.votes) + len(self.rejections)
                          >= self.params.n)
            if enough and self.ucert is None:
                self.ucert = assemble_unlock_cert(
                    self.votes.values(), self.rqt, self.params, self.scheme)
                self.phase = "sequenced"
                self.round_trips += 1
                env.emit("ucert_assembled", rqt=self.rqt.digest.hex(),
                         carried=[c.tx.digest.hex()
                                  for c in self.ucert.carried_union()],
                         authorized=self.authorized,
                         keys=[[k.object_id.hex(), k.version]
                               for k in self.rqt.object_keys])
                env.submit_sequencer(self.ucert)
        elif isinstance(msg, UnlockErrorMsg) and self.phase == "vote":
            if msg.rqt_digest == self.rqt.digest:
                self.rejections.setdefault(msg.signer, msg.code)
                if msg.code == "AlreadyConfirmed":
                    self._confirmed_seen.update(msg.keys)
                self._maybe_refuse(env)
        elif isinstance(msg, UnlockOutcomeMsg):
            if msg.rqt_digest != self.rqt.digest:
                return
            if msg.status == "ignored":
                self.ignored.add(msg.signer)
                self._confirmed_seen.update(msg.confirmed)
                if len(self.ignored) >= quorum(self.params):
                    env.emit("unlock_superseded", rqt=self.rqt.digest.hex())
                    self._finish(env, DriverResult(
                        "superseded",
                        confirmed_keys=sorted(self._confirmed_seen,
                                              key=lambda k: (k.object_id,
                                                             k.version))))
                return
            if not all(s.verify(self.scheme) for s in msg.signs):
                return
            shape = tuple(sorted(s.effects.digest for s in msg.signs))
            group = self.outcome_groups.setdefault(shape, {})
            group.setdefault(msg.signer, msg)
            if len(group) >= quorum(self.params):
                certs = self._effect_certs(group)
                for cert in certs:
                    env.emit("effect_cert", tx=cert.effects.tx_digest.hex(),
                             effects=cert.effects.digest.hex(),
                             produced=_produced_fields(cert.effects),
                             tx_kind="unlock", amount=0,
                             counters=[[d.object_id.hex(), d.delta]
                                       for d in cert.effects.counter_deltas],
                             rqt=self.rqt.digest.hex(),
                             path="unlock")
                self._finish(env, DriverResult("unlocked", effect_certs=certs))

    def _maybe_refuse(self, env) -> None:
        """Decide how a rejected unlock ends once enough validators have
        spoken: settled-by-consensus reads as superseded, anything else as
        unauthorized; ambiguous mixes wait for more replies."""
        spare = self.params.n - quorum(self.params)
        if len(self.rejections) <= spare:
            return
        codes = list(self.rejections.values())
        confirmed_says = sum(1 for c in codes if c == "AlreadyConfirmed")
        everyone_answered = len(self.votes) + len(self.rejections) >= self.params.n
        if confirmed_says >= validity_threshold(self.params) or (
                everyone_answered and confirmed_says > 0):
            env.emit("unlock_superseded", rqt=self.rqt.digest.hex())
            self._finish(env, DriverResult(
                "superseded",
                confirmed_keys=sorted(self._confirmed_seen,
                                      key=lambda k: (k.object_id, k.version))))
        elif len(codes) - confirmed_says > spare or (
                everyone_answered and confirmed_says == 0):
            codes = sorted(set(codes))
            env.emit("unlock_refused", rqt=self.rqt.digest.hex(), codes=codes)
            self._finish(env, DriverResult("unauthorized", codes=codes))

    def _effect_certs(self, group: dict[int, UnlockOutcomeMsg]) -> list[EffectCert]:
        certs = []
        sample = group[sorted(group)[0]]
        for i, _ in enumerate(sample.signs):
            signs = tuple(group[vid].signs[i] for vid in sorted(group))
            certs.append(EffectCert(signs[0].effects, signs))
        return certs

    def on_timer(self, env) -> None:
        if self.phase == "done":
            return
        self.retries += 1
        if self.retries > MAX_RETRIES:
            self._finish(env, DriverResult("timeout"))
            return
        if self.phase == "vote":
            # voters may have settled the keys since; poll them again too
            missing = [v for v in range(self.params.n)
                       if v not in self.rejections]
        else:
            heard = set(self.ignored)
            for g in self.outcome_groups.values():
                heard |= set(g)
            missing = [v for v in range(self.params.n) if v not in heard]
        for vid in missing:
            env.send_validator(vid, SubmitUnlockRqt(self.rqt, self.driver_id))
        env.set_timer(RETRY_DELAY, self.driver_id)
