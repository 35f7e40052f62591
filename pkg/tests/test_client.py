import itertools

import pytest

from fastpath.client import (
    UnlockCert,
    UnlockRqt,
    UnlockVote,
    assemble_unlock_cert,
    retry_after_unlock,
)
from fastpath.crypto import DEFAULT_SCHEME
from fastpath.types import (
    EffectCert,
    EffectSign,
    EffectSummary,
    ErrorCode,
    IntValue,
    Object,
    ObjectKey,
    ObjectKind,
    ProtocolError,
    TxKind,
)



def simple_rqt(world, key_names=("coin",), gas="gas2"):
    keys = tuple(world.key(n) for n in key_names)
    rqt = UnlockRqt(keys, None, world.key(gas), 0, world.account("alice"))
    oids = sorted({k.object_id for k in keys} | {rqt.gas.object_id})
    ev = world.evidence(rqt.signing_digest, ["alice"], oids)
    return UnlockRqt(keys, None, rqt.gas, 0, world.account("alice"), ev)


def vote(rqt, signer, carried=()):
    return UnlockVote.make(rqt.digest, carried, signer, DEFAULT_SCHEME)


def test_union_of_empty_votes_is_no_commit(world):
    rqt = simple_rqt(world)
    votes = [vote(rqt, v) for v in range(3)]
    ucert = assemble_unlock_cert(votes, rqt, world.params)
    assert ucert.carried_union() == ()
    assert ucert.verify(world.params)


def test_single_carried_certificate_survives_union(world):
    rqt = simple_rqt(world)
    cert = world.cert(world.transfer("coin", "gas", "alice", "bob"))
    votes = [vote(rqt, 0), vote(rqt, 1, (cert,)), vote(rqt, 2)]
    ucert = assemble_unlock_cert(votes, rqt, world.params)
    assert [c.tx.digest for c in ucert.carried_union()] == [cert.tx.digest]


def test_below_quorum_is_incomplete(world):
    rqt = simple_rqt(world)
    with pytest.raises(ProtocolError) as err:
        assemble_unlock_cert([vote(rqt, 0), vote(rqt, 1)], rqt, world.params)
    assert err.value.code == ErrorCode.INCOMPLETE


def test_votes_over_different_requests_rejected(world):
    rqt = simple_rqt(world)
    other = simple_rqt(world, gas="gas")
    votes = [vote(rqt, 0), vote(rqt, 1), vote(other, 2)]
    with pytest.raises(ProtocolError) as err:
        assemble_unlock_cert(votes, rqt, world.params)
    assert err.value.code == ErrorCode.MIXED_REQUESTS


def test_duplicate_signers_do_not_reach_quorum(world):
    rqt = simple_rqt(world)
    votes = [vote(rqt, 0), vote(rqt, 0), vote(rqt, 1)]
    with pytest.raises(ProtocolError):
        assemble_unlock_cert(votes, rqt, world.params)


def test_assembly_never_fabricates_certificates(world):
    # every carried certificate in the union appeared in some vote
    rqt = simple_rqt(world)
    certs = [world.cert(world.transfer("coin", "gas", "alice", "bob")),
             world.cert(world.transfer("bcoin", "bgas", "bob", "alice"))]
    for carried_sets in itertools.product([(), (certs[0],), (certs[1],),
                                           tuple(certs)], repeat=3):
        votes = [vote(rqt, v, carried) for v, carried in
                 enumerate(carried_sets)]
        ucert = assemble_unlock_cert(votes, rqt, world.params)
        union = {c.tx.digest for c in ucert.carried_union()}
        offered = {c.tx.digest for carried in carried_sets for c in carried}
        assert union == offered


def test_unlock_cert_verify_rejects_bad_vote(world):
    rqt = simple_rqt(world)
    votes = (vote(rqt, 0), vote(rqt, 1),
             UnlockVote(rqt.digest, (), 2, b"\x00" * 32))
    assert not UnlockCert(rqt, votes).verify(world.params)


def test_retry_after_unlock_bumps_versions(world):
    tx = world.transfer("coin", "gas", "alice", "bob")
    produced = tuple(
        Object(ObjectKey(world.key(n).object_id, 1), ObjectKind.OWNED,
               world.objects[n].owner, world.objects[n].contents)
        for n in ("coin", "gas"))
    effects = EffectSummary(b"\x01" * 32, tuple(tx.inputs), produced)
    signs = tuple(EffectSign.make(effects, v, DEFAULT_SCHEME)
                  for v in range(3))
    rebuilt = retry_after_unlock(tx, EffectCert(effects, signs))
    assert all(k.version == 1 for k in rebuilt.inputs)
    assert rebuilt.gas.version == 1
    assert rebuilt.digest != tx.digest
    assert rebuilt.evidence is None


def test_retry_leaves_untouched_inputs_alone(world):
    tx = world.tx(TxKind.SWAP, ["coin", "bcoin"], "gas", ["alice", "bob"])
    coin_new = Object(ObjectKey(world.key("coin").object_id, 1),
                      ObjectKind.OWNED, world.objects["coin"].owner,
                      IntValue(100))
    effects = EffectSummary(b"\x02" * 32, (world.key("coin"),), (coin_new,))
    signs = tuple(EffectSign.make(effects, v, DEFAULT_SCHEME)
                  for v in range(3))
    rebuilt = retry_after_unlock(tx, EffectCert(effects, signs))
    versions = {k.object_id: k.version for k in rebuilt.inputs}
    assert versions[world.key("coin").object_id] == 1
    assert versions[world.key("bcoin").object_id] == 0
