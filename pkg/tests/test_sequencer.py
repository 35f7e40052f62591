import pytest

from fastpath.client import UnlockCert, UnlockRqt, UnlockVote
from fastpath.crypto import DEFAULT_SCHEME
from fastpath.sequencer import (
    KIND_CHECKPOINT,
    KIND_END_OF_EPOCH,
    KIND_UNLOCK,
    Sequencer,
)
from fastpath.types import ErrorCode, ProtocolError


def make_ucert(world):
    rqt = UnlockRqt((world.key("coin"),), None, world.key("gas2"), 0,
                    world.account("alice"))
    ev = world.evidence(rqt.signing_digest, ["alice"],
                        sorted({world.key("coin").object_id,
                                world.key("gas2").object_id}))
    rqt = UnlockRqt(rqt.object_keys, None, rqt.gas, 0,
                    world.account("alice"), ev)
    votes = tuple(UnlockVote.make(rqt.digest, (), v, DEFAULT_SCHEME)
                  for v in range(3))
    return UnlockCert(rqt, votes)


def test_duplicate_submission_sequenced_once(world):
    seq = Sequencer(world.params)
    cert = world.cert(world.transfer("coin", "gas", "alice", "bob"))
    first = seq.submit(KIND_CHECKPOINT, cert)
    dup = seq.submit(KIND_CHECKPOINT, cert)
    assert first.seq == 0
    assert dup is None
    assert len(seq.log) == 1


def test_sequence_numbers_are_gapless(world):
    seq = Sequencer(world.params)
    seq.submit(KIND_CHECKPOINT,
               world.cert(world.transfer("coin", "gas", "alice", "bob")))
    seq.submit(KIND_UNLOCK, make_ucert(world))
    seq.submit(KIND_END_OF_EPOCH, (2, 0))
    assert [item.seq for item in seq.log] == [0, 1, 2]


def test_invalid_items_rejected_before_ordering(world):
    seq = Sequencer(world.params)
    weak = world.cert(world.transfer("coin", "gas", "alice", "bob"), [0, 1])
    with pytest.raises(ProtocolError) as err:
        seq.submit(KIND_CHECKPOINT, weak)
    assert err.value.code == ErrorCode.INVALID_ITEM
    with pytest.raises(ProtocolError):
        seq.submit(KIND_END_OF_EPOCH, (99, 0))
    with pytest.raises(ProtocolError):
        seq.submit("mystery", object())
    assert seq.log == []


def test_read_from_returns_suffix(world):
    seq = Sequencer(world.params)
    a = world.cert(world.transfer("coin", "gas", "alice", "bob"))
    b = world.cert(world.transfer("bcoin", "bgas", "bob", "alice"))
    seq.submit(KIND_CHECKPOINT, a)
    seq.submit(KIND_CHECKPOINT, b)
    assert [i.seq for i in seq.read_from(0)] == [0, 1]
    assert [i.seq for i in seq.read_from(1)] == [1]
    assert seq.read_from(2) == []


def test_end_of_epoch_deduplicates_per_validator(world):
    seq = Sequencer(world.params)
    assert seq.submit(KIND_END_OF_EPOCH, (1, 0)) is not None
    assert seq.submit(KIND_END_OF_EPOCH, (1, 0)) is None
    assert seq.submit(KIND_END_OF_EPOCH, (1, 1)) is not None
    assert seq.submit(KIND_END_OF_EPOCH, (2, 0)) is not None
