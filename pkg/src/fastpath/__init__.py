"""Fast-path broadcast ledger with lock recovery.

Protocol library plus a deterministic Byzantine network simulator: owned
and collectively owned objects execute through consistent broadcast in two
round trips, contended object versions recover through a sequenced unlock
protocol, and commutative objects (counters, sets, bounded counters) trade
locking for budgeted concurrency.
"""

from .types import (
    CommitteeParams,
    Certificate,
    EffectCert,
    EffectSign,
    EffectSummary,
    ErrorCode,
    Object,
    ObjectKey,
    ObjectKind,
    ProtocolError,
    Transaction,
    TxKind,
    TxParams,
    quorum,
    validity_threshold,
    verify_certificate,
    verify_effect_cert,
)

__all__ = [
    "CommitteeParams", "Certificate", "EffectCert", "EffectSign",
    "EffectSummary", "ErrorCode", "Object", "ObjectKey", "ObjectKind",
    "ProtocolError", "Transaction", "TxKind", "TxParams",
    "quorum", "validity_threshold", "verify_certificate", "verify_effect_cert",
]
