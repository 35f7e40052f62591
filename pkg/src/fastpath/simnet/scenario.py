"""Declarative simulation scenarios.

A scenario file (YAML or JSON) describes the committee, the seed, network
behavior, validator faults, the genesis objects, and a script of client
actions with tick triggers. Schema:

    committee: {n: 4, f: 1}
    seed: 42
    ticks: 5000                 # hard tick limit for the run
    delta: 200                  # auto-unlock delay
    epoch_length: 2000          # liveness bound; epoch machinery only
    epoch_change: false         #   runs when this is true
    network: {min_delay: 1, max_delay: 8, drop_budget: 0, drop_rate: 0.2}
    faults: {"1": {kind: equivocator}, "2": {kind: crash, at: 40}}
    clock_skew: {"0": 0, "3": 5}
    events: [[chain, event], ...]          # external-event oracle facts
    accounts: [alice, bob]
    objects:
      - {name: coin, kind: owned, owner: {pk: alice}, contents: 100}
      - {name: vault, kind: owned, owner: {threshold: {need: 2,
           children: [{weight: 1, term: {pk: alice}},
                      {weight: 1, term: {pk: bob}}]}}, hidden: true}
      - {name: pool, kind: commutative, flavor: bounded, limit: 100,
         owner: {pk: alice}}
    script:
      - {at: 5, client: alice, action: transfer, inputs: [coin], gas: g1,
         to: bob, signers: [alice], on_locked: unlock, unlock_gas: g2}

Fault kinds: honest, crash (with `at`), equivocator, vote_withholder,
stale_replier, infinite_budget. At most f validators may be non-honest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import yaml

from ..authenticators import (
    AllOf,
    AnyOf,
    AfterTime,
    AuthTerm,
    BeforeTime,
    EventObserved,
    IncludesObject,
    NonceStream,
    PublicKey,
    Threshold,
    commit,
)
from ..crypto import user_keypair
from ..encoding import digest
from ..types import CommitteeParams, CounterValue, IntValue, Object, ObjectKey, ObjectKind, ProtocolError

FAULT_KINDS = {"honest", "crash", "equivocator", "vote_withholder",
               "stale_replier", "infinite_budget", "lazy_forwarder"}
ACTIONS = {"transfer", "swap", "noop", "mint", "credit", "debit",
           "unlock", "double_send", "spend_loop"}


class ScenarioError(Exception):
    pass


def object_id_for(name: str) -> bytes:
    return digest(b"obj:" + name.encode("utf-8"))


def nonce_seed_for(name: str) -> bytes:
    return digest(b"nonces:" + name.encode("utf-8"))


@dataclass(frozen=True)
class Fault:
    kind: str
    at: int = 0


@dataclass(frozen=True)
class NetworkSpec:
    min_delay: int = 1
    max_delay: int = 8
    drop_budget: int = 0
    drop_rate: float = 0.2


@dataclass
class ObjectSpec:
    name: str
    kind: ObjectKind
    owner_spec: dict | None
    contents: int
    flavor: str | None
    limit: int
    hidden: bool

    def object_id(self) -> bytes:
        return object_id_for(self.name)


@dataclass
class Scenario:
    params: CommitteeParams
    seed: int
    tick_limit: int
    delta: int
    epoch_length: int
    epoch_change: bool
    network: NetworkSpec
    faults: dict[int, Fault]
    clock_skew: dict[int, int]
    events: list[tuple[str, str]]
    accounts: list[str]
    objects: list[ObjectSpec]
    script: list[dict]
    raw: dict = field(default_factory=dict)

    def with_seed(self, seed: int) -> "Scenario":
        data = dict(self.raw)
        data["seed"] = seed
        return Scenario.from_dict(data)

    def byzantine_ids(self) -> list[int]:
        return sorted(v for v, fault in self.faults.items()
                      if fault.kind != "honest")

    @staticmethod
    def from_dict(data: dict) -> "Scenario":
        try:
            committee = data.get("committee", {})
            params = CommitteeParams(int(committee["n"]), int(committee["f"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"bad committee: {exc}") from exc
        except ProtocolError as exc:
            raise ScenarioError(str(exc)) from exc

        faults: dict[int, Fault] = {}
        for key, spec in (data.get("faults") or {}).items():
            vid = int(key)
            if not 0 <= vid < params.n:
                raise ScenarioError(f"fault entry for unknown validator {vid}")
            kind = spec.get("kind", "honest")
            if kind not in FAULT_KINDS:
                raise ScenarioError(f"unknown fault kind {kind!r}")
            faults[vid] = Fault(kind, int(spec.get("at", 0)))
        byzantine = [v for v, fb in faults.items() if fb.kind != "honest"]
        if len(byzantine) > params.f:
            raise ScenarioError(
                f"{len(byzantine)} Byzantine validators exceed f={params.f}")

        net = data.get("network") or {}
        network = NetworkSpec(
            min_delay=int(net.get("min_delay", 1)),
            max_delay=int(net.get("max_delay", 8)),
            drop_budget=int(net.get("drop_budget", 0)),
            drop_rate=float(net.get("drop_rate", 0.2)),
        )
        if network.min_delay < 1 or network.max_delay < network.min_delay:
            raise ScenarioError("network delays must satisfy 1 <= min <= max")
        if network.drop_budget < 0:
            raise ScenarioError("drop budget must be finite and non-negative")

        accounts = list(data.get("accounts") or [])
        if len(set(accounts)) != len(accounts):
            raise ScenarioError("duplicate account names")

        objects = []
        seen_names = set()
        for spec in data.get("objects") or []:
            name = spec["name"]
            if name in seen_names:
                raise ScenarioError(f"duplicate object name {name!r}")
            seen_names.add(name)
            kind = ObjectKind(spec.get("kind", "owned"))
            owner_spec = spec.get("owner")
            if kind in (ObjectKind.OWNED, ObjectKind.COMMUTATIVE):
                if owner_spec is None:
                    raise ScenarioError(f"object {name!r} needs an owner")
            elif owner_spec is not None:
                raise ScenarioError(f"object {name!r} cannot have an owner")
            flavor = spec.get("flavor")
            if kind == ObjectKind.COMMUTATIVE and flavor not in (
                    "grow", "uset", "pnset", "bounded"):
                raise ScenarioError(f"object {name!r} needs a counter flavor")
            objects.append(ObjectSpec(
                name=name, kind=kind, owner_spec=owner_spec,
                contents=int(spec.get("contents", 0)), flavor=flavor,
                limit=int(spec.get("limit", 0)),
                hidden=bool(spec.get("hidden", False))))

        script = []
        for i, action in enumerate(data.get("script") or []):
            name = action.get("action")
            if name not in ACTIONS:
                raise ScenarioError(f"script entry {i}: unknown action {name!r}")
            if action.get("client") not in accounts:
                raise ScenarioError(f"script entry {i}: unknown client")
            script.append(dict(action))

        return Scenario(
            params=params,
            seed=int(data.get("seed", 0)),
            tick_limit=int(data.get("ticks", 20000)),
            delta=int(data.get("delta", 200)),
            epoch_length=int(data.get("epoch_length", 10000)),
            epoch_change=bool(data.get("epoch_change", False)),
            network=network,
            faults=faults,
            clock_skew={int(k): int(v)
                        for k, v in (data.get("clock_skew") or {}).items()},
            events=[(str(c), str(e)) for c, e in (data.get("events") or [])],
            accounts=accounts,
            objects=objects,
            script=script,
            raw=data,
        )

    @staticmethod
    def load(path: str) -> "Scenario":
        with open(path) as fh:
            text = fh.read()
        try:
            if path.endswith(".json"):
                data = json.loads(text)
            else:
                data = yaml.safe_load(text)
        except (yaml.YAMLError, json.JSONDecodeError) as exc:
            raise ScenarioError(f"cannot parse scenario file: {exc}") from exc
        if not isinstance(data, dict):
            raise ScenarioError("scenario file must hold a mapping")
        return Scenario.from_dict(data)


def term_from_spec(spec: dict, account_keys: dict[str, bytes]) -> AuthTerm:
    """Build a policy term from its scenario description."""
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ScenarioError(f"bad owner term {spec!r}")
    (tag, body), = spec.items()
    if tag == "pk":
        if body not in account_keys:
            raise ScenarioError(f"unknown account {body!r} in owner term")
        return PublicKey(account_keys[body])
    if tag == "oid":
        return IncludesObject(object_id_for(body))
    if tag == "before":
        return BeforeTime(int(body))
    if tag == "after":
        return AfterTime(int(body))
    if tag == "event":
        chain, event = body
        return EventObserved(str(chain), str(event))
    if tag == "threshold":
        branches = [(int(child["weight"]),
                     term_from_spec(child["term"], account_keys))
                    for child in body["children"]]
        return Threshold.of(int(body["need"]), *branches)
    if tag == "all":
        return AllOf(tuple(term_from_spec(s, account_keys) for s in body))
    if tag == "any":
        return AnyOf(tuple(term_from_spec(s, account_keys) for s in body))
    raise ScenarioError(f"unknown owner term tag {tag!r}")


@dataclass
class GenesisObject:
    spec: ObjectSpec
    obj: Object
    term: AuthTerm | None
    nonce_seed: bytes | None


def materialize_genesis(scenario: Scenario) -> tuple[dict[str, bytes],
                                                     list[GenesisObject]]:
    """Resolve account keys and build every genesis object."""
    account_keys = {name: user_keypair(name)[1] for name in scenario.accounts}
    out = []
    for spec in scenario.objects:
        term = None
        nonce_seed = None
        owner = None
        if spec.owner_spec is not None:
            term = term_from_spec(spec.owner_spec, account_keys)
            nonce_seed = nonce_seed_for(spec.name) if spec.hidden else None
            stream = NonceStream(nonce_seed) if nonce_seed else None
            owner = commit(term, stream)
        if spec.kind == ObjectKind.COMMUTATIVE:
            contents = CounterValue(spec.flavor, spec.limit)
        else:
            contents = IntValue(spec.contents)
        obj = Object(ObjectKey(spec.object_id(), 0), spec.kind, owner, contents)
        out.append(GenesisObject(spec, obj, term, nonce_seed))
    return account_keys, out
