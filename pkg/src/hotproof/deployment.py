"""Seeded key material and one-call wiring of all parties.

Every key derives from one master seed plus a role name, so fixtures and
audit policies are reproducible across processes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

from .auditor import AuditPolicy, Auditor
from .chain_oracle import ChainOracle, OracleClient
from .crypto import KeyPair
from .enclave import (
    DEFAULT_CODE_IDENTITY,
    EnclavePolicy,
    Platform,
    TcbStatus,
    Vendor,
    load_enclave,
    measure,
)
from .ln_core import ChannelState
from .prover_api import ProverNode
from .transcript_proof import NotaryService, ServerIdentity

DEFAULT_SUBJECT = "node-p.example"
DEFAULT_SEED = "hotproof-demo"


@dataclass(frozen=True)
class KeySet:
    vendor_root: KeyPair
    platform: KeyPair
    oracle: KeyPair
    notary: KeyPair
    server: KeyPair
    enclave_report: KeyPair

    @classmethod
    def from_seed(cls, seed: str | bytes = DEFAULT_SEED) -> "KeySet":
        return cls(
            *(
                KeyPair.from_seed(seed, role)
                for role in ("vendor-root", "platform", "oracle", "notary", "server", "enclave-report")
            )
        )

    @property
    def vendor(self) -> Vendor:
        return Vendor(self.vendor_root)


def enclave_policy(keys: KeySet, **overrides) -> EnclavePolicy:
    return EnclavePolicy(oracle_pubkey=keys.oracle.public, **overrides)


def build_node(
    keys: KeySet,
    channels: Sequence[ChannelState],
    oracle: OracleClient,
    policy: EnclavePolicy | None = None,
    code_identity: str = DEFAULT_CODE_IDENTITY,
    subject: str = DEFAULT_SUBJECT,
    clock=None,
) -> ProverNode:
    policy = policy or enclave_policy(keys)
    platform = Platform.provision(keys.vendor, keys.platform)
    handle = load_enclave(code_identity, policy, platform, keys.enclave_report)
    return ProverNode(channels, handle, oracle, keys.server, subject, clock)


def audit_policy(
    keys: KeySet,
    code_identities: Sequence[str] = (DEFAULT_CODE_IDENTITY,),
    subject: str = DEFAULT_SUBJECT,
    revoked: Sequence[str] = (),
    **limits,
) -> AuditPolicy:
    """Policy trusting the given code identities under the default enclave policy."""
    measured = enclave_policy(keys)
    return AuditPolicy(
        trusted_measurements=frozenset(measure(c, measured) for c in code_identities),
        vendor_anchor=keys.vendor.anchor(revoked),
        notary_pubkey=keys.notary.public,
        expected_server=ServerIdentity(keys.server.public, subject),
        pinned_oracle_key=keys.oracle.public,
        **limits,
    )


class ManualClock:
    """Settable integer clock shared by simulated parties."""

    def __init__(self, start: int | None = None):
        self.now = int(time.time()) if start is None else start

    def __call__(self) -> int:
        return self.now

    def advance(self, seconds: int) -> None:
        self.now += seconds


@dataclass
class Deployment:
    """All parties in one process: oracle, notary, prover node, auditor."""

    keys: KeySet
    oracle: ChainOracle
    notary: NotaryService
    node: ProverNode
    policy: AuditPolicy
    clock: ManualClock = field(default_factory=ManualClock)

    @classmethod
    def create(
        cls,
        channels: Sequence[ChannelState],
        seed: str | bytes = DEFAULT_SEED,
        tip_height: int = 800_000,
        code_identity: str = DEFAULT_CODE_IDENTITY,
        tcb_status: TcbStatus = TcbStatus.UP_TO_DATE,
        clock: ManualClock | None = None,
    ) -> "Deployment":
        keys = KeySet.from_seed(seed)
        clock = clock or ManualClock()
        oracle = ChainOracle(keys.oracle, tip_height, [c.funding_outpoint for c in channels])
        notary = NotaryService(keys.notary, clock)
        node = build_node(
            keys,
            channels,
            oracle,
            policy=enclave_policy(keys, tcb_status=tcb_status),
            code_identity=code_identity,
            clock=clock,
        )
        return cls(keys, oracle, notary, node, audit_policy(keys), clock)

    def auditor(self) -> Auditor:
        return Auditor(self.policy, self.oracle)
