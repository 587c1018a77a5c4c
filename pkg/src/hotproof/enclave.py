"""Simulated TEE: measurement, quotes, freshness-gated attestations.

There is no hardware here. A *vendor root* key certifies *platform* keys,
platform keys sign quotes, and a ``VendorTrustAnchor`` plays the vendor's
attestation verification service. What matters is that every byte the
auditor later relies on is covered by one of these signatures.
"""

from __future__ import annotations

import enum
import json
import threading
import time
from dataclasses import dataclass, field
from typing import Sequence

from .chain_oracle import BlockTip, OracleClient, OracleStatement, OutpointStatus, verify_statement
from .crypto import (
    KeyPair,
    b64d,
    b64e,
    canonical_json,
    lp,
    pretty_json,
    sha256,
    u64,
    verify_signature,
)
from .errors import (
    BadNonceLength,
    BadOracleSignature,
    HtlcPolicyViolation,
    StaleState,
    ThresholdNotMet,
    UnknownOutpoint,
)
from .ln_core import MSAT_PER_SAT, ChannelState, Phase, aggregate_balance_report

NONCE_LEN = 32
DEFAULT_CODE_IDENTITY = "lnd-enclave-v1.0-audited"


class TcbStatus(enum.Enum):
    UP_TO_DATE = "UpToDate"
    OUT_OF_DATE = "OutOfDate"
    REVOKED = "Revoked"


_TCB_CODES = {TcbStatus.UP_TO_DATE: 0, TcbStatus.OUT_OF_DATE: 1, TcbStatus.REVOKED: 2}


@dataclass(frozen=True)
class EnclavePolicy:
    """Enclave configuration.

    ``max_pending_htlc_fraction`` and ``oracle_pubkey`` are measured into
    MRENCLAVE. ``tcb_status`` describes the platform, not the code, and is
    not measured.
    """

    max_pending_htlc_fraction: float = 1.0
    oracle_pubkey: bytes = b""
    tcb_status: TcbStatus = TcbStatus.UP_TO_DATE

    def measured_bytes(self) -> bytes:
        return canonical_json(
            {
                "max_pending_htlc_fraction": self.max_pending_htlc_fraction,
                "oracle_pubkey": self.oracle_pubkey.hex(),
            }
        )

    @classmethod
    def from_json(cls, obj: dict) -> "EnclavePolicy":
        return cls(
            max_pending_htlc_fraction=float(obj.get("max_pending_htlc_fraction", 1.0)),
            oracle_pubkey=bytes.fromhex(obj.get("oracle_pubkey", "")),
            tcb_status=TcbStatus(obj.get("tcb_status", "UpToDate")),
        )

    def to_json(self) -> dict:
        return {
            "max_pending_htlc_fraction": self.max_pending_htlc_fraction,
            "oracle_pubkey": self.oracle_pubkey.hex(),
            "tcb_status": self.tcb_status.value,
        }


def measure(code_identity: str, policy: EnclavePolicy) -> bytes:
    return sha256(lp(code_identity.encode()), policy.measured_bytes())


# -- vendor / platform ----------------------------------------------------


@dataclass(frozen=True)
class PlatformCert:
    platform_pubkey: bytes
    vendor_signature: bytes

    @property
    def platform_key_id(self) -> str:
        return sha256(self.platform_pubkey).hex()

    def signed_bytes(self) -> bytes:
        return canonical_json({"platform_pubkey": self.platform_pubkey.hex(), "type": "platform-cert"})

    def to_bytes(self) -> bytes:
        return canonical_json(
            {"platform_pubkey": self.platform_pubkey.hex(), "vendor_signature": self.vendor_signature.hex()}
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "PlatformCert":
        obj = json.loads(data)
        return cls(bytes.fromhex(obj["platform_pubkey"]), bytes.fromhex(obj["vendor_signature"]))


class Vendor:
    """The hardware vendor: owns the root key and certifies platforms."""

    def __init__(self, root: KeyPair):
        self.root = root

    def certify(self, platform_pubkey: bytes) -> PlatformCert:
        unsigned = PlatformCert(platform_pubkey, b"")
        return PlatformCert(platform_pubkey, self.root.sign(unsigned.signed_bytes()))

    def anchor(self, revoked: Sequence[str] = ()) -> "VendorTrustAnchor":
        return VendorTrustAnchor(self.root.public, frozenset(revoked))


@dataclass(frozen=True)
class Platform:
    key: KeyPair
    cert: PlatformCert
    tcb_status: TcbStatus = TcbStatus.UP_TO_DATE

    @classmethod
    def provision(cls, vendor: Vendor, key: KeyPair, tcb_status: TcbStatus = TcbStatus.UP_TO_DATE):
        return cls(key, vendor.certify(key.public), tcb_status)


@dataclass(frozen=True)
class VendorTrustAnchor:
    vendor_root_pubkey: bytes
    revoked_platform_key_ids: frozenset = frozenset()

    def to_json(self) -> dict:
        return {
            "vendor_root_pubkey": self.vendor_root_pubkey.hex(),
            "revoked": sorted(self.revoked_platform_key_ids),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "VendorTrustAnchor":
        return cls(bytes.fromhex(obj["vendor_root_pubkey"]), frozenset(obj.get("revoked", ())))


# -- quotes ---------------------------------------------------------------


@dataclass(frozen=True)
class AttestationQuote:
    mrenclave: bytes
    tcb_status: TcbStatus
    report_data: bytes
    platform_signature: bytes
    platform_cert: bytes

    def signed_bytes(self) -> bytes:
        # 32-byte measurement | 1-byte TCB code | 32-byte report data
        return self.mrenclave + bytes([_TCB_CODES[self.tcb_status]]) + self.report_data

    def to_json(self) -> dict:
        return {
            "mrenclave_hex": self.mrenclave.hex(),
            "tcb_status": self.tcb_status.value,
            "report_data_hex": self.report_data.hex(),
            "platform_signature_b64": b64e(self.platform_signature),
            "platform_cert_b64": b64e(self.platform_cert),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AttestationQuote":
        q = cls(
            bytes.fromhex(obj["mrenclave_hex"]),
            TcbStatus(obj["tcb_status"]),
            bytes.fromhex(obj["report_data_hex"]),
            b64d(obj["platform_signature_b64"]),
            b64d(obj["platform_cert_b64"]),
        )
        if len(q.mrenclave) != 32 or len(q.report_data) != 32:
            raise ValueError("mrenclave and report_data must be 32 bytes")
        return q

    def to_wire(self) -> bytes:
        return canonical_json(self.to_json())

    @classmethod
    def from_wire(cls, data: bytes) -> "AttestationQuote":
        return cls.from_json(json.loads(data))


@dataclass(frozen=True)
class QuoteVerdict:
    genuine: bool
    reason: str = ""


def verify_quote(quote: AttestationQuote, anchor: VendorTrustAnchor) -> QuoteVerdict:
    """Vendor-side check: cert chain, revocation, signature, then TCB level."""
    try:
        cert = PlatformCert.from_bytes(quote.platform_cert)
    except (ValueError, KeyError, TypeError):
        return QuoteVerdict(False, "BadCertChain")
    if not verify_signature(anchor.vendor_root_pubkey, cert.vendor_signature, cert.signed_bytes()):
        return QuoteVerdict(False, "BadCertChain")
    if cert.platform_key_id in anchor.revoked_platform_key_ids:
        return QuoteVerdict(False, "PlatformRevoked")
    if not verify_signature(cert.platform_pubkey, quote.platform_signature, quote.signed_bytes()):
        return QuoteVerdict(False, "BadQuoteSignature")
    if quote.tcb_status is TcbStatus.OUT_OF_DATE:
        return QuoteVerdict(False, "TcbOutOfDate")
    if quote.tcb_status is TcbStatus.REVOKED:
        return QuoteVerdict(False, "TcbRevoked")
    return QuoteVerdict(True)


# -- freshness ------------------------------------------------------------


@dataclass(frozen=True)
class FreshnessEvidence:
    tip: BlockTip
    outpoint_statuses: tuple[OutpointStatus, ...]
    tip_statement: OracleStatement
    outspend_statements: tuple[OracleStatement, ...]
    checked_at: int

    def to_json(self) -> dict:
        return {
            "checked_at": self.checked_at,
            "tip_statement": self.tip_statement.to_json(),
            "outspend_statements": [s.to_json() for s in self.outspend_statements],
        }

    def digest(self) -> bytes:
        return freshness_digest(self.to_json())

    @classmethod
    def from_json(cls, obj: dict) -> "FreshnessEvidence":
        """Rebuild from wire form; tip and statuses are read from the statements."""
        tip_stmt = OracleStatement.from_json(obj["tip_statement"])
        outs = tuple(OracleStatement.from_json(s) for s in obj["outspend_statements"])
        tip = tip_stmt.parse()
        statuses = tuple(s.parse() for s in outs)
        if not isinstance(tip, BlockTip) or not all(isinstance(s, OutpointStatus) for s in statuses):
            raise ValueError("statement kinds do not match their slots")
        return cls(tip, statuses, tip_stmt, outs, int(obj["checked_at"]))


def freshness_digest(freshness_obj: dict) -> bytes:
    return sha256(canonical_json(freshness_obj))


def binding_hash(report_bytes: bytes, freshness_obj: dict) -> bytes:
    """report_data for a balance attestation: H(report bytes || H(freshness))."""
    return sha256(report_bytes, freshness_digest(freshness_obj))


def direct_message(report_bytes: bytes, nonce: bytes, timestamp: int) -> bytes:
    """u32-BE length-prefixed report, raw 32-byte nonce, u64-BE seconds."""
    return lp(report_bytes) + nonce + u64(timestamp)


# -- the enclave ----------------------------------------------------------


@dataclass
class EnclaveHandle:
    code_identity: str
    policy: EnclavePolicy
    mrenclave: bytes
    platform: Platform
    report_key: KeyPair
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    _binding_quote: AttestationQuote | None = field(default=None, repr=False)


def load_enclave(
    code_identity: str,
    policy: EnclavePolicy,
    platform: Platform,
    report_key: KeyPair | None = None,
) -> EnclaveHandle:
    """Measure and "load" the enclave on ``platform``.

    The platform's TCB level is overridden by the policy's ``tcb_status`` so
    the verification path can be exercised from configuration.
    """
    platform = Platform(platform.key, platform.cert, policy.tcb_status)
    return EnclaveHandle(
        code_identity=code_identity,
        policy=policy,
        mrenclave=measure(code_identity, policy),
        platform=platform,
        report_key=report_key or KeyPair.generate(),
    )


def generate_quote(handle: EnclaveHandle, report_data: bytes) -> AttestationQuote:
    if len(report_data) != 32:
        raise ValueError("report_data must be 32 bytes")
    unsigned = AttestationQuote(handle.mrenclave, handle.platform.tcb_status, report_data, b"", b"")
    return AttestationQuote(
        handle.mrenclave,
        handle.platform.tcb_status,
        report_data,
        handle.platform.key.sign(unsigned.signed_bytes()),
        handle.platform.cert.to_bytes(),
    )


def check_freshness(
    handle: EnclaveHandle,
    oracle: OracleClient,
    channels: Sequence[ChannelState],
    now: int | None = None,
) -> FreshnessEvidence:
    """Confirm every open channel's funding output is unspent at the oracle tip.

    Also enforces the HTLC sanity rule: offered HTLCs never exceed the local
    balance, and total pending HTLCs stay within the policy fraction of the
    channel capacity.
    """
    pinned = handle.policy.oracle_pubkey
    tip_stmt = oracle.tip()
    if not verify_statement(tip_stmt, pinned):
        raise BadOracleSignature("tip statement")
    tip = tip_stmt.parse()
    if not isinstance(tip, BlockTip):
        raise BadOracleSignature("tip statement has the wrong kind")

    statements, statuses = [], []
    for ch in channels:
        if ch.phase is not Phase.OPEN:
            continue
        _check_htlcs(ch, handle.policy)
        try:
            stmt = oracle.outspend(ch.funding_outpoint)
        except UnknownOutpoint:
            raise StaleState(f"{ch.channel_id}: funding outpoint unknown to oracle", ch.funding_outpoint) from None
        if not verify_statement(stmt, pinned):
            raise BadOracleSignature(f"outspend statement for {ch.channel_id}")
        status = stmt.parse()
        if not isinstance(status, OutpointStatus) or status.outpoint != ch.funding_outpoint:
            raise BadOracleSignature(f"outspend statement for {ch.channel_id} answers a different question")
        if status.spent:
            raise StaleState(f"{ch.channel_id}: funding outpoint spent", ch.funding_outpoint)
        if status.as_of.height < tip.height:
            raise BadOracleSignature("outspend answer predates the tip")
        statements.append(stmt)
        statuses.append(status)
    return FreshnessEvidence(
        tip=tip,
        outpoint_statuses=tuple(statuses),
        tip_statement=tip_stmt,
        outspend_statements=tuple(statements),
        checked_at=int(time.time()) if now is None else now,
    )


def _check_htlcs(ch: ChannelState, policy: EnclavePolicy) -> None:
    if ch.offered_msat() > ch.local_msat:
        raise HtlcPolicyViolation(f"{ch.channel_id}: offered HTLCs exceed local balance")
    limit = policy.max_pending_htlc_fraction * ch.capacity_sat * MSAT_PER_SAT
    if ch.inflight_msat > limit:
        raise HtlcPolicyViolation(f"{ch.channel_id}: pending HTLCs exceed {policy.max_pending_htlc_fraction:g} of capacity")


@dataclass(frozen=True)
class AttestedPayload:
    balance_report: bytes
    freshness: FreshnessEvidence
    quote: AttestationQuote


def attest_balance(
    handle: EnclaveHandle,
    channels: Sequence[ChannelState],
    oracle: OracleClient,
    now: int | None = None,
) -> AttestedPayload:
    """Report, freshness check, quote. Raises instead of quoting stale state."""
    with handle._lock:
        report = aggregate_balance_report(channels).to_bytes()
        freshness = check_freshness(handle, oracle, channels, now)
        quote = generate_quote(handle, binding_hash(report, freshness.to_json()))
        return AttestedPayload(report, freshness, quote)


@dataclass(frozen=True)
class DirectAttestation:
    balance_report: bytes
    nonce: bytes
    timestamp: int
    signature: bytes
    enclave_report_pubkey: bytes
    binding_quote: AttestationQuote

    def to_json(self) -> dict:
        return {
            "balance_report_b64": b64e(self.balance_report),
            "nonce_hex": self.nonce.hex(),
            "timestamp": self.timestamp,
            "signature_b64": b64e(self.signature),
            "enclave_report_pubkey_hex": self.enclave_report_pubkey.hex(),
            "binding_quote": self.binding_quote.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DirectAttestation":
        return cls(
            b64d(obj["balance_report_b64"]),
            bytes.fromhex(obj["nonce_hex"]),
            int(obj["timestamp"]),
            b64d(obj["signature_b64"]),
            bytes.fromhex(obj["enclave_report_pubkey_hex"]),
            AttestationQuote.from_json(obj["binding_quote"]),
        )


def report_key_quote(handle: EnclaveHandle) -> AttestationQuote:
    """Quote binding the enclave's report-signing public key (cached)."""
    if handle._binding_quote is None:
        handle._binding_quote = generate_quote(handle, sha256(handle.report_key.public))
    return handle._binding_quote


def sign_direct(
    handle: EnclaveHandle,
    channels: Sequence[ChannelState],
    nonce: bytes,
    oracle: OracleClient,
    now: int | None = None,
) -> DirectAttestation:
    if len(nonce) != NONCE_LEN:
        raise BadNonceLength(f"nonce must be {NONCE_LEN} bytes, got {len(nonce)}")
    now = int(time.time()) if now is None else now
    with handle._lock:
        report = aggregate_balance_report(channels).to_bytes()
        check_freshness(handle, oracle, channels, now)
        sig = handle.report_key.sign(direct_message(report, nonce, now))
        return DirectAttestation(report, nonce, now, sig, handle.report_key.public, report_key_quote(handle))


def verify_direct_signature(att: DirectAttestation) -> bool:
    return verify_signature(
        att.enclave_report_pubkey, att.signature, direct_message(att.balance_report, att.nonce, att.timestamp)
    )


@dataclass(frozen=True)
class ThresholdAttestation:
    threshold_sat: int
    nonce: bytes
    tip_height: int
    tip_hash: bytes
    quote: AttestationQuote
    satisfied: bool = True

    def statement(self) -> bytes:
        return threshold_statement(self.threshold_sat, self.nonce, self.tip_height, self.tip_hash)

    def to_json(self) -> dict:
        return {
            "threshold_sat": str(self.threshold_sat),
            "satisfied": self.satisfied,
            "nonce_hex": self.nonce.hex(),
            "tip_height": self.tip_height,
            "tip_hash_hex": self.tip_hash.hex(),
            "quote": self.quote.to_json(),
        }

    def to_bytes(self) -> bytes:
        return pretty_json(self.to_json())

    @classmethod
    def from_json(cls, obj: dict) -> "ThresholdAttestation":
        if obj.get("satisfied") is not True:
            raise ValueError("threshold attestations are only ever satisfied")
        return cls(
            int(obj["threshold_sat"]),
            bytes.fromhex(obj["nonce_hex"]),
            int(obj["tip_height"]),
            bytes.fromhex(obj["tip_hash_hex"]),
            AttestationQuote.from_json(obj["quote"]),
        )


def threshold_statement(threshold_sat: int, nonce: bytes, tip_height: int, tip_hash: bytes) -> bytes:
    return canonical_json(
        {
            "claim": "local_balance_sat_gt",
            "threshold_sat": str(threshold_sat),
            "nonce": nonce.hex(),
            "tip_height": tip_height,
            "tip_hash": tip_hash.hex(),
        }
    )


def attest_threshold(
    handle: EnclaveHandle,
    channels: Sequence[ChannelState],
    threshold_sat: int,
    nonce: bytes,
    oracle: OracleClient,
    now: int | None = None,
) -> ThresholdAttestation:
    """Attest ``local balance > threshold_sat`` without disclosing the balance.

    When the claim is false nothing is signed; ThresholdNotMet is raised.
    """
    if len(nonce) != NONCE_LEN:
        raise BadNonceLength(f"nonce must be {NONCE_LEN} bytes, got {len(nonce)}")
    if threshold_sat < 0:
        raise ValueError("threshold must be non-negative")
    with handle._lock:
        report = aggregate_balance_report(channels)
        freshness = check_freshness(handle, oracle, channels, now)
        if not report.sat("local_balance") > threshold_sat:
            raise ThresholdNotMet("threshold not met")
        tip = freshness.tip
        stmt = threshold_statement(threshold_sat, nonce, tip.height, tip.block_hash)
        return ThresholdAttestation(threshold_sat, nonce, tip.height, tip.block_hash, generate_quote(handle, sha256(stmt)))
