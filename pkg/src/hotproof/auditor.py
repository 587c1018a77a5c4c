"""Auditor-side verification of proof bundles and direct attestations.

A hot-proof bundle is checked in four stages, stopping at the first failure:

1. Delivery -- notary and server signatures over the transcript, Merkle
   paths, proof age, and the delivered bytes equal the plaintext package.
2. HardwareQuote -- the quote's platform certificate chains to the vendor
   root, the platform is not revoked, the TCB is up to date.
3. SoftwareBinding -- the measurement is allowlisted and report_data equals
   the hash of the received report and freshness evidence.
4. Freshness -- oracle statements verify under the pinned key, funding
   outputs are unspent, and the attested tip is close to the auditor's own.
"""

from __future__ import annotations

import enum
import json
import secrets
import threading
import time
from dataclasses import dataclass, field

from .chain_oracle import BlockTip, OracleClient, verify_statement
from .crypto import b64d, pretty_json, sha256
from .enclave import (
    AttestationQuote,
    DirectAttestation,
    FreshnessEvidence,
    VendorTrustAnchor,
    binding_hash,
    threshold_statement,
    verify_direct_signature,
    verify_quote,
)
from .errors import HotProofError, InvariantViolation
from .ln_core import BalanceReport
from .prover_api import ATTESTED_PATH, THRESHOLD_PATH, ProofBundle
from .transcript_proof import (
    DEFAULT_MAX_AGE_SECONDS,
    ServerIdentity,
    revealed_response,
    verify_transcript_proof,
)

DEFAULT_DIRECT_WINDOW = 120
DEFAULT_FRESHNESS_BLOCKS = 6


class Stage(enum.Enum):
    DELIVERY = "Delivery"
    HARDWARE_QUOTE = "HardwareQuote"
    SOFTWARE_BINDING = "SoftwareBinding"
    FRESHNESS = "Freshness"
    ACCEPTED = "Accepted"


# process exit status per verdict stage
EXIT_CODES = {
    Stage.ACCEPTED: 0,
    Stage.DELIVERY: 10,
    Stage.HARDWARE_QUOTE: 11,
    Stage.SOFTWARE_BINDING: 12,
    Stage.FRESHNESS: 13,
}


@dataclass(frozen=True)
class AuditPolicy:
    trusted_measurements: frozenset
    vendor_anchor: VendorTrustAnchor
    notary_pubkey: bytes
    expected_server: ServerIdentity
    pinned_oracle_key: bytes
    max_proof_age_seconds: int = DEFAULT_MAX_AGE_SECONDS
    max_freshness_age_blocks: int = DEFAULT_FRESHNESS_BLOCKS
    direct_window_seconds: int = DEFAULT_DIRECT_WINDOW

    def to_json(self) -> dict:
        return {
            "trusted_measurements": sorted(m.hex() for m in self.trusted_measurements),
            "vendor_anchor": self.vendor_anchor.to_json(),
            "notary_pubkey": self.notary_pubkey.hex(),
            "expected_server": self.expected_server.to_json(),
            "pinned_oracle_key": self.pinned_oracle_key.hex(),
            "max_proof_age_seconds": self.max_proof_age_seconds,
            "max_freshness_age_blocks": self.max_freshness_age_blocks,
            "direct_window_seconds": self.direct_window_seconds,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AuditPolicy":
        measurements = frozenset(bytes.fromhex(m) for m in obj["trusted_measurements"])
        if not measurements:
            raise ValueError("trusted_measurements must not be empty")
        return cls(
            trusted_measurements=measurements,
            vendor_anchor=VendorTrustAnchor.from_json(obj["vendor_anchor"]),
            notary_pubkey=bytes.fromhex(obj["notary_pubkey"]),
            expected_server=ServerIdentity.from_json(obj["expected_server"]),
            pinned_oracle_key=bytes.fromhex(obj["pinned_oracle_key"]),
            max_proof_age_seconds=int(obj.get("max_proof_age_seconds", DEFAULT_MAX_AGE_SECONDS)),
            max_freshness_age_blocks=int(obj.get("max_freshness_age_blocks", DEFAULT_FRESHNESS_BLOCKS)),
            direct_window_seconds=int(obj.get("direct_window_seconds", DEFAULT_DIRECT_WINDOW)),
        )


@dataclass(frozen=True)
class AuditVerdict:
    accepted: bool
    stage: Stage
    reason: str = ""
    balance: BalanceReport | None = None
    threshold_sat: int | None = None
    notarized_time: int | None = None
    measurement: bytes | None = None

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.stage]


def _reject(stage: Stage, reason: str, **extra) -> AuditVerdict:
    return AuditVerdict(False, stage, reason, **extra)


def _reference_tip(oracle: OracleClient | None, pinned: bytes) -> BlockTip | None:
    if oracle is None:
        return None
    try:
        stmt = oracle.tip()
    except (HotProofError, OSError):
        return None
    if not verify_statement(stmt, pinned):
        return None
    tip = stmt.parse()
    return tip if isinstance(tip, BlockTip) else None


def _tip_lag_reason(attested_height: int, reference: BlockTip | None, max_blocks: int) -> str:
    if reference is None:
        return "NoReferenceTip"
    if attested_height > reference.height:
        return "TipAhead"
    if reference.height - attested_height > max_blocks:
        return "StaleTip"
    return ""


def verify_hot_proof(
    bundle: ProofBundle | dict,
    policy: AuditPolicy,
    now: int | None = None,
    oracle: OracleClient | None = None,
) -> AuditVerdict:
    """Run the staged verification over a bundle (object or parsed JSON).

    ``oracle`` is the auditor's own chain view; without one the Freshness
    stage fails closed.
    """
    now = int(time.time()) if now is None else now

    # -- Delivery --
    if isinstance(bundle, dict):
        try:
            bundle = ProofBundle.from_json(bundle)
        except (ValueError, KeyError, TypeError) as exc:
            return _reject(Stage.DELIVERY, f"MalformedBundle: {exc}")
    proof = bundle.transcript_proof
    tv = verify_transcript_proof(proof, policy.notary_pubkey, policy.expected_server, policy.max_proof_age_seconds, now)
    if not tv.valid:
        return _reject(Stage.DELIVERY, tv.reason)
    when = tv.notarized_time
    request_path = proof.notary_attestation.request_path
    threshold_mode = request_path.split("?")[0] == THRESHOLD_PATH
    if request_path != ATTESTED_PATH and not threshold_mode:
        return _reject(Stage.DELIVERY, "WrongEndpoint", notarized_time=when)
    delivered = revealed_response(proof)
    if delivered is None:
        return _reject(Stage.DELIVERY, "IncompleteReveal", notarized_time=when)
    if delivered != bundle.package_bytes:
        return _reject(Stage.DELIVERY, "PackageMismatch", notarized_time=when)
    try:
        package = json.loads(delivered)
        payload = package["tee_attestation_payload"]
    except (ValueError, KeyError, TypeError):
        return _reject(Stage.DELIVERY, "MalformedPackage", notarized_time=when)

    # -- HardwareQuote --
    try:
        quote = AttestationQuote.from_wire(b64d(payload["quote"]))
        chain = [b64d(c) for c in payload["cert_chain"]]
    except (ValueError, KeyError, TypeError):
        return _reject(Stage.HARDWARE_QUOTE, "MalformedQuote", notarized_time=when)
    if not chain or chain[0] != quote.platform_cert:
        return _reject(Stage.HARDWARE_QUOTE, "CertChainMismatch", notarized_time=when)
    qv = verify_quote(quote, policy.vendor_anchor)
    if not qv.genuine:
        return _reject(Stage.HARDWARE_QUOTE, qv.reason, notarized_time=when)

    # -- SoftwareBinding --
    extra = {"notarized_time": when, "measurement": quote.mrenclave}
    if quote.mrenclave not in policy.trusted_measurements:
        return _reject(Stage.SOFTWARE_BINDING, "UnknownMeasurement", **extra)
    if threshold_mode:
        return _finish_threshold(package, quote, policy, oracle, extra)
    try:
        report = BalanceReport.from_obj(package["balance_report"])
        freshness_obj = payload["freshness"]
    except (InvariantViolation, KeyError, TypeError):
        return _reject(Stage.SOFTWARE_BINDING, "MalformedReport", **extra)
    if binding_hash(report.to_bytes(), freshness_obj) != quote.report_data:
        return _reject(Stage.SOFTWARE_BINDING, "BindingMismatch", **extra)

    # -- Freshness --
    try:
        evidence = FreshnessEvidence.from_json(freshness_obj)
    except (ValueError, KeyError, TypeError, AttributeError):
        return _reject(Stage.FRESHNESS, "MalformedFreshness", **extra)
    statements = (evidence.tip_statement,) + evidence.outspend_statements
    if not all(verify_statement(s, policy.pinned_oracle_key) for s in statements):
        return _reject(Stage.FRESHNESS, "BadOracleSignature", **extra)
    for status in evidence.outpoint_statuses:
        if status.spent:
            return _reject(Stage.FRESHNESS, "SpentOutpoint", **extra)
        if status.as_of.height < evidence.tip.height:
            return _reject(Stage.FRESHNESS, "InconsistentEvidence", **extra)
    reference = _reference_tip(oracle, policy.pinned_oracle_key)
    lag = _tip_lag_reason(evidence.tip.height, reference, policy.max_freshness_age_blocks)
    if lag:
        return _reject(Stage.FRESHNESS, lag, **extra)
    return AuditVerdict(True, Stage.ACCEPTED, "", balance=report, **extra)


def _finish_threshold(package, quote, policy, oracle, extra) -> AuditVerdict:
    try:
        claim = package["threshold_attestation"]
        if claim.get("satisfied") is not True:
            raise ValueError("unsatisfied claim")
        threshold = int(claim["threshold_sat"])
        nonce = bytes.fromhex(claim["nonce_hex"])
        tip_height = int(claim["tip_height"])
        tip_hash = bytes.fromhex(claim["tip_hash_hex"])
    except (ValueError, KeyError, TypeError, AttributeError):
        return _reject(Stage.SOFTWARE_BINDING, "MalformedClaim", **extra)
    if sha256(threshold_statement(threshold, nonce, tip_height, tip_hash)) != quote.report_data:
        return _reject(Stage.SOFTWARE_BINDING, "BindingMismatch", **extra)
    reference = _reference_tip(oracle, policy.pinned_oracle_key)
    lag = _tip_lag_reason(tip_height, reference, policy.max_freshness_age_blocks)
    if lag:
        return _reject(Stage.FRESHNESS, lag, **extra)
    return AuditVerdict(True, Stage.ACCEPTED, "", threshold_sat=threshold, **extra)


# -- direct variant -------------------------------------------------------


class NonceRegistry:
    """One-time nonces: issued once, consumed at most once."""

    def __init__(self):
        self._live: set[bytes] = set()
        self._lock = threading.Lock()

    def issue(self) -> bytes:
        nonce = secrets.token_bytes(32)
        with self._lock:
            self._live.add(nonce)
        return nonce

    def consume(self, nonce: bytes) -> bool:
        with self._lock:
            if nonce in self._live:
                self._live.remove(nonce)
                return True
            return False


def verify_direct(
    att: DirectAttestation,
    expected_nonce: bytes,
    policy: AuditPolicy,
    now: int | None = None,
    registry: NonceRegistry | None = None,
) -> AuditVerdict:
    """Check a direct (no-notary) attestation against the nonce we issued.

    With a ``registry`` the nonce must be live and is consumed by this call.
    """
    now = int(time.time()) if now is None else now
    if registry is not None and not registry.consume(expected_nonce):
        return _reject(Stage.DELIVERY, "NonceMismatch")
    if not secrets.compare_digest(att.nonce, expected_nonce):
        return _reject(Stage.DELIVERY, "NonceMismatch")
    if abs(now - att.timestamp) > policy.direct_window_seconds:
        return _reject(Stage.DELIVERY, "Expired")
    qv = verify_quote(att.binding_quote, policy.vendor_anchor)
    if not qv.genuine:
        return _reject(Stage.HARDWARE_QUOTE, f"QuoteInvalid: {qv.reason}")
    extra = {"measurement": att.binding_quote.mrenclave}
    if att.binding_quote.mrenclave not in policy.trusted_measurements:
        return _reject(Stage.SOFTWARE_BINDING, "UnknownMeasurement", **extra)
    if att.binding_quote.report_data != sha256(att.enclave_report_pubkey):
        return _reject(Stage.SOFTWARE_BINDING, "QuoteInvalid: report key not bound", **extra)
    if not verify_direct_signature(att):
        return _reject(Stage.SOFTWARE_BINDING, "BadSignature", **extra)
    try:
        report = BalanceReport.from_bytes(att.balance_report)
    except InvariantViolation:
        return _reject(Stage.SOFTWARE_BINDING, "MalformedReport", **extra)
    return AuditVerdict(True, Stage.ACCEPTED, "", balance=report, **extra)


@dataclass
class Auditor:
    """Holds an audit policy, an optional chain view and the nonce registry."""

    policy: AuditPolicy
    oracle: OracleClient | None = None
    nonces: NonceRegistry = field(default_factory=NonceRegistry)

    def issue_nonce(self) -> bytes:
        return self.nonces.issue()

    def verify_direct(self, att: DirectAttestation, expected_nonce: bytes, now: int | None = None) -> AuditVerdict:
        return verify_direct(att, expected_nonce, self.policy, now, self.nonces)

    def verify_hot_proof(self, bundle, now: int | None = None) -> AuditVerdict:
        return verify_hot_proof(bundle, self.policy, now, self.oracle)


def render_audit_record(verdict: AuditVerdict) -> bytes:
    """Deterministic JSON audit record for a verdict."""
    record: dict = {"accepted": verdict.accepted, "stage": verdict.stage.value, "reason": verdict.reason}
    if verdict.balance is not None:
        record["balance"] = verdict.balance.to_obj()
    if verdict.threshold_sat is not None:
        record["threshold_sat"] = str(verdict.threshold_sat)
    if verdict.notarized_time is not None:
        record["notarized_time"] = verdict.notarized_time
    if verdict.measurement is not None:
        record["measurement"] = verdict.measurement.hex()
    return pretty_json(record)

