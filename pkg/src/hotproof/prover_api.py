"""The prover node's HTTP-style service and the proof-bundle client.

Endpoints::

    GET /v1/balance/channels                        LND-style aggregate balance report
    GET /v1/attested/balance                        report + quote + freshness
    GET /v1/attested/threshold?threshold_sat=N&nonce=HEX
    GET /v1/attested/direct?nonce=HEX               direct enclave signature

Every 200 response carries the server's session signature in ``X-Session-*``
headers. That signature is the stand-in for the TLS server certificate.
"""

from __future__ import annotations

import json
import secrets
import threading
import time
from dataclasses import dataclass
from typing import Callable, Sequence
from urllib.parse import parse_qs, urlsplit

from .chain_oracle import OracleClient
from .crypto import KeyPair, b64d, b64e, pretty_json
from .enclave import (
    AttestationQuote,
    EnclaveHandle,
    attest_balance,
    attest_threshold,
    sign_direct,
)
from .errors import (
    BadNonceLength,
    BadOracleSignature,
    HtlcPolicyViolation,
    NotaryUnavailable,
    OracleUnavailable,
    ServiceUnavailable,
    StaleState,
    ThresholdNotMet,
)
from .http import Response, error_response, transport_for
from .ln_core import BalanceReport, ChannelState, aggregate_balance_report
from .transcript_proof import (
    NotaryAttestation,
    ServerIdentity,
    SessionTranscript,
    TranscriptProof,
    commit_transcript,
    record_session,
    reveal,
    split_records,
)

BALANCE_PATH = "/v1/balance/channels"
ATTESTED_PATH = "/v1/attested/balance"
THRESHOLD_PATH = "/v1/attested/threshold"
DIRECT_PATH = "/v1/attested/direct"

# Reasons that surface as 503: the enclave refused to attest.
_UNAVAILABLE = (StaleState, OracleUnavailable, BadOracleSignature, HtlcPolicyViolation)


@dataclass(frozen=True)
class AttestationPackage:
    balance_report: BalanceReport
    quote: AttestationQuote
    cert_chain: tuple[bytes, ...]
    freshness: dict

    def to_obj(self) -> dict:
        return {
            "balance_report": self.balance_report.to_obj(),
            "tee_attestation_payload": {
                "quote": b64e(self.quote.to_wire()),
                "cert_chain": [b64e(c) for c in self.cert_chain],
                "freshness": self.freshness,
            },
        }

    def to_bytes(self) -> bytes:
        return pretty_json(self.to_obj())

    @classmethod
    def from_obj(cls, obj: dict) -> "AttestationPackage":
        payload = obj["tee_attestation_payload"]
        return cls(
            BalanceReport.from_obj(obj["balance_report"]),
            AttestationQuote.from_wire(b64d(payload["quote"])),
            tuple(b64d(c) for c in payload["cert_chain"]),
            payload["freshness"],
        )


class ProverNode:
    """The prover's node: owns the live channel set and the enclave handle."""

    def __init__(
        self,
        channels: Sequence[ChannelState],
        enclave: EnclaveHandle,
        oracle: OracleClient,
        server_key: KeyPair,
        subject: str = "node-p.example",
        clock: Callable[[], int] | None = None,
    ):
        self._channels = tuple(channels)
        self._lock = threading.Lock()
        self.enclave = enclave
        self.oracle = oracle
        self.server_key = server_key
        self.subject = subject
        self.clock = clock or (lambda: int(time.time()))
        self.online = True

    @property
    def identity(self) -> ServerIdentity:
        return ServerIdentity(self.server_key.public, self.subject)

    def snapshot(self) -> tuple[ChannelState, ...]:
        with self._lock:
            return self._channels

    def set_channels(self, channels: Sequence[ChannelState]) -> None:
        for ch in channels:
            ch.check()
        with self._lock:
            self._channels = tuple(channels)

    def update_channel(self, channel_id: str, fn: Callable[[ChannelState], ChannelState]) -> ChannelState:
        """Apply a transition to one channel under the writer lock."""
        with self._lock:
            chans = list(self._channels)
            for i, ch in enumerate(chans):
                if ch.channel_id == channel_id:
                    chans[i] = fn(ch)
                    self._channels = tuple(chans)
                    return chans[i]
        raise KeyError(channel_id)

    # -- endpoint bodies --------------------------------------------------

    def serve_channel_balance(self) -> bytes:
        return aggregate_balance_report(self.snapshot()).to_bytes()

    def serve_attested_balance(self) -> bytes:
        payload = attest_balance(self.enclave, self.snapshot(), self.oracle, self.clock())
        package = AttestationPackage(
            BalanceReport.from_bytes(payload.balance_report),
            payload.quote,
            (payload.quote.platform_cert,),
            payload.freshness.to_json(),
        )
        return package.to_bytes()

    def serve_threshold(self, threshold_sat: int, nonce: bytes) -> bytes:
        att = attest_threshold(self.enclave, self.snapshot(), threshold_sat, nonce, self.oracle, self.clock())
        claim = att.to_json()
        claim.pop("quote")  # carried in tee_attestation_payload instead
        return pretty_json(
            {
                "threshold_attestation": claim,
                "tee_attestation_payload": {
                    "quote": b64e(att.quote.to_wire()),
                    "cert_chain": [b64e(att.quote.platform_cert)],
                },
            }
        )

    def serve_direct(self, nonce: bytes) -> bytes:
        att = sign_direct(self.enclave, self.snapshot(), nonce, self.oracle, self.clock())
        return pretty_json(att.to_json())

    # -- routing ----------------------------------------------------------

    def handle(self, method: str, path: str, body: bytes = b"") -> Response:
        if not self.online:
            return error_response(503, "ServiceUnavailable")
        url = urlsplit(path)
        query = {k: v[-1] for k, v in parse_qs(url.query).items()}
        if method != "GET":
            return error_response(405, "MethodNotAllowed")
        try:
            if url.path == BALANCE_PATH:
                data = self.serve_channel_balance()
            elif url.path == ATTESTED_PATH:
                data = self.serve_attested_balance()
            elif url.path == THRESHOLD_PATH:
                nonce = bytes.fromhex(query["nonce"]) if "nonce" in query else secrets.token_bytes(32)
                data = self.serve_threshold(int(query["threshold_sat"]), nonce)
            elif url.path == DIRECT_PATH:
                data = self.serve_direct(bytes.fromhex(query["nonce"]))
            else:
                return error_response(404, "NotFound")
        except _UNAVAILABLE as exc:
            return error_response(503, exc.reason, str(exc))
        except ThresholdNotMet:
            # same wire form as any other refusal; no upper bound leaks
            return error_response(403, "Refused")
        except (BadNonceLength, KeyError, ValueError) as exc:
            return error_response(400, "BadRequest", str(exc))
        return self._signed(path, data)

    def _signed(self, path: str, data: bytes) -> Response:
        session = record_session(self.server_key, self.subject, path, data, self.clock())
        return Response(
            200,
            data,
            {
                "Content-Type": "application/json",
                "X-Session-Time": str(session.session_time),
                "X-Session-Signature": b64e(session.server_session_sig),
                "X-Server-Subject": self.subject,
                "X-Server-Pubkey": b64e(self.server_key.public),
            },
        )


# -- proof bundles ----------------------------------------------------------


@dataclass(frozen=True)
class ProofBundle:
    transcript_proof: TranscriptProof
    package_bytes: bytes

    def to_json(self) -> dict:
        return {"package": json.loads(self.package_bytes), "transcript_proof": self.transcript_proof.to_json()}

    def to_bytes(self) -> bytes:
        return pretty_json(self.to_json())

    @classmethod
    def from_json(cls, obj: dict) -> "ProofBundle":
        return cls(TranscriptProof.from_json(obj["transcript_proof"]), pretty_json(obj["package"]))


def _header(headers: dict, name: str) -> str:
    for k, v in headers.items():
        if k.lower() == name.lower():
            return v
    raise ServiceUnavailable(502, "MissingSessionHeader", name)


def fetch_session(node, path: str) -> SessionTranscript:
    """GET ``path`` from the node and rebuild the signed session transcript."""
    resp = transport_for(node).request("GET", path)
    server = ServerIdentity(b64d(_header(resp.headers, "X-Server-Pubkey")), _header(resp.headers, "X-Server-Subject"))
    transcript = SessionTranscript(
        server,
        path,
        tuple(split_records(resp.body)),
        int(_header(resp.headers, "X-Session-Time")),
        b64d(_header(resp.headers, "X-Session-Signature")),
    )
    if not transcript.signature_valid():
        raise ServiceUnavailable(502, "BadServerSig")
    return transcript


def build_proof_bundle(node, notary, path: str = ATTESTED_PATH) -> ProofBundle:
    """Fetch a package, get its transcript notarized, reveal every record."""
    transcript = fetch_session(node, path)
    commitment = commit_transcript(transcript)
    request = {
        "merkle_root_hex": commitment.merkle_root.hex(),
        "record_count": commitment.record_count,
        "server_fingerprint_hex": transcript.server.cert_fingerprint.hex(),
        "request_path": path,
    }
    try:
        att = NotaryAttestation.from_json(transport_for(notary).post_json("/notarize", request))
    except (OSError, ServiceUnavailable) as exc:
        raise NotaryUnavailable(str(exc)) from None
    proof = reveal(transcript, att, range(commitment.record_count))
    return ProofBundle(proof, transcript.response)


def threshold_path(threshold_sat: int, nonce: bytes | None = None) -> str:
    nonce = nonce or secrets.token_bytes(32)
    return f"{THRESHOLD_PATH}?threshold_sat={threshold_sat}&nonce={nonce.hex()}"

