"""Notarized session transcripts with selective record reveal.

Stand-in for an MPC-TLS notary. The server signs a commitment to the
response it served (the TLS certificate's role), a notary co-signs the same
commitment with a timestamp, and the prover reveals any subset of response
records together with Merkle inclusion paths.

Merkle tree: leaf ``H(0x00 || u64 index || record)``, node
``H(0x01 || left || right)``; an unpaired node is promoted unchanged.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from typing import Iterable, Sequence

from .crypto import KeyPair, b64d, b64e, canonical_json, lp, sha256, u64, verify_signature
from .errors import EmptyResponse, IndexOutOfRange
from .http import error_response, json_response

RECORD_SIZE = 16 * 1024
DEFAULT_MAX_AGE_SECONDS = 300


@dataclass(frozen=True)
class ServerIdentity:
    cert_pubkey: bytes
    subject: str

    @property
    def cert_fingerprint(self) -> bytes:
        return sha256(self.cert_pubkey, self.subject.encode())

    def to_json(self) -> dict:
        return {
            "subject": self.subject,
            "cert_pubkey_b64": b64e(self.cert_pubkey),
            "fingerprint_hex": self.cert_fingerprint.hex(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ServerIdentity":
        ident = cls(b64d(obj["cert_pubkey_b64"]), obj["subject"])
        if "fingerprint_hex" in obj and bytes.fromhex(obj["fingerprint_hex"]) != ident.cert_fingerprint:
            raise ValueError("fingerprint does not match key and subject")
        return ident


# -- Merkle ---------------------------------------------------------------


def leaf_hash(index: int, record: bytes) -> bytes:
    return sha256(b"\x00", u64(index), record)


def node_hash(left: bytes, right: bytes) -> bytes:
    return sha256(b"\x01", left, right)


def _levels(records: Sequence[bytes]) -> list[list[bytes]]:
    level = [leaf_hash(i, r) for i, r in enumerate(records)]
    levels = [level]
    while len(level) > 1:
        nxt = [node_hash(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        levels.append(nxt)
        level = nxt
    return levels


def merkle_root(records: Sequence[bytes]) -> bytes:
    if not records:
        raise EmptyResponse("cannot commit to zero records")
    return _levels(records)[-1][0]


def merkle_path(records: Sequence[bytes], index: int) -> list[bytes]:
    path = []
    for level in _levels(records)[:-1]:
        sibling = index ^ 1
        if sibling < len(level):
            path.append(level[sibling])
        index //= 2
    return path


def verify_merkle_path(root: bytes, count: int, index: int, record: bytes, path: Sequence[bytes]) -> bool:
    if not 0 <= index < count:
        return False
    node, steps, width = leaf_hash(index, record), iter(path), count
    while width > 1:
        if index % 2:
            sib = next(steps, None)
            if sib is None:
                return False
            node = node_hash(sib, node)
        elif index + 1 < width:
            sib = next(steps, None)
            if sib is None:
                return False
            node = node_hash(node, sib)
        index //= 2
        width = (width + 1) // 2
    return next(steps, None) is None and node == root


# -- sessions -------------------------------------------------------------


def split_records(response: bytes, size: int = RECORD_SIZE) -> list[bytes]:
    return [response[i : i + size] for i in range(0, len(response), size)]


def session_message(fingerprint: bytes, request_path: str, root: bytes, session_time: int) -> bytes:
    return fingerprint + lp(request_path.encode()) + root + u64(session_time)


@dataclass(frozen=True)
class SessionTranscript:
    server: ServerIdentity
    request_path: str
    records: tuple[bytes, ...]
    session_time: int
    server_session_sig: bytes

    @property
    def response(self) -> bytes:
        return b"".join(self.records)

    def signature_valid(self) -> bool:
        msg = session_message(self.server.cert_fingerprint, self.request_path, merkle_root(self.records), self.session_time)
        return verify_signature(self.server.cert_pubkey, self.server_session_sig, msg)


def record_session(
    server_key: KeyPair,
    subject: str,
    request_path: str,
    response: bytes,
    session_time: int,
) -> SessionTranscript:
    """Server side: split the response into records and sign the session."""
    if not response:
        raise EmptyResponse("response is empty")
    server = ServerIdentity(server_key.public, subject)
    records = tuple(split_records(response))
    msg = session_message(server.cert_fingerprint, request_path, merkle_root(records), session_time)
    return SessionTranscript(server, request_path, records, session_time, server_key.sign(msg))


@dataclass(frozen=True)
class TranscriptCommitment:
    merkle_root: bytes
    record_count: int


def commit_transcript(transcript: SessionTranscript) -> TranscriptCommitment:
    return TranscriptCommitment(merkle_root(transcript.records), len(transcript.records))


# -- notary ---------------------------------------------------------------


@dataclass(frozen=True)
class NotaryAttestation:
    commitment: TranscriptCommitment
    server_fingerprint: bytes
    request_path: str
    notarized_time: int
    notary_sig: bytes

    def signed_bytes(self) -> bytes:
        return canonical_json(self._fields())

    def _fields(self) -> dict:
        return {
            "merkle_root_hex": self.commitment.merkle_root.hex(),
            "record_count": self.commitment.record_count,
            "server_fingerprint_hex": self.server_fingerprint.hex(),
            "request_path": self.request_path,
            "notarized_time": self.notarized_time,
        }

    def verify(self, notary_pubkey: bytes) -> bool:
        return verify_signature(notary_pubkey, self.notary_sig, self.signed_bytes())

    def to_json(self) -> dict:
        return {**self._fields(), "notary_sig_b64": b64e(self.notary_sig)}

    @classmethod
    def from_json(cls, obj: dict) -> "NotaryAttestation":
        return cls(
            TranscriptCommitment(bytes.fromhex(obj["merkle_root_hex"]), int(obj["record_count"])),
            bytes.fromhex(obj["server_fingerprint_hex"]),
            str(obj["request_path"]),
            int(obj["notarized_time"]),
            b64d(obj["notary_sig_b64"]),
        )


def notarize(
    commitment: TranscriptCommitment,
    server_fingerprint: bytes,
    request_path: str,
    notary_key: KeyPair,
    now: int,
) -> NotaryAttestation:
    unsigned = NotaryAttestation(commitment, server_fingerprint, request_path, now, b"")
    return NotaryAttestation(commitment, server_fingerprint, request_path, now, notary_key.sign(unsigned.signed_bytes()))


class NotaryService:
    """``POST /notarize`` with ``{merkle_root_hex, record_count,
    server_fingerprint_hex, request_path}``; answers a NotaryAttestation."""

    def __init__(self, key: KeyPair, clock=None):
        self.key = key
        self.clock = clock or (lambda: int(time.time()))
        self.online = True
        self._lock = threading.Lock()

    def handle(self, method: str, path: str, body: bytes = b""):
        if not self.online:
            return error_response(503, "NotaryUnavailable")
        if method != "POST" or path.split("?")[0] != "/notarize":
            return error_response(404, "NotFound")
        try:
            req = json.loads(body)
            root = bytes.fromhex(req["merkle_root_hex"])
            fingerprint = bytes.fromhex(req["server_fingerprint_hex"])
            count = int(req.get("record_count", 1))
            request_path = str(req["request_path"])
            if len(root) != 32 or len(fingerprint) != 32 or count < 1:
                raise ValueError("bad field length")
        except (ValueError, KeyError, TypeError) as exc:
            return error_response(400, "BadRequest", str(exc))
        with self._lock:
            att = notarize(TranscriptCommitment(root, count), fingerprint, request_path, self.key, self.clock())
        return json_response(att.to_json())


# -- proofs ---------------------------------------------------------------


@dataclass(frozen=True)
class RevealedRecord:
    index: int
    record: bytes
    path: tuple[bytes, ...]


@dataclass(frozen=True)
class TranscriptProof:
    notary_attestation: NotaryAttestation
    server: ServerIdentity
    session_time: int
    server_session_sig: bytes
    revealed: tuple[RevealedRecord, ...]

    def to_json(self) -> dict:
        return {
            "notary_attestation": self.notary_attestation.to_json(),
            "server": self.server.to_json(),
            "session_time": self.session_time,
            "server_session_sig_b64": b64e(self.server_session_sig),
            "revealed": [
                {"index": r.index, "record_b64": b64e(r.record), "path": [h.hex() for h in r.path]}
                for r in self.revealed
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TranscriptProof":
        return cls(
            NotaryAttestation.from_json(obj["notary_attestation"]),
            ServerIdentity.from_json(obj["server"]),
            int(obj["session_time"]),
            b64d(obj["server_session_sig_b64"]),
            tuple(
                RevealedRecord(int(r["index"]), b64d(r["record_b64"]), tuple(bytes.fromhex(h) for h in r["path"]))
                for r in obj["revealed"]
            ),
        )


def reveal(transcript: SessionTranscript, attestation: NotaryAttestation, indices: Iterable[int]) -> TranscriptProof:
    chosen = sorted(set(indices))
    for i in chosen:
        if not 0 <= i < len(transcript.records):
            raise IndexOutOfRange(f"record {i} of {len(transcript.records)}")
    revealed = tuple(
        RevealedRecord(i, transcript.records[i], tuple(merkle_path(transcript.records, i))) for i in chosen
    )
    return TranscriptProof(attestation, transcript.server, transcript.session_time, transcript.server_session_sig, revealed)


@dataclass(frozen=True)
class TranscriptVerdict:
    valid: bool
    reason: str = ""
    records: tuple[RevealedRecord, ...] = ()
    notarized_time: int | None = None


def verify_transcript_proof(
    proof: TranscriptProof,
    notary_pubkey: bytes,
    expected_server: ServerIdentity,
    max_age_seconds: int = DEFAULT_MAX_AGE_SECONDS,
    now: int | None = None,
) -> TranscriptVerdict:
    """Check notary signature, server identity, server signature, Merkle
    paths and age, in that order; the first failure is reported."""
    now = int(time.time()) if now is None else now
    att = proof.notary_attestation
    if not att.verify(notary_pubkey):
        return TranscriptVerdict(False, "BadNotarySig")
    expected_fp = expected_server.cert_fingerprint
    if att.server_fingerprint != expected_fp or proof.server.cert_fingerprint != expected_fp:
        return TranscriptVerdict(False, "ServerMismatch")
    msg = session_message(expected_fp, att.request_path, att.commitment.merkle_root, proof.session_time)
    if not verify_signature(expected_server.cert_pubkey, proof.server_session_sig, msg):
        return TranscriptVerdict(False, "BadServerSig")
    seen = set()
    for r in proof.revealed:
        if r.index in seen or not verify_merkle_path(
            att.commitment.merkle_root, att.commitment.record_count, r.index, r.record, r.path
        ):
            return TranscriptVerdict(False, "BadMerklePath")
        seen.add(r.index)
    if now - att.notarized_time > max_age_seconds:
        return TranscriptVerdict(False, "Expired")
    return TranscriptVerdict(True, "", proof.revealed, att.notarized_time)


def revealed_response(proof: TranscriptProof) -> bytes | None:
    """The full response if every record is revealed, else None."""
    count = proof.notary_attestation.commitment.record_count
    by_index = {r.index: r.record for r in proof.revealed}
    if sorted(by_index) != list(range(count)):
        return None
    return b"".join(by_index[i] for i in range(count))
