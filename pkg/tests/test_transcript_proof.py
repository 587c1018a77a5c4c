import hashlib
import json
import os
import random
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hotproof.crypto import KeyPair, b64e, verify_signature
from hotproof.errors import EmptyResponse, IndexOutOfRange
from hotproof.http import LocalTransport
from hotproof.transcript_proof import (
    RECORD_SIZE,
    NotaryAttestation,
    NotaryService,
    RevealedRecord,
    ServerIdentity,
    TranscriptProof,
    commit_transcript,
    merkle_path,
    merkle_root,
    notarize,
    record_session,
    reveal,
    revealed_response,
    split_records,
    verify_merkle_path,
    verify_transcript_proof,
)

SERVER = KeyPair.from_seed("transcript-tests", "server")
NOTARY = KeyPair.from_seed("transcript-tests", "notary")
IDENT = ServerIdentity(SERVER.public, "node.test")
T = 1_800_000_000


def _h(*parts):
    return hashlib.sha256(b"".join(parts)).digest()


def _oracle_root(records, offset=0):
    """Left-balanced recursive tree: split at the largest power of two below n."""
    n = len(records)
    if n == 1:
        return _h(b"\x00", struct.pack(">Q", offset), records[0])
    k = 1
    while k * 2 < n:
        k *= 2
    return _h(b"\x01", _oracle_root(records[:k], offset), _oracle_root(records[k:], offset + k))


def _session(response, path="/v1/balance/channels", t=T):
    return record_session(SERVER, IDENT.subject, path, response, t)


def _proof(transcript, indices, t=T):
    att = notarize(commit_transcript(transcript), IDENT.cert_fingerprint, transcript.request_path, NOTARY, t)
    return reveal(transcript, att, indices)


def _entropy_response(n_records, seed=0):
    rng = random.Random(seed)
    return rng.randbytes(RECORD_SIZE * (n_records - 1) + 1000)


# -- records and Merkle -----------------------------------------------------


def test_split_one_byte():
    assert split_records(b"x") == [b"x"]


def test_split_boundary():
    recs = split_records(b"a" * 16_385)
    assert [len(r) for r in recs] == [16_384, 1]


def test_empty_response():
    with pytest.raises(EmptyResponse):
        _session(b"")


def test_single_leaf_root():
    assert merkle_root([b"r"]) == _h(b"\x00", b"\x00" * 8, b"r")


def test_two_leaf_root():
    a, b = b"first", b"second"
    expected = _h(b"\x01", _h(b"\x00", struct.pack(">Q", 0), a), _h(b"\x00", struct.pack(">Q", 1), b))
    assert merkle_root([a, b]) == expected


def test_permutation_changes_root():
    assert merkle_root([b"a", b"b"]) != merkle_root([b"b", b"a"])
    # identical records at different positions still hash differently
    assert merkle_root([b"a", b"a"]) != merkle_root([b"a"])


@pytest.mark.parametrize("n", list(range(1, 34)))
def test_root_matches_recursive_oracle(n):
    records = [bytes([i]) * (i + 1) for i in range(n)]
    assert merkle_root(records) == _oracle_root(records)
    for i in range(n):
        path = merkle_path(records, i)
        assert verify_merkle_path(merkle_root(records), n, i, records[i], path)
        assert not verify_merkle_path(merkle_root(records), n, i, records[i] + b"!", path)
        if n > 1:
            assert not verify_merkle_path(merkle_root(records), n, (i + 1) % n, records[i], path)


def test_path_length_checks():
    records = [b"a", b"b", b"c"]
    root = merkle_root(records)
    path = merkle_path(records, 0)
    assert not verify_merkle_path(root, 3, 0, b"a", path[:-1])
    assert not verify_merkle_path(root, 3, 0, b"a", path + [b"\x00" * 32])
    assert not verify_merkle_path(root, 3, 3, b"a", path)
    assert not verify_merkle_path(root, 3, -1, b"a", path)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.binary(min_size=0, max_size=20), min_size=1, max_size=20), st.data())
def test_commit_is_pure_and_paths_sound(records, data):
    assert merkle_root(records) == merkle_root(list(records)) == _oracle_root(records)
    i = data.draw(st.integers(0, len(records) - 1))
    root = merkle_root(records)
    path = merkle_path(records, i)
    assert verify_merkle_path(root, len(records), i, records[i], path)
    if path:
        j = data.draw(st.integers(0, len(path) - 1))
        bad = list(path)
        bad[j] = bytes(b ^ 0xFF for b in bad[j])
        assert not verify_merkle_path(root, len(records), i, records[i], bad)


# -- sessions and notary ----------------------------------------------------


def test_session_signature():
    tr = _session(b"hello")
    assert tr.signature_valid()
    forged = type(tr)(tr.server, tr.request_path, tr.records, tr.session_time, bytes(64))
    assert not forged.signature_valid()


def test_notary_round_trip():
    tr = _session(b"hello")
    att = notarize(commit_transcript(tr), IDENT.cert_fingerprint, tr.request_path, NOTARY, T)
    assert att.verify(NOTARY.public)
    assert not att.verify(SERVER.public)
    assert NotaryAttestation.from_json(att.to_json()) == att


def test_notary_signed_tuple_sweep():
    tr = _session(b"hello")
    att = notarize(commit_transcript(tr), IDENT.cert_fingerprint, tr.request_path, NOTARY, T)
    assert not NotaryAttestation(att.commitment, att.server_fingerprint, att.request_path, T + 1, att.notary_sig).verify(
        NOTARY.public
    )
    signed = att.signed_bytes()
    for i in range(len(signed)):
        mutated = bytearray(signed)
        mutated[i] ^= 0x01
        assert not verify_signature(NOTARY.public, att.notary_sig, bytes(mutated))


def test_notary_service():
    svc = NotaryService(NOTARY, clock=lambda: T)
    t = LocalTransport(svc)
    tr = _session(b"hello")
    c = commit_transcript(tr)
    body = {
        "merkle_root_hex": c.merkle_root.hex(),
        "record_count": c.record_count,
        "server_fingerprint_hex": IDENT.cert_fingerprint.hex(),
        "request_path": tr.request_path,
    }
    att = NotaryAttestation.from_json(t.post_json("/notarize", body))
    assert att.notarized_time == T and att.verify(NOTARY.public)
    assert svc.handle("POST", "/notarize", b"{}").status == 400
    assert svc.handle("GET", "/notarize").status == 404
    svc.online = False
    assert svc.handle("POST", "/notarize", json.dumps(body).encode()).status == 503


# -- proofs -----------------------------------------------------------------


def test_honest_proof_valid():
    tr = _session(_entropy_response(3))
    proof = _proof(tr, [0, 1, 2])
    v = verify_transcript_proof(proof, NOTARY.public, IDENT, 300, T + 10)
    assert v.valid and v.notarized_time == T
    assert revealed_response(proof) == tr.response


def test_json_round_trip():
    proof = _proof(_session(_entropy_response(3)), [1])
    assert TranscriptProof.from_json(json.loads(json.dumps(proof.to_json()))) == proof


def test_empty_reveal():
    tr = _session(_entropy_response(3))
    proof = _proof(tr, [])
    v = verify_transcript_proof(proof, NOTARY.public, IDENT, 300, T)
    assert v.valid and v.records == ()
    assert revealed_response(proof) is None
    blob = json.dumps(proof.to_json()).encode()
    for rec in tr.records:
        assert rec[:32] not in blob and b64e(rec)[:44].encode() not in blob


def test_reveal_out_of_range():
    with pytest.raises(IndexOutOfRange):
        _proof(_session(b"abc"), [1])


def test_reveal_middle_only():
    tr = _session(_entropy_response(3, seed=1))
    proof = _proof(tr, [1])
    blob = json.dumps(proof.to_json()).encode()
    assert b64e(tr.records[1]).encode() in blob
    for i in (0, 2):
        assert b64e(tr.records[i])[:64].encode() not in blob
        assert tr.records[i][:64] not in blob


def test_expired():
    proof = _proof(_session(b"x"), [0])
    assert verify_transcript_proof(proof, NOTARY.public, IDENT, 300, T + 300).valid
    assert verify_transcript_proof(proof, NOTARY.public, IDENT, 300, T + 301).reason == "Expired"


def test_server_mismatch():
    proof = _proof(_session(b"x"), [0])
    other = ServerIdentity(SERVER.public, "someone-else.test")
    assert verify_transcript_proof(proof, NOTARY.public, other, 300, T).reason == "ServerMismatch"


def test_bad_notary():
    proof = _proof(_session(b"x"), [0])
    assert verify_transcript_proof(proof, SERVER.public, IDENT, 300, T).reason == "BadNotarySig"


def test_bad_server_sig():
    proof = _proof(_session(b"x"), [0])
    forged = TranscriptProof(proof.notary_attestation, proof.server, proof.session_time, bytes(64), proof.revealed)
    assert verify_transcript_proof(forged, NOTARY.public, IDENT, 300, T).reason == "BadServerSig"


def test_duplicate_reveal_rejected():
    proof = _proof(_session(_entropy_response(2)), [0])
    dup = TranscriptProof(
        proof.notary_attestation, proof.server, proof.session_time, proof.server_session_sig, proof.revealed * 2
    )
    assert verify_transcript_proof(dup, NOTARY.public, IDENT, 300, T).reason == "BadMerklePath"


def test_transplant_resistance():
    sessions = [_session(os.urandom(100 + i), t=T + i) for i in range(6)]
    atts = [
        notarize(commit_transcript(s), IDENT.cert_fingerprint, s.request_path, NOTARY, T) for s in sessions
    ]
    for i, s in enumerate(sessions):
        for j, att in enumerate(atts):
            v = verify_transcript_proof(reveal(s, att, [0]), NOTARY.public, IDENT, 300, T)
            assert v.valid == (i == j)


def test_record_mutation_byte_sweep():
    # small records so the full sweep stays quick
    rng = random.Random(3)
    records = [rng.randbytes(64) for _ in range(5)]
    root = merkle_root(records)
    for i, rec in enumerate(records):
        path = merkle_path(records, i)
        for pos in range(len(rec)):
            bad = bytearray(rec)
            bad[pos] ^= 0x01
            assert not verify_merkle_path(root, 5, i, bytes(bad), path)
        for k, sib in enumerate(path):
            for pos in range(len(sib)):
                bad_path = list(path)
                mutated = bytearray(sib)
                mutated[pos] ^= 0x01
                bad_path[k] = bytes(mutated)
                assert not verify_merkle_path(root, 5, i, rec, bad_path)


def test_only_mutated_record_fails():
    tr = _session(_entropy_response(4, seed=9))
    proof = _proof(tr, [0, 1, 2, 3])
    root = proof.notary_attestation.commitment.merkle_root
    bad = RevealedRecord(2, proof.revealed[2].record[:-1] + b"\x00", proof.revealed[2].path)
    results = [verify_merkle_path(root, 4, r.index, r.record, r.path) for r in proof.revealed[:2] + (bad,) + proof.revealed[3:]]
    assert results == [True, True, False, True]


def test_server_identity_json_checks_fingerprint():
    obj = IDENT.to_json()
    assert ServerIdentity.from_json(obj) == IDENT
    obj["fingerprint_hex"] = "00" * 32
    with pytest.raises(ValueError):
        ServerIdentity.from_json(obj)
