"""Inject one fault at a time and show the stage that catches it.

Run with ``python3 demos/fault_matrix.py``.
"""

import json

from hotproof.auditor import verify_hot_proof
from hotproof.crypto import b64d, b64e, pretty_json, sha256
from hotproof.deployment import Deployment, ManualClock, audit_policy
from hotproof.enclave import AttestationQuote, TcbStatus
from hotproof.errors import ServiceUnavailable
from hotproof.ln_core import reference_channels
from hotproof.prover_api import ATTESTED_PATH, ProofBundle, build_proof_bundle
from hotproof.transcript_proof import NotaryAttestation, TranscriptProof, commit_transcript, notarize, record_session, reveal

T0 = 1_800_000_000


def fresh(**kw) -> Deployment:
    return Deployment.create(reference_channels(), seed="demo", clock=ManualClock(T0), **kw)


def serve_edited(dep: Deployment, pkg: dict) -> ProofBundle:
    # a dishonest prover serves and notarizes its own edited package
    body = pretty_json(pkg)
    transcript = record_session(dep.keys.server, dep.node.subject, ATTESTED_PATH, body, T0)
    att = notarize(commit_transcript(transcript), transcript.server.cert_fingerprint, ATTESTED_PATH, dep.keys.notary, T0)
    return ProofBundle(reveal(transcript, att, range(len(transcript.records))), body)


def package(dep: Deployment) -> dict:
    return json.loads(build_proof_bundle(dep.node, dep.notary).package_bytes)


def report_flip():
    dep = fresh()
    pkg = package(dep)
    pkg["balance_report"]["local_balance"]["sat"] = "1234568"
    return dep, serve_edited(dep, pkg), dep.policy, T0


def quote_flip():
    dep = fresh()
    pkg = package(dep)
    q = AttestationQuote.from_wire(b64d(pkg["tee_attestation_payload"]["quote"]))
    sig = bytes([q.platform_signature[0] ^ 1]) + q.platform_signature[1:]
    forged = AttestationQuote(q.mrenclave, q.tcb_status, q.report_data, sig, q.platform_cert)
    pkg["tee_attestation_payload"]["quote"] = b64e(forged.to_wire())
    return dep, serve_edited(dep, pkg), dep.policy, T0


def unknown_measurement():
    dep = fresh(code_identity="lnd-enclave-patched")
    return dep, build_proof_bundle(dep.node, dep.notary), dep.policy, T0


def revoked_platform():
    dep = fresh()
    policy = audit_policy(dep.keys, revoked=[sha256(dep.keys.platform.public).hex()])
    return dep, build_proof_bundle(dep.node, dep.notary), policy, T0


def tcb_out_of_date():
    dep = fresh(tcb_status=TcbStatus.OUT_OF_DATE)
    return dep, build_proof_bundle(dep.node, dep.notary), dep.policy, T0


def notary_flip():
    dep = fresh()
    bundle = build_proof_bundle(dep.node, dep.notary)
    p, a = bundle.transcript_proof, bundle.transcript_proof.notary_attestation
    bad = NotaryAttestation(a.commitment, a.server_fingerprint, a.request_path, a.notarized_time, a.notary_sig[:-1] + bytes([a.notary_sig[-1] ^ 1]))
    return dep, ProofBundle(TranscriptProof(bad, p.server, p.session_time, p.server_session_sig, p.revealed), bundle.package_bytes), dep.policy, T0


def server_mismatch():
    dep = fresh()
    return dep, build_proof_bundle(dep.node, dep.notary), audit_policy(dep.keys, subject="someone-else.example"), T0


def expired():
    dep = fresh()
    return dep, build_proof_bundle(dep.node, dep.notary), dep.policy, T0 + dep.policy.max_proof_age_seconds + 1


FAULTS = [
    ("report byte flip", report_flip),
    ("quote signature flip", quote_flip),
    ("unknown measurement", unknown_measurement),
    ("revoked platform key", revoked_platform),
    ("TCB out of date", tcb_out_of_date),
    ("notary signature flip", notary_flip),
    ("server fingerprint mismatch", server_mismatch),
    ("notarized too long ago", expired),
]


def main() -> None:
    for name, make in FAULTS:
        dep, bundle, policy, now = make()
        v = verify_hot_proof(bundle, policy, now, dep.oracle)
        print(f"{name:30s} accepted={v.accepted!s:5s} stage={v.stage.value:16s} reason={v.reason}")

    dep = fresh()
    dep.oracle.mark_spent(dep.node.snapshot()[0].funding_outpoint)
    try:
        build_proof_bundle(dep.node, dep.notary)
        print("spent funding outpoint         package produced (unexpected)")
    except ServiceUnavailable as exc:
        print(f"{'spent funding outpoint':30s} no package, node answered {exc.reason}")


if __name__ == "__main__":
    main()
