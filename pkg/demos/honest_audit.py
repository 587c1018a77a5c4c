"""Honest audit: a node proves its channel balance and an auditor accepts it.

Run with ``python3 demos/honest_audit.py``.
"""

import json

from hotproof.auditor import render_audit_record, verify_hot_proof
from hotproof.deployment import Deployment, ManualClock
from hotproof.ln_core import reference_channels
from hotproof.prover_api import BALANCE_PATH, build_proof_bundle

T0 = 1_800_000_000


def main() -> None:
    dep = Deployment.create(reference_channels(), seed="demo", clock=ManualClock(T0))

    print("node serves:")
    print(dep.node.handle("GET", BALANCE_PATH).body.decode())

    bundle = build_proof_bundle(dep.node, dep.notary)
    proof = bundle.transcript_proof
    print(f"notarized at {proof.notary_attestation.notarized_time}, {len(proof.revealed)} record(s) revealed")

    dep.clock.advance(30)
    verdict = verify_hot_proof(bundle, dep.policy, dep.clock(), dep.oracle)
    print("audit record:")
    print(render_audit_record(verdict).decode())
    assert verdict.accepted

    dep.clock.advance(dep.policy.max_proof_age_seconds)
    late = verify_hot_proof(bundle, dep.policy, dep.clock(), dep.oracle)
    print(f"same bundle {dep.policy.max_proof_age_seconds + 30}s after notarization: {late.stage.value}/{late.reason}")
    print(json.dumps({"balance_sat": verdict.balance.sat("local_balance")}))


if __name__ == "__main__":
    main()
