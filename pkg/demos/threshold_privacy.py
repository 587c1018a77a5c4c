"""Prove "balance above a threshold" without disclosing the balance.

Run with ``python3 demos/threshold_privacy.py``.
"""

import json

from hotproof.auditor import verify_hot_proof
from hotproof.deployment import Deployment, ManualClock
from hotproof.ln_core import open_channel
from hotproof.prover_api import build_proof_bundle, threshold_path

T0 = 1_800_000_000
NONCE = bytes(range(32))


def main() -> None:
    bodies = []
    for local in (1_234_567, 1_999_999):
        dep = Deployment.create([open_channel("chan-t", 2_000_000, local)], seed="demo", clock=ManualClock(T0))
        body = dep.node.handle("GET", threshold_path(1_000_000, NONCE)).body
        bodies.append(body)
        print(f"balance {local}: {json.loads(body)['threshold_attestation']}")
        bundle = build_proof_bundle(dep.node, dep.notary, threshold_path(1_000_000, NONCE))
        v = verify_hot_proof(bundle, dep.policy, T0, dep.oracle)
        print(f"  auditor: {v.stage.value}, threshold {v.threshold_sat}")
    print(f"served bytes identical across balances: {bodies[0] == bodies[1]}")

    refused = dep.node.handle("GET", threshold_path(2_000_000, NONCE))
    print(f"threshold above balance: HTTP {refused.status} {refused.body.decode().strip()}")


if __name__ == "__main__":
    main()
