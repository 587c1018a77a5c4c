"""Direct variant: the auditor challenges the enclave with a fresh nonce.

Run with ``python3 demos/direct_challenge.py``.
"""

from hotproof.deployment import Deployment, ManualClock
from hotproof.enclave import sign_direct
from hotproof.ln_core import reference_channels

T0 = 1_800_000_000


def main() -> None:
    dep = Deployment.create(reference_channels(), seed="demo", clock=ManualClock(T0))
    auditor = dep.auditor()
    channels = dep.node.snapshot()

    nonce = auditor.issue_nonce()
    att = sign_direct(dep.node.enclave, channels, nonce, dep.oracle, T0)
    v = auditor.verify_direct(att, nonce, T0 + 5)
    print(f"fresh nonce:        {v.stage.value}/{v.reason or '-'}")

    again = auditor.verify_direct(att, nonce, T0 + 6)
    print(f"same nonce twice:   {again.stage.value}/{again.reason}")

    replay = auditor.verify_direct(att, auditor.issue_nonce(), T0 + 7)
    print(f"replay, new nonce:  {replay.stage.value}/{replay.reason}")

    nonce = auditor.issue_nonce()
    skewed = sign_direct(dep.node.enclave, channels, nonce, dep.oracle, T0 - 600)
    late = auditor.verify_direct(skewed, nonce, T0)
    print(f"600 s clock skew:   {late.stage.value}/{late.reason}")


if __name__ == "__main__":
    main()
