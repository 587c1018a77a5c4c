"""Command-line entry points.

Subcommands ``node``, ``notary`` and ``oracle`` run services; ``prove``,
``verify``, ``probe`` and ``direct`` are one-shot clients; ``policy`` writes an
auditor policy derived from the same seed the services use.

Exit status: 0 success/accepted, 2 bad configuration, 3 a service refused or
was unreachable, 4 no route, 10-13 verdict rejected at Delivery,
HardwareQuote, SoftwareBinding or Freshness respectively.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .auditor import AuditPolicy, Auditor, render_audit_record, verify_hot_proof
from .chain_oracle import ChainOracle, RemoteOracle
from .crypto import pretty_json
from .deployment import DEFAULT_SEED, DEFAULT_SUBJECT, KeySet, audit_policy, build_node, enclave_policy
from .enclave import DEFAULT_CODE_IDENTITY, DirectAttestation, EnclavePolicy
from .errors import BadConfig, HotProofError, NoRoute, NotaryUnavailable, ServiceUnavailable
from .http import HttpTransport, parse_listen, make_server
from .ln_core import load_channels
from .network_sim import NetworkGraph, estimate_liquidity
from .prover_api import ATTESTED_PATH, DIRECT_PATH, build_proof_bundle, threshold_path
from .transcript_proof import NotaryService

EXIT_OK = 0
EXIT_BAD_CONFIG = 2
EXIT_SERVICE = 3
EXIT_NO_ROUTE = 4


def _read_json(path: str | None, what: str):
    if not path:
        raise BadConfig(f"--{what} is required")
    try:
        return json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise BadConfig(f"cannot read {what} {path}: {exc}") from None


def _emit(data: bytes, out: str | None) -> None:
    if out:
        Path(out).write_bytes(data)
    else:
        sys.stdout.write(data.decode())
        sys.stdout.flush()


def _serve(app, listen: str, name: str) -> int:
    host, port = parse_listen(listen)
    server = make_server(app, host, port)
    h, p = server.server_address[:2]
    print(f"{name} listening on http://{h}:{p}", file=sys.stderr, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


# -- services ---------------------------------------------------------------


def make_node(args):
    keys = KeySet.from_seed(args.seed)
    channels = load_channels(_read_json(args.fixture, "fixture"))
    if args.policy:
        policy = EnclavePolicy.from_json(_read_json(args.policy, "policy"))
        if not policy.oracle_pubkey:
            policy = EnclavePolicy(policy.max_pending_htlc_fraction, keys.oracle.public, policy.tcb_status)
    else:
        policy = enclave_policy(keys)
    if not args.oracle_url:
        raise BadConfig("--oracle-url is required")
    oracle = RemoteOracle(HttpTransport(args.oracle_url))
    return build_node(keys, channels, oracle, policy, args.code_identity, args.subject)


def make_oracle(args):
    keys = KeySet.from_seed(args.seed)
    return ChainOracle.from_fixture(keys.oracle, _read_json(args.fixture, "fixture"))


def make_notary(args):
    return NotaryService(KeySet.from_seed(args.seed).notary)


def cmd_node(args) -> int:
    return _serve(make_node(args), args.listen, "node")


def cmd_oracle(args) -> int:
    return _serve(make_oracle(args), args.listen, "oracle")


def cmd_notary(args) -> int:
    return _serve(make_notary(args), args.listen, "notary")


# -- clients ----------------------------------------------------------------


def cmd_policy(args) -> int:
    keys = KeySet.from_seed(args.seed)
    identities = args.code_identity or [DEFAULT_CODE_IDENTITY]
    policy = audit_policy(keys, identities, args.subject)
    _emit(pretty_json(policy.to_json()), args.out)
    return EXIT_OK


def cmd_prove(args) -> int:
    if not args.node_url or not args.notary_url:
        raise BadConfig("--node-url and --notary-url are required")
    path = ATTESTED_PATH if args.threshold is None else threshold_path(args.threshold)
    bundle = build_proof_bundle(args.node_url, args.notary_url, path)
    _emit(bundle.to_bytes(), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    bundle = _read_json(args.bundle, "bundle")
    policy = AuditPolicy.from_json(_read_json(args.policy, "policy"))
    oracle = RemoteOracle(HttpTransport(args.oracle_url)) if args.oracle_url else None
    verdict = verify_hot_proof(bundle, policy, args.now, oracle)
    _emit(render_audit_record(verdict), args.out)
    return verdict.exit_code


def cmd_probe(args) -> int:
    graph = NetworkGraph.from_fixture(_read_json(args.fixture, "fixture"))
    if args.target not in graph.channels:
        raise NoRoute(f"unknown channel {args.target}")
    est = estimate_liquidity(graph, args.src, args.target, args.tolerance, args.from_node)
    _emit(
        pretty_json(
            {
                "channel_id": args.target,
                "lower_bound_sat": est.lower_bound_sat,
                "upper_bound_sat": est.upper_bound_sat,
                "probes_used": est.probes_used,
            }
        ),
        args.out,
    )
    return EXIT_OK


def cmd_direct(args) -> int:
    if not args.node_url:
        raise BadConfig("--node-url is required")
    auditor = Auditor(AuditPolicy.from_json(_read_json(args.policy, "policy")))
    node = HttpTransport(args.node_url)
    nonce = auditor.issue_nonce()
    att = DirectAttestation.from_json(node.get_json(f"{DIRECT_PATH}?nonce={nonce.hex()}"))
    now = int(time.time()) + args.skew
    verdict = auditor.verify_direct(att, nonce, now)
    if args.replay:
        # resubmit the same attestation against a fresh challenge
        verdict = auditor.verify_direct(att, auditor.issue_nonce(), now)
    _emit(render_audit_record(verdict), args.out)
    return verdict.exit_code


# -- argument parsing -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hotproof", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(fn=fn)
        return p

    p = add("node", cmd_node, "run the prover node")
    p.add_argument("--fixture", help="channel fixture JSON")
    p.add_argument("--policy", help="enclave policy JSON")
    p.add_argument("--oracle-url")
    p.add_argument("--listen", default="127.0.0.1:8080")
    p.add_argument("--seed", default=DEFAULT_SEED)
    p.add_argument("--code-identity", default=DEFAULT_CODE_IDENTITY)
    p.add_argument("--subject", default=DEFAULT_SUBJECT)

    p = add("oracle", cmd_oracle, "run the chain oracle")
    p.add_argument("--fixture", help="chain fixture JSON {tip_height, utxos}")
    p.add_argument("--listen", default="127.0.0.1:8082")
    p.add_argument("--seed", default=DEFAULT_SEED)

    p = add("notary", cmd_notary, "run the transcript notary")
    p.add_argument("--listen", default="127.0.0.1:8081")
    p.add_argument("--seed", default=DEFAULT_SEED)

    p = add("policy", cmd_policy, "write an audit policy for a seed")
    p.add_argument("--seed", default=DEFAULT_SEED)
    p.add_argument("--code-identity", action="append", help="trusted code identity (repeatable)")
    p.add_argument("--subject", default=DEFAULT_SUBJECT)
    p.add_argument("--out")

    p = add("prove", cmd_prove, "fetch, notarize and write a proof bundle")
    p.add_argument("--node-url")
    p.add_argument("--notary-url")
    p.add_argument("--threshold", type=int, help="attest only local balance > THRESHOLD sat")
    p.add_argument("--out")

    p = add("verify", cmd_verify, "verify a proof bundle")
    p.add_argument("--bundle")
    p.add_argument("--policy")
    p.add_argument("--oracle-url")
    p.add_argument("--now", type=int, help="override the verification clock (unix seconds)")
    p.add_argument("--out")

    p = add("probe", cmd_probe, "estimate channel liquidity by probing")
    p.add_argument("--fixture", help="graph fixture JSON")
    p.add_argument("--src", required=True)
    p.add_argument("--target", required=True, help="channel id")
    p.add_argument("--from-node", help="sending endpoint of the target channel")
    p.add_argument("--tolerance", type=int, default=1)
    p.add_argument("--out")

    p = add("direct", cmd_direct, "nonce challenge against the node's enclave key")
    p.add_argument("--node-url")
    p.add_argument("--policy")
    p.add_argument("--replay", action="store_true", help="resubmit the attestation under a second nonce")
    p.add_argument("--skew", type=int, default=0, help="seconds added to the auditor clock")
    p.add_argument("--out")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (BadConfig, KeyError, ValueError) as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except NoRoute as exc:
        print(f"error: NoRoute: {exc}", file=sys.stderr)
        return EXIT_NO_ROUTE
    except (NotaryUnavailable, ServiceUnavailable, HotProofError, OSError) as exc:
        reason = getattr(exc, "reason", type(exc).__name__)
        print(f"error: {reason}: {exc}", file=sys.stderr)
        return EXIT_SERVICE


if __name__ == "__main__":
    sys.exit(main())
