"""Hardware-attested, notarized balance proofs for Lightning channels (simulated)."""

from .auditor import AuditPolicy, Auditor, AuditVerdict, Stage, render_audit_record, verify_direct, verify_hot_proof
from .chain_oracle import ChainOracle, OracleStatement, verify_statement
from .deployment import Deployment, KeySet, ManualClock
from .enclave import (
    AttestationQuote,
    EnclavePolicy,
    TcbStatus,
    attest_balance,
    attest_threshold,
    load_enclave,
    sign_direct,
    verify_quote,
)
from .ln_core import (
    BalanceReport,
    ChannelState,
    Direction,
    Outcome,
    add_htlc,
    aggregate_balance_report,
    outbound_liquidity,
    reestablish_check,
    resolve_htlc,
)
from .network_sim import NetworkGraph, estimate_liquidity, find_route, send_probe
from .prover_api import ProofBundle, ProverNode, build_proof_bundle
from .transcript_proof import verify_transcript_proof

__version__ = "0.1.0"
