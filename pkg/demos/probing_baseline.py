"""Estimate a remote channel's liquidity by probing, the baseline proofs replace.

Run with ``python3 demos/probing_baseline.py``.
"""

import json
from pathlib import Path

from hotproof.network_sim import NetworkGraph, estimate_liquidity

FIXTURE = Path(__file__).with_name("fixtures") / "graph.json"


def main() -> None:
    graph = NetworkGraph.from_fixture(json.loads(FIXTURE.read_text()))
    truth = graph.liquidity("hub-target", "hub")
    print(f"ground truth (hidden from the auditor): {truth} sat")
    for tolerance in (1, 100, 10_000, 100_000):
        est = estimate_liquidity(graph, "auditor", "hub-target", tolerance)
        width = est.upper_bound_sat - est.lower_bound_sat
        print(
            f"tolerance {tolerance:>7}: [{est.lower_bound_sat}, {est.upper_bound_sat}] "
            f"width {width:>6} after {est.probes_used} probes"
        )
    # probes fail by design, so channel state is untouched
    assert graph.liquidity("hub-target", "hub") == truth


if __name__ == "__main__":
    main()
