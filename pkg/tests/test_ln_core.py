import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hotproof.errors import ChannelMismatch, InsufficientLiquidity, InvariantViolation, UnknownHtlc, WrongPhase
from hotproof.ln_core import (
    REPORT_FIELDS,
    BalanceReport,
    ChannelState,
    Direction,
    Htlc,
    Outcome,
    Outpoint,
    Phase,
    ReestablishMsg,
    ReestablishResult,
    add_htlc,
    aggregate_balance_report,
    funding_outpoint_for,
    open_channel,
    outbound_liquidity,
    reestablish_check,
    reestablish_msg,
    reference_channels,
    resolve_htlc,
)


def _brute_force_report(channels):
    """Independent per-channel summation, field by field."""
    out = {name: 0 for name in REPORT_FIELDS}
    for ch in channels:
        if ch.phase == Phase.OPEN:
            out["local_balance"] += ch.local_msat
            out["remote_balance"] += ch.remote_msat
            for h in ch.htlcs:
                key = "unsettled_local_balance" if h.direction == Direction.OFFERED else "unsettled_remote_balance"
                out[key] += h.amount_msat
        elif ch.phase == Phase.OPENING:
            out["pending_open_local_balance"] += ch.local_msat
            out["pending_open_remote_balance"] += ch.remote_msat
    return {k: v // 1000 for k, v in out.items()}


def test_outpoint_requires_32_byte_txid():
    with pytest.raises(ValueError):
        Outpoint(b"\x00" * 31, 0)


def test_reference_report():
    report = aggregate_balance_report(reference_channels())
    obj = json.loads(report.to_bytes())
    assert obj["local_balance"] == {"sat": "1234567", "msat": "1234567000"}
    assert obj["remote_balance"] == {"sat": "765433", "msat": "765433000"}
    for name in REPORT_FIELDS[2:]:
        assert obj[name] == {"sat": "0", "msat": "0"}


def test_empty_report_is_all_zero():
    obj = aggregate_balance_report([]).to_obj()
    assert obj == {name: {"sat": "0", "msat": "0"} for name in REPORT_FIELDS}


def test_two_open_one_opening():
    chans = [
        open_channel("a", 500_000, 100_000),
        open_channel("b", 500_000, 200_000),
        open_channel("c", 100_000, 50_000, phase=Phase.OPENING),
    ]
    report = aggregate_balance_report(chans)
    assert report.to_obj()["local_balance"]["sat"] == "300000"
    assert report.to_obj()["pending_open_local_balance"]["sat"] == "50000"
    assert {n: report.sat(n) for n in REPORT_FIELDS} == _brute_force_report(chans)


def test_closed_channels_contribute_nothing():
    closed = open_channel("x", 100_000, 60_000, phase=Phase.CLOSED)
    assert aggregate_balance_report([closed]) == BalanceReport()


def test_broken_conservation_raises():
    bad = ChannelState("bad", funding_outpoint_for("bad"), 1000, 600_000, 300_000)
    with pytest.raises(InvariantViolation):
        aggregate_balance_report([bad])


def test_reserve_over_half_capacity_is_invalid():
    with pytest.raises(InvariantViolation):
        open_channel("r", 1000, 500, reserve_sat=501)


# -- outbound liquidity -----------------------------------------------------


def test_outbound_with_reserve_and_offered_htlc():
    ch = ChannelState(
        "o",
        funding_outpoint_for("o"),
        capacity_sat=2_000_000,
        local_msat=1_000_000_000,
        remote_msat=960_000_000,
        reserve_sat=10_000,
        htlcs=(Htlc(0, 40_000_000, Direction.OFFERED, b"\x11" * 32),),
    )
    ch.check()
    # 1,000,000 - 10,000 - 40,000
    assert outbound_liquidity(ch) == 950_000


def test_outbound_clamps_to_zero():
    assert outbound_liquidity(open_channel("z", 100_000, 10_000, reserve_sat=10_000)) == 0


def test_outbound_reference_channel():
    assert outbound_liquidity(reference_channels()[0]) == 1_234_567


def test_outbound_requires_open():
    with pytest.raises(WrongPhase):
        outbound_liquidity(open_channel("p", 1000, 500, phase=Phase.OPENING))


# -- HTLC transitions -------------------------------------------------------


def _conserved(ch):
    return ch.local_msat + ch.remote_msat + sum(h.amount_msat for h in ch.htlcs) == ch.capacity_sat * 1000


def test_add_htlc_small():
    ch = open_channel("h", 2_000, 1_000)
    after = add_htlc(ch, 1_000, Direction.OFFERED)
    assert after.local_msat == 999_000
    assert len(after.htlcs) == 1
    assert after.commitment_number == ch.commitment_number + 1
    assert _conserved(after)


def test_add_htlc_over_liquidity_leaves_state():
    ch = open_channel("h", 2_000, 1_000, reserve_sat=100)
    with pytest.raises(InsufficientLiquidity):
        add_htlc(ch, 900_001, Direction.OFFERED)
    assert ch.local_msat == 1_000_000 and ch.htlcs == ()


def test_add_htlc_full_outbound():
    ch = open_channel("h", 10_000, 6_000, reserve_sat=500)
    after = add_htlc(ch, outbound_liquidity(ch) * 1000, Direction.OFFERED)
    assert after.local_msat == 500 * 1000
    assert _conserved(after)


def test_add_htlc_needs_open_channel():
    with pytest.raises(WrongPhase):
        add_htlc(open_channel("c", 1000, 500, phase=Phase.CLOSED), 1000, Direction.OFFERED)


def test_received_htlc_draws_on_remote():
    ch = open_channel("h", 2_000, 1_000)
    after = add_htlc(ch, 5_000, Direction.RECEIVED)
    assert after.remote_msat == 995_000 and after.local_msat == 1_000_000


def test_add_then_fail_is_balance_neutral():
    ch = open_channel("h", 2_000, 1_000)
    added = add_htlc(ch, 1_000, Direction.OFFERED)
    failed = resolve_htlc(added, added.htlcs[0].id, Outcome.FAIL)
    assert (failed.local_msat, failed.remote_msat, failed.htlcs) == (ch.local_msat, ch.remote_msat, ())
    assert failed.commitment_number == ch.commitment_number + 2


def test_settle_moves_to_remote():
    ch = open_channel("h", 2_000, 1_000)
    added = add_htlc(ch, 1_000, Direction.OFFERED)
    settled = resolve_htlc(added, added.htlcs[0].id, Outcome.SETTLE)
    assert settled.remote_msat == ch.remote_msat + 1_000
    assert _conserved(settled)


def test_resolve_unknown():
    with pytest.raises(UnknownHtlc):
        resolve_htlc(open_channel("h", 2_000, 1_000), 42, Outcome.SETTLE)


# -- reestablish ------------------------------------------------------------


def test_reestablish_in_sync():
    ch = open_channel("r", 10_000, 5_000)
    for _ in range(5):
        ch = add_htlc(ch, 1_000, Direction.OFFERED)
    assert ch.commitment_number == 5
    assert reestablish_check(ch, ReestablishMsg("r", 6)) is ReestablishResult.OK


def test_reestablish_detects_rollback():
    ch = open_channel("r", 10_000, 5_000)
    for _ in range(3):
        ch = add_htlc(ch, 1_000, Direction.OFFERED)
    snapshot = ch
    live = ch
    for _ in range(3):
        live = add_htlc(live, 1_000, Direction.OFFERED)
    assert snapshot.commitment_number == 3
    assert reestablish_check(snapshot, reestablish_msg(live)) is ReestablishResult.STALE_STATE


def test_reestablish_channel_mismatch():
    with pytest.raises(ChannelMismatch):
        reestablish_check(open_channel("a", 1000, 500), ReestablishMsg("b", 1))


def test_reestablish_peer_behind():
    ch = add_htlc(open_channel("r", 10_000, 5_000), 1000, Direction.OFFERED)
    assert reestablish_check(ch, ReestablishMsg("r", 1)) is ReestablishResult.PEER_BEHIND


# -- report wire form -------------------------------------------------------


@pytest.mark.parametrize(
    "mutate",
    [
        lambda o: o.pop("remote_balance"),
        lambda o: o.update(extra={"sat": "0", "msat": "0"}),
        lambda o: o["local_balance"].update(msat="1234567001"),
        lambda o: o["local_balance"].update(sat="01234567"),
        lambda o: o["local_balance"].update(sat=1234567),
        lambda o: o["local_balance"].update(sat="-1", msat="-1000"),
    ],
)
def test_report_parse_is_strict(mutate):
    obj = aggregate_balance_report(reference_channels()).to_obj()
    mutate(obj)
    with pytest.raises(InvariantViolation):
        BalanceReport.from_obj(obj)


# -- properties -------------------------------------------------------------

ops = st.lists(
    st.tuples(
        st.sampled_from(["add_off", "add_recv", "settle", "fail"]),
        st.integers(min_value=1, max_value=3_000_000),
        st.integers(min_value=0, max_value=50),
    ),
    max_size=25,
)


def _apply(ch, op, amount, pick):
    kind = op
    if kind.startswith("add"):
        direction = Direction.OFFERED if kind == "add_off" else Direction.RECEIVED
        try:
            return add_htlc(ch, amount, direction)
        except InsufficientLiquidity:
            return None
    if not ch.htlcs:
        return None
    htlc = ch.htlcs[pick % len(ch.htlcs)]
    return resolve_htlc(ch, htlc.id, Outcome.SETTLE if kind == "settle" else Outcome.FAIL)


@settings(max_examples=200, deadline=None)
@given(
    capacity=st.integers(min_value=1_000, max_value=100_000),
    local_frac=st.floats(min_value=0, max_value=1),
    sequence=ops,
)
def test_conservation_and_monotonicity(capacity, local_frac, sequence):
    ch = open_channel("p", capacity, int(capacity * local_frac), reserve_sat=capacity // 100)
    for op, amount, pick in sequence:
        nxt = _apply(ch, op, amount, pick)
        if nxt is None:
            continue
        assert nxt.commitment_number == ch.commitment_number + 1
        assert _conserved(nxt)
        nxt.check()
        report = aggregate_balance_report([nxt]).to_obj()
        for pair in report.values():
            assert int(pair["msat"]) == int(pair["sat"]) * 1000
        ch = nxt


@settings(max_examples=100, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.integers(min_value=1, max_value=2_000_000),
            st.floats(min_value=0, max_value=1),
            st.sampled_from(list(Phase)),
        ),
        max_size=8,
    )
)
def test_report_matches_independent_sum(specs):
    chans = [open_channel(f"c{i}", cap, int(cap * f), phase=ph) for i, (cap, f, ph) in enumerate(specs)]
    report = aggregate_balance_report(chans)
    assert {n: report.sat(n) for n in REPORT_FIELDS} == _brute_force_report(chans)
    assert BalanceReport.from_bytes(report.to_bytes()) == report


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=0, max_value=10), st.integers(min_value=1, max_value=10))
def test_any_rollback_is_detected(before, after):
    ch = open_channel("s", 1_000_000, 500_000)
    for _ in range(before):
        ch = add_htlc(ch, 1_000, Direction.OFFERED)
    snapshot, live = ch, ch
    for i in range(after):
        live = add_htlc(live, 1_000, Direction.OFFERED) if i % 2 == 0 else resolve_htlc(
            live, live.htlcs[-1].id, Outcome.FAIL
        )
    assert reestablish_check(snapshot, reestablish_msg(live)) is ReestablishResult.STALE_STATE
    assert reestablish_check(live, reestablish_msg(live)) is ReestablishResult.OK
