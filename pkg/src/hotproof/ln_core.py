"""Payment channels, HTLC transitions and the aggregate balance report.

Channel states are frozen dataclasses; every transition returns a new value
and the previous one stays usable as a snapshot.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .crypto import pretty_json, sha256, u64
from .errors import (
    ChannelMismatch,
    InsufficientLiquidity,
    InvariantViolation,
    UnknownHtlc,
    WrongPhase,
)

MSAT_PER_SAT = 1000

REPORT_FIELDS = (
    "local_balance",
    "remote_balance",
    "unsettled_local_balance",
    "unsettled_remote_balance",
    "pending_open_local_balance",
    "pending_open_remote_balance",
)


@dataclass(frozen=True)
class Outpoint:
    txid: bytes
    vout: int

    def __post_init__(self):
        if len(self.txid) != 32:
            raise ValueError(f"txid must be 32 bytes, got {len(self.txid)}")
        if self.vout < 0:
            raise ValueError("vout must be unsigned")

    def __str__(self) -> str:
        return f"{self.txid.hex()}:{self.vout}"

    def to_json(self) -> dict:
        return {"txid": self.txid.hex(), "vout": self.vout}

    @classmethod
    def from_json(cls, obj: dict) -> "Outpoint":
        return cls(bytes.fromhex(obj["txid"]), int(obj["vout"]))


class Direction(enum.Enum):
    OFFERED = "Offered"
    RECEIVED = "Received"


class Phase(enum.Enum):
    OPENING = "Opening"
    OPEN = "Open"
    CLOSED = "Closed"


class Outcome(enum.Enum):
    SETTLE = "Settle"
    FAIL = "Fail"


@dataclass(frozen=True)
class Htlc:
    id: int
    amount_msat: int
    direction: Direction
    payment_hash: bytes

    def __post_init__(self):
        if self.amount_msat <= 0:
            raise ValueError("HTLC amount must be positive")
        if len(self.payment_hash) != 32:
            raise ValueError("payment_hash must be 32 bytes")


@dataclass(frozen=True)
class ChannelState:
    channel_id: str
    funding_outpoint: Outpoint
    capacity_sat: int
    local_msat: int
    remote_msat: int
    reserve_sat: int = 0
    htlcs: tuple[Htlc, ...] = ()
    commitment_number: int = 0
    phase: Phase = Phase.OPEN

    @property
    def inflight_msat(self) -> int:
        return sum(h.amount_msat for h in self.htlcs)

    def offered_msat(self) -> int:
        return sum(h.amount_msat for h in self.htlcs if h.direction is Direction.OFFERED)

    def received_msat(self) -> int:
        return sum(h.amount_msat for h in self.htlcs if h.direction is Direction.RECEIVED)

    def check(self) -> None:
        """Raise InvariantViolation if this state is not internally consistent."""
        if min(self.local_msat, self.remote_msat, self.capacity_sat, self.reserve_sat) < 0:
            raise InvariantViolation(f"{self.channel_id}: negative amount")
        if self.reserve_sat * 2 > self.capacity_sat:
            raise InvariantViolation(f"{self.channel_id}: reserve exceeds half the capacity")
        if self.phase is not Phase.CLOSED:
            total = self.local_msat + self.remote_msat + self.inflight_msat
            if total != self.capacity_sat * MSAT_PER_SAT:
                raise InvariantViolation(
                    f"{self.channel_id}: balances sum to {total} msat, "
                    f"capacity is {self.capacity_sat * MSAT_PER_SAT} msat"
                )

    def mirrored(self) -> "ChannelState":
        """The same channel seen from the counterparty."""
        flip = {Direction.OFFERED: Direction.RECEIVED, Direction.RECEIVED: Direction.OFFERED}
        return replace(
            self,
            local_msat=self.remote_msat,
            remote_msat=self.local_msat,
            htlcs=tuple(replace(h, direction=flip[h.direction]) for h in self.htlcs),
        )

    def to_json(self) -> dict:
        return {
            "channel_id": self.channel_id,
            "funding_outpoint": self.funding_outpoint.to_json(),
            "capacity_sat": self.capacity_sat,
            "local_msat": self.local_msat,
            "remote_msat": self.remote_msat,
            "reserve_sat": self.reserve_sat,
            "htlcs": [
                {
                    "id": h.id,
                    "amount_msat": h.amount_msat,
                    "direction": h.direction.value,
                    "payment_hash": h.payment_hash.hex(),
                }
                for h in self.htlcs
            ],
            "commitment_number": self.commitment_number,
            "phase": self.phase.value,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ChannelState":
        state = cls(
            channel_id=obj["channel_id"],
            funding_outpoint=Outpoint.from_json(obj["funding_outpoint"]),
            capacity_sat=int(obj["capacity_sat"]),
            local_msat=int(obj["local_msat"]),
            remote_msat=int(obj["remote_msat"]),
            reserve_sat=int(obj.get("reserve_sat", 0)),
            htlcs=tuple(
                Htlc(
                    id=int(h["id"]),
                    amount_msat=int(h["amount_msat"]),
                    direction=Direction(h["direction"]),
                    payment_hash=bytes.fromhex(h["payment_hash"]),
                )
                for h in obj.get("htlcs", ())
            ),
            commitment_number=int(obj.get("commitment_number", 0)),
            phase=Phase(obj.get("phase", "Open")),
        )
        state.check()
        return state


def funding_outpoint_for(channel_id: str, vout: int = 0) -> Outpoint:
    """Deterministic stand-in funding outpoint for fixtures."""
    return Outpoint(sha256(b"funding:", channel_id.encode()), vout)


def open_channel(
    channel_id: str,
    capacity_sat: int,
    local_sat: int,
    reserve_sat: int = 0,
    phase: Phase = Phase.OPEN,
    funding_outpoint: Outpoint | None = None,
) -> ChannelState:
    state = ChannelState(
        channel_id=channel_id,
        funding_outpoint=funding_outpoint or funding_outpoint_for(channel_id),
        capacity_sat=capacity_sat,
        local_msat=local_sat * MSAT_PER_SAT,
        remote_msat=(capacity_sat - local_sat) * MSAT_PER_SAT,
        reserve_sat=reserve_sat,
        phase=phase,
    )
    state.check()
    return state


def reference_channels() -> list[ChannelState]:
    """One open channel: 1,234,567 sat local, 765,433 sat remote."""
    return [open_channel("chan-ref-0", 2_000_000, 1_234_567)]


# -- balance report -------------------------------------------------------


@dataclass(frozen=True)
class BalanceReport:
    """Aggregate balances, held as millisatoshi integers.

    On the wire each field is a ``{"sat": str, "msat": str}`` pair. Values are
    whole satoshis, so ``msat == sat * 1000`` holds for every pair.
    """

    local_balance: int = 0
    remote_balance: int = 0
    unsettled_local_balance: int = 0
    unsettled_remote_balance: int = 0
    pending_open_local_balance: int = 0
    pending_open_remote_balance: int = 0

    def __post_init__(self):
        for name in REPORT_FIELDS:
            value = getattr(self, name)
            if value < 0 or value % MSAT_PER_SAT:
                raise InvariantViolation(f"{name}={value} is not a non-negative whole-sat msat amount")

    def sat(self, name: str) -> int:
        return getattr(self, name) // MSAT_PER_SAT

    def to_obj(self) -> dict:
        return {
            name: {"sat": str(self.sat(name)), "msat": str(getattr(self, name))}
            for name in REPORT_FIELDS
        }

    def to_bytes(self) -> bytes:
        return pretty_json(self.to_obj())

    @classmethod
    def from_obj(cls, obj: dict) -> "BalanceReport":
        """Strict parse: exactly the six keys in order, canonical decimal strings."""
        if not isinstance(obj, dict) or list(obj) != list(REPORT_FIELDS):
            raise InvariantViolation("balance report must have exactly the six standard keys in order")
        values = {}
        for name in REPORT_FIELDS:
            pair = obj[name]
            if not isinstance(pair, dict) or list(pair) != ["sat", "msat"]:
                raise InvariantViolation(f"{name}: expected {{sat, msat}}")
            sat, msat = _decimal(pair["sat"]), _decimal(pair["msat"])
            if msat != sat * MSAT_PER_SAT:
                raise InvariantViolation(f"{name}: msat {msat} != sat {sat} * 1000")
            values[name] = msat
        return cls(**values)

    @classmethod
    def from_bytes(cls, data: bytes) -> "BalanceReport":
        try:
            obj = json.loads(data)
        except ValueError as exc:
            raise InvariantViolation(f"balance report is not JSON: {exc}") from None
        return cls.from_obj(obj)


def _decimal(text) -> int:
    if not isinstance(text, str) or not text.isdigit() or not text.isascii():
        raise InvariantViolation(f"{text!r} is not a decimal string")
    if len(text) > 1 and text[0] == "0":
        raise InvariantViolation(f"{text!r} has leading zeros")
    value = int(text)
    if value >= 2**64:
        raise InvariantViolation(f"{text!r} overflows u64")
    return value


def _whole_sats(msat: int) -> int:
    return msat // MSAT_PER_SAT * MSAT_PER_SAT


def aggregate_balance_report(channels: Iterable[ChannelState]) -> BalanceReport:
    """Sum channel balances into the six report fields.

    Open channels feed the settled fields, Opening channels the pending-open
    fields, and in-flight HTLCs of Open channels the unsettled fields (offered
    HTLCs count as local). Each total is truncated to whole satoshis.
    """
    totals = dict.fromkeys(REPORT_FIELDS, 0)
    for ch in channels:
        ch.check()
        if ch.phase is Phase.OPEN:
            totals["local_balance"] += ch.local_msat
            totals["remote_balance"] += ch.remote_msat
            totals["unsettled_local_balance"] += ch.offered_msat()
            totals["unsettled_remote_balance"] += ch.received_msat()
        elif ch.phase is Phase.OPENING:
            totals["pending_open_local_balance"] += ch.local_msat
            totals["pending_open_remote_balance"] += ch.remote_msat
    return BalanceReport(**{k: _whole_sats(v) for k, v in totals.items()})


# -- transitions ----------------------------------------------------------


def outbound_liquidity(channel: ChannelState) -> int:
    """Sendable satoshis: local balance less reserve and offered HTLCs, floored at 0."""
    if channel.phase is not Phase.OPEN:
        raise WrongPhase(f"{channel.channel_id} is {channel.phase.value}")
    spendable = (
        channel.local_msat // MSAT_PER_SAT * MSAT_PER_SAT
        - channel.reserve_sat * MSAT_PER_SAT
        - channel.offered_msat()
    )
    return max(0, spendable // MSAT_PER_SAT)


def add_htlc(
    channel: ChannelState,
    amount_msat: int,
    direction: Direction,
    payment_hash: bytes | None = None,
) -> ChannelState:
    if channel.phase is not Phase.OPEN:
        raise WrongPhase(f"{channel.channel_id} is {channel.phase.value}")
    if amount_msat <= 0:
        raise ValueError("HTLC amount must be positive")
    # The offering side's liquidity is what limits the add.
    offerer = channel if direction is Direction.OFFERED else channel.mirrored()
    available = outbound_liquidity(offerer) * MSAT_PER_SAT
    if amount_msat > available:
        raise InsufficientLiquidity(
            f"{channel.channel_id}: {amount_msat} msat exceeds {available} msat available"
        )
    htlc_id = channel.commitment_number
    if payment_hash is None:
        payment_hash = sha256(channel.channel_id.encode(), u64(htlc_id))
    htlc = Htlc(htlc_id, amount_msat, direction, payment_hash)
    if direction is Direction.OFFERED:
        balances = {"local_msat": channel.local_msat - amount_msat}
    else:
        balances = {"remote_msat": channel.remote_msat - amount_msat}
    return replace(
        channel,
        htlcs=channel.htlcs + (htlc,),
        commitment_number=channel.commitment_number + 1,
        **balances,
    )


def resolve_htlc(channel: ChannelState, htlc_id: int, outcome: Outcome) -> ChannelState:
    matches = [h for h in channel.htlcs if h.id == htlc_id]
    if not matches:
        raise UnknownHtlc(f"{channel.channel_id}: no HTLC {htlc_id}")
    htlc = matches[0]
    # Settle pays the receiving side, Fail refunds the offering side.
    to_local = (htlc.direction is Direction.OFFERED) == (outcome is Outcome.FAIL)
    local = channel.local_msat + (htlc.amount_msat if to_local else 0)
    remote = channel.remote_msat + (0 if to_local else htlc.amount_msat)
    return replace(
        channel,
        local_msat=local,
        remote_msat=remote,
        htlcs=tuple(h for h in channel.htlcs if h.id != htlc_id),
        commitment_number=channel.commitment_number + 1,
    )


# -- channel_reestablish --------------------------------------------------


@dataclass(frozen=True)
class ReestablishMsg:
    channel_id: str
    next_commitment_number: int


class ReestablishResult(enum.Enum):
    OK = "Ok"
    STALE_STATE = "StaleState"
    PEER_BEHIND = "PeerBehind"


def reestablish_msg(channel: ChannelState) -> ReestablishMsg:
    """What a peer holding ``channel`` would announce on reconnect."""
    return ReestablishMsg(channel.channel_id, channel.commitment_number + 1)


def reestablish_check(local: ChannelState, peer: ReestablishMsg) -> ReestablishResult:
    """Compare our commitment number with the peer's on reconnect.

    STALE_STATE means our state was rolled back; the caller must force-close
    rather than feed this state anywhere.
    """
    if peer.channel_id != local.channel_id:
        raise ChannelMismatch(f"{peer.channel_id} != {local.channel_id}")
    expected = local.commitment_number + 1
    if peer.next_commitment_number == expected:
        return ReestablishResult.OK
    if peer.next_commitment_number > expected:
        return ReestablishResult.STALE_STATE
    return ReestablishResult.PEER_BEHIND


def load_channels(obj: dict | Sequence[dict]) -> list[ChannelState]:
    """Parse a channel fixture: ``{"channels": [...]}`` or a bare list."""
    items = obj["channels"] if isinstance(obj, dict) else obj
    return [ChannelState.from_json(item) for item in items]


def dump_channels(channels: Iterable[ChannelState]) -> dict:
    return {"channels": [ch.to_json() for ch in channels]}
