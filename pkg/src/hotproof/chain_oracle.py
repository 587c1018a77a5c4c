"""Mock Esplora-style chain data service with signed answers.

The oracle signs every answer with a fixed key. Consumers pin that public
key, which stands in for TLS certificate pinning: a host that relays oracle
traffic can drop it but cannot alter it.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from typing import Protocol

from .crypto import KeyPair, b64d, b64e, canonical_json, sha256, u64, verify_signature
from .errors import OracleUnavailable, ServiceUnavailable, UnknownOutpoint
from .http import error_response, json_response, transport_for
from .ln_core import Outpoint

GENESIS_TIME = 1_231_006_505
BLOCK_INTERVAL = 600


@dataclass(frozen=True)
class BlockTip:
    height: int
    block_hash: bytes
    timestamp: int

    def to_json(self) -> dict:
        return {"height": self.height, "block_hash": self.block_hash.hex(), "timestamp": self.timestamp}

    @classmethod
    def from_json(cls, obj: dict) -> "BlockTip":
        block_hash = bytes.fromhex(obj["block_hash"])
        if len(block_hash) != 32:
            raise ValueError("block_hash must be 32 bytes")
        return cls(int(obj["height"]), block_hash, int(obj["timestamp"]))


@dataclass(frozen=True)
class OutpointStatus:
    outpoint: Outpoint
    spent: bool
    as_of: BlockTip

    def to_json(self) -> dict:
        return {"outpoint": self.outpoint.to_json(), "spent": self.spent, "as_of": self.as_of.to_json()}

    @classmethod
    def from_json(cls, obj: dict) -> "OutpointStatus":
        if not isinstance(obj["spent"], bool):
            raise ValueError("spent must be a boolean")
        return cls(Outpoint.from_json(obj["outpoint"]), obj["spent"], BlockTip.from_json(obj["as_of"]))


@dataclass(frozen=True)
class OracleStatement:
    payload: bytes
    signature: bytes
    oracle_key_id: str

    def parse(self) -> BlockTip | OutpointStatus:
        obj = json.loads(self.payload)
        kind = obj.get("kind")
        if kind == "tip":
            return BlockTip.from_json(obj["tip"])
        if kind == "outspend":
            return OutpointStatus.from_json(obj["status"])
        raise ValueError(f"unknown statement kind {kind!r}")

    def to_json(self) -> dict:
        return {
            "payload_b64": b64e(self.payload),
            "signature_b64": b64e(self.signature),
            "oracle_key_id": self.oracle_key_id,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "OracleStatement":
        return cls(b64d(obj["payload_b64"]), b64d(obj["signature_b64"]), str(obj["oracle_key_id"]))


def verify_statement(stmt: OracleStatement, pinned_key: bytes) -> bool:
    if not verify_signature(pinned_key, stmt.signature, stmt.payload):
        return False
    try:
        stmt.parse()
    except (ValueError, KeyError, TypeError, AttributeError):
        return False
    return True


class OracleClient(Protocol):
    def tip(self) -> OracleStatement: ...

    def outspend(self, outpoint: Outpoint) -> OracleStatement: ...


def block_hash_at(height: int) -> bytes:
    return sha256(b"mock-block:", u64(height))


class ChainOracle:
    """In-memory chain view. Thread-safe; ``advance_block``/``mark_spent``/
    ``set_online`` are fault-injection hooks."""

    def __init__(self, key: KeyPair, tip_height: int, utxos=(), genesis_time: int = GENESIS_TIME):
        self.key = key
        self._lock = threading.Lock()
        self._height = tip_height
        self._genesis_time = genesis_time
        self._utxos = set(utxos)
        self._spent: set[Outpoint] = set()
        self._online = True

    @classmethod
    def from_fixture(cls, key: KeyPair, fixture: dict) -> "ChainOracle":
        """Fixture format: ``{"tip_height": int, "utxos": [{"txid", "vout"}, ...]}``."""
        utxos = [Outpoint.from_json(u) for u in fixture.get("utxos", ())]
        return cls(key, int(fixture["tip_height"]), utxos)

    @property
    def public_key(self) -> bytes:
        return self.key.public

    def _current_tip(self) -> BlockTip:
        return BlockTip(
            self._height,
            block_hash_at(self._height),
            self._genesis_time + self._height * BLOCK_INTERVAL,
        )

    def _sign(self, obj: dict) -> OracleStatement:
        payload = canonical_json(obj)
        return OracleStatement(payload, self.key.sign(payload), self.key.key_id)

    def tip(self) -> OracleStatement:
        with self._lock:
            if not self._online:
                raise OracleUnavailable("oracle is offline")
            return self._sign({"kind": "tip", "tip": self._current_tip().to_json()})

    def outspend(self, outpoint: Outpoint) -> OracleStatement:
        with self._lock:
            if not self._online:
                raise OracleUnavailable("oracle is offline")
            if outpoint in self._spent:
                spent = True
            elif outpoint in self._utxos:
                spent = False
            else:
                raise UnknownOutpoint(str(outpoint))
            status = OutpointStatus(outpoint, spent, self._current_tip())
            return self._sign({"kind": "outspend", "status": status.to_json()})

    def advance_block(self, n: int = 1) -> None:
        if n < 0:
            raise ValueError("height never decreases")
        with self._lock:
            self._height += n

    def add_utxo(self, outpoint: Outpoint) -> None:
        with self._lock:
            self._utxos.add(outpoint)
            self._spent.discard(outpoint)

    def mark_spent(self, outpoint: Outpoint) -> None:
        with self._lock:
            self._utxos.discard(outpoint)
            self._spent.add(outpoint)

    def set_online(self, online: bool) -> None:
        with self._lock:
            self._online = online

    # HTTP-style routing, used by the socket server and in-process transports
    def handle(self, method: str, path: str, body: bytes = b""):
        parts = [p for p in path.split("?")[0].split("/") if p]
        try:
            if method == "GET" and parts == ["tip"]:
                return json_response(self.tip().to_json())
            if method == "GET" and len(parts) == 3 and parts[0] == "outspend":
                try:
                    outpoint = Outpoint(bytes.fromhex(parts[1]), int(parts[2]))
                except ValueError:
                    return error_response(400, "BadRequest")
                return json_response(self.outspend(outpoint).to_json())
        except OracleUnavailable as exc:
            return error_response(503, exc.reason)
        except UnknownOutpoint as exc:
            return error_response(404, exc.reason)
        return error_response(404, "NotFound")


class RemoteOracle:
    """Oracle client over an HTTP-style transport."""

    def __init__(self, transport):
        self.transport = transport_for(transport)

    def _get(self, path: str) -> OracleStatement:
        try:
            obj = self.transport.get_json(path)
        except ServiceUnavailable as exc:
            if exc.reason == "UnknownOutpoint":
                raise UnknownOutpoint(path) from None
            raise OracleUnavailable(str(exc)) from None
        except OSError as exc:
            raise OracleUnavailable(str(exc)) from None
        return OracleStatement.from_json(obj)

    def tip(self) -> OracleStatement:
        return self._get("/tip")

    def outspend(self, outpoint: Outpoint) -> OracleStatement:
        return self._get(f"/outspend/{outpoint.txid.hex()}/{outpoint.vout}")
