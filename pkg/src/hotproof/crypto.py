"""Hashing, Ed25519 keys and the two JSON encodings used on the wire.

Two byte formats exist and must not be mixed up:

* ``canonical_json`` -- sorted keys, no whitespace. Used for anything that is
  signed or hashed as a structure (oracle statements, notary tuples, quotes).
* ``pretty_json`` -- insertion-ordered keys, two-space indent, trailing
  newline. This is the served-document format (balance report, packages);
  hashes over served documents cover these exact bytes.
"""

from __future__ import annotations

import base64
import hashlib
import json
import struct
from dataclasses import dataclass
from typing import Any

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat


def sha256(*parts: bytes) -> bytes:
    h = hashlib.sha256()
    for p in parts:
        h.update(p)
    return h.digest()


def u32(n: int) -> bytes:
    return struct.pack(">I", n)


def u64(n: int) -> bytes:
    return struct.pack(">Q", n)


def lp(data: bytes) -> bytes:
    """Length-prefix ``data`` with a big-endian u32."""
    return u32(len(data)) + data


def canonical_json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True).encode()


def pretty_json(obj: Any) -> bytes:
    return (json.dumps(obj, indent=2, ensure_ascii=True) + "\n").encode()


def b64e(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def b64d(text: str) -> bytes:
    return base64.b64decode(text.encode("ascii"), validate=True)


def derive_seed(seed: str | bytes, role: str) -> bytes:
    """Derive a 32-byte private seed for ``role`` from a master seed."""
    if isinstance(seed, str):
        seed = seed.encode()
    return sha256(b"hotproof-key:", seed, b":", role.encode())


def key_id(public_key: bytes) -> str:
    return sha256(public_key).hex()


@dataclass(frozen=True)
class KeyPair:
    """An Ed25519 signing key with its raw 32-byte public key."""

    private: Ed25519PrivateKey
    public: bytes

    @classmethod
    def from_seed(cls, seed: str | bytes, role: str = "") -> "KeyPair":
        priv = Ed25519PrivateKey.from_private_bytes(derive_seed(seed, role))
        return cls(priv, _raw_public(priv.public_key()))

    @classmethod
    def generate(cls) -> "KeyPair":
        priv = Ed25519PrivateKey.generate()
        return cls(priv, _raw_public(priv.public_key()))

    @property
    def key_id(self) -> str:
        return key_id(self.public)

    def sign(self, message: bytes) -> bytes:
        return self.private.sign(message)


def _raw_public(pub: Ed25519PublicKey) -> bytes:
    return pub.public_bytes(Encoding.Raw, PublicFormat.Raw)


def verify_signature(public_key: bytes, signature: bytes, message: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
    except (InvalidSignature, ValueError):
        return False
    return True
