"""Challenge-response exchange of tree roots and the log they protect.

The platform's signature is modelled by an HMAC-SHA256 under a secret
shared out of band.  Messages travel over any reliable byte stream socket,
each prefixed with a 4-byte big-endian length::

    request   0x01 || nonce (16 bytes)
    response  0x02 || quote || serialized log

Quote layout: hash-alg byte, nonce, u32 root count, per root a u32
register index and the digest, the digest of the log bytes, the 32-byte tag.
"""

from __future__ import annotations

import hmac
import hashlib
import os
import socket
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

from .digest import HashAlgorithm, hash_leaf
from .registers import RegisterBank
from .sml import MalformedLogError, SmlTree, deserialize, serialize
from .validate import ReferenceTree, ShapeMismatchError, ValidationReport, diagnostic_validate

NONCE_SIZE = 16
TAG_SIZE = 32
MSG_REQUEST = 0x01
MSG_RESPONSE = 0x02
MAX_FRAME = 1 << 28


class FramingError(ConnectionError):
    pass


class QuoteRejected(Exception):
    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason


@dataclass(frozen=True)
class Quote:
    hash_alg: HashAlgorithm
    nonce: bytes
    root_digests: Tuple[Tuple[int, bytes], ...]
    sml_digest: bytes
    tag: bytes = b""

    def signed_part(self) -> bytes:
        out = bytearray([self.hash_alg.value])
        out += self.nonce
        out += struct.pack(">I", len(self.root_digests))
        for index, value in self.root_digests:
            out += struct.pack(">I", index) + value
        out += self.sml_digest
        return bytes(out)

    def encode(self) -> bytes:
        return self.signed_part() + self.tag

    @classmethod
    def decode(cls, data: bytes) -> Tuple["Quote", int]:
        """Parse a quote from the front of ``data``; returns it and its length."""
        try:
            alg = HashAlgorithm(data[0])
            size = alg.output_length
            pos = 1
            nonce = data[pos:pos + NONCE_SIZE]
            pos += NONCE_SIZE
            (count,) = struct.unpack_from(">I", data, pos)
            pos += 4
            if count > 1024:
                raise FramingError(f"implausible root count {count}")
            roots = []
            for _ in range(count):
                (index,) = struct.unpack_from(">I", data, pos)
                roots.append((index, data[pos + 4:pos + 4 + size]))
                pos += 4 + size
            sml_digest = data[pos:pos + size]
            pos += size
            tag = data[pos:pos + TAG_SIZE]
            pos += TAG_SIZE
        except (IndexError, ValueError, struct.error) as exc:
            raise FramingError(f"malformed quote: {exc}") from None
        if pos > len(data):
            raise FramingError("quote truncated")
        return cls(alg, nonce, tuple(roots), sml_digest, tag), pos


def _tag(secret: bytes, body: bytes) -> bytes:
    return hmac.new(secret, body, hashlib.sha256).digest()


def load_secret(path: Union[str, Path]) -> bytes:
    secret = Path(path).read_bytes().strip()
    if not secret:
        raise ValueError(f"secret file {path} is empty")
    return secret


def make_quote(
    bank: RegisterBank,
    sml: SmlTree,
    nonce: bytes,
    secret: bytes,
    registers: Optional[Sequence[int]] = None,
) -> Quote:
    if not sml.sealed:
        raise ValueError("cannot quote an unfinalized tree")
    if len(nonce) != NONCE_SIZE:
        raise ValueError(f"nonce must be {NONCE_SIZE} bytes")
    if registers is None:
        registers = bank.locked()
    roots = tuple((i, bank.pcr_read(i)) for i in registers)
    unsigned = Quote(bank.hash_alg, nonce, roots, hash_leaf(serialize(sml), bank.hash_alg))
    return Quote(unsigned.hash_alg, nonce, roots, unsigned.sml_digest, _tag(secret, unsigned.signed_part()))


def verify_quote(
    quote: Quote,
    nonce: bytes,
    secret: bytes,
    sml_bytes: bytes,
    reference: ReferenceTree,
) -> ValidationReport:
    """Check the quote, then validate the log against the first quoted root.

    Raises :class:`QuoteRejected` before any traversal if the tag, nonce or
    log digest does not match.
    """
    if not hmac.compare_digest(_tag(secret, quote.signed_part()), quote.tag):
        raise QuoteRejected("tag")
    if not hmac.compare_digest(quote.nonce, nonce):
        raise QuoteRejected("nonce")
    if hash_leaf(sml_bytes, quote.hash_alg) != quote.sml_digest:
        raise QuoteRejected("sml_digest")
    if not quote.root_digests:
        raise QuoteRejected("roots", "quote carries no root")
    try:
        sml = deserialize(sml_bytes)
        return diagnostic_validate(sml, quote.root_digests[0][1], reference)
    except (MalformedLogError, ShapeMismatchError) as exc:
        raise QuoteRejected("sml", str(exc)) from None


# -- framing ----------------------------------------------------------------


def send_frame(sock: socket.socket, payload: bytes) -> None:
    sock.sendall(struct.pack(">I", len(payload)) + payload)


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        try:
            chunk = sock.recv(n - len(buf))
        except socket.timeout:
            raise FramingError("timed out waiting for peer") from None
        if not chunk:
            raise FramingError(f"stream closed after {len(buf)} of {n} bytes")
        buf += chunk
    return bytes(buf)


def recv_frame(sock: socket.socket) -> bytes:
    (length,) = struct.unpack(">I", _recv_exact(sock, 4))
    if length > MAX_FRAME:
        raise FramingError(f"frame of {length} bytes exceeds limit")
    return _recv_exact(sock, length)


def serve(
    channel: socket.socket,
    bank: RegisterBank,
    sml: SmlTree,
    secret: bytes,
    registers: Optional[Sequence[int]] = None,
) -> Quote:
    """Answer one challenge on ``channel``; returns the quote that was sent."""
    msg = recv_frame(channel)
    if len(msg) != 1 + NONCE_SIZE or msg[0] != MSG_REQUEST:
        raise FramingError("bad request message")
    quote = make_quote(bank, sml, msg[1:], secret, registers)
    send_frame(channel, bytes([MSG_RESPONSE]) + quote.encode() + serialize(sml))
    return quote


@dataclass
class SessionOutcome:
    report: Optional[ValidationReport] = None
    rejection: Optional[str] = None

    @property
    def accepted(self) -> bool:
        return self.rejection is None


def request(
    channel: socket.socket,
    secret: bytes,
    reference: ReferenceTree,
    nonce: Optional[bytes] = None,
) -> SessionOutcome:
    """Challenge the prover on ``channel`` and validate its answer."""
    if nonce is None:
        nonce = os.urandom(NONCE_SIZE)
    send_frame(channel, bytes([MSG_REQUEST]) + nonce)
    msg = recv_frame(channel)
    if not msg or msg[0] != MSG_RESPONSE:
        raise FramingError("bad response message")
    quote, used = Quote.decode(msg[1:])
    sml_bytes = msg[1 + used:]
    try:
        return SessionOutcome(report=verify_quote(quote, nonce, secret, sml_bytes, reference))
    except QuoteRejected as exc:
        return SessionOutcome(rejection=exc.reason)


def loopback_session(
    bank: RegisterBank,
    sml: SmlTree,
    secret: bytes,
    reference: ReferenceTree,
    verifier_secret: Optional[bytes] = None,
    timeout: float = 10.0,
) -> SessionOutcome:
    """Run prover and verifier over a local socket pair in two threads."""
    import threading

    prover_end, verifier_end = socket.socketpair()
    prover_end.settimeout(timeout)
    verifier_end.settimeout(timeout)
    errors: List[BaseException] = []

    def prover():
        try:
            serve(prover_end, bank, sml, secret)
        except BaseException as exc:  # surfaced to the caller below
            errors.append(exc)

    thread = threading.Thread(target=prover, daemon=True)
    thread.start()
    try:
        outcome = request(verifier_end, verifier_secret or secret, reference)
    finally:
        thread.join(timeout)
        prover_end.close()
        verifier_end.close()
    if errors:
        raise errors[0]
    return outcome
