"""Component manifests: the ordered measurement stream fed to the builder.

One entry per line::

    <component_id> sha1:<hex> | sha256:<hex> | file:<path>

Blank lines and ``#`` comments are ignored.  File paths are relative to the
manifest's directory.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import List, Union

from .digest import HashAlgorithm, hash_leaf


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class Entry:
    component_id: str
    kind: str  # "sha1", "sha256" or "file"
    value: str


@dataclass
class Manifest:
    entries: List[Entry]
    base: Path = Path(".")

    @property
    def ids(self) -> List[str]:
        return [e.component_id for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def digests(self, alg: HashAlgorithm) -> List[bytes]:
        out = []
        for e in self.entries:
            if e.kind == "file":
                path = Path(e.value)
                if not path.is_absolute():
                    path = self.base / path
                out.append(hash_leaf(path.read_bytes(), alg))
                continue
            if e.kind != alg.hashlib_name:
                raise ManifestError(
                    f"{e.component_id}: {e.kind} digest cannot be used in a {alg.name} tree"
                )
            try:
                raw = bytes.fromhex(e.value)
            except ValueError:
                raise ManifestError(f"{e.component_id}: bad hex digest") from None
            if len(raw) != alg.output_length:
                raise ManifestError(f"{e.component_id}: digest has {len(raw)} bytes")
            out.append(raw)
        return out


def parse_manifest(text: str, base: Union[str, Path] = ".") -> Manifest:
    entries = []
    seen = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2 or ":" not in parts[1]:
            raise ManifestError(f"line {lineno}: expected '<id> <kind>:<value>'")
        cid, source = parts
        kind, value = source.split(":", 1)
        if kind not in ("sha1", "sha256", "file"):
            raise ManifestError(f"line {lineno}: unknown source kind {kind!r}")
        if cid in seen:
            raise ManifestError(f"line {lineno}: duplicate component id {cid!r}")
        seen.add(cid)
        entries.append(Entry(cid, kind, value))
    return Manifest(entries, Path(base))


def load_manifest(path: Union[str, Path]) -> Manifest:
    path = Path(path)
    return parse_manifest(path.read_text(), path.parent)
