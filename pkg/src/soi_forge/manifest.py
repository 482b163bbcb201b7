"""Run manifests: every CLI invocation records its command, parameters,
tool version, input content hashes, and timestamps, so deterministic runs
can be replayed and compared."""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path


def _hash_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def start_manifest(command: str, parameters: dict, inputs: list[str | Path]) -> dict:
    from soi_forge import __version__

    hashes = {}
    for p in inputs:
        p = Path(p)
        if p.is_file():
            hashes[str(p)] = _hash_file(p)
    return {
        "command": command,
        "parameters": {k: _jsonable(v) for k, v in parameters.items()},
        "tool_version": __version__,
        "input_hashes": hashes,
        "started": datetime.now(timezone.utc).isoformat(),
    }


def finish_manifest(manifest: dict, path: str | Path) -> None:
    manifest["finished"] = datetime.now(timezone.utc).isoformat()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(value):
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (tuple, list)):
        return [_jsonable(v) for v in value]
    return value
