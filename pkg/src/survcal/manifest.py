"""Run manifests: config snapshot, input hashes, artifact inventory."""
from __future__ import annotations

import datetime
import hashlib
import json
from pathlib import Path

from . import __version__
from .errors import CorruptArtifactError

MANIFEST_NAME = "manifest.json"
MANIFEST_FORMAT = "survcal-run 1"


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(
    run_dir: str | Path,
    command: str,
    config: dict,
    inputs: dict[str, str | Path],
    outputs: list[str],
    seed: int | None = None,
    system: str | None = None,
    wall_clock: float | None = None,
) -> Path:
    """Record a command run; outputs are paths relative to run_dir."""
    run_dir = Path(run_dir)
    data = {
        "format": MANIFEST_FORMAT,
        "version": __version__,
        "command": command,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(
            timespec="seconds"
        ),
        "wall_clock_seconds": wall_clock,
        "seed": seed,
        "system": system,
        "config": config,
        "inputs": {
            name: {"path": str(Path(p).resolve()), "sha256": file_sha256(p)}
            for name, p in sorted(inputs.items())
        },
        "outputs": sorted(outputs),
    }
    path = run_dir / MANIFEST_NAME
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(run_dir: str | Path) -> dict:
    path = Path(run_dir) / MANIFEST_NAME
    if not path.is_file():
        raise CorruptArtifactError(f"no {MANIFEST_NAME} in {run_dir}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CorruptArtifactError(f"unreadable manifest: {exc}") from None
    if data.get("format") != MANIFEST_FORMAT:
        raise CorruptArtifactError(f"unexpected manifest format {data.get('format')!r}")
    return data


def verify_manifest(run_dir: str | Path) -> dict:
    """Check recorded artifacts exist and input hashes still match."""
    run_dir = Path(run_dir)
    data = read_manifest(run_dir)
    for rel in data["outputs"]:
        if not (run_dir / rel).is_file():
            raise CorruptArtifactError(f"missing artifact {rel}")
    for name, entry in data["inputs"].items():
        p = Path(entry["path"])
        if not p.is_file():
            raise CorruptArtifactError(f"missing input {name}: {p}")
        if file_sha256(p) != entry["sha256"]:
            raise CorruptArtifactError(f"input {name} changed since the run: {p}")
    return data
