"""Reproducibility manifests written next to every artifact.

A manifest records the checksums of the inputs an artifact was derived
from, the parameters, and the seeds, so rerunning with the same manifest
contents reproduces the artifact byte for byte. Manifests deliberately
contain no timestamps or absolute-path normalization: identical runs
produce identical manifest files.
"""

import hashlib
import json
from pathlib import Path
from typing import Mapping


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(artifact: str | Path, inputs: Mapping[str, str | Path],
                   params: Mapping, seeds: Mapping | None = None) -> Path:
    """Write `<artifact>.manifest.json` and return its path."""
    artifact = Path(artifact)
    doc = {
        "artifact": artifact.name,
        "artifact_sha256": file_sha256(artifact),
        "inputs": {
            name: {"path": str(path), "sha256": file_sha256(path)}
            for name, path in sorted(inputs.items())
        },
        "params": dict(params),
        "seeds": dict(seeds or {}),
    }
    out = artifact.with_name(artifact.name + ".manifest.json")
    with out.open("w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out
