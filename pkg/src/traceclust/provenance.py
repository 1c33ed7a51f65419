"""Provenance headers for artifact files.

Every file the toolkit writes starts with ``#`` comment lines recording the
tool version, a hash of the resolved configuration, and digests of the input
files it was derived from. Headers carry no timestamps so identical runs
produce byte-identical artifacts.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

TOOL_NAME = "traceclust"
TOOL_VERSION = "0.1.0"


def config_hash(config: dict[str, Any]) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def file_digest(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def header_lines(config: dict[str, Any] | None = None,
                 inputs: list[str | Path] | None = None) -> list[str]:
    lines = [f"# {TOOL_NAME} {TOOL_VERSION}"]
    if config is not None:
        lines.append(f"# config sha256={config_hash(config)}")
    for path in inputs or []:
        lines.append(f"# input {Path(path).name} sha256={file_digest(path)}")
    return lines


def write_text_artifact(path: str | Path, body_lines: list[str],
                        config: dict[str, Any] | None = None,
                        inputs: list[str | Path] | None = None) -> None:
    lines = header_lines(config, inputs) + body_lines
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_json_artifact(path: str | Path, obj: Any,
                        config: dict[str, Any] | None = None,
                        inputs: list[str | Path] | None = None) -> None:
    body = json.dumps(obj, indent=2, sort_keys=False)
    write_text_artifact(path, [body], config, inputs)


def read_artifact_lines(path: str | Path) -> list[str]:
    """Data lines of an artifact, with comment headers and blanks stripped."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            out.append(line)
    return out


def load_json_artifact(path: str | Path) -> Any:
    text = Path(path).read_text(encoding="utf-8")
    body = "\n".join(line for line in text.splitlines()
                     if not line.lstrip().startswith("#"))
    return json.loads(body)
