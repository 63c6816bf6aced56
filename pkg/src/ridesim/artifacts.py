"""Artifact files with provenance headers, and named random streams.

Every file the command line writes starts with comment lines recording the
package version, the configuration hash, and the seed. The single line
carrying wall-clock time starts with `# written`, so two runs of the same
command can be compared byte for byte after dropping that one line.
"""

from __future__ import annotations

import csv
import hashlib
import io
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

MAGIC = "ridesim"


def seed_stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named purpose under one run seed.

    The name is hashed so adding a new stream never shifts the draws of
    existing ones.
    """
    digest = hashlib.sha256(name.encode()).digest()
    words = [int.from_bytes(digest[i:i + 4], "big") for i in range(0, 16, 4)]
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF,
                                                         *words]))


def header_lines(version: str, config_digest: str, seed: int) -> list:
    stamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    return [f"# {MAGIC} {version}",
            f"# config {config_digest}",
            f"# seed {seed}",
            f"# written {stamp}"]


def write_artifact(path, body_lines, version: str, config_digest: str,
                   seed: int):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = header_lines(version, config_digest, seed) + list(body_lines)
    path.write_text("\n".join(lines) + "\n")


def csv_lines(columns, rows) -> list:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow(row)
    return buf.getvalue().splitlines()


def write_csv_artifact(path, columns, rows, version: str, config_digest: str,
                       seed: int):
    write_artifact(path, csv_lines(columns, rows), version, config_digest,
                   seed)


def read_data_lines(path) -> list:
    """File lines with comment and blank lines dropped."""
    out = []
    for line in Path(path).read_text().splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        out.append(line)
    return out


def read_csv_artifact(path) -> tuple:
    """(columns, rows) from a headered CSV artifact."""
    lines = read_data_lines(path)
    if not lines:
        raise ValueError(f"{path} has no data")
    reader = csv.reader(lines)
    parsed = list(reader)
    return parsed[0], parsed[1:]


def comparable_lines(path) -> list:
    """All lines except the wall-clock one, for byte-level comparison."""
    return [ln for ln in Path(path).read_text().splitlines()
            if not ln.startswith("# written ")]
