from __future__ import annotations

import csv
import hashlib
import io
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode())


def write_csv(path: str | Path, schema: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """CSV with a leading ``# schema: <name>`` line so readers can check the format."""
    buf = io.StringIO()
    buf.write(f"# schema: {schema}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    atomic_write_text(path, buf.getvalue())


def read_csv(path: str | Path) -> tuple[str, list[dict]]:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# schema: "):
        raise ValueError(f"{path}: missing schema header line")
    return lines[0][len("# schema: "):], list(csv.DictReader(lines[1:]))


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if v == float("inf"):
            return "inf"
        return repr(v)
    return str(v)


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def spawn_rngs(seed: int, names: Sequence[str]) -> dict[str, np.random.Generator]:
    """Independent named streams split deterministically from one master seed."""
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.default_rng(c) for n, c in zip(names, children)}
