import csv
import io
import json
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


class ArtifactError(Exception):
    """Custom exception for artifact store errors."""
    pass


class ArtifactStore:
    """
    Result files written under one output directory.
    """

    def __init__(self, root_dir: Path):
        self.root_dir = Path(root_dir).resolve()
        self.root_dir.mkdir(parents=True, exist_ok=True)

    def _resolve_path(self, relative_path: str) -> Path:
        """
        Resolve a path safely within the output directory.
        Prevents directory traversal.
        """
        path = (self.root_dir / relative_path).resolve()

        if path != self.root_dir and self.root_dir not in path.parents:
            raise ArtifactError(f"Refusing to write outside {self.root_dir}: {relative_path}")

        return path

    def path(self, relative_path: str) -> Path:
        return self._resolve_path(relative_path)

    def write_text(self, relative_path: str, content: str) -> Path:
        """
        Write content to a file, replacing any previous run's artifact.
        """
        path = self._resolve_path(relative_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        # newline="" keeps "\n" line endings on every platform
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write(content)
        return path

    def write_csv(self, relative_path: str, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(value) for value in row])
        return self.write_text(relative_path, buffer.getvalue())

    def write_jsonl(self, relative_path: str, records: Iterable[Mapping]) -> Path:
        lines = [json.dumps(record, sort_keys=True) for record in records]
        return self.write_text(relative_path, "\n".join(lines) + ("\n" if lines else ""))


def format_cell(value) -> str:
    """Floats are written with repr precision so reruns compare byte for byte."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def read_csv(path: Path) -> list:
    """Rows of a CSV artifact as dicts."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"CSV file not found: {path}")
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))
