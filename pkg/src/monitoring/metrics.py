import json
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Union

from src.monitoring.logger import setup_logger

HEADER = "header"
ITERATION = "iteration"


class MetricsWriter:
    """
        JSON-lines metrics stream: one header record, then one record per
        iteration. Records carry no wall-clock values, so two runs with the
        same seed write byte-identical files.
    """

    def __init__(self, path: Optional[Union[str, Path]] = None):
        self.path = Path(path) if path is not None else None
        self.records: List[Dict[str, Any]] = []
        self.logger = setup_logger(__name__)
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def _append(self, record: Dict[str, Any]) -> None:
        self.records.append(record)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(json.dumps(record, sort_keys=True) + "\n")

    def write_header(self, config: Dict[str, Any], config_hash: str, root: Dict[str, Any]) -> None:
        if self.path is not None and self.path.exists():
            self.path.unlink()
        self.records = []
        self._append({"type": HEADER, "config": config, "config_hash": config_hash, "root": root})

    def write_iteration(self, record: Dict[str, Any]) -> None:
        self._append({"type": ITERATION, **record})

    def resume_at(self, iteration: int) -> None:
        """Drop records of iterations >= iteration, keeping the header"""
        if self.path is None or not self.path.exists():
            return
        kept = [r for r in read_metrics(self.path)
                if r["type"] == HEADER or r["iteration"] < iteration]
        with open(self.path, "w", encoding="utf-8") as f:
            for record in kept:
                f.write(json.dumps(record, sort_keys=True) + "\n")
        self.records = kept
        self.logger.info(f"Metrics stream {self.path} truncated to {len(kept) - 1} iterations for resume")


def read_metrics(path: Union[str, Path]) -> List[Dict[str, Any]]:
    return list(iter_metrics(path))


def iter_metrics(path: Union[str, Path]) -> Iterator[Dict[str, Any]]:
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                yield json.loads(line)
