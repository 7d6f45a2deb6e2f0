"""
Spectral Flow Toolkit - Run Output

Writes one experiment's artifacts under <out>/<experiment>/:
summary.json, resolved-config.json and CSV tables whose first line is a
'#' comment naming units and the resolved parameters.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

from .models import ExperimentConfig, ExperimentReport

logger = logging.getLogger(__name__)


def _jsonable(value: Any) -> Any:
    if hasattr(value, "item"):
        return value.item()
    return str(value)


class ExperimentWriter:
    """Artifact directory for one experiment run."""

    def __init__(self, out_dir: str, experiment: str):
        self.root = Path(out_dir) / experiment
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def _track(self, path: Path) -> str:
        name = path.name
        if name not in self.files:
            self.files.append(name)
        return str(path)

    def write_config(self, config: ExperimentConfig) -> str:
        path = self.root / "resolved-config.json"
        path.write_text(config.model_dump_json(indent=2) + "\n")
        return self._track(path)

    def write_csv(
        self,
        name: str,
        columns: Sequence[str],
        rows: Iterable[Sequence[Any]],
        units: str = "",
        params: Optional[dict] = None,
    ) -> str:
        path = self.root / f"{name}.csv"
        comment = f"# units: {units or 'dimensionless'}; params: {json.dumps(params or {}, sort_keys=True, default=_jsonable)}"
        with path.open("w", newline="") as handle:
            handle.write(comment + "\n")
            writer = csv.writer(handle)
            writer.writerow(columns)
            for row in rows:
                writer.writerow([repr(x) if isinstance(x, float) else x for x in row])
        logger.debug("Wrote %s", path)
        return self._track(path)

    def write_summary(self, report: ExperimentReport) -> str:
        path = self.root / "summary.json"
        self._track(path)
        report.files = list(self.files)
        path.write_text(report.model_dump_json(indent=2) + "\n")
        return str(path)
