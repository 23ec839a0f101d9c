"""
Dataset Repository - JSONL persistence for graph datasets

One graph per line:
{"n_in", "n_out", "node_types", "levels"?, "edges", "tt"}
Level statistics live in a JSON sidecar next to the dataset.
"""

import json
import logging
from pathlib import Path
from typing import Iterable, Iterator, List, Tuple, Union

import numpy as np
from pydantic import ValidationError

from aigdiff.exceptions import DatasetFormatError, GraphError, LevelStructureError
from aigdiff.models.aig import TruthTable, structural_levels
from aigdiff.models.dag import EDGE_ABSENT, NODE_INPUT, NODE_OUTPUT, Dag
from aigdiff.models.records import GraphRecord
from aigdiff.services.level_structure import LevelStructureStats

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
Example = Tuple[Dag, TruthTable]

STATS_SUFFIX = ".stats.json"


def stats_path_for(dataset_path: PathLike) -> Path:
    """Sidecar path: '<dataset>.stats.json'."""
    return Path(str(dataset_path) + STATS_SUFFIX)


def record_from_graph(dag: Dag, tt: TruthTable, include_levels: bool = False) -> GraphRecord:
    return GraphRecord(
        n_in=tt.n_in,
        n_out=tt.n_out,
        node_types=[int(v) for v in dag.node_index],
        levels=[int(v) for v in dag.levels] if include_levels else None,
        edges=[[c, p, k] for c, p, k in dag.edge_list()],
        tt=tt.to_hex(),
    )


def graph_from_record(record: GraphRecord) -> Example:
    """
    Rebuild (Dag, TruthTable) from a validated record.

    Raises:
        GraphError: If ids, counts or levels are inconsistent
    """
    n = len(record.node_types)
    types = np.asarray(record.node_types, dtype=np.int64)
    if int(np.sum(types == NODE_INPUT)) < record.n_in:
        raise GraphError(f"record declares n_in={record.n_in} but has fewer input nodes")
    if int(np.sum(types == NODE_OUTPUT)) != record.n_out:
        raise GraphError(f"record declares n_out={record.n_out} but output count differs")
    if len(record.tt) != record.n_out:
        raise GraphError(
            f"record has {len(record.tt)} truth-table columns for {record.n_out} outputs"
        )

    edges = np.full((n, n), EDGE_ABSENT, dtype=np.int64)
    for child, parent, cat in record.edges:
        if not (0 <= child < n and 0 <= parent < n):
            raise GraphError(f"edge ({child}, {parent}) references a node outside 0..{n - 1}")
        edges[child, parent] = cat

    if record.levels is not None:
        if len(record.levels) != n:
            raise GraphError(f"record has {len(record.levels)} levels for {n} nodes")
        levels = np.asarray(record.levels, dtype=np.int64)
    else:
        levels = structural_levels(types, edges)

    dag = Dag.from_indices(types, edges, levels)
    tt = TruthTable.from_hex(record.n_in, record.tt)
    return dag, tt


def encode_line(record: GraphRecord) -> str:
    """Serialize with fixed key order; the optional levels key is omitted when unset."""
    return json.dumps(record.model_dump(exclude_none=True), separators=(",", ":"))


class DatasetRepository:
    """
    Repository for JSONL graph datasets.

    Reads stream lazily; malformed lines raise DatasetFormatError with the
    1-based line number.
    """

    def __init__(self, path: PathLike):
        self.path = Path(path)

    def read(self) -> Iterator[Example]:
        """Stream (Dag, TruthTable) pairs."""
        count = 0
        with self.path.open("r", encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    record = GraphRecord.model_validate(json.loads(line))
                    example = graph_from_record(record)
                except json.JSONDecodeError as exc:
                    message = f"{self.path}: invalid JSON ({exc.msg})"
                    raise DatasetFormatError(message, line_no) from exc
                except ValidationError as exc:
                    message = f"{self.path}: {exc.errors()[0]['msg']}"
                    raise DatasetFormatError(message, line_no) from exc
                except GraphError as exc:
                    raise DatasetFormatError(f"{self.path}: {exc}", line_no) from exc
                count += 1
                yield example
        logger.debug(f"[DatasetRepository] Read {count} graphs from {self.path}")

    def read_all(self) -> List[Example]:
        return list(self.read())

    def write(self, examples: Iterable[Example], include_levels: bool = False) -> int:
        """
        Write examples, replacing the file.

        Returns:
            Number of records written
        """
        return self.write_records(
            record_from_graph(dag, tt, include_levels=include_levels) for dag, tt in examples
        )

    def write_records(self, records: Iterable[GraphRecord]) -> int:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        count = 0
        with self.path.open("w", encoding="utf-8", newline="\n") as handle:
            for record in records:
                handle.write(encode_line(record) + "\n")
                count += 1
        logger.info(f"[DatasetRepository] Wrote {count} records to {self.path}")
        return count

    # ------------------------------------------------------------------
    # Level statistics sidecar
    # ------------------------------------------------------------------
    def write_stats(self, stats: LevelStructureStats) -> Path:
        target = stats_path_for(self.path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(json.dumps(stats.to_dict(), indent=2) + "\n", encoding="utf-8")
        logger.info(f"[DatasetRepository] Wrote level statistics to {target}")
        return target

    def read_stats(self) -> LevelStructureStats:
        return load_stats(stats_path_for(self.path))


def load_stats(path: PathLike) -> LevelStructureStats:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        return LevelStructureStats.from_dict(data)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{path}: invalid JSON ({exc.msg})") from exc
    except LevelStructureError as exc:
        raise DatasetFormatError(f"{path}: {exc}") from exc
