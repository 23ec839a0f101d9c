"""
Truth-table condition encoding.

Every input/output node receives its 256-bit signal column packed into 32
bytes (first bit of each group most significant) and scaled by 1/256. AND
nodes get zeros. Tables with fewer than 256 rows are padded by repeating
rows; tables with more are subsampled to 256 rows.
"""

from typing import Optional

import numpy as np

from aigdiff.exceptions import ShapeMismatchError
from aigdiff.models.aig import NodeRoster, TruthTable

SIGNAL_ROWS = 256
COND_DIM = SIGNAL_ROWS // 8
DEFAULT_ROW_SEED = 0


def select_rows(n_in: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Row indices (length 256) used to build the condition signals."""
    rows = 1 << n_in
    if rows == SIGNAL_ROWS:
        return np.arange(rows, dtype=np.int64)
    if rows < SIGNAL_ROWS:
        if rng is None:
            return np.resize(np.arange(rows, dtype=np.int64), SIGNAL_ROWS)
        extra = rng.choice(rows, size=SIGNAL_ROWS - rows, replace=True)
        return np.concatenate([np.arange(rows, dtype=np.int64), extra.astype(np.int64)])
    if rng is None:
        rng = np.random.default_rng(DEFAULT_ROW_SEED)
    return np.sort(rng.choice(rows, size=SIGNAL_ROWS, replace=False)).astype(np.int64)


def pack_signals(bits: np.ndarray) -> np.ndarray:
    """(m, 256) bits -> (m, 32) values in [0, 255/256]."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape[-1] != SIGNAL_ROWS:
        raise ShapeMismatchError(f"signals must have {SIGNAL_ROWS} rows, got {bits.shape[-1]}")
    return np.packbits(bits, axis=-1).astype(np.float64) / 256.0


def encode_condition(
    tt: TruthTable,
    roster: NodeRoster,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """
    Per-node condition rows (n x 32).

    Args:
        tt: Target truth table
        roster: Node ids carrying each primary input and output
        rng: Optional stream for random row padding / subsampling

    Returns:
        float64 array of shape (roster.n, 32)

    Raises:
        ShapeMismatchError: If the roster disagrees with the table's I/O counts
    """
    if roster.n_in != tt.n_in or roster.n_out != tt.n_out:
        raise ShapeMismatchError(
            f"Roster has {roster.n_in} inputs / {roster.n_out} outputs, "
            f"truth table has {tt.n_in} / {tt.n_out}"
        )
    rows = select_rows(tt.n_in, rng)

    input_bits = ((rows[None, :] >> np.arange(tt.n_in, dtype=np.int64)[:, None]) & 1).astype(
        np.uint8
    )
    output_bits = tt.columns[:, rows]

    cond = np.zeros((roster.n, COND_DIM), dtype=np.float64)
    if roster.n_in:
        cond[list(roster.input_ids)] = pack_signals(input_bits)
    if roster.n_out:
        cond[list(roster.output_ids)] = pack_signals(output_bits)
    return cond
