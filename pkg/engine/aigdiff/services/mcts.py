"""
MCTS Refinement Service

Post-hoc search over AIG rewiring actions. An action picks one AND or output
gate and redraws its children from strictly lower levels with random
polarities. Reward is the exact function accuracy against the target truth
table. Selection is UCB, expansion uses progressive widening, rollouts apply
random actions up to a depth limit, and the final circuit is never worse than
the starting one.
"""

import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from aigdiff.exceptions import NoEditableGateError
from aigdiff.models.aig import (
    Aig,
    AndGate,
    OutputWire,
    TruthTable,
    canonicalize,
    function_accuracy,
    simulate,
)
from aigdiff.models.configs import MctsConfig

logger = logging.getLogger(__name__)

PERFECT_REWARD = 1.0


@dataclass(frozen=True)
class EditAction:
    """Rewire `target` to `children` ((id, negated) pairs: two for AND, one for output)."""

    target: int
    children: Tuple[Tuple[int, bool], ...]


def editable_gates(state: Aig) -> List[Tuple[int, np.ndarray]]:
    """(gate id, candidate children) for every AND / output gate with a lower-level candidate."""
    levels = state.levels()
    pool = np.arange(state.first_output_id)
    result = []
    for gid in range(state.first_and_id, state.num_nodes):
        candidates = pool[levels[pool] < levels[gid]]
        if candidates.size:
            result.append((gid, candidates))
    return result


def sample_action(state: Aig, rng: np.random.Generator) -> EditAction:
    """
    Uniform gate, children uniform without replacement from lower levels, fair-coin polarities.

    An AND gate with a single candidate takes it on both fanins.

    Raises:
        NoEditableGateError: If no AND or output gate has a candidate child
    """
    gates = editable_gates(state)
    if not gates:
        raise NoEditableGateError(
            f"AIG with {state.n_and} AND and {state.n_out} output gates has nothing to edit"
        )
    target, candidates = gates[int(rng.integers(len(gates)))]
    arity = 1 if target >= state.first_output_id else 2
    if candidates.size >= arity:
        picked = rng.choice(candidates, size=arity, replace=False)
    else:
        picked = np.repeat(candidates, arity)
    polarity = rng.random(arity) < 0.5
    return EditAction(
        target=int(target),
        children=tuple((int(c), bool(neg)) for c, neg in zip(picked, polarity)),
    )


def apply_action(state: Aig, action: EditAction) -> Aig:
    """
    Rewire one gate and restore the (level, id) ordering of AND gates.

    Every edge of the edited circuit rises in the pre-edit levels, so sorting
    AND gates by those levels gives a topological order before canonicalizing.
    """
    levels = state.levels()
    gates = list(state.and_gates)
    outputs = list(state.outputs)
    if action.target >= state.first_output_id:
        (child, negated), = action.children
        outputs[action.target - state.first_output_id] = OutputWire(child, negated)
    else:
        (a, neg_a), (b, neg_b) = action.children
        gates[action.target - state.first_and_id] = AndGate(a, neg_a, b, neg_b)

    order = sorted(range(state.n_and), key=lambda k: (int(levels[state.and_id(k)]), k))
    remap = {i: i for i in range(state.first_and_id)}
    for new_k, old_k in enumerate(order):
        remap[state.and_id(old_k)] = state.and_id(new_k)
    gates = [
        AndGate(remap[g.child_a], g.neg_a, remap[g.child_b], g.neg_b)
        for g in (gates[k] for k in order)
    ]
    outputs = [OutputWire(remap[w.child], w.negated) for w in outputs]
    edited = Aig(state.n_in, state.n_out, tuple(gates), tuple(outputs), state.has_const0)
    edited.validate()
    return canonicalize(edited)


def reward(state: Aig, cond: TruthTable) -> float:
    return function_accuracy(simulate(state), cond)


@dataclass(eq=False)
class SearchNode:
    state: Aig
    parent: Optional["SearchNode"] = None
    action: Optional[EditAction] = None
    children: List["SearchNode"] = field(default_factory=list)
    visits: int = 0
    total_reward: float = 0.0

    @property
    def mean_reward(self) -> float:
        return self.total_reward / self.visits if self.visits else 0.0

    def widening_limit(self, config: MctsConfig) -> int:
        return math.ceil(config.pw_c * max(self.visits, 1) ** config.pw_alpha)

    def ucb_child(self, c: float) -> "SearchNode":
        log_n = math.log(max(self.visits, 1))
        return max(
            self.children,
            key=lambda child: child.mean_reward + c * math.sqrt(log_n / child.visits),
        )

    def robust_child(self) -> "SearchNode":
        return max(self.children, key=lambda child: (child.visits, child.mean_reward))

    def _path(self):
        node: Optional[SearchNode] = self
        while node is not None:
            yield node
            node = node.parent

    def add_visit(self) -> None:
        """Count one visit on this node and every ancestor."""
        for node in self._path():
            node.visits += 1

    def add_reward(self, value: float) -> None:
        for node in self._path():
            node.total_reward += value

    def backpropagate(self, value: float) -> None:
        self.add_visit()
        self.add_reward(value)


class MctsSearch:
    """
    One refinement run; tracks the best circuit seen by any rollout.

    In "serial" mode every simulation finishes before the next one starts and
    a seed fixes the result. In "parallel" mode simulations run in waves of
    `config.workers` threads: selection and expansion count the visit up front
    under the lock, rollouts run unlocked on their own random streams, and
    rewards are added under the lock. Parallel results depend on thread timing.
    """

    def __init__(self, cond: TruthTable, config: MctsConfig, rng: np.random.Generator):
        self.cond = cond
        self.config = config
        self.rng = rng
        self.best_state: Optional[Aig] = None
        self.best_reward = -1.0
        self.evaluations = 0
        self._lock = threading.Lock()

    def _record(self, state: Aig, value: float) -> None:
        self.evaluations += 1
        if value > self.best_reward:
            self.best_reward = value
            self.best_state = state

    def _score(self, state: Aig) -> float:
        value = reward(state, self.cond)
        self._record(state, value)
        return value

    def _select(self, root: SearchNode, rng: np.random.Generator) -> SearchNode:
        """Descend by UCB, expand one child and count its visit along the path."""
        node = root
        while True:
            if len(node.children) < node.widening_limit(self.config):
                action = sample_action(node.state, rng)
                child = SearchNode(apply_action(node.state, action), parent=node, action=action)
                node.children.append(child)
                node = child
                break
            node = node.ucb_child(self.config.ucb_c)
        node.add_visit()
        return node

    def _play_out(self, state: Aig, rng: np.random.Generator) -> Tuple[Aig, float]:
        for _ in range(self.config.rollout_depth):
            state = apply_action(state, sample_action(state, rng))
        return state, reward(state, self.cond)

    def rollout(self, state: Aig) -> float:
        state, value = self._play_out(state, self.rng)
        self._record(state, value)
        return value

    def simulate_once(self, root: SearchNode) -> None:
        node = self._select(root, self.rng)
        node.add_reward(self.rollout(node.state))

    def _simulate_locked(self, root: SearchNode, rng: np.random.Generator) -> None:
        with self._lock:
            node = self._select(root, rng)
        state, value = self._play_out(node.state, rng)
        with self._lock:
            self._record(state, value)
            node.add_reward(value)

    def simulate_parallel(self, root: SearchNode, count: int, executor: ThreadPoolExecutor) -> None:
        """Run `count` simulations from `root` on the executor's threads."""
        seeds = self.rng.integers(0, 2**63 - 1, size=count)
        futures = [
            executor.submit(self._simulate_locked, root, np.random.default_rng(int(seed)))
            for seed in seeds
        ]
        for future in futures:
            future.result()

    def _run_step(self, root: SearchNode, executor: Optional[ThreadPoolExecutor]) -> None:
        if executor is None:
            for _ in range(self.config.simulations):
                self.simulate_once(root)
            return
        remaining = self.config.simulations
        while remaining:
            wave = min(remaining, self.config.workers)
            self.simulate_parallel(root, wave, executor)
            remaining -= wave

    def run(self, start: Aig) -> Aig:
        if self.config.mode == "parallel":
            with ThreadPoolExecutor(max_workers=self.config.workers) as executor:
                return self._search(start, executor)
        return self._search(start, None)

    def _search(self, start: Aig, executor: Optional[ThreadPoolExecutor]) -> Aig:
        root = SearchNode(start)
        root.backpropagate(self._score(start))
        for step in range(self.config.steps):
            self._run_step(root, executor)
            root = root.robust_child()
            root.parent = None
            logger.debug(
                f"[MCTS] Step {step + 1}/{self.config.steps}: root mean={root.mean_reward:.4f} "
                f"visits={root.visits} best={self.best_reward:.4f}"
            )
            if self.best_reward >= PERFECT_REWARD:
                break
        return self.best_state if self.best_state is not None else start


def mcts_refine(
    start: Aig,
    cond: TruthTable,
    config: Optional[MctsConfig] = None,
    rng: Optional[np.random.Generator] = None,
) -> Aig:
    """
    Search for a circuit closer to `cond`, rejecting results that score lower than `start`.

    Args:
        start: Valid starting circuit
        cond: Target truth table
        config: Search budget; MctsConfig defaults when None
        rng: Random stream; seeded from config.seed when None

    Returns:
        The refined circuit, or `start` itself when nothing better was found
    """
    config = config or MctsConfig()
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    start.validate()
    start_reward = reward(start, cond)
    if start_reward >= PERFECT_REWARD:
        return start

    search = MctsSearch(cond, config, rng)
    best = search.run(canonicalize(start))
    if search.best_reward <= start_reward:
        logger.info(f"[MCTS] No improvement over start reward {start_reward:.4f}; keeping start")
        return start
    logger.info(
        f"[MCTS] Reward {start_reward:.4f} -> {search.best_reward:.4f} "
        f"after {search.evaluations} evaluations"
    )
    return best
