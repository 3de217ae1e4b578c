"""
Nearest-neighbour transfer-learning order of the assembly members.

Tile (i, j, k) with i along x, j along y, k along z. The root (0, 0, 0) trains from
scratch; the first column (0, 0, *) chains along z, the first plane (0, *, *) chains
column to column along y, and every later plane copies from the previous plane along x.
"""

import itertools
from collections import deque
from dataclasses import dataclass
from typing import Deque, Dict, Iterator, List, Optional, Sequence, Tuple

from .queues import TaskQueue

__all__ = ["TransferDAG", "build_transfer_dag", "parent_of", "simulate_makespan", "simulate_schedule"]

Triple = Tuple[int, int, int]
ROOT: Triple = (0, 0, 0)


def parent_of(index: Sequence[int]) -> Optional[Triple]:
    """Parent of a tile index under the transfer rules; None for the root."""
    i, j, k = index
    if i > 0:
        return (i - 1, j, k)
    if j > 0:
        return (0, j - 1, k)
    if k > 0:
        return (0, 0, k - 1)
    return None


@dataclass(frozen=True)
class TransferDAG:
    """
    Dependency tree of the weight transfers (a DAG in which every non-root node has
    exactly one parent).
    """

    counts: Triple
    parents: Dict[Triple, Optional[Triple]]

    @property
    def root(self) -> Triple:
        return ROOT

    @property
    def nodes(self) -> List[Triple]:
        """Tile indices in lexicographic order."""
        return sorted(self.parents)

    @property
    def edges(self) -> List[Tuple[Triple, Triple]]:
        """(parent, child) pairs ordered by child."""
        return [(p, c) for c, p in sorted(self.parents.items()) if p is not None]

    def children(self, node: Triple) -> List[Triple]:
        return sorted(c for c, p in self.parents.items() if p == node)

    def depth(self, node: Sequence[int]) -> int:
        """Number of edges from the root; equals i + j + k."""
        node = tuple(node)
        if node not in self.parents:
            raise KeyError(node)
        steps = 0
        while self.parents[node] is not None:
            node = self.parents[node]
            steps += 1
        return steps

    def levels(self) -> List[List[Triple]]:
        """Nodes grouped by depth, breadth-first from the root."""
        children: Dict[Triple, List[Triple]] = {n: [] for n in self.parents}
        for parent, child in self.edges:
            children[parent].append(child)
        levels: List[List[Triple]] = []
        queue: Deque[Tuple[Triple, int]] = deque([(ROOT, 0)])
        while queue:
            node, depth = queue.popleft()
            if depth == len(levels):
                levels.append([])
            levels[depth].append(node)
            queue.extend((child, depth + 1) for child in children[node])
        return [sorted(level) for level in levels]

    def longest_path_length(self) -> int:
        return len(self.levels()) - 1

    def topological_order(self) -> Iterator[Triple]:
        for level in self.levels():
            yield from level

    def to_dict(self) -> dict:
        return {"counts": list(self.counts), "edges": [[list(p), list(c)] for p, c in self.edges]}

    def __len__(self) -> int:
        return len(self.parents)


def build_transfer_dag(counts: Sequence[int]) -> TransferDAG:
    """
    :raises ValueError: if a count is below 1.
    """
    counts = tuple(int(n) for n in counts)
    if len(counts) != 3 or any(n < 1 for n in counts):
        raise ValueError(f"counts must be three integers >= 1, got {counts}")
    parents = {ix: parent_of(ix) for ix in itertools.product(*(range(n) for n in counts))}
    return TransferDAG(counts, parents)


def simulate_schedule(dag: TransferDAG, workers: Optional[int] = None, task_cost: int = 1) -> Dict[Triple, int]:
    """
    List-schedule the DAG on a discrete clock: whenever a worker is free, the ready
    task with the smallest (depth, index) starts. Every task takes ``task_cost`` ticks.
    :param workers: worker count; None means one worker per node.
    :return: start tick of every node.
    """
    workers = len(dag) if workers is None else int(workers)
    if workers < 1 or task_cost < 1:
        raise ValueError("workers and task_cost must be >= 1")
    children: Dict[Triple, List[Triple]] = {n: [] for n in dag.parents}
    for parent, child in dag.edges:
        children[parent].append(child)
    ready: TaskQueue[Triple] = TaskQueue()
    ready.push(ROOT, (0, ROOT))
    running: TaskQueue[Triple] = TaskQueue()
    starts: Dict[Triple, int] = {}
    clock = 0
    while len(starts) < len(dag):
        while not ready.is_empty() and len(running) < workers:
            node = ready.pop()
            starts[node] = clock
            running.push(node, clock + task_cost)
        clock, node = running.popitem()
        finished = [node]
        while not running.is_empty() and running.peekitem()[0] == clock:
            finished.append(running.pop())
        for node in finished:
            for child in children[node]:
                ready.push(child, (dag.depth(child), child))
    return starts


def simulate_makespan(dag: TransferDAG, workers: Optional[int] = None, task_cost: int = 1) -> int:
    """Total ticks until every member is trained under ``simulate_schedule``."""
    starts = simulate_schedule(dag, workers, task_cost)
    return max(starts.values()) + task_cost
