from typing import Any, Generic, List, Tuple, TypeVar

__all__ = ["TaskQueue"]

T = TypeVar("T")


class TaskQueue(Generic[T]):
    """
    TaskQueue: stable min-priority queue on an array-backed binary heap.
    - Entries are stored as (priority, insertion_index, task) so equal priorities pop FIFO
      and tasks themselves are never compared.
    - Used for the ready set of the training scheduler and the simulated clock.
    - O(log n) push/pop, O(1) peekitem.
    """

    def __init__(self) -> None:
        self._data: List[Tuple[Any, int, T]] = []
        self._counter = 0

    def push(self, task: T, priority: Any) -> None:
        """
        Add a task. O(log n)
        :param priority: any value comparable with the other priorities (tuples work).
        """
        self._data.append((priority, self._counter, task))
        self._counter += 1
        self._sift_up(len(self._data) - 1)

    def pop(self) -> T:
        """
        Remove and return the task with the lowest priority. O(log n)
        :raises IndexError: if the queue is empty.
        """
        return self.popitem()[1]

    def popitem(self) -> Tuple[Any, T]:
        """
        Remove and return (priority, task). O(log n)
        :raises IndexError: if the queue is empty.
        """
        if not self._data:
            raise IndexError("pop from empty task queue")
        root = self._data[0]
        last = self._data.pop()
        if self._data:
            self._data[0] = last
            self._sift_down(0)
        return root[0], root[2]

    def peekitem(self) -> Tuple[Any, T]:
        """
        Return (priority, task) of the next task. O(1)
        :raises IndexError: if the queue is empty.
        """
        if not self._data:
            raise IndexError("peek from empty task queue")
        priority, _, task = self._data[0]
        return priority, task

    def __len__(self) -> int:
        return len(self._data)

    def is_empty(self) -> bool:
        return not self._data

    def __repr__(self) -> str:
        return f"TaskQueue(size={len(self._data)})"

    def _less(self, i: int, j: int) -> bool:
        return self._data[i][:2] < self._data[j][:2]

    def _sift_up(self, index: int) -> None:
        while index > 0:
            parent = (index - 1) // 2
            if not self._less(index, parent):
                break
            self._data[index], self._data[parent] = self._data[parent], self._data[index]
            index = parent

    def _sift_down(self, index: int) -> None:
        n = len(self._data)
        while True:
            left, right = 2 * index + 1, 2 * index + 2
            best = index
            if left < n and self._less(left, best):
                best = left
            if right < n and self._less(right, best):
                best = right
            if best == index:
                break
            self._data[index], self._data[best] = self._data[best], self._data[index]
            index = best
