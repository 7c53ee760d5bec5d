"""Random mazes by depth-first search and the navigation POMDPs built on them.

A maze with parameter ``n`` lives on a ``(2n-1) x (2n-1)`` grid.  Cells with
both coordinates even are rooms; the DFS spanning tree over rooms opens the
wall cell between consecutive rooms, giving ``2n^2 - 1`` open cells.

Randomness comes from xoshiro256** seeded through splitmix64, so a maze is a
pure function of ``(n, seed)`` and reproducible in any language:

* start room: ``below(n*n)``, rooms numbered row-major;
* at each DFS step the unvisited neighbour rooms of the stack top, listed in
  the order right, left, up, down, are Fisher-Yates shuffled
  (``j = below(i + 1)`` for ``i`` from the end down to 1) and the first one
  is carved;
* goal: ``below(#open)`` into the open cells listed row-major.

``below(k)`` draws 64-bit outputs, rejects those smaller than ``2**64 mod k``
and returns the output modulo ``k``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pomdp import InvalidInput, PomdpModel

_MASK = (1 << 64) - 1

# (drow, dcol) for right, left, up, down
MOVES = ((0, 1), (0, -1), (-1, 0), (1, 0))
ACTION_NAMES = ("right", "left", "up", "down")
# neighbour order for observation bits; bit k set means neighbour k is a wall
NEIGHBOURS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


def splitmix64(state):
    """Return ``(output, new_state)`` of one splitmix64 step."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31), state


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & _MASK


class Xoshiro256:
    """xoshiro256** generator seeded from a 64-bit integer via splitmix64."""

    def __init__(self, seed):
        sm = int(seed) & _MASK
        self.s = []
        for _ in range(4):
            out, sm = splitmix64(sm)
            self.s.append(out)

    def next(self):
        s0, s1, s2, s3 = self.s
        result = (_rotl((s1 * 5) & _MASK, 7) * 9) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s = [s0, s1, s2, s3]
        return result

    def below(self, k):
        if k <= 0:
            raise ValueError("bound must be positive")
        threshold = (1 << 64) % k
        while True:
            r = self.next()
            if r >= threshold:
                return r % k

    def shuffle(self, items):
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]
        return items


@dataclass(frozen=True)
class Maze:
    n: int
    open: np.ndarray
    goal: tuple
    seed: int

    @property
    def side(self):
        return 2 * self.n - 1

    def open_cells(self):
        """Open cells as ``(row, col)`` tuples in row-major order."""
        return [tuple(int(v) for v in rc) for rc in np.argwhere(self.open)]

    def is_open(self, r, c):
        L = self.side
        return 0 <= r < L and 0 <= c < L and bool(self.open[r, c])

    def render(self):
        rows = []
        for r in range(self.side):
            line = []
            for c in range(self.side):
                if (r, c) == self.goal:
                    line.append("G")
                else:
                    line.append("." if self.open[r, c] else "#")
            rows.append("".join(line))
        return "\n".join(rows)

    def to_json(self):
        return {"n": self.n, "seed": self.seed, "goal": list(self.goal),
                "open": self.open.astype(int).tolist()}

    def __eq__(self, other):
        return (isinstance(other, Maze) and self.n == other.n and self.seed == other.seed
                and self.goal == other.goal and np.array_equal(self.open, other.open))

    def __hash__(self):
        return hash((self.n, self.seed, self.goal, self.open.tobytes()))


def generate_maze(n: int, seed: int) -> Maze:
    if int(n) != n or n < 2:
        raise InvalidInput("maze parameter n must be an integer >= 2")
    n = int(n)
    rng = Xoshiro256(seed)
    L = 2 * n - 1
    grid = np.zeros((L, L), dtype=bool)
    grid[::2, ::2] = True
    visited = np.zeros((n, n), dtype=bool)
    start = rng.below(n * n)
    stack = [divmod(start, n)]
    visited[stack[0]] = True
    while stack:
        i, j = stack[-1]
        nbrs = [(i + di, j + dj) for di, dj in MOVES
                if 0 <= i + di < n and 0 <= j + dj < n and not visited[i + di, j + dj]]
        if not nbrs:
            stack.pop()
            continue
        ni, nj = rng.shuffle(nbrs)[0]
        grid[i + ni, j + nj] = True  # wall cell between rooms (2i,2j) and (2ni,2nj)
        visited[ni, nj] = True
        stack.append((ni, nj))
    cells = np.argwhere(grid)
    goal = tuple(int(v) for v in cells[rng.below(len(cells))])
    grid.setflags(write=False)
    return Maze(n=n, open=grid, goal=goal, seed=int(seed))


def maze_is_connected(maze: Maze) -> bool:
    cells = maze.open_cells()
    if not cells:
        return False
    seen = {cells[0]}
    todo = [cells[0]]
    while todo:
        r, c = todo.pop()
        for dr, dc in MOVES:
            nb = (r + dr, c + dc)
            if nb not in seen and maze.is_open(*nb):
                seen.add(nb)
                todo.append(nb)
    return len(seen) == len(cells)


@dataclass(frozen=True, eq=False)
class MazePomdp(PomdpModel):
    """Navigation POMDP of a maze; ``cells[s]`` is the grid cell of state ``s``
    and ``patterns[o]`` the 8-neighbour wall bitmask of observation ``o``."""

    cells: tuple = ()
    patterns: tuple = ()
    goal_state: int = -1


def neighbour_pattern(maze: Maze, r: int, c: int) -> int:
    bits = 0
    for k, (dr, dc) in enumerate(NEIGHBOURS):
        if not maze.is_open(r + dr, c + dc):
            bits |= 1 << k
    return bits


def build_maze_pomdp(maze: Maze, gamma: float, reset: str = "all") -> MazePomdp:
    """Build the navigation POMDP.

    ``reset`` selects where the goal state sends the agent: ``"all"`` (uniform
    over every state, the default) or ``"non_goal"``.
    """
    if reset not in ("all", "non_goal"):
        raise InvalidInput("reset must be 'all' or 'non_goal'")
    cells = maze.open_cells()
    index = {cell: s for s, cell in enumerate(cells)}
    S, A = len(cells), len(MOVES)
    goal = index[maze.goal]
    alpha = np.zeros((S, A, S))
    for s, (r, c) in enumerate(cells):
        if s == goal:
            continue
        for a, (dr, dc) in enumerate(MOVES):
            alpha[s, a, index.get((r + dr, c + dc), s)] = 1.0
    if reset == "all":
        alpha[goal] = 1.0 / S
    else:
        alpha[goal] = 1.0 / (S - 1)
        alpha[goal, :, goal] = 0.0
    reward = np.zeros((S, A))
    reward[goal] = S
    ids, patterns, obs_of = {}, [], []
    for r, c in cells:
        pat = neighbour_pattern(maze, r, c)
        if pat not in ids:
            ids[pat] = len(patterns)
            patterns.append(pat)
        obs_of.append(ids[pat])
    return MazePomdp(alpha=alpha, obs_of=np.array(obs_of), reward=reward,
                     mu=np.full(S, 1.0 / S), gamma=gamma, n_obs=len(patterns),
                     normalize=True, cells=tuple(cells), patterns=tuple(patterns),
                     goal_state=goal)


def blind_controller(gamma: float) -> PomdpModel:
    """Two states, one observation; action 0 stays, action 1 swaps; reward 1 in state 1."""
    alpha = np.zeros((2, 2, 2))
    alpha[0, 0, 0] = alpha[1, 0, 1] = 1.0
    alpha[0, 1, 1] = alpha[1, 1, 0] = 1.0
    reward = np.array([[0.0, 0.0], [1.0, 1.0]])
    return PomdpModel(alpha=alpha, obs_of=np.array([0, 0]), reward=reward,
                      mu=np.array([1.0, 0.0]), gamma=gamma)
