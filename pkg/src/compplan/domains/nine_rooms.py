"""Nine Rooms: a 3x3 grid of level N-1 instances, recursively.

Walls occupy grid cells.  A level-1 room is 3x3 open cells; a level-l map is
three level-(l-1) maps per side separated by wall lines one cell thick, so its
side is ``3 * side(l-1) + 2``.  Each wall segment between two neighbouring
instances has a centred gap of ``3**(l-2)`` cells: the doorway.  States are
the open cells (rooms plus doorways), numbered in row-major order.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..algebra import value_model
from ..mdp import ConfigurationError, Mdp, SubgoalSpec

GAMMA = 0.9
MAX_LEVEL = 4
CORNERS = ("nw", "ne", "sw", "se")
# (dx, dy); y grows southwards
ACTIONS = {"N": (0, -1), "E": (1, 0), "S": (0, 1), "W": (-1, 0)}


def side(level: int) -> int:
    return 3 if level == 1 else 3 * side(level - 1) + 2


@dataclass(frozen=True, eq=False)
class DoorwaySpec:
    """The ``index``-th doorway of every level-``level`` block.

    ``cells`` and ``initiation`` are state indices; ``initiation`` covers the
    two instances the doorway connects, plus the doorway itself.
    """

    level: int
    index: int
    cells: np.ndarray
    initiation: np.ndarray


class Layout:
    def __init__(self, N: int):
        if not 1 <= N <= MAX_LEVEL:
            raise ConfigurationError(f"Nine Rooms supports levels 1..{MAX_LEVEL}, got {N}")
        self.N = N
        self.size = side(N)
        wall = np.zeros((self.size, self.size), dtype=bool)  # [y, x]
        door = {}
        region = {}
        for level in range(2, N + 1):
            t = side(level - 1)
            w = 3 ** (level - 2)
            lo = (t - w) // 2
            for bx, by in itertools.product(self._origins(level), repeat=2):
                inst = [(bx + c * (t + 1), by + r * (t + 1)) for r in range(3) for c in range(3)]
                for k in range(2):
                    line = k * (t + 1) + t
                    wall[by:by + self._span(level), bx + line] = True
                    wall[by + line, bx:bx + self._span(level)] = True
                for k, r in itertools.product(range(2), range(3)):
                    off = r * (t + 1) + lo
                    line = k * (t + 1) + t
                    # vertical wall k, room row r: instances (k, r) and (k + 1, r)
                    j = 1 + 3 * k + r
                    door.setdefault((level, j), []).append(
                        (slice(by + off, by + off + w), slice(bx + line, bx + line + 1))
                    )
                    region.setdefault((level, j), []).extend(
                        [inst[3 * r + k], inst[3 * r + k + 1]]
                    )
                    # horizontal wall k, room column r: instances (r, k) and (r, k + 1)
                    j = 7 + 3 * k + r
                    door.setdefault((level, j), []).append(
                        (slice(by + line, by + line + 1), slice(bx + off, bx + off + w))
                    )
                    region.setdefault((level, j), []).extend(
                        [inst[3 * k + r], inst[3 * (k + 1) + r]]
                    )
        for cells in door.values():
            for ys, xs in cells:
                wall[ys, xs] = False
        self.wall = wall
        self.index = np.full(wall.shape, -1, dtype=np.int64)
        open_y, open_x = np.nonzero(~wall)
        self.index[open_y, open_x] = np.arange(open_y.shape[0])
        self.coords = np.stack([open_x, open_y], axis=1)
        self.n = open_y.shape[0]
        self._door = door
        self._region = region

    def _span(self, level: int) -> int:
        return side(level)

    def _origins(self, level: int) -> list[int]:
        steps = [side(m) + 1 for m in range(level, self.N)]
        return sorted({sum(c * s for c, s in zip(cs, steps)) for cs in itertools.product(range(3), repeat=len(steps))})

    def doorway(self, level: int, j: int) -> DoorwaySpec:
        if not (2 <= level <= self.N and 1 <= j <= 12):
            raise ConfigurationError(f"no doorway ({level}, {j}) at level {self.N}")
        mask = np.zeros_like(self.wall)
        for ys, xs in self._door[(level, j)]:
            mask[ys, xs] = True
        cells = np.sort(self.index[mask])
        t = side(level - 1)
        init = mask.copy()
        for x0, y0 in self._region[(level, j)]:
            init[y0:y0 + t, x0:x0 + t] = True
        init &= ~self.wall
        return DoorwaySpec(level, j, cells, np.sort(self.index[init]))

    def corner(self, which: str) -> int:
        if which not in CORNERS:
            raise ConfigurationError(f"goal corner must be one of {CORNERS}")
        x = 0 if which[1] == "w" else self.size - 1
        y = 0 if which[0] == "n" else self.size - 1
        return int(self.index[y, x])

    def render(self, goal: int | None = None) -> str:
        """Map with ``#`` walls, ``+`` doorway cells, ``.`` room cells and ``G`` the goal."""
        doors = np.zeros_like(self.wall)
        for cells in self._door.values():
            for ys, xs in cells:
                doors[ys, xs] = True
        chars = np.where(self.wall, "#", np.where(doors, "+", "."))
        if goal is not None:
            x, y = self.coords[goal]
            chars[y, x] = "G"
        return "\n".join("".join(row) for row in chars)


OPPOSITE = {"nw": "se", "ne": "sw", "sw": "ne", "se": "nw"}


def nine_rooms_mdp(N: int, stochastic: bool = False, p: float = 0.05, goal_corner: str = "nw") -> Mdp:
    """Moves N/E/S/W between open cells; reward 1 for acting in the goal, then exit.

    In the stochastic variant a move fails (the agent stays put) with probability ``p``.
    """
    if not 0 <= p < 1:
        raise ConfigurationError(f"slip probability must lie in [0, 1), got {p}")
    lay = Layout(N)
    n = lay.n
    goal = lay.corner(goal_corner)
    xs, ys = lay.coords[:, 0], lay.coords[:, 1]
    states = np.arange(n)
    trans, reward, available = [], [], []
    for dx, dy in ACTIONS.values():
        tx, ty = xs + dx, ys + dy
        inside = (tx >= 0) & (tx < lay.size) & (ty >= 0) & (ty < lay.size)
        nxt = np.full(n, -1)
        nxt[inside] = lay.index[ty[inside], tx[inside]]
        ok = nxt >= 0
        move = ok & (states != goal)
        rows, cols = states[move], nxt[move]
        probs = np.full(rows.shape[0], GAMMA * (1 - p if stochastic else 1.0))
        if stochastic and p > 0:
            rows = np.concatenate([rows, states[move]])
            cols = np.concatenate([cols, states[move]])
            probs = np.concatenate([probs, np.full(move.sum(), GAMMA * p)])
        trans.append(sp.csr_array((probs, (rows, cols)), shape=(n, n)))
        reward.append(np.where(ok & (states == goal), 1.0, 0.0))
        available.append(ok)
    return Mdp(
        n=n,
        gamma=GAMMA,
        action_ids=list(ACTIONS),
        trans=trans,
        reward=reward,
        available=available,
        exit_states=np.array([goal]),
        start=lay.corner(OPPOSITE[goal_corner]),
        name=f"nine-rooms-{N}-{'stoch' if stochastic else 'det'}",
    )


def nine_rooms_subgoals(N: int, K: float = 1e3) -> list[SubgoalSpec]:
    """One subgoal per doorway index and level, restricted to the rooms it joins."""
    if N < 2:
        raise ConfigurationError("doorway subgoals need level >= 2")
    if K <= 0:
        raise ConfigurationError("subgoal constant must be positive")
    lay = Layout(N)
    specs = []
    for level in range(2, N + 1):
        for j in range(1, 13):
            d = lay.doorway(level, j)
            g = np.zeros(lay.n)
            g[d.cells] = K
            specs.append(SubgoalSpec(f"door({level},{j})", value_model(g), d.initiation))
    return specs
