import numpy as np
import pytest

from oracles import truncated_series_eta
from rosa.maze import (MOVES, Xoshiro256, blind_controller, build_maze_pomdp, generate_maze,
                       maze_is_connected, neighbour_pattern, splitmix64)
from rosa.pomdp import InvalidInput, reward_of_policy, state_action_frequency, uniform_policy


def xoshiro_numpy(seed, count):
    """Independent xoshiro256** written with numpy uint64 wraparound."""
    with np.errstate(over="ignore"):
        u = np.uint64
        sm = u(seed)
        s = []
        for _ in range(4):
            sm = sm + u(0x9E3779B97F4A7C15)
            z = sm
            z = (z ^ (z >> u(30))) * u(0xBF58476D1CE4E5B9)
            z = (z ^ (z >> u(27))) * u(0x94D049BB133111EB)
            s.append(z ^ (z >> u(31)))

        def rotl(x, k):
            return (x << u(k)) | (x >> u(64 - k))

        out = []
        for _ in range(count):
            out.append(int(rotl(s[1] * u(5), 7) * u(9)))
            t = s[1] << u(17)
            s[2] ^= s[0]
            s[3] ^= s[1]
            s[1] ^= s[2]
            s[0] ^= s[3]
            s[2] ^= t
            s[3] = rotl(s[3], 45)
        return out


def test_splitmix_known_first_output():
    assert splitmix64(0)[0] == 0xE220A8397B1DCDAF


@pytest.mark.parametrize("seed", [0, 1, 12345, 2**63 + 7])
def test_xoshiro_matches_numpy_reimplementation(seed):
    g = Xoshiro256(seed)
    assert [g.next() for _ in range(20)] == xoshiro_numpy(seed, 20)


def test_below_range_and_rough_uniformity():
    g = Xoshiro256(3)
    draws = np.array([g.below(3) for _ in range(30000)])
    assert draws.min() == 0 and draws.max() == 2
    assert np.all(np.abs(np.bincount(draws) / 30000 - 1 / 3) < 0.01)
    with pytest.raises(ValueError):
        g.below(0)


def test_n2_layout():
    m = generate_maze(2, 0)
    assert m.open.shape == (3, 3)
    assert m.open.sum() == 7
    assert m.open[::2, ::2].all() and not m.open[1, 1]
    assert m.open[1::2, ::2].sum() + m.open[::2, 1::2].sum() == 3


def test_n3_any_seed():
    for seed in range(20):
        m = generate_maze(3, seed)
        assert m.open.sum() == 17 and maze_is_connected(m)


def test_determinism():
    assert generate_maze(6, 99) == generate_maze(6, 99)
    assert generate_maze(6, 99) != generate_maze(6, 100)


@pytest.mark.parametrize("n", [1, 0, 2.5])
def test_invalid_n(n):
    with pytest.raises(InvalidInput):
        generate_maze(n, 0)


@pytest.mark.parametrize("n", range(2, 11))
def test_structure_over_many_seeds(n):
    for seed in range(100):
        m = generate_maze(n, seed)
        assert m.open.sum() == 2 * n * n - 1
        assert maze_is_connected(m)
        assert m.open[m.goal]


def test_blind_controller_closed_forms():
    for gamma in (0.5, 0.9, 0.99):
        m = blind_controller(gamma)
        assert reward_of_policy(m, [[1.0, 0.0]]) == 0.0
        assert reward_of_policy(m, [[0.0, 1.0]]) == pytest.approx(gamma / (1 + gamma), abs=1e-12)
        eta = truncated_series_eta(m, np.array([[0.0, 1.0]]))
        assert np.sum(m.reward * eta) == pytest.approx(gamma / (1 + gamma), abs=1e-10)


def test_maze_pomdp_dynamics():
    maze = generate_maze(4, 3)
    m = build_maze_pomdp(maze, 0.95)
    S = m.n_states
    assert S == 31 and m.n_actions == 4
    for s, (r, c) in enumerate(m.cells):
        if s == m.goal_state:
            assert np.allclose(m.alpha[s], 1.0 / S)
            assert np.all(m.reward[s] == S)
            continue
        assert np.all(m.reward[s] == 0)
        for a, (dr, dc) in enumerate(MOVES):
            t = m.cells.index((r + dr, c + dc)) if maze.is_open(r + dr, c + dc) else s
            assert m.alpha[s, a, t] == 1.0


def test_maze_observations_by_first_occurrence():
    maze = generate_maze(5, 7)
    m = build_maze_pomdp(maze, 0.9999)
    pats = [neighbour_pattern(maze, r, c) for r, c in m.cells]
    assert len(set(pats)) == m.n_obs
    assert list(m.patterns) == list(dict.fromkeys(pats))
    assert all(m.patterns[m.obs_of[s]] == p for s, p in enumerate(pats))


def test_maze_assumption_positive_marginals(rng):
    for seed in range(5):
        m = build_maze_pomdp(generate_maze(3, seed), 0.999)
        for pi in (uniform_policy(m), rng.dirichlet(np.ones(4), size=m.n_obs)):
            assert state_action_frequency(m, pi).sum(axis=1).min() > 0


def test_non_goal_reset():
    m = build_maze_pomdp(generate_maze(2, 1), 0.9, reset="non_goal")
    g = m.goal_state
    assert np.all(m.alpha[g, :, g] == 0) and np.allclose(m.alpha[g].sum(axis=1), 1)
    with pytest.raises(InvalidInput):
        build_maze_pomdp(generate_maze(2, 1), 0.9, reset="nowhere")
