import numpy as np
import pytest

from perception import graph
from perception.aggregation import D_MIN, EmptyRelatedSetError, aggregate, aggregate_rows, lia_weights, membership
from perception.graph import RelatedSet, distance_matrix, nearest_neighbors, neighbor_sets, related_sets
from world.config import WorldConfig
from world.env import init_world


class TestNeighbourSets:
    def test_two_robots_see_each_other(self):
        assert nearest_neighbors(np.array([[0.1, 0.1], [0.4, 0.2]]), k=5) == [[1], [0]]

    def test_zero_cap_gives_empty_sets(self):
        world = init_world(WorldConfig(n_robots=5, n_tasks=2, alpha_max=0), 0)
        assert all(rel.neighbors == [] for rel in neighbor_sets(world, 0))

    def test_points_on_a_line(self):
        positions = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
        neighbors = nearest_neighbors(positions, k=2)
        assert neighbors[0] == [1, 2]
        assert neighbors[3] == [2, 1]

    def test_equidistant_ties_go_to_lower_id(self):
        positions = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
        assert nearest_neighbors(positions, k=2)[0] == [1, 2]

    def test_sets_exclude_self_and_respect_cap(self):
        world = init_world(WorldConfig(n_robots=20, n_tasks=3, alpha_max=4), 7)
        full = distance_matrix(world.robot_positions())
        for rel in neighbor_sets(world, 4):
            assert rel.robot_id not in rel.neighbors
            assert len(rel.neighbors) == 4
            dists = [rel.distances[k] for k in rel.neighbors]
            assert dists == sorted(dists)
            others = np.delete(full[rel.robot_id], rel.robot_id)
            assert max(dists) <= np.sort(others)[3] + 1e-12


class TestRelatedSets:
    def _neighbors(self, positions, k):
        return [
            RelatedSet(robot_id=i, neighbors=ids)
            for i, ids in enumerate(nearest_neighbors(np.asarray(positions), k))
        ]

    def test_all_same_task(self):
        positions = np.random.default_rng(0).uniform(size=(6, 2))
        rel = related_sets(self._neighbors(positions, 2), [0] * 6, distance_matrix(positions))
        assert all(len(r.same_action) == 5 for r in rel)

    def test_distinct_actions_keep_only_neighbours(self):
        positions = np.array([[0.0, 0.0], [0.1, 0.0], [0.9, 0.9]])
        rel = related_sets(self._neighbors(positions, 1), [0, 1, 2], distance_matrix(positions))
        assert all(r.same_action == [] for r in rel)
        assert [r.members for r in rel] == [[1], [0], [1]]

    def test_union_of_neighbours_and_same_action(self):
        positions = np.array([[0.0, 0.0], [0.9, 0.9], [0.1, 0.0]])
        rel = related_sets(self._neighbors(positions, 1), [0, 0, 1], distance_matrix(positions))
        assert rel[0].neighbors == [2]
        assert rel[0].same_action == [1]
        assert rel[0].members == [1, 2]
        assert set(rel[0].distances) == {1, 2}


class TestLiaWeights:
    def test_equal_distances(self):
        np.testing.assert_allclose(lia_weights([0.3, 0.3]), [0.5, 0.5])

    def test_zero_exponent_is_uniform(self):
        np.testing.assert_allclose(lia_weights([0.1, 0.5, 2.0], beta=0.0), [1 / 3] * 3)

    def test_inverse_distance(self):
        np.testing.assert_allclose(lia_weights([1.0, 2.0], beta=-1.0), [2 / 3, 1 / 3])

    def test_empty_set(self):
        with pytest.raises(EmptyRelatedSetError):
            lia_weights([])

    def test_zero_distance_is_clamped(self):
        weights = lia_weights([0.0, D_MIN])
        np.testing.assert_allclose(weights, [0.5, 0.5])


class TestAggregate:
    def test_single_member_copies_its_rows(self):
        obs = np.arange(12, dtype=float).reshape(3, 4)
        acts = np.eye(3)
        rel = RelatedSet(robot_id=0, neighbors=[2], distances={2: 0.4})
        info = aggregate(rel, obs, acts)
        np.testing.assert_array_equal(info.agg_obs, obs[2])
        np.testing.assert_array_equal(info.agg_act, acts[2])

    def test_equidistant_pair_mixes_actions(self):
        obs = np.zeros((3, 2))
        acts = np.eye(3)
        rel = RelatedSet(robot_id=2, neighbors=[0, 1], distances={0: 0.2, 1: 0.2})
        np.testing.assert_allclose(aggregate(rel, obs, acts).agg_act, [0.5, 0.5, 0.0])

    def test_weighted_feature(self):
        obs = np.array([[0.0], [3.0], [6.0]])
        acts = np.ones((3, 1))
        rel = RelatedSet(robot_id=0, neighbors=[1, 2], distances={1: 1.0, 2: 2.0})
        assert aggregate(rel, obs, acts).agg_obs[0] == pytest.approx(4.0)

    def test_empty_set_gives_zeros(self):
        info = aggregate(RelatedSet(robot_id=0), np.ones((2, 7)), np.ones((2, 3)))
        np.testing.assert_array_equal(info.agg_obs, np.zeros(7))
        np.testing.assert_array_equal(info.agg_act, np.zeros(3))


class TestAggregationProperties:
    """Randomized algebra checks over many weight and aggregation cases."""

    def test_weights_are_a_scale_invariant_simplex(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            size = int(rng.integers(1, 30))
            distances = rng.uniform(1e-3, 2.0, size=size)
            beta = float(rng.uniform(-4, 4))
            weights = lia_weights(distances, beta)
            assert np.all(weights >= 0)
            assert abs(weights.sum() - 1.0) <= 1e-9
            scaled = lia_weights(distances * float(rng.uniform(0.1, 10.0)), beta)
            np.testing.assert_allclose(scaled, weights, atol=1e-9)

    def test_permutation_invariance_and_mean(self):
        rng = np.random.default_rng(1)
        n, d, m = 12, 5, 3
        for _ in range(1000):
            obs = rng.normal(size=(n, d))
            acts = rng.dirichlet(np.ones(m), size=n)
            members = [int(k) for k in rng.choice(np.arange(1, n), size=int(rng.integers(1, n)), replace=False)]
            distances = {k: float(rng.uniform(0.01, 1.0)) for k in members}
            split = int(rng.integers(0, len(members) + 1))
            rel = RelatedSet(robot_id=0, neighbors=members[:split], same_action=members[split:], distances=distances)
            shuffled = list(rng.permutation(members))
            rel_shuffled = RelatedSet(
                robot_id=0,
                neighbors=[int(k) for k in shuffled[:split]],
                same_action=[int(k) for k in shuffled[split:]],
                distances=dict(reversed(list(distances.items()))),
            )
            a, b = aggregate(rel, obs, acts), aggregate(rel_shuffled, obs, acts)
            np.testing.assert_array_equal(a.agg_obs, b.agg_obs)
            np.testing.assert_array_equal(a.agg_act, b.agg_act)

            flat = aggregate(rel, obs, acts, beta=0.0)
            ids = sorted(members)
            np.testing.assert_allclose(flat.agg_obs, obs[ids].mean(axis=0), atol=1e-12)
            np.testing.assert_allclose(flat.agg_act, acts[ids].mean(axis=0), atol=1e-12)

    @pytest.mark.parametrize("size", [0, 1, 5, 50])
    def test_output_width_is_fixed(self, size):
        rng = np.random.default_rng(size)
        obs = rng.normal(size=(51, 9))
        acts = rng.dirichlet(np.ones(4), size=51)
        members = list(range(1, size + 1))
        rel = RelatedSet(robot_id=0, neighbors=members, distances={k: float(k) / 10 for k in members})
        info = aggregate(rel, obs, acts)
        assert info.agg_obs.shape == (9,)
        assert info.agg_act.shape == (4,)
        if size:
            assert info.agg_act.sum() == pytest.approx(1.0)


class TestAggregateRows:
    def test_matches_single_robot_aggregation(self):
        rng = np.random.default_rng(4)
        n, d, m = 9, 6, 3
        for _ in range(200):
            obs = rng.normal(size=(n, d))
            acts = rng.dirichlet(np.ones(m), size=n)
            related = []
            for i in range(n):
                others = [k for k in range(n) if k != i]
                chosen = [int(k) for k in rng.choice(others, size=int(rng.integers(0, n)), replace=False)]
                related.append(
                    RelatedSet(robot_id=i, neighbors=chosen, distances={k: float(rng.uniform(0.01, 1.0)) for k in chosen})
                )
            members, distances = membership(related, n)
            beta = float(rng.uniform(-3, 0))
            agg_obs, agg_act = aggregate_rows(
                members, distances, np.broadcast_to(obs, (n, n, d)), np.broadcast_to(acts, (n, n, m)), beta
            )
            for i, rel in enumerate(related):
                single = aggregate(rel, obs, acts, beta)
                np.testing.assert_allclose(agg_obs[i], single.agg_obs, atol=1e-12)
                np.testing.assert_allclose(agg_act[i], single.agg_act, atol=1e-12)

    def test_rows_without_members_are_zero(self):
        members = np.array([[False, False], [True, False]])
        agg_obs, agg_act = aggregate_rows(members, np.ones((2, 2)), np.ones((2, 2, 3)), np.ones((2, 2, 4)))
        np.testing.assert_array_equal(agg_obs[0], np.zeros(3))
        np.testing.assert_array_equal(agg_act[0], np.zeros(4))
        np.testing.assert_array_equal(agg_obs[1], np.ones(3))

    def test_membership_skips_the_robot_itself(self):
        rel = RelatedSet(robot_id=1, neighbors=[0], same_action=[2], distances={0: 0.5, 2: 0.25})
        members, distances = membership([rel], 3)
        assert members.tolist() == [[True, False, True]]
        assert distances[0, 0] == 0.5
        assert distances[0, 2] == 0.25


class TestNeighbourSearchPaths:
    @pytest.mark.parametrize("seed", range(5))
    def test_dense_and_tree_orderings_agree(self, seed, monkeypatch):
        rng = np.random.default_rng(seed)
        # a coarse grid produces many exact distance ties
        positions = rng.integers(0, 6, size=(40, 2)).astype(float) / 5.0
        positions += np.arange(40)[:, None] * 1e-3 * (seed % 2)
        dense = nearest_neighbors(positions, k=6)
        monkeypatch.setattr(graph, "DENSE_LIMIT", 0)
        assert nearest_neighbors(positions, k=6) == dense
