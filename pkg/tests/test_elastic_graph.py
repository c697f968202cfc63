from fractions import Fraction

import numpy as np
import pytest
from _helpers import (
    exact_harmonic_extension,
    numeric_gradient,
    random_elastic_graph,
    random_primitive_tree,
)

from principal_objects.dataset import DataMatrix
from principal_objects.elastic_graph import (
    ElasticGraph,
    Star,
    build_elastic_matrices,
    corner_points,
    dumps_graph,
    elastic_energy,
    fixed_partition_functional,
    is_pluriharmonic,
    loads_graph,
    optimize_embedding,
    partition_by_vertices,
    solve_embedding_step,
    total_functional,
)
from principal_objects.elastic_map import make_elastic_net
from principal_objects.errors import InvariantViolation, ParseError, SingularSystemError
from principal_objects.pca import fit_first_component


def two_star(center=(0, 0)):
    G = ElasticGraph(3, [(0, 1), (0, 2)], 1.0, (Star(0, (1, 2), 1.0),))
    return G, np.array([center, [1, 0], [-1, 0]], dtype=float)


def printed_s(G):
    """Apply the per-star update rules one entry at a time."""
    s = np.zeros((G.n_vertices, G.n_vertices))
    for st in G.stars:
        k, c = st.k, st.center
        s[c, c] += st.modulus
        for a in st.leaves:
            for b in st.leaves:
                s[a, b] += st.modulus / k**2
            s[c, a] -= st.modulus / k
            s[a, c] -= st.modulus / k
    return s


def printed_e(G):
    e = np.zeros((G.n_vertices, G.n_vertices))
    for (u, v), lam in zip(G.edges, G.edge_moduli):
        e[u, u] += lam
        e[v, v] += lam
        e[u, v] -= lam
        e[v, u] -= lam
    return e


class TestGraph:
    def test_invariants(self):
        with pytest.raises(InvariantViolation):
            ElasticGraph(2, [(0, 0)], 1.0)
        with pytest.raises(InvariantViolation):
            ElasticGraph(2, [(0, 1), (1, 0)], 1.0)
        with pytest.raises(InvariantViolation):
            ElasticGraph(3, [(0, 1)], 1.0, (Star(0, (1, 2), 1.0),))
        with pytest.raises(InvariantViolation):
            ElasticGraph(3, [(0, 1), (0, 2)], 1.0, (), primitive=True)

    def test_primitive_stars(self):
        G = ElasticGraph.primitive_from_edges(4, [(0, 1), (0, 2), (0, 3)], 1.0, 1.0)
        assert [(s.center, set(s.leaves)) for s in G.stars] == [(0, {1, 2, 3})]
        assert G.is_tree() and G.is_acyclic()

    def test_corner_points(self):
        assert corner_points(ElasticGraph.chain(3)) == [0, 2]
        star3 = ElasticGraph.primitive_from_edges(4, [(0, 1), (0, 2), (0, 3)], 1.0, 1.0)
        assert corner_points(star3) == [1, 2, 3]

    def test_corner_points_of_net(self):
        net = make_elastic_net(2, (3, 3))
        # ribs are centered at interior vertices along each axis: the four corners
        # are not centers of any rib, every edge midpoint is
        assert corner_points(net.graph) == [0, 2, 6, 8]


class TestEnergy:
    def test_two_star_examples(self):
        G, phi = two_star()
        e = elastic_energy(G, phi)
        assert (e.stretching, e.bending) == (2.0, 0.0)
        G, phi = two_star((0, 1))
        assert elastic_energy(G, phi).bending == 1.0

    def test_leaf_order_invariance(self, rng):
        phi = rng.normal(size=(4, 2))
        a = ElasticGraph(4, [(0, 1), (0, 2), (0, 3)], 1.0, (Star(0, (1, 2, 3), 2.0),))
        b = ElasticGraph(4, [(0, 1), (0, 2), (0, 3)], 1.0, (Star(0, (3, 1, 2), 2.0),))
        assert elastic_energy(a, phi) == elastic_energy(b, phi)

    def test_quadratic_form(self, rng):
        for _ in range(20):
            G = random_elastic_graph(rng, int(rng.integers(2, 25)))
            phi = rng.normal(size=(G.n_vertices, 3))
            M = build_elastic_matrices(G)
            en = elastic_energy(G, phi)
            q = sum(phi[:, d] @ M.combined @ phi[:, d] for d in range(3))
            assert en.stretching + en.bending == pytest.approx(q, rel=1e-10, abs=1e-12)

    def test_uniform_chain_second_difference(self):
        # bending of a 2-star on an evenly spaced chain is a quarter of the squared
        # three-point second difference
        y = np.array([[0.0], [1.3], [1.9]])
        en = elastic_energy(ElasticGraph(3, [(0, 1), (1, 2)], 0.0, (Star(1, (0, 2), 1.0),)), y)
        assert en.bending == pytest.approx(((y[0] - 2 * y[1] + y[2]) ** 2 / 4).item())

    def test_zero_bending_iff_pluriharmonic(self):
        G, phi = two_star()
        assert is_pluriharmonic(G, phi, 0) and elastic_energy(G, phi).bending == 0
        G, phi = two_star((0, 1))
        assert not is_pluriharmonic(G, phi, 0)


class TestMatrices:
    def test_single_edge(self):
        M = build_elastic_matrices(ElasticGraph(2, [(0, 1)], 2.0))
        np.testing.assert_array_equal(M.e, [[2, -2], [-2, 2]])

    def test_two_star(self):
        G, _ = two_star()
        s = build_elastic_matrices(G).s
        np.testing.assert_allclose(s, np.outer([1, -0.5, -0.5], [1, -0.5, -0.5]))

    def test_empty(self):
        M = build_elastic_matrices(ElasticGraph(3, np.zeros((0, 2)), []))
        assert not M.e.any() and not M.s.any()

    def test_printed_rules_and_psd(self, rng):
        for _ in range(10):
            G = random_elastic_graph(rng, 12)
            M = build_elastic_matrices(G)
            np.testing.assert_allclose(M.e, printed_e(G), atol=1e-12)
            np.testing.assert_allclose(M.s, printed_s(G), atol=1e-12)
            for A in (M.e, M.s):
                np.testing.assert_allclose(A, A.T)
                np.testing.assert_allclose(A.sum(axis=1), 0, atol=1e-12)
                assert np.linalg.eigvalsh(A).min() > -1e-10


class TestFunctional:
    def test_exact_fit_zero(self):
        G = ElasticGraph.chain(3, 0.0, 0.0)
        phi = np.array([[0.0, 0], [1, 1], [2, 2]])
        assert total_functional(DataMatrix(phi), G, phi).total == 0

    def test_single_vertex(self, rng):
        A = rng.normal(size=(20, 2))
        w = rng.uniform(0.5, 2, 20)
        G = ElasticGraph(1, np.zeros((0, 2)), [])
        y = np.array([[0.3, -0.2]])
        got = total_functional(DataMatrix(A, weights=w), G, y).total
        assert got == pytest.approx(np.dot(w, ((A - y) ** 2).sum(axis=1)) / w.sum())

    def test_partition_tie_and_identity(self, rng):
        phi = np.array([[9.0, 9], [5, 5], [0, 1], [3, 3], [4, 4], [0, -1]])
        assert partition_by_vertices(DataMatrix([[0.0, 0.0]]), phi).assignment[0] == 2
        P = rng.normal(size=(6, 3))
        assert partition_by_vertices(DataMatrix(P), P).assignment.tolist() == list(range(6))


class TestSolver:
    def test_single_vertex_moves_to_mean(self, rng):
        A = rng.normal(size=(15, 2))
        X = DataMatrix(A)
        G = ElasticGraph(1, np.zeros((0, 2)), [])
        y = solve_embedding_step(X, G, partition_by_vertices(X, [[0, 0]]))
        np.testing.assert_allclose(y[0], A.mean(axis=0))

    def test_stationary_for_fixed_partition(self, rng):
        for _ in range(10):
            G = random_elastic_graph(rng, 8)
            A = rng.normal(size=(60, 2))
            X = DataMatrix(A)
            part = partition_by_vertices(X, rng.normal(size=(8, 2)))
            try:
                phi = solve_embedding_step(X, G, part)
            except SingularSystemError:
                continue
            g = numeric_gradient(lambda p: fixed_partition_functional(X, G, p, part).total, phi)
            assert np.abs(g).max() < 1e-6

    def test_two_vertices_small_lambda(self, rng):
        A = rng.normal(size=(30, 2)) + 5
        X = DataMatrix(A)
        G = ElasticGraph(2, [(0, 1)], 1e-3)
        y = solve_embedding_step(X, G, partition_by_vertices(X, [[5, 5], [100, 100]]))
        assert np.linalg.norm(y[0] - A.mean(axis=0)) < 1e-2
        np.testing.assert_allclose(y[1], y[0])

    def test_stiff_chain_approaches_pca_line(self, rng):
        t = rng.uniform(-2, 2, 300)
        A = np.c_[t, 0.5 * t] + 0.3 * rng.normal(size=(300, 2))
        X = DataMatrix(A)
        pc = fit_first_component(X, rng=rng)
        G = ElasticGraph.chain(6, 1e-4, 1e6)
        phi0 = pc.origin + np.linspace(-2, 2, 6)[:, None] * pc.direction
        res = optimize_embedding(X, G, phi0)
        resid = (res.embedding - pc.origin) - np.outer((res.embedding - pc.origin)
                                                       @ pc.direction, pc.direction)
        assert np.abs(resid).max() < 0.05

    def test_singular_system_names_vertices(self):
        G = ElasticGraph(3, [(0, 1)], 0.0)
        X = DataMatrix([[0.0], [1.0]])
        part = partition_by_vertices(X, [[0.0], [1.0], [50.0]])
        with pytest.raises(SingularSystemError) as exc:
            solve_embedding_step(X, G, part)
        assert tuple(exc.value.vertices) == (2,)
        y = solve_embedding_step(X, G, part, ridge=True)
        assert np.all(np.isfinite(y))

    def test_gapped_matches_coordinatewise_oracle(self, rng):
        A = rng.normal(size=(40, 2))
        A[rng.random(40) < 0.2, 1] = np.nan
        X = DataMatrix.from_array(A)
        G = ElasticGraph.chain(4, 0.5, 0.5)
        part = partition_by_vertices(X, np.c_[np.linspace(-1, 1, 4), np.zeros(4)])
        y = solve_embedding_step(X, G, part)
        g = numeric_gradient(lambda p: fixed_partition_functional(X, G, p, part).total, y)
        assert np.abs(g).max() < 1e-6


class TestOptimizer:
    def test_fixed_point_unchanged(self):
        G = ElasticGraph.chain(3, 0.0, 0.0)
        phi = np.array([[0.0, 0], [1, 0], [2, 0]])
        X = DataMatrix(np.repeat(phi, 3, axis=0))
        res = optimize_embedding(X, G, phi)
        assert res.n_iter == 1
        np.testing.assert_array_equal(res.embedding, phi)

    def test_noisy_arc_monotone(self, rng):
        t = rng.uniform(0, np.pi, 400)
        A = np.c_[np.cos(t), np.sin(t)] + 0.05 * rng.normal(size=(400, 2))
        X = DataMatrix(A)
        G = ElasticGraph.chain(10, 0.01, 0.1)
        phi0 = np.c_[np.linspace(-1, 1, 10), np.zeros(10)]
        res = optimize_embedding(X, G, phi0)
        tot = [e.total for e in res.energy_trace]
        assert np.all(np.diff(tot) <= 1e-12)
        assert tot[-1] < tot[0]

    def test_deterministic(self, rng):
        A = rng.normal(size=(100, 3))
        G = random_elastic_graph(np.random.default_rng(1), 7)
        phi0 = np.random.default_rng(2).normal(size=(7, 3))
        a = optimize_embedding(DataMatrix(A), G, phi0, ridge=True)
        b = optimize_embedding(DataMatrix(A), G, phi0, ridge=True)
        np.testing.assert_array_equal(a.embedding, b.embedding)


class TestPluriharmonic:
    def test_linear_chain(self):
        phi = np.c_[np.arange(5.0), 2 * np.arange(5.0)]
        assert is_pluriharmonic(ElasticGraph.chain(5), phi)

    def test_bent_chain(self):
        assert not is_pluriharmonic(ElasticGraph.chain(3), np.array([[0.0, 0], [1, 1], [2, 0]]))

    def test_linear_map_of_net(self, rng):
        net = make_elastic_net(2, (4, 5))
        L = rng.normal(size=(2, 3))
        assert is_pluriharmonic(net.graph, net.coords @ L + rng.normal(size=3))

    def test_maximum_principle(self, rng):
        for _ in range(20):
            G = random_primitive_tree(rng, int(rng.integers(3, 12)))
            corners = corner_points(G)
            vals = {c: tuple(Fraction(int(x)) for x in rng.integers(-20, 21, 2)) for c in corners}
            phi = exact_harmonic_extension(G, vals)
            assert is_pluriharmonic(G, np.array(phi, dtype=float))
            a = [Fraction(int(x)) for x in rng.integers(-5, 6, 2)]
            for F in (lambda p: a[0] * p[0] + a[1] * p[1],
                      lambda p: p[0] ** 2 + p[1] ** 2,
                      lambda p: max(p[0] - p[1], 2 * p[1], -p[0])):
                assert max(F(p) for p in phi) == max(F(phi[c]) for c in corners)


class TestSerialization:
    def test_round_trip(self, rng):
        G = random_elastic_graph(rng, 9)
        H = loads_graph(dumps_graph(G))
        np.testing.assert_array_equal(G.edges, H.edges)
        np.testing.assert_array_equal(G.edge_moduli, H.edge_moduli)
        assert G.stars == H.stars and dumps_graph(H) == dumps_graph(G)

    def test_rejects_garbage(self):
        with pytest.raises(ParseError):
            loads_graph("hello")
        with pytest.raises(ParseError):
            loads_graph("elastic-graph 1\nvertices 2\nedge 0 x 1\n")
