import numpy as np
import pytest
from scipy.linalg import subspace_angles

from principal_objects.dataset import DataMatrix, data_radius
from principal_objects.elastic_graph import (
    elastic_energy,
    is_pluriharmonic,
    optimize_embedding,
    total_functional,
)
from principal_objects.elastic_map import (
    SofteningSchedule,
    check_grid_regularity,
    dumps_map_model,
    fit_elastic_map,
    initial_embedding,
    loads_map_model,
    make_elastic_net,
    moduli_for_resolution,
    net_simplices,
    project_dataset,
    project_to_map,
)
from principal_objects.errors import DimensionMismatchError, InvariantViolation
from principal_objects.pca import fit_components


def planar(rng, n=300):
    B = np.linalg.qr(rng.normal(size=(4, 2)))[0].T
    return rng.uniform(-2, 2, (n, 2)) * [2, 1] @ B + rng.normal(size=4), B


def arc(rng, n=300):
    t = rng.uniform(0, np.pi, n)
    return np.c_[t, np.sin(t)] + 0.05 * rng.normal(size=(n, 2))


class TestNet:
    def test_chain_counts(self):
        net = make_elastic_net(1, 5)
        assert (net.graph.n_vertices, net.graph.n_edges, net.n_ribs) == (5, 4, 3)

    def test_rectangle_counts(self):
        net = make_elastic_net(2, (4, 3))
        assert (net.graph.n_vertices, net.graph.n_edges, net.n_ribs) == (12, 17, 10)
        # per-axis interior rule by enumeration
        ribs = sum(1 for c in net.coords for a, s in enumerate((4, 3)) if 0 < c[a] < s - 1)
        assert ribs == 10
        assert all(s.k == 2 for s in net.graph.stars)

    @pytest.mark.parametrize("shape", [(2, 2), (5, 7), (3, 3, 3)])
    def test_regular(self, shape):
        assert check_grid_regularity(make_elastic_net(len(shape), shape))

    def test_bad_shapes(self):
        with pytest.raises(InvariantViolation):
            make_elastic_net(2, (4, 1))
        with pytest.raises(InvariantViolation):
            make_elastic_net(2, (4,))
        with pytest.raises(InvariantViolation):
            make_elastic_net(4, (2, 2, 2, 2))

    def test_sphere(self):
        net = make_elastic_net(2, (5, 8), "sphere")
        assert net.graph.n_vertices == 42
        n_comp = net.graph.n_vertices - net.graph.n_edges
        assert n_comp < 0  # closed surface: far more edges than a tree
        assert np.all(net.graph.edge_moduli > 0)
        # shorter edges carry larger moduli
        pos = initial_embedding(DataMatrix(np.random.default_rng(0).normal(size=(200, 3))), net, 0)
        e = net.graph.edges
        short = np.argmin(np.linalg.norm(pos[e[:, 0]] - pos[e[:, 1]], axis=1))
        assert net.graph.edge_moduli[short] >= np.median(net.graph.edge_moduli)


class TestSchedule:
    def test_invariants(self):
        with pytest.raises(InvariantViolation):
            SofteningSchedule((10, 2))
        with pytest.raises(InvariantViolation):
            SofteningSchedule((1, 10, 1))
        assert SofteningSchedule().multipliers == (1e3, 1e2, 10, 1)

    def test_resolution_moduli(self):
        assert moduli_for_resolution(0.3, 0.7, 2, 50, 40) == (0.3, 0.7)
        assert moduli_for_resolution(0.01, 1, 1, 10, 1)[0] == pytest.approx(0.1)
        assert moduli_for_resolution(0.01, 1, 1, 49, 1)[0] == pytest.approx(0.49)
        with pytest.raises(ValueError):
            moduli_for_resolution(1, 1, 1, 0, 1)


class TestFit:
    def test_planar_data(self, rng):
        A, B = planar(rng)
        model = fit_elastic_map(DataMatrix(A), make_elastic_net(2, (6, 6)), rng=rng)
        off = (model.embedding - A.mean(axis=0)) @ (np.eye(4) - B.T @ B)
        assert np.abs(off).max() < 1e-6

    def test_sine_arc_beats_initial_line(self, rng):
        X = DataMatrix(arc(rng))
        net = make_elastic_net(1, 12)
        model = fit_elastic_map(X, net, rng=1)
        G = net.graph.with_moduli(model.lam, model.mu)
        e0 = total_functional(X, G, initial_embedding(X, net, 1)).total
        assert total_functional(X, G, model.embedding).total < e0

    def test_single_epoch_is_plain_optimisation(self, rng):
        X = DataMatrix(arc(rng))
        net = make_elastic_net(1, 8)
        sched = SofteningSchedule((1.0,), lam=0.02, mu=0.3)
        model = fit_elastic_map(X, net, sched, rng=3)
        ref = optimize_embedding(X, net.graph.with_moduli(0.02, 0.3), initial_embedding(X, net, 3))
        np.testing.assert_array_equal(model.embedding, ref.embedding)

    def test_epoch_traces_monotone(self, rng):
        A, _ = planar(rng)
        A = A + 0.3 * rng.normal(size=A.shape)
        model = fit_elastic_map(DataMatrix(A), make_elastic_net(2, (8, 8)), rng=rng)
        assert len(model.epoch_traces) == 4
        for tr in model.epoch_traces:
            assert np.all(np.diff([e.total for e in tr]) <= 1e-12)

    def test_stiff_map_is_pca_plane(self, rng):
        A, _ = planar(rng)
        A = A + 0.05 * rng.normal(size=A.shape)
        net = make_elastic_net(2, (5, 5))
        model = fit_elastic_map(DataMatrix(A), net, SofteningSchedule((1.0,), 0.01, 1e9), rng=rng)
        assert is_pluriharmonic(net.graph, model.embedding, 1e-8)
        basis = fit_components(DataMatrix(A), 2, rng=rng)
        span = np.linalg.svd(model.embedding - model.embedding.mean(axis=0))[2][:2]
        assert subspace_angles(span.T, basis.components.T).max() < 1e-3

    def test_dimension_too_small(self):
        with pytest.raises(DimensionMismatchError):
            fit_elastic_map(DataMatrix(np.random.default_rng(0).normal(size=(20, 1))),
                            make_elastic_net(2, (3, 3)))

    def test_sphere_fit(self, rng):
        v = rng.normal(size=(400, 3))
        v = v / np.linalg.norm(v, axis=1, keepdims=True) * [3, 2, 1]
        # a closed net has no free boundary, so stretching pulls it inwards;
        # softer moduli than the open-net defaults keep it on the data
        sched = SofteningSchedule(lam=0.001, mu=0.01)
        model = fit_elastic_map(DataMatrix(v), make_elastic_net(2, (4, 8), "sphere"), sched,
                                rng=rng)
        _, _, dist = project_dataset(DataMatrix(v), model)
        assert np.mean(dist) < 0.15 * data_radius(DataMatrix(v))


@pytest.fixture
def fitted(rng):
    A, _ = planar(rng, 200)
    A = A + 0.2 * rng.normal(size=A.shape)
    return DataMatrix(A), fit_elastic_map(DataMatrix(A), make_elastic_net(2, (4, 4)), rng=rng)


class TestProjection:
    def test_vertex(self, fitted):
        _, model = fitted
        p = project_to_map(model.embedding[5], model)
        assert p.distance == 0
        np.testing.assert_allclose(p.internal, model.net.coords[5])

    def test_edge_midpoint(self, fitted):
        _, model = fitted
        u, v = model.net.graph.edges[3]
        p = project_to_map(0.5 * (model.embedding[u] + model.embedding[v]), model)
        assert p.distance < 1e-12
        np.testing.assert_allclose(p.internal, 0.5 * (model.net.coords[u] + model.net.coords[v]))

    def test_chain_map(self, rng):
        X = DataMatrix(arc(rng))
        model = fit_elastic_map(X, make_elastic_net(1, 6), rng=rng)
        x = 0.25 * model.embedding[1] + 0.75 * model.embedding[2]
        assert project_to_map(x, model).internal[0] == pytest.approx(1.75)

    def test_dominance(self, fitted):
        X, model = fitted
        _, amb, dist = project_dataset(X, model)
        vert = np.sqrt(((X.values[:, None] - model.embedding[None]) ** 2).sum(-1)).min(axis=1)
        assert np.all(dist <= vert + 1e-12)
        np.testing.assert_allclose(np.linalg.norm(X.values - amb, axis=1), dist, atol=1e-12)

    def test_dense_sampling_oracle(self, fitted, rng):
        X, model = fitted
        simp, _ = net_simplices(model.net)
        g = np.linspace(0, 1, 142)
        a, b = np.meshgrid(g, g)
        keep = a + b <= 1
        bary = np.c_[1 - a[keep] - b[keep], a[keep], b[keep]]  # ~10^4 points per cell
        samples = np.concatenate([bary @ model.embedding[s] for s in simp])
        r = data_radius(X)
        for x in rng.normal(size=(15, 4)) * 2 + X.values.mean(axis=0):
            oracle = np.sqrt(((samples - x) ** 2).sum(axis=1).min())
            got = project_to_map(x, model).distance
            assert got <= oracle + 1e-12
            assert oracle - got < 1e-3 * r

    def test_gapped_point(self, fitted):
        _, model = fitted
        x = model.embedding[6].copy()
        x[1] = np.nan
        assert project_to_map(x, model).distance < 1e-12

    def test_wrong_dimension(self, fitted):
        with pytest.raises(DimensionMismatchError):
            project_to_map(np.zeros(3), fitted[1])


def test_serialization_round_trip(fitted):
    _, model = fitted
    text = dumps_map_model(model)
    back = loads_map_model(text)
    np.testing.assert_array_equal(back.embedding, model.embedding)
    np.testing.assert_array_equal(back.net.coords, model.net.coords)
    assert dumps_map_model(back) == text
    assert elastic_energy(back.net.graph, back.embedding) == \
        elastic_energy(model.net.graph, model.embedding)
