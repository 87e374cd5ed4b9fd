import numpy as np
import pytest

from anisovoro import kernels
from anisovoro.diagram import CellTensors, site_tensors
from anisovoro.grid import Grid
from anisovoro.metric import MetricField

BACKENDS = kernels.available_backends()


@pytest.fixture
def backend(request):
    prev = kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(prev)


def _setup(dim=2, res=48, n_sites=40, seed=0):
    grid = Grid.unit(res, dim)
    field = MetricField.swirl(dim=dim)
    cells = CellTensors.build(field, grid)
    sites = np.random.default_rng(seed).random((n_sites, dim))
    return grid, field, cells, sites


def test_compiled_backend_present():
    assert "python" in BACKENDS
    assert "compiled" in BACKENDS, "the compiled extension did not build"


@pytest.mark.parametrize("ls", [False, True])
@pytest.mark.parametrize("dim", [2, 3])
def test_backends_bitwise_equal(ls, dim):
    grid, field, cells, sites = _setup(dim, 24 if dim == 3 else 64)
    qs = site_tensors(field, sites) if ls else None
    out = {}
    for name in BACKENDS:
        prev = kernels.use_backend(name)
        try:
            lab, best = kernels.label_sites(cells.centers, None if ls else cells.q, sites, qs, ls)
            comp, n = kernels.label_components(lab, grid.res)
        finally:
            kernels.use_backend(prev)
        out[name] = (lab, best, comp, n)
    ref = out["python"]
    for name, val in out.items():
        assert np.array_equal(val[0], ref[0]), name
        assert np.array_equal(val[1], ref[1]), name
        assert np.array_equal(val[2], ref[2]), name
        assert val[3] == ref[3]


@pytest.mark.parametrize("backend", BACKENDS, indirect=True)
def test_incremental_equals_batch(backend):
    grid, field, cells, sites = _setup()
    lab, best = kernels.label_sites(cells.centers, cells.q, sites, None, False)
    b2 = np.full(grid.ncells, np.inf)
    l2 = np.full(grid.ncells, -1, dtype=np.int64)
    for i, s in enumerate(sites):
        kernels.update_nearest(cells.centers, cells.q, s, np.zeros((2, 2)), i, b2, l2, False)
    assert np.array_equal(lab, l2)
    assert np.array_equal(best, b2)


@pytest.mark.parametrize("backend", BACKENDS, indirect=True)
def test_ties_go_to_lowest_index(backend):
    grid = Grid.unit(8)
    cells = CellTensors.build(MetricField.identity(2), grid)
    sites = np.array([[0.5, 0.5], [0.5, 0.5]])
    lab, _ = kernels.label_sites(cells.centers, cells.q, sites, None, False)
    assert np.all(lab == 0)


@pytest.mark.parametrize("backend", BACKENDS, indirect=True)
def test_components_numbered_by_first_cell(backend):
    labels = np.array([[1, 1, 0], [0, 1, 0], [0, 0, 1]])
    comp, n = kernels.label_components(labels.ravel(), labels.shape)
    assert n == 4
    assert comp.reshape(3, 3).tolist() == [[0, 0, 1], [2, 0, 1], [2, 2, 3]]


@pytest.mark.parametrize("threads", [1, 2, 4])
def test_thread_count_does_not_change_results(threads):
    grid, field, cells, sites = _setup(res=96, n_sites=60)
    kernels.set_threads(1)
    ref = kernels.label_sites(cells.centers, cells.q, sites, None, False)
    kernels.set_threads(threads)
    try:
        got = kernels.label_sites(cells.centers, cells.q, sites, None, False)
    finally:
        kernels.set_threads(None)
    assert np.array_equal(ref[0], got[0])
    assert np.array_equal(ref[1], got[1])


def test_env_thread_default(monkeypatch):
    monkeypatch.setenv("ANISOVORO_THREADS", "3")
    assert kernels.default_threads() == 3
    with pytest.raises(ValueError):
        kernels.use_backend("gpu")
