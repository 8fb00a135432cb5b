import numpy as np
import pytest

from otpinn.grid import CollocationSet, Domain, append_points, uniform_grid, write_points_csv


@pytest.mark.parametrize(
    "lo, hi, dx, expected",
    [(-2, 2, 0.25, 225), (-2, 2, 0.05, 6241), (-4, 4, 0.1, 6241), (-4, 4, 0.05, 25281)],
)
def test_interior_counts(lo, hi, dx, expected):
    cs = uniform_grid(Domain.box(lo, hi, 2), dx)
    assert len(cs.interior) == expected
    k = int(round((hi - lo) / dx)) + 1
    assert len(cs.interior) + len(cs.boundary) == k * k
    assert len(cs.interior) == (k - 2) ** 2


def test_three_node_line():
    cs = uniform_grid(Domain((0.0,), (1.0,)), 0.5)
    assert cs.interior.tolist() == [[0.5]]
    assert sorted(cs.boundary.ravel().tolist()) == [0.0, 1.0]


def test_anisotropic_3d_counts():
    cs = uniform_grid(Domain((0, 0, -1), (1, 2, 1)), (0.25, 0.5, 0.5))
    assert len(cs.interior) == 3 * 3 * 3
    assert len(cs.interior) + len(cs.boundary) == 5 * 5 * 5


def test_interior_and_boundary_are_disjoint_and_tagged_correctly():
    dom = Domain.box(-2, 2, 2)
    cs = uniform_grid(dom, 0.25)
    lo, hi = np.array(dom.lower), np.array(dom.upper)
    assert np.all(np.any((cs.boundary == lo) | (cs.boundary == hi), axis=1))
    assert not np.any((cs.interior == lo) | (cs.interior == hi))
    assert not {tuple(p) for p in cs.interior} & {tuple(p) for p in cs.boundary}
    assert np.all((cs.interior >= lo) & (cs.interior <= hi))


def test_grid_is_deterministic():
    a = uniform_grid(Domain.box(-1, 1, 2), 0.1)
    b = uniform_grid(Domain.box(-1, 1, 2), 0.1)
    assert np.array_equal(a.interior, b.interior) and np.array_equal(a.boundary, b.boundary)


@pytest.mark.parametrize("dx", [0.3, 0.7, 2.0])
def test_grid_spacing_errors(dx):
    with pytest.raises(ValueError):
        uniform_grid(Domain((0.0,), (2.0,)), dx)


def test_domain_requires_ordered_bounds():
    with pytest.raises(ValueError):
        Domain((0.0, 1.0), (1.0, 1.0))


def test_collocation_arrays_are_read_only():
    cs = uniform_grid(Domain.box(-1, 1, 2), 0.5)
    with pytest.raises(ValueError):
        cs.interior[0, 0] = 9.0


def test_append_distinct_points():
    cs = uniform_grid(Domain.box(-2, 2, 2), 0.25)
    rng = np.random.default_rng(0)
    new = rng.uniform(-1.9, 1.9, (200, 2))
    out = append_points(cs, new)
    assert len(out.interior) == 425
    assert np.array_equal(out.interior[:225], cs.interior)
    assert len(cs.interior) == 225


def test_append_duplicate_is_dropped():
    cs = uniform_grid(Domain.box(-2, 2, 2), 0.25)
    out = append_points(cs, cs.interior[:1])
    assert len(out.interior) == 225
    out = append_points(cs, np.array([[0.1, 0.1], [0.1, 0.1]]))
    assert len(out.interior) == 226


def test_ten_rounds_of_two_hundred():
    cs = uniform_grid(Domain.box(-2, 2, 2), 0.25)
    rng = np.random.default_rng(1)
    for _ in range(10):
        cs = append_points(cs, rng.uniform(-1.99, 1.99, (200, 2)))
    assert len(cs.interior) == 2225


def test_append_clips_and_checks_dimension():
    cs = uniform_grid(Domain.box(-1, 1, 2), 0.5)
    out = append_points(cs, [[0.3, 1.0 + 1e-15]])
    # clipped onto the face, so it is not an interior point
    assert len(out.interior) == len(cs.interior)
    out = append_points(cs, [[0.3, 0.999999]])
    assert len(out.interior) == len(cs.interior) + 1
    with pytest.raises(ValueError):
        append_points(cs, [[0.1, 0.2, 0.3]])


def test_points_csv(tmp_path):
    cs = uniform_grid(Domain((0.0,), (1.0,)), 0.5)
    path = tmp_path / "pts.csv"
    write_points_csv(path, cs)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "x_1,tag"
    assert lines[1:] == ["0.5,interior", "0,boundary", "1,boundary"]
    assert isinstance(cs, CollocationSet)
