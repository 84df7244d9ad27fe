import numpy as np
import pytest
import torch

from citpred.core.errors import ShapeError
from citpred.core.geometry import grid_cell_of
from citpred.nn.encoder import encode, init_params
from citpred.nn.graphs import SocialPooling, SocialTensor, build_current_graph, build_future_graph, build_graph, scatter
from citpred.nn.init import init_uniform_


@pytest.fixture
def pooling():
    return init_uniform_(SocialPooling(64), seed=0, group="pool_c")


def test_empty_scatter_is_zero(grid):
    social = scatter(torch.zeros(0, 64), np.zeros((0, 2)), grid)
    assert social.grid.shape == (1, 25, 5, 64)
    assert not social.grid.any() and not social.occupancy.any()


def test_agent_ahead_occupies_one_forward_cell(grid):
    enc = torch.randn(1, 64)
    social = scatter(enc, np.array([[16.0, 0.0]]), grid)
    occupied = torch.nonzero(social.occupancy[0]).tolist()
    assert occupied == [list(grid_cell_of((16.0, 0.0), grid))]
    assert occupied[0][0] > grid.center_cell[0]
    torch.testing.assert_close(social.grid[0, occupied[0][0], occupied[0][1]], enc[0])


def test_shared_cell_keeps_nearer_agent(grid):
    enc = torch.randn(2, 64)
    social = scatter(enc, np.array([[16.5, 0.3], [16.0, 0.0]]), grid)
    assert social.occupancy.sum() == 1
    row, col = grid_cell_of((16.0, 0.0), grid)
    torch.testing.assert_close(social.grid[0, row, col], enc[1])


def test_out_of_grid_agents_are_dropped(grid):
    social = scatter(torch.randn(2, 64), np.array([[45.0, 0.0], [0.0, -9.0]]), grid)
    assert not social.occupancy.any()


def test_zero_parameters_give_zero_graph(grid):
    pooling = SocialPooling(64)
    with torch.no_grad():
        for p in pooling.parameters():
            p.zero_()
    social = scatter(torch.zeros(0, 64), np.zeros((0, 2)), grid)
    graph = build_graph(torch.randn(64), social, pooling)
    assert graph.shape == (25, 5, 65)
    assert not graph.any()


def test_current_graph_shape_and_occupancy_channel(grid, pooling):
    enc = init_params("neighbor", seed=0)
    neighbors = torch.stack([encode(np.random.default_rng(i).normal(size=(15, 2)), enc) for i in range(3)])
    positions = np.array([[10.0, 0.0], [-12.0, 3.6], [80.0, 0.0]])
    graph = build_current_graph(torch.randn(64), neighbors, positions, pooling, grid)
    assert graph.shape == (25, 5, 65)
    assert graph[..., -1].sum() == 2
    for p in positions[:2]:
        assert graph[(*grid_cell_of(p, grid), -1)] == 1


def test_isolated_target_still_gets_a_graph(grid, pooling):
    graph = build_current_graph(torch.randn(64), torch.zeros(0, 64), np.zeros((0, 2)), pooling, grid)
    assert graph.shape == (25, 5, 65)
    assert torch.isfinite(graph).all()
    assert not graph[..., -1].any()


def test_unoccupied_cells_are_masked(grid, pooling):
    target = torch.randn(1, 64)
    social = scatter(torch.randn(1, 64), np.array([[5.0, 0.0]]), grid)
    perturbed = social.grid.clone()
    perturbed[0, 0, 0] = 100.0  # far corner, unoccupied
    a = pooling(target, social)
    b = pooling(target, SocialTensor(grid=perturbed, occupancy=social.occupancy))
    assert torch.equal(a, b)


def test_future_graph_accepts_both_plan_rates(grid):
    ego_encoder = init_params("ego", seed=0)
    pooling = init_uniform_(SocialPooling(64), seed=0, group="pool_f")
    fine = np.stack([np.arange(1, 26) * 4.0, np.zeros(25)], axis=1)
    coarse = fine[4::5]
    target = torch.randn(64)
    for plan in (fine, coarse):
        graph = build_future_graph(target, encode(plan, ego_encoder), np.array([20.0, 0.0]), pooling, grid)
        assert graph.shape == (25, 5, 65)
        assert graph[..., -1].sum() == 1


def test_batched_scatter_uses_owner_grids(grid):
    enc = torch.randn(3, 8)
    social = scatter(enc, np.array([[0.0, 0.0], [0.0, 0.0], [5.0, 0.0]]), grid, owners=np.array([0, 1, 1]), count=3)
    assert social.occupancy.sum(dim=(1, 2)).tolist() == [1, 2, 0]


def test_pooling_rejects_mismatched_shapes(grid, pooling):
    social = scatter(torch.zeros(0, 64), np.zeros((0, 2)), grid)
    with pytest.raises(ShapeError):
        pooling(torch.randn(2, 64), social)
