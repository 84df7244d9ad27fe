import numpy as np
import pytest

from citpred.core.errors import DataFormatError, WindowError
from citpred.data.instances import ExtractionSummary, downsample_plan, extract_instances, label_maneuver, split_dataset
from citpred.schemas import AgentTrack, EgoPlan, SplitSpec

from conftest import make_instance


def lane_track(agent_id, n=60, x0=0.0, speed=20.0, y=5.5, lane=1, start=0):
    frames = np.arange(start, start + n)
    x = x0 + speed * 0.2 * np.arange(n)
    return AgentTrack(
        agent_id=agent_id,
        frames=frames,
        positions=np.stack([x, np.full(n, y)], axis=1),
        lane_ids=np.full(n, lane),
        source_rate=5,
    )


# --- Maneuver labels ---

def test_constant_lane_and_speed_is_keep_normal():
    label = label_maneuver(lane_track(1), t=20)
    assert (label.lateral, label.longitudinal) == ("keep", "normal")


def test_lane_decrease_is_left():
    track = lane_track(1, lane=3)
    lanes = track.lane_ids.copy()
    lanes[20:] = 2
    y = track.positions[:, 1].copy()
    y[15:25] -= np.linspace(0.0, 3.6, 10)
    y[25:] -= 3.6
    changed = AgentTrack(
        agent_id=1, frames=track.frames, positions=np.stack([track.positions[:, 0], y], axis=1), lane_ids=lanes
    )
    assert label_maneuver(changed, t=15).lateral == "left"
    # Past change still visible within the history window
    assert label_maneuver(changed, t=25).lateral == "left"


def test_lane_increase_is_right():
    track = lane_track(1, lane=1)
    lanes = track.lane_ids.copy()
    lanes[30:] = 2
    changed = AgentTrack(agent_id=1, frames=track.frames, positions=track.positions, lane_ids=lanes)
    assert label_maneuver(changed, t=15).lateral == "right"


def test_slowing_below_ratio_is_brake():
    t = 15
    steps = np.where(np.arange(59) < t, 20.0, 12.0) * 0.2  # m per frame
    x = np.concatenate([[0.0], np.cumsum(steps)])
    track = AgentTrack(
        agent_id=1, frames=np.arange(60), positions=np.stack([x, np.zeros(60)], axis=1), lane_ids=np.zeros(60, dtype=int)
    )
    assert label_maneuver(track, t=t).longitudinal == "brake"


def test_mild_slowdown_is_normal():
    t = 15
    steps = np.where(np.arange(59) < t, 20.0, 17.0) * 0.2
    x = np.concatenate([[0.0], np.cumsum(steps)])
    track = AgentTrack(
        agent_id=1, frames=np.arange(60), positions=np.stack([x, np.zeros(60)], axis=1), lane_ids=np.zeros(60, dtype=int)
    )
    assert label_maneuver(track, t=t).longitudinal == "normal"


def test_label_needs_full_future_window():
    with pytest.raises(WindowError):
        label_maneuver(lane_track(1, n=30), t=15)


def test_label_needs_full_past_window():
    # the lane one observation window back is missing: frame 5 - 15 < 0
    with pytest.raises(WindowError):
        label_maneuver(lane_track(1), t=5)
    with pytest.raises(WindowError):
        label_maneuver(lane_track(1, start=1), t=15)
    assert label_maneuver(lane_track(1), t=15).lateral == "keep"

# --- Plan downsampling ---

def test_plan_downsampled_to_one_hz_keeps_whole_seconds():
    points = np.stack([np.arange(1, 26, dtype=float), np.zeros(25)], axis=1)
    coarse = downsample_plan(EgoPlan(points=points, rate=5))
    assert coarse.rate == 1
    np.testing.assert_array_equal(coarse.points[:, 0], [5, 10, 15, 20, 25])


def test_constant_plan_stays_constant():
    coarse = downsample_plan(EgoPlan(points=np.full((25, 2), 3.0), rate=5))
    np.testing.assert_array_equal(coarse.points, np.full((5, 2), 3.0))


def test_constant_velocity_plan():
    # 10 m/s at 5 Hz: 2 m per frame
    points = np.stack([2.0 * np.arange(1, 26), np.zeros(25)], axis=1)
    coarse = downsample_plan(EgoPlan(points=points, rate=5))
    np.testing.assert_allclose(coarse.points[:, 0], [10, 20, 30, 40, 50])


def test_downsample_rejects_wrong_length():
    with pytest.raises(WindowError):
        downsample_plan(EgoPlan(points=np.zeros((20, 2)), rate=5))


def test_downsample_same_rate_is_identity():
    plan = EgoPlan(points=np.zeros((5, 2)), rate=1)
    assert downsample_plan(plan, 1) is plan

# --- Instance extraction ---

def test_isolated_ego_has_no_targets(grid):
    instances = extract_instances([lane_track(0)], grid)
    assert [inst.t for inst in instances] == [15, 20, 25, 30]
    assert all(inst.targets == [] for inst in instances)
    first = instances[0]
    assert first.instance_id == "0:15"
    np.testing.assert_allclose(first.ego_history[-1], [0.0, 0.0])
    assert first.ego_history.shape == (15, 2)
    assert len(first.ego_plan) == 25 and first.ego_plan.rate == 5
    np.testing.assert_allclose(first.ego_plan.points[0], [4.0, 0.0])


def test_follower_is_target_with_ego_as_neighbor(grid):
    ego = lane_track(0, x0=20.0)
    follower = lane_track(1, x0=0.0)
    instances = extract_instances([ego, follower], grid)
    ego_instances = [inst for inst in instances if inst.ego_id == 0]
    assert len(ego_instances) == 4
    inst = ego_instances[0]
    assert len(inst.targets) == 1
    target = inst.targets[0]
    assert target.agent_id == 1
    np.testing.assert_allclose(target.position, [-20.0, 0.0])
    assert [n.agent_id for n in target.neighbors] == [0]
    np.testing.assert_allclose(target.neighbors[0].history, inst.ego_history)
    np.testing.assert_allclose(target.neighbors[0].position, [0.0, 0.0])
    assert (target.maneuver.lateral, target.maneuver.longitudinal) == ("keep", "normal")


def test_truncated_target_is_excluded(grid):
    ego = lane_track(0, x0=20.0)
    short = lane_track(2, n=30, x0=0.0)
    summary = ExtractionSummary()
    instances = extract_instances([ego, short], grid, summary=summary)
    first = next(inst for inst in instances if inst.ego_id == 0 and inst.t == 15)
    assert first.targets == []
    assert summary.incomplete_targets > 0


def test_target_without_a_labelable_past_is_excluded(grid):
    ego = lane_track(0, x0=20.0)
    late = lane_track(1, n=59, x0=4.0, start=1)  # 20 m behind the ego, frame 0 missing
    summary = ExtractionSummary()
    instances = extract_instances([ego, late], grid, summary=summary)
    by_t = {inst.t: inst for inst in instances if inst.ego_id == 0}
    assert by_t[15].targets == []
    assert [t.agent_id for t in by_t[20].targets] == [1]
    assert summary.incomplete_targets >= 1


def test_out_of_grid_agent_is_not_a_target(grid):
    ego = lane_track(0, x0=100.0)
    far = lane_track(1, x0=0.0)
    instances = extract_instances([ego, far], grid)
    assert all(inst.targets == [] for inst in instances)


def test_shared_cell_keeps_nearest_target(grid):
    ego = lane_track(0, x0=20.0)
    near = lane_track(1, x0=20.5)  # 0.5 m ahead, center cell
    same_cell = lane_track(2, x0=20.0, y=5.5 + 0.9)
    summary = ExtractionSummary()
    instances = extract_instances([ego, near, same_cell], grid, summary=summary)
    inst = next(i for i in instances if i.ego_id == 0)
    assert [t.agent_id for t in inst.targets] == [1]
    assert summary.cell_collisions > 0


def test_reverse_direction_is_rotated(grid):
    ego = lane_track(0, x0=100.0, speed=-20.0)
    follower = lane_track(1, x0=120.0, speed=-20.0)
    inst = extract_instances([ego, follower], grid)[0]
    assert inst.direction == -1
    assert inst.ego_plan.points[0, 0] > 0
    np.testing.assert_allclose(inst.targets[0].position, [-20.0, 0.0])


def test_extraction_is_translation_invariant(grid):
    a = extract_instances([lane_track(0, x0=20.0), lane_track(1)], grid)
    b = extract_instances([lane_track(0, x0=520.0, y=9.0), lane_track(1, x0=500.0, y=9.0)], grid)
    assert len(a) == len(b)
    for ia, ib in zip(a, b):
        np.testing.assert_allclose(ia.ego_plan.points, ib.ego_plan.points, atol=1e-9)
        for ta, tb in zip(ia.targets, ib.targets):
            np.testing.assert_allclose(ta.history, tb.history, atol=1e-9)
            np.testing.assert_allclose(ta.future, tb.future, atol=1e-9)


def test_extraction_requires_working_rate(grid):
    track = lane_track(0)
    fast = AgentTrack(
        agent_id=0, frames=track.frames, positions=track.positions, lane_ids=track.lane_ids, source_rate=10
    )
    with pytest.raises(DataFormatError):
        extract_instances([fast], grid)

# --- Splits ---

def test_split_fractions_over_ego_ids():
    instances = [make_instance(f"{ego}:{t}") for ego in range(10) for t in (0, 5)]
    train, val, test = split_dataset(instances, SplitSpec(seed=3))
    ids = [{inst.ego_id for inst in part} for part in (train, val, test)]
    assert [len(s) for s in ids] == [7, 1, 2]
    assert not (ids[0] & ids[1]) and not (ids[0] & ids[2]) and not (ids[1] & ids[2])
    assert len(train) + len(val) + len(test) == len(instances)


def test_split_is_deterministic():
    instances = [make_instance(f"{ego}:0") for ego in range(10)]
    first = split_dataset(instances, SplitSpec(seed=5))
    second = split_dataset(instances, SplitSpec(seed=5))
    assert [[i.instance_id for i in part] for part in first] == [[i.instance_id for i in part] for part in second]
