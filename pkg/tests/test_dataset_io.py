import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from trajlabel import Method, Metric, RewardSeries, Stage, Trajectory
from trajlabel.dataset_io import (
    DatasetError,
    DatasetManifest,
    LabeledDataset,
    dataset_stats,
    fmt_float,
    load_dataset,
    load_labeled,
    save_dataset,
    save_labeled,
    trajectory_line,
)


def manifest(n, dim=2, experts=("e",)):
    return DatasetManifest("toy", dim, n, tuple(experts), Metric.EUCLIDEAN, "2024-01-01T00:00:00Z")


@pytest.fixture
def two_file(tmp_path):
    trajs = [Trajectory([[0.0, 1.0], [1.0, 1.0]], id="e"), Trajectory([[0.5, 0.5]], actions=[[1.0]], id="a")]
    path = tmp_path / "two.jsonl"
    save_dataset(path, manifest(2), trajs)
    return path


def write_lines(tmp_path, lines):
    p = tmp_path / "bad.jsonl"
    p.write_text("\n".join(lines) + "\n")
    return p


HEADER = json.dumps({"kind": "manifest", "name": "x", "state_dim": 2, "trajectory_count": 1,
                     "expert_ids": ["e"], "distance_metric": "euclidean", "created_at": ""})
GOOD = '{"kind":"trajectory","id":"e","dim":2,"states":[0,1,2,3]}'


class TestLoad:
    def test_two_trajectories(self, two_file):
        m, trajs = load_dataset(two_file)
        assert m.trajectory_count == 2 and [t.id for t in trajs] == ["e", "a"]
        assert trajs[1].actions.shape == (1, 1)
        assert m.distance_metric is Metric.EUCLIDEAN

    def test_wrong_length_names_line(self, tmp_path):
        bad = '{"kind":"trajectory","id":"e","dim":2,"states":[0,1,2]}'
        with pytest.raises(DatasetError, match="line 2") as info:
            load_dataset(write_lines(tmp_path, [HEADER, bad]))
        assert info.value.line == 2

    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty.jsonl"
        p.write_text("")
        with pytest.raises(DatasetError, match="no trajectories"):
            load_dataset(p)

    def test_header_only(self, tmp_path):
        with pytest.raises(DatasetError, match="no trajectories"):
            load_dataset(write_lines(tmp_path, [HEADER]))


# Fixed fuzz corpus: every entry must be rejected with a DatasetError.
FUZZ = {
    "truncated_json": [HEADER, GOOD[:-5]],
    "truncated_header": [HEADER[:20], GOOD],
    "not_object": [HEADER, "[1, 2, 3]"],
    "manifest_missing": [GOOD],
    "manifest_bad_dim": [HEADER.replace('"state_dim": 2', '"state_dim": 0'), GOOD],
    "manifest_dim_text": [HEADER.replace('"state_dim": 2', '"state_dim": "two"'), GOOD],
    "wrong_dim": [HEADER, GOOD.replace('"dim":2', '"dim":3').replace("[0,1,2,3]", "[0,1,2]")],
    "ragged_states": [HEADER, GOOD.replace("[0,1,2,3]", "[0,1,2]")],
    "empty_states": [HEADER, GOOD.replace("[0,1,2,3]", "[]")],
    "nested_states": [HEADER, GOOD.replace("[0,1,2,3]", "[[0,1],[2,3]]")],
    "text_state": [HEADER, GOOD.replace("[0,1,2,3]", '[0,1,"x",3]')],
    "nan_state": [HEADER, GOOD.replace("[0,1,2,3]", "[0,1,NaN,3]")],
    "inf_state": [HEADER, GOOD.replace("[0,1,2,3]", "[0,1,Infinity,3]")],
    "huge_state": [HEADER, GOOD.replace("[0,1,2,3]", "[0,1,1e999,3]")],
    "missing_id": [HEADER, GOOD.replace('"id":"e",', "")],
    "empty_id": [HEADER, GOOD.replace('"id":"e"', '"id":""')],
    "wrong_kind": [HEADER, GOOD.replace('"trajectory"', '"manifest"')],
    "duplicate_id": [HEADER.replace('"trajectory_count": 1', '"trajectory_count": 2'), GOOD, GOOD],
    "count_mismatch": [HEADER.replace('"trajectory_count": 1', '"trajectory_count": 3'), GOOD],
    "missing_expert": [HEADER.replace('["e"]', '["zz"]'), GOOD],
    "no_experts": [HEADER.replace('["e"]', "[]"), GOOD],
    "bad_metric": [HEADER.replace('"euclidean"', '"manhattan"'), GOOD],
    "reward_count": [HEADER, GOOD[:-1] + ',"rewards":[1]}'],
    "nan_reward": [HEADER, GOOD[:-1] + ',"rewards":[1,NaN]}'],
    "bad_stage": [HEADER, GOOD[:-1] + ',"reward_stage":"cooked","rewards":[1,2]}'],
    "action_count": [HEADER, GOOD[:-1] + ',"action_dim":1,"actions":[1]}'],
    "action_no_dim": [HEADER, GOOD[:-1] + ',"actions":[1,2]}'],
}


@pytest.mark.parametrize("name", sorted(FUZZ))
def test_fuzz_corpus_rejected(tmp_path, name):
    with pytest.raises(DatasetError):
        load_dataset(write_lines(tmp_path, FUZZ[name]))


@settings(max_examples=80)
@given(st.text(max_size=200))
def test_random_text_never_crashes_loader(tmp_path_factory, text):
    p = tmp_path_factory.mktemp("fz") / "x.jsonl"
    p.write_text(HEADER + "\n" + text, encoding="utf-8")
    try:
        load_dataset(p)
    except DatasetError:
        pass


class TestRoundTrip:
    def test_save_load_save_bytes(self, two_file, tmp_path):
        m, trajs = load_dataset(two_file)
        again = tmp_path / "again.jsonl"
        save_dataset(again, m, trajs)
        assert again.read_bytes() == two_file.read_bytes()

    def test_float_format(self):
        assert fmt_float(0.1) == "0.10000000000000001"
        assert float(fmt_float(1 / 3)) == 1 / 3
        assert fmt_float(-0.0) == "-0.0" and fmt_float(0.0) == "0"
        with pytest.raises(DatasetError):
            fmt_float(float("nan"))

    @settings(max_examples=40)
    @given(st.lists(arrays(np.float64, st.tuples(st.integers(1, 5), st.just(3)),
                           elements=st.floats(-1e300, 1e300, allow_nan=False, width=64)),
                    min_size=1, max_size=4))
    def test_bitwise_fidelity(self, tmp_path_factory, arrs):
        trajs = [Trajectory(a, id=f"t{i}") for i, a in enumerate(arrs)]
        rewards = [RewardSeries(-np.abs(a[:, 0]), Stage.RAW) for a in arrs]
        ds = LabeledDataset(
            DatasetManifest("h", 3, len(trajs), ("t0",)), tuple(zip(trajs, rewards)), Method.MIN_DIST,
            {"kind": "none"},
        )
        d = tmp_path_factory.mktemp("rt")
        save_labeled(ds, d / "a.jsonl")
        back = load_labeled(d / "a.jsonl")
        for (t0, r0), (t1, r1) in zip(ds.trajectories, back.trajectories):
            assert t0.states.tobytes() == t1.states.tobytes()
            assert r0.values.tobytes() == r1.values.tobytes()
        save_labeled(back, d / "b.jsonl")
        assert (d / "a.jsonl").read_bytes() == (d / "b.jsonl").read_bytes()

    def test_labeled_header_carries_provenance(self, tmp_path):
        t = Trajectory([[1.0, 2.0]], id="e")
        post = {"kind": "offline", "reward_scale": 2.0, "reward_bias": -2.0, "squash": {"kind": "exp", "alpha": 1.0, "beta": 1.0}}
        ds = LabeledDataset(manifest(1), ((t, RewardSeries([-0.5], Stage.RESCALED)),), Method.SEG_MATCH, post)
        save_labeled(ds, tmp_path / "o.jsonl")
        head = json.loads((tmp_path / "o.jsonl").read_text().splitlines()[0])
        assert head["labeling"]["method"] == "seg-match"
        assert head["labeling"]["postprocess"] == post
        back = load_labeled(tmp_path / "o.jsonl")
        assert back.method is Method.SEG_MATCH and back.postprocess_params == post
        assert back.trajectories[0][1].stage is Stage.RESCALED

    def test_reward_count_mismatch_rejected_before_writing(self, tmp_path):
        t = Trajectory([[1.0, 2.0], [3.0, 4.0]], id="e")
        ds = LabeledDataset(manifest(1), ((t, RewardSeries([-0.5])),), Method.SEG_MATCH)
        out = tmp_path / "o.jsonl"
        with pytest.raises(DatasetError, match="rewards"):
            save_labeled(ds, out)
        assert not out.exists()

    def test_line_field_order(self):
        line = trajectory_line(Trajectory([[1.0]], actions=[[2.0]], id="q"), RewardSeries([-1.0]))
        assert line == ('{"kind":"trajectory","id":"q","dim":1,"states":[1],"action_dim":1,'
                        '"actions":[2],"reward_stage":"raw","rewards":[-1]}')


class TestStats:
    def test_two_and_seven(self):
        trajs = [Trajectory([[0.0]] * 2), Trajectory([[0.0]] * 3)]
        s = dataset_stats(trajs, [RewardSeries([1.0, 1.0]), RewardSeries([3.0, 3.0, 1.0])])
        assert (s.max_return, s.min_return, s.degenerate) == (7.0, 2.0, False)
        assert s.length_histogram == {2: 1, 3: 1}
        assert (s.reward_min, s.reward_max) == (1.0, 3.0)
        assert s.reward_mean == pytest.approx(9.0 / 5)

    def test_single_is_degenerate(self):
        s = dataset_stats([Trajectory([[0.0]])], [RewardSeries([4.0])])
        assert s.degenerate and s.max_return == s.min_return == 4.0

    def test_empty_and_misaligned(self):
        with pytest.raises(ValueError):
            dataset_stats([], [])
        with pytest.raises(ValueError):
            dataset_stats([Trajectory([[0.0]] * 2)], [RewardSeries([1.0])])

    @given(st.lists(st.lists(st.floats(-10, 10), min_size=1, max_size=5), min_size=1, max_size=6), st.randoms())
    def test_permutation_invariant(self, rows, rnd):
        trajs = [Trajectory([[0.0]] * len(r)) for r in rows]
        rew = [RewardSeries(r) for r in rows]
        order = list(range(len(rows)))
        rnd.shuffle(order)
        a = dataset_stats(trajs, rew)
        b = dataset_stats([trajs[i] for i in order], [rew[i] for i in order])
        assert (a.max_return, a.min_return, a.length_histogram, a.reward_min, a.reward_max) == (
            b.max_return, b.min_return, b.length_histogram, b.reward_min, b.reward_max)
        assert a.reward_mean == b.reward_mean  # fsum is order independent
