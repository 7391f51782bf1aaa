import numpy as np
import pytest

from trajlabel import Method, Metric, Stage, Trajectory
from trajlabel.dataset_io import DatasetManifest
from trajlabel.pipeline import ConfigError, LabelConfig, label_dataset, raw_reward
from trajlabel.postprocess import squash


def dataset(n_agents=3, experts=1, seed=0, T=12):
    rng = np.random.default_rng(seed)
    base = np.cumsum(rng.normal(size=(T, 2)), axis=0) + 5.0
    trajs = [Trajectory(base + 0.01 * k, id=f"e{k}") for k in range(experts)]
    trajs += [Trajectory(base + (i + 1) * 0.2 * rng.normal(size=base.shape), id=f"a{i}") for i in range(n_agents)]
    m = DatasetManifest("t", 2, len(trajs), tuple(f"e{k}" for k in range(experts)), Metric.EUCLIDEAN)
    return m, trajs


class TestLabelConfig:
    def test_defaults(self):
        c = LabelConfig()
        assert (c.k_c, c.k_m, c.k_w, c.auto_rew_scale_factor) == (3, 10, 10, 10.0)
        assert c.squash_params() == LabelConfig(method="seg-window").squash_params()
        sp = c.squash_params()
        assert (sp.alpha, sp.beta) == (1.0, 1.0)
        sp = LabelConfig(method="ot").squash_params()
        assert (sp.alpha, sp.beta) == (5.0, 5.0)

    @pytest.mark.parametrize(
        "explicit",
        [
            {"method": "ot", "k_w": 4},
            {"method": "seg-match", "k_m": 2},
            {"method": "min-dist", "epsilon": 0.1},
            {"method": "seg-window", "window_b": "2"},
            {"method": "ot", "lenient_lengths": True},
            {"bogus": 1},
        ],
    )
    def test_stray_knobs_rejected(self, explicit):
        with pytest.raises(ConfigError):
            LabelConfig.from_explicit(explicit)

    @pytest.mark.parametrize(
        "kw",
        [
            {"squash": "none", "postprocess": "offline"},
            {"squash": "otr", "method": "seg-match"},
            {"squash": "none", "alpha": 2.0, "postprocess": "none"},
            {"alpha": -1.0},
            {"k_c": 0},
            {"k_w": -1},
            {"epsilon": 0.0},
            {"postprocess": "sometimes"},
            {"metric": "manhattan"},
        ],
    )
    def test_inconsistent(self, kw):
        with pytest.raises(ValueError):
            LabelConfig(**kw)

    def test_hash_stable_and_sensitive(self):
        assert LabelConfig().config_hash() == LabelConfig().config_hash()
        assert LabelConfig().config_hash() != LabelConfig(seed=1).config_hash()
        assert LabelConfig(window_b="2/4", method="unified").window_b == "1/2"


class TestLabelDataset:
    def test_experts_unlabeled_by_default(self):
        m, trajs = dataset()
        out = label_dataset(m, trajs, LabelConfig(metric="euclidean"))
        labels = {t.id: r for t, r in out.trajectories}
        assert labels["e0"] is None
        assert all(labels[f"a{i}"].stage is Stage.RESCALED for i in range(3))
        assert [t.id for t, _ in out.trajectories] == sorted(labels)

    def test_include_experts(self):
        m, trajs = dataset()
        out = label_dataset(m, trajs, LabelConfig(metric="euclidean", include_experts=True))
        assert all(r is not None for _, r in out.trajectories)

    def test_two_experts_pick_max_total(self):
        m, trajs = dataset(experts=2)
        cfg = LabelConfig(metric="euclidean", postprocess="none")
        out = label_dataset(m, trajs, cfg)
        experts = trajs[:2]
        for t, r in out.trajectories:
            if t.id.startswith("e"):
                continue
            raws = [raw_reward(t, e, cfg) for e in experts]
            best = max(range(2), key=lambda k: (raws[k].total(), -k))
            np.testing.assert_array_equal(r.values, squash(raws[best], cfg.squash_params()).values)
            assert out.manifest.labeling["matched_expert"][t.id] == f"e{best}"

    def test_offline_span(self):
        m, trajs = dataset(n_agents=5)
        out = label_dataset(m, trajs, LabelConfig(metric="euclidean", reward_bias=-2.0))
        rets = [r.total() for _, r in out.trajectories if r is not None]
        assert max(rets) - min(rets) == pytest.approx(1000.0, abs=1e-9)
        assert out.postprocess_params["reward_bias"] == -2.0

    def test_online_scale_from_first_target(self):
        m, trajs = dataset()
        cfg = LabelConfig(metric="euclidean", postprocess="online")
        out = label_dataset(m, trajs, cfg)
        first = [r for t, r in out.trajectories if r is not None][0]
        assert out.postprocess_params["first_episode"] == "a0"
        assert np.abs(first.values).sum() == pytest.approx(10.0, rel=1e-12)

    def test_workers_do_not_change_output(self):
        m, trajs = dataset(n_agents=6)
        cfg = LabelConfig(method="ot", metric="euclidean")
        one = label_dataset(m, trajs, cfg, workers=1)
        four = label_dataset(m, trajs, cfg, workers=4)
        for (_, a), (_, b) in zip(one.trajectories, four.trajectories):
            assert (a is None and b is None) or a.values.tobytes() == b.values.tobytes()

    @pytest.mark.parametrize("method", [m.value for m in Method])
    def test_every_method_runs(self, method):
        m, trajs = dataset()
        cfg = LabelConfig(method=method, metric="euclidean")
        out = label_dataset(m, trajs, cfg)
        assert out.method is Method(method)
        assert out.manifest.labeling["config_hash"] == cfg.config_hash()

    def test_only_experts(self):
        m, trajs = dataset(n_agents=0, experts=2)
        with pytest.raises(ConfigError, match="nothing to label"):
            label_dataset(m, trajs, LabelConfig())

    def test_otr_squash_uses_length_and_dim(self):
        m, trajs = dataset()
        cfg = LabelConfig(method="ot", metric="euclidean", squash="otr", postprocess="none")
        out = label_dataset(m, trajs, cfg)
        t, r = out.trajectories[0]
        raw = raw_reward(t, trajs[0], cfg)
        np.testing.assert_allclose(r.values, 5 * np.exp(5 * len(t) * raw.values / 2), rtol=1e-15)
