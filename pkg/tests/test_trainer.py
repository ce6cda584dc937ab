"""Training-loop and inference tests."""

import json

import numpy as np
import pytest

from natforge import trainer
from natforge.archgraph import cost_non_increasing, sample_uniform, validate
from natforge.trainer import (
    TrainConfig,
    TrainLog,
    edge_match_rate,
    infer,
    random_policy_match_rate,
    uniform_policy_entropy,
)

FAST = dict(epochs=10, iters_w=2, iters_theta=2)


class TestConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert cfg.mode == "nat++"
        assert cfg.provider == "oracle"
        assert cfg.m == 1 and cfg.n == 1
        assert cfg.entropy_weight == 0.003
        assert cfg.eta_w == 0.05
        assert cfg.eta_theta == 0.01
        assert cfg.epochs == 200
        assert cfg.use_baseline is False

    def test_invalid_values_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(m=0)
        with pytest.raises(ValueError):
            TrainConfig(entropy_weight=-1.0)
        with pytest.raises(ValueError):
            TrainConfig(eta_theta=0.0)
        with pytest.raises(ValueError):
            TrainConfig(provider="real")

    def test_to_dict_round_trips_fields(self):
        cfg = TrainConfig(seed=5)
        d = cfg.to_dict()
        assert d["seed"] == 5
        assert TrainConfig(**d) == cfg


class TestLog:
    def test_iterations_strictly_increase(self):
        log = TrainLog()
        log.append({"iter": 1, "phase": "theta", "loss": 0.0, "mean_reward": 0.0, "entropy": 1.0})
        with pytest.raises(ValueError, match="increasing"):
            log.append({"iter": 1, "phase": "theta", "loss": 0.0, "mean_reward": 0.0, "entropy": 1.0})

    def test_jsonl_shape(self, tmp_path):
        cfg = TrainConfig(seed=0, **FAST)
        result = trainer.run(cfg)
        path = str(tmp_path / "log.jsonl")
        result.log.write(path)
        records = [json.loads(line) for line in open(path)]
        assert len(records) == 10 * 2  # oracle provider skips the w phase
        assert all(r["phase"] == "theta" for r in records)
        assert [r["iter"] for r in records] == list(range(1, 21))

    def test_supernet_runs_log_both_phases(self):
        cfg = TrainConfig(provider="supernet", seed=0, **FAST)
        result = trainer.run(cfg)
        phases = [r["phase"] for r in result.log.records]
        assert "w" in phases and "theta" in phases


class TestRun:
    def test_deterministic(self):
        a = trainer.run(TrainConfig(seed=3, **FAST))
        b = trainer.run(TrainConfig(seed=3, **FAST))
        assert all(np.array_equal(x, y) for x, y in zip(a.policy.gcn, b.policy.gcn))
        assert np.array_equal(a.policy.fc, b.policy.fc)
        assert a.log.records == b.log.records

    def test_oracle_run_has_no_supernet(self):
        result = trainer.run(TrainConfig(seed=0, **FAST))
        assert result.shared is None
        assert result.oracle is not None

    def test_supernet_run_has_no_oracle(self):
        result = trainer.run(TrainConfig(provider="supernet", seed=0, **FAST))
        assert result.oracle is None
        assert result.shared is not None

    def test_nat_mode_trains(self):
        result = trainer.run(TrainConfig(mode="nat", seed=0, **FAST))
        assert result.policy.mode == "nat"
        assert result.policy.fc.shape == (64, 6)

    def test_baseline_option_changes_updates(self):
        a = trainer.run(TrainConfig(seed=1, **FAST))
        b = trainer.run(TrainConfig(seed=1, use_baseline=True, **FAST))
        assert not np.array_equal(a.policy.fc, b.policy.fc)


@pytest.fixture(scope="module")
def trained():
    return trainer.run(TrainConfig(seed=0, epochs=50))


class TestInfer:
    def test_argmax_decode_deterministic(self, trained):
        g = sample_uniform(4, np.random.default_rng(20))
        a = infer(trained.policy, g, decode="argmax")
        b = infer(trained.policy, g, decode="argmax")
        assert a == b

    def test_sample_decode_requires_rng(self, trained):
        g = sample_uniform(4, np.random.default_rng(21))
        with pytest.raises(ValueError, match="rng"):
            infer(trained.policy, g, decode="sample")

    def test_bad_decode_rejected(self, trained):
        g = sample_uniform(4, np.random.default_rng(22))
        with pytest.raises(ValueError, match="decode"):
            infer(trained.policy, g, decode="greedy")

    def test_output_valid_and_cheaper(self, trained):
        rng = np.random.default_rng(23)
        for _ in range(50):
            beta = sample_uniform(4, rng)
            alpha = infer(trained.policy, beta, decode="sample", rng=rng)
            validate(alpha)
            assert cost_non_increasing(beta, alpha)

    def test_topology_untouched(self, trained):
        beta = sample_uniform(4, np.random.default_rng(24))
        alpha = infer(trained.policy, beta, decode="argmax")
        for eb, ea in zip(beta.edges, alpha.edges):
            assert (eb.target_node, eb.slot, eb.source_node) == (
                ea.target_node,
                ea.slot,
                ea.source_node,
            )


class TestMatchRates:
    def test_match_rate_bounds(self):
        result = trainer.run(TrainConfig(seed=0, **FAST))
        rate = edge_match_rate(result.policy, result.oracle, np.random.default_rng(0), num_graphs=10)
        assert 0.0 <= rate <= 1.0

    def test_random_policy_rate_value(self):
        # mean over the 13 sources of 1/popcount(mask)
        from natforge.opspace import OPERATIONS, transition_mask

        expected = np.mean([1.0 / transition_mask(op).popcount() for op in OPERATIONS])
        assert random_policy_match_rate() == pytest.approx(expected)

    def test_uniform_entropy_value(self):
        from natforge.opspace import OPERATIONS, transition_mask

        expected = 8 * np.mean([np.log(transition_mask(op).popcount()) for op in OPERATIONS])
        assert uniform_policy_entropy() == pytest.approx(expected)
