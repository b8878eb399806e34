import numpy as np
import pytest

from tsint.errors import ConfigError
from tsint.prism import PrismState, clean_probability, prism_select


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


class TestCleanProbability:
    def test_single_class_memory(self):
        p = clean_probability(_unit([[1, 0], [0.3, 0.9]]), [4, 4], np.array([4]),
                              np.array([[1.0, 0.0]]), temperature=0.1)
        np.testing.assert_allclose(p, 1.0)

    @pytest.mark.parametrize("temperature", [0.05, 1.0, 7.0])
    def test_equidistant_centers(self, temperature):
        centers = _unit([[1, 1], [1, -1]])
        p = clean_probability(_unit([[1, 0]]), [0], np.array([0, 1]), centers, temperature)
        assert p[0] == pytest.approx(0.5, abs=1e-15)

    def test_unknown_class_is_nan(self):
        p = clean_probability(_unit([[1, 0]]), [9], np.array([0]), np.array([[1.0, 0.0]]))
        assert np.isnan(p[0])


class TestSelect:
    def test_warm_up_keeps_everything(self):
        state = PrismState(noise_rate=0.5, window=3)
        rng = np.random.default_rng(0)
        for _ in range(3):
            z = _unit(rng.standard_normal((8, 4)))
            kept, state = prism_select(z, np.repeat([0, 1], 4), state)
            assert kept.size == 8
        assert state.memory_size == 24

    def test_constant_percentile_stream(self):
        # one class in memory -> every P_clean is 1, so each batch percentile is 1
        state = PrismState(noise_rate=0.3, window=4)
        z = _unit(np.ones((5, 3)))
        for _ in range(10):
            kept, state = prism_select(z, np.zeros(5, int), state)
        assert len(state.q_history) == 4
        assert state.threshold == 1.0
        assert kept.size == 5

    def test_threshold_within_history_range(self):
        rng = np.random.default_rng(3)
        state = PrismState(noise_rate=0.5, window=5, capacity=64)
        for _ in range(30):
            z = _unit(rng.standard_normal((12, 4)))
            _, state = prism_select(z, rng.integers(0, 3, 12), state)
            q = list(state.q_history)
            if q:
                assert min(q) <= state.threshold <= max(q)
            assert state.memory_size <= 64
        assert len(state.q_history) == 5

    def test_drops_samples_far_from_their_center(self):
        state = PrismState(noise_rate=0.25, window=1, temperature=0.1)
        centers = np.eye(4)
        labels = np.repeat(np.arange(4), 4)
        _, state = prism_select(centers[labels], labels, state)
        z = centers[labels].copy()
        z[0] = centers[2]  # labeled 0 but sits on class 2
        kept, _ = prism_select(z, labels, state)
        assert 0 not in kept
        assert kept.size >= 12

    def test_unknown_class_kept(self):
        state = PrismState(noise_rate=0.9, window=1)
        _, state = prism_select(_unit([[1, 0], [1, 0.1]]), [0, 0], state)
        kept, _ = prism_select(_unit([[0, 1], [1, 0]]), [5, 0], state)
        assert 0 in kept

    def test_invalid(self):
        with pytest.raises(ConfigError):
            PrismState(noise_rate=1.0)
        with pytest.raises(ConfigError):
            PrismState(window=0)
