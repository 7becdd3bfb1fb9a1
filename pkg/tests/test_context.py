import numpy as np
import pytest

from ctxlearn.autoencoder import TrainConfig, init_autoencoder, reconstruction_errors
from ctxlearn.context import (
    ContextEntry,
    ContextKnowledgeBase,
    ErrorStats,
    InsufficientStatsError,
    is_out_of_context,
)
from ctxlearn.core import make_rng

from conftest import stagger_instances


def make_kb(width=11, seed=1, **kwargs):
    return ContextKnowledgeBase(width, make_rng(seed, 0), **kwargs)


def trained_kb_on(zs, seed=1, epochs=2500):
    """KB whose single entry is trained on zs with stats rebuilt from scratch."""
    kb = make_kb(zs.shape[1], seed=seed)
    for z in zs:
        kb.record_in_context(z)
    kb.refresh_current(zs, TrainConfig(learning_rate=0.05, epochs_per_update=epochs))
    return kb


class TestErrorStats:
    def test_simple_mean_and_std(self):
        stats = ErrorStats.from_values([1.0, 2.0, 3.0])
        assert stats.mean == 2.0
        assert abs(stats.std - 1.0) < 1e-12

    def test_single_value_has_no_variance(self):
        stats = ErrorStats.from_values([1.0])
        with pytest.raises(InsufficientStatsError):
            _ = stats.variance

    def test_permutation_invariance_against_two_pass_oracle(self):
        rng = make_rng(2, 0)
        values = rng.uniform(0.001, 2.0, size=100)
        shuffled = values.copy()
        rng.shuffle(shuffled)
        a = ErrorStats.from_values(values)
        b = ErrorStats.from_values(shuffled)
        oracle_mean = float(np.mean(values))
        oracle_std = float(np.std(values, ddof=1))
        for stats in (a, b):
            assert abs(stats.mean - oracle_mean) / oracle_mean < 1e-9
            assert abs(stats.std - oracle_std) / oracle_std < 1e-9

    def test_sigma_floor(self):
        stats = ErrorStats.from_values([0.5, 0.5, 0.5])
        assert stats.std == 1e-9


class TestOutOfContextTest:
    def entry_with(self, mean, std, count=30):
        model = init_autoencoder(4, 2, make_rng(0, 0))
        model.train_step_count = 1  # mark trained
        stats = ErrorStats(count=count, mean=mean, m2=std * std * (count - 1))
        return ContextEntry(1, model, stats, [])

    def test_error_at_mean_is_in_context(self):
        rejected, z = is_out_of_context(self.entry_with(2.0, 1.0), 2.0, 3.0)
        assert not rejected and z == 0.0

    def test_high_error_is_out_of_context(self):
        rejected, z = is_out_of_context(self.entry_with(2.0, 1.0), 6.0, 3.0)
        assert rejected and z == 4.0

    def test_below_mean_always_in_context(self):
        rejected, z = is_out_of_context(self.entry_with(2.0, 1.0), 0.0, 0.5)
        assert not rejected and z == -2.0

    def test_insufficient_statistics_raises(self):
        entry = self.entry_with(2.0, 1.0, count=3)
        with pytest.raises(InsufficientStatsError):
            is_out_of_context(entry, 2.0, 3.0, min_stats_count=10)

    def test_untrained_model_is_not_ready(self):
        entry = self.entry_with(2.0, 1.0)
        entry.model.train_step_count = 0
        with pytest.raises(InsufficientStatsError):
            is_out_of_context(entry, 2.0, 3.0)


class TestRecordAndRefresh:
    def test_record_appends_and_updates_stats(self):
        kb = make_kb(4)
        z = np.array([0.1, 0.2, 0.3, 0.4])
        kb.record_in_context(z)
        entry = kb.current
        assert len(entry.buffer) == 1 and entry.stats.count == 1
        errors = reconstruction_errors(entry.model, np.stack(entry.buffer))
        assert abs(entry.stats.mean - errors[0]) < 1e-15

    def test_record_rejects_wrong_width(self):
        with pytest.raises(ValueError):
            make_kb(4).record_in_context(np.zeros(5))

    def test_refresh_reduces_buffer_error(self):
        rng = make_rng(3, 0)
        zs = rng.uniform(size=(30, 6))
        kb = make_kb(6)
        for z in zs:
            kb.record_in_context(z)
        before = reconstruction_errors(kb.current.model, zs).mean()
        kb.refresh_current(zs, TrainConfig(epochs_per_update=200))
        after = reconstruction_errors(kb.current.model, zs).mean()
        assert after <= before

    def test_second_refresh_changes_less(self):
        rng = make_rng(4, 0)
        zs = rng.uniform(size=(20, 5))
        kb = make_kb(5)
        for z in zs:
            kb.record_in_context(z)

        def snapshot():
            m = kb.current.model
            return np.concatenate([m.w1.ravel(), m.b1, m.w2.ravel(), m.b2])

        p0 = snapshot()
        kb.refresh_current(zs, TrainConfig(epochs_per_update=300))
        p1 = snapshot()
        kb.refresh_current(zs, TrainConfig(epochs_per_update=300))
        p2 = snapshot()
        assert np.linalg.norm(p2 - p1) < np.linalg.norm(p1 - p0)

    def test_refresh_rejects_empty_window(self):
        with pytest.raises(ValueError):
            make_kb(4).refresh_current(np.zeros((0, 4)), TrainConfig())

    def test_refresh_stats_match_two_pass_oracle(self):
        rng = make_rng(5, 0)
        zs = rng.uniform(size=(40, 6))
        kb = make_kb(6)
        for z in zs:
            kb.record_in_context(z)
        kb.refresh_current(zs, TrainConfig(epochs_per_update=100))
        entry = kb.current
        errors = reconstruction_errors(entry.model, np.stack(entry.buffer))
        assert abs(entry.stats.mean - np.mean(errors)) / np.mean(errors) < 1e-9
        assert abs(entry.stats.std - np.std(errors, ddof=1)) / np.std(errors, ddof=1) < 1e-9

    def test_stats_count_tracks_buffer_after_refresh(self):
        rng = make_rng(6, 0)
        zs = rng.uniform(size=(15, 4))
        kb = make_kb(4)
        for z in zs:
            kb.record_in_context(z)
        kb.refresh_current(zs, TrainConfig(epochs_per_update=50))
        assert kb.current.stats.count == len(kb.current.buffer) == 15


class TestMatching:
    def test_own_instance_matches(self):
        rng = make_rng(7, 0)
        _, _, zs = stagger_instances(rng, 200, concept=1)
        kb = trained_kb_on(zs, seed=7)
        decision = kb.match_or_hypothesize(zs[0])
        assert not decision.is_new and decision.context_id == 1

    def test_flipped_label_instance_hypothesizes_new_context(self):
        rng = make_rng(8, 0)
        _, _, zs = stagger_instances(rng, 200, concept=1)
        kb = trained_kb_on(zs, seed=8)
        # (large, green, square): rule 1 labels it 0, rule 2 labels it 1
        x = np.zeros(9)
        x[[2, 4, 6]] = 1.0
        foreign = np.concatenate([x, [0.0, 1.0]])
        decision = kb.match_or_hypothesize(foreign)
        assert decision.is_new and decision.context_id == 2
        assert kb.current_id == 2
        assert len(kb.entries) == 2

    def test_two_entries_choose_the_better_fit(self):
        rng = make_rng(9, 0)
        _, _, z1 = stagger_instances(rng, 200, concept=1)
        _, _, z2 = stagger_instances(rng, 200, concept=2)
        kb = trained_kb_on(z1, seed=9)
        # install and train a second entry directly
        kb.current_id = kb._add_entry().context_id
        for z in z2:
            kb.record_in_context(z)
        kb.refresh_current(z2, TrainConfig(epochs_per_update=2500))
        _, _, probe = stagger_instances(make_rng(10, 0), 12, concept=2)
        decision = kb.match_or_hypothesize(probe)
        assert not decision.is_new and decision.context_id == 2
        by_id = {d.context_id: d for d in decision.diagnostics}
        assert by_id[2].error < by_id[1].error

    def test_unready_entries_never_block_matching(self):
        rng = make_rng(11, 0)
        _, _, zs = stagger_instances(rng, 150, concept=1)
        kb = trained_kb_on(zs, seed=11)
        fresh = kb._add_entry()  # untrained, no stats
        kb.current_id = 1
        decision = kb.match_or_hypothesize(zs[3])
        assert decision.context_id == 1 and not decision.is_new
        assert {d.context_id: d.z_score for d in decision.diagnostics}[fresh.context_id] is None

    def test_context_ids_are_gapless_and_increasing(self):
        kb = make_kb(4)
        for expect in (2, 3, 4):
            entry = kb._add_entry()
            assert entry.context_id == expect
        assert [e.context_id for e in kb.entries] == [1, 2, 3, 4]

    def test_match_rejects_wrong_width(self):
        with pytest.raises(ValueError):
            make_kb(4).match_or_hypothesize(np.zeros(5))
        with pytest.raises(ValueError):
            make_kb(4).match_or_hypothesize(np.zeros((0, 4)))


class TestInferContextBatch:
    def test_batch_from_active_context_returns_it(self):
        rng = make_rng(12, 0)
        xs, ys, zs = stagger_instances(rng, 200, concept=1)
        kb = trained_kb_on(zs, seed=12)
        probe_x, probe_y, _ = stagger_instances(make_rng(13, 0), 10, concept=1)
        # use each sample's true label as the placeholder
        picked = kb.infer_context_batch(list(probe_x), placeholder_label=0, n_classes=2)
        assert picked == 1

    def test_single_sample_batch_equals_argmin(self):
        rng = make_rng(14, 0)
        _, _, zs = stagger_instances(rng, 150, concept=1)
        kb = trained_kb_on(zs, seed=14)
        x = zs[0][:9]
        assert kb.infer_context_batch([x], placeholder_label=0, n_classes=2) == 1

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            make_kb(11).infer_context_batch([], placeholder_label=0, n_classes=2)
