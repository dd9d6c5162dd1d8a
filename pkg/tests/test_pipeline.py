from dataclasses import replace

import numpy as np
import pytest

from gwr_hoi.data import ObjectInstance
from gwr_hoi.gwr import GwrNetwork, GwrParams
from gwr_hoi.pipeline import (
    ArchitectureConfig,
    HOIClassifier,
    MissingObjectError,
    SequenceTooShortError,
    activation_trace,
    classify_activity,
    congruence_compare,
    integration_input,
    make_incongruent,
    train_architecture,
)
from gwr_hoi.synth import default_spec, synth_generate


def fast_config(**kw):
    quick = {"epochs": 30}
    base = dict(
        pose=GwrParams(insertion_threshold=0.98, **quick),
        objects=GwrParams(insertion_threshold=0.98, **quick),
        integration=GwrParams(insertion_threshold=0.9, **quick),
    )
    base.update(kw)
    return ArchitectureConfig(**base)


def held_out(small_dataset):
    return [r for r in small_dataset[2] if r.subject == "s3"]


class TestConfig:
    def test_defaults(self):
        c = ArchitectureConfig()
        assert (c.pose.insertion_threshold, c.objects.insertion_threshold, c.integration.insertion_threshold) == (
            0.98,
            0.98,
            0.9,
        )
        assert c.window == 5 and c.frame_rate == 10.0

    @pytest.mark.parametrize(
        "kw", [{"window": 0}, {"n_categories": 0}, {"object_labels": "oracle"}, {"pca_variance": 0.0}]
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ArchitectureConfig(**kw)

    def test_dict_roundtrip(self):
        c = fast_config(window=9, mirror=False)
        assert ArchitectureConfig.from_dict(c.to_dict()) == c


class TestTrainedModel:
    def test_dimensional_chain(self, small_model):
        m = small_model
        assert m.pose_net.input_dim == 12
        assert m.object_net.input_dim == m.codebook.n_words * m.codebook.dim == 64
        assert m.integration_net.input_dim == m.config.window * m.pca.n_components + m.n_categories

    def test_broken_chain_rejected(self, small_model):
        with pytest.raises(ValueError, match="inconsistent"):
            replace(small_model, n_categories=small_model.n_categories + 1)

    def test_training_samples_get_training_labels(self, small_dataset, small_model):
        train = [r for r in small_dataset[2] if r.subject != "s3"]
        for r in train[::3]:
            assert classify_activity(small_model, r)[0] == r.activity

    def test_pose_twins_get_different_labels(self, small_dataset, small_model):
        test = held_out(small_dataset)
        by_act = {r.activity: r for r in test}
        assert classify_activity(small_model, by_act[0])[0] != classify_activity(small_model, by_act[1])[0]
        assert classify_activity(small_model, by_act[2])[0] != classify_activity(small_model, by_act[3])[0]

    def test_classification_is_pure(self, small_dataset, small_model):
        r = held_out(small_dataset)[0]
        a_label, a_scores = classify_activity(small_model, r)
        b_label, b_scores = classify_activity(small_model, r)
        assert a_label == b_label
        np.testing.assert_array_equal(a_scores, b_scores)


class TestTraces:
    def test_trace_length_and_range(self, small_dataset, small_model):
        r = held_out(small_dataset)[0]
        m = -(-r.n_frames // small_model.config.downsample_window)
        trace = activation_trace(small_model, r)
        assert trace.activation.shape == (m - small_model.config.window + 1,)
        assert np.all((trace.activation > 0) & (trace.activation <= 1))
        assert set(trace.bmu_id) <= set(small_model.integration_net.ids)

    def test_prototype_segments_activate_fully(self, small_dataset, small_model):
        r = held_out(small_dataset)[0]
        phi = integration_input(small_model, r).phi
        model = replace(small_model, integration_net=GwrNetwork.from_weights(phi))
        np.testing.assert_array_equal(activation_trace(model, r).activation, 1.0)

    def test_too_short(self, small_dataset, small_model):
        r = held_out(small_dataset)[0]
        short = replace(r, positions=r.positions[:9], valid=r.valid[:9], timestamps=r.timestamps[:9])
        with pytest.raises(SequenceTooShortError):
            classify_activity(small_model, short)


class TestObjects:
    def test_missing_objects_error(self, small_dataset, small_model):
        r = replace(held_out(small_dataset)[0], objects=[])
        with pytest.raises(MissingObjectError):
            classify_activity(small_model, r)

    def test_missing_objects_zero_fallback(self, small_dataset, small_model):
        model = replace(small_model, config=replace(small_model.config, missing_objects="zero"))
        inp = integration_input(model, replace(held_out(small_dataset)[0], objects=[]))
        assert inp.object_fallback
        np.testing.assert_array_equal(inp.label_vector, 0)

    def test_swap_only_changes_label_block(self, small_dataset, small_model):
        test = held_out(small_dataset)
        drinking, phone = test[0], next(r for r in test if r.activity == 2)
        swapped = make_incongruent(drinking, phone)
        np.testing.assert_array_equal(swapped.positions, drinking.positions)
        a, b = integration_input(small_model, drinking).phi, integration_input(small_model, swapped).phi
        C = small_model.n_categories
        np.testing.assert_array_equal(a[:, :-C], b[:, :-C])
        assert np.any(a[:, -C:] != b[:, -C:])
        back = make_incongruent(swapped, drinking.objects)
        np.testing.assert_array_equal(integration_input(small_model, back).phi, a)

    def test_same_categories_rejected(self, small_dataset):
        r = held_out(small_dataset)[0]
        with pytest.raises(ValueError):
            make_incongruent(r, [ObjectInstance(r.categories[0], r.objects[0].descriptors)])

    def test_congruence_report(self, small_dataset, small_model):
        spec, _, _ = small_dataset
        test = held_out(small_dataset)
        donors = {r.categories[0]: r for r in test}
        inc = [make_incongruent(r, donors[spec.incongruent_categories(r.activity)[0]]) for r in test]
        rep = congruence_compare(small_model, test, inc)
        assert rep.congruent_mean.shape == (len(test),)
        assert 0.0 <= rep.fraction_congruent_higher <= 1.0
        with pytest.raises(ValueError):
            congruence_compare(small_model, test, inc[::-1])


class TestSmallRuns:
    def test_single_frame_window(self):
        _, records = synth_generate(default_spec(subjects=1, repetitions=1))
        config = fast_config(window=1, downsample_window=1, mirror=False)
        model = train_architecture(records, config, 4, 4)
        r = records[0]
        one = replace(r, positions=r.positions[:1], valid=r.valid[:1], timestamps=r.timestamps[:1])
        label, scores = classify_activity(model, one)
        assert 0 <= label < 4 and scores.shape == (1, 4)

    def test_deterministic(self):
        _, records = synth_generate(default_spec(subjects=1, repetitions=1))
        a = train_architecture(records, fast_config(), 4, 4)
        b = train_architecture(records, fast_config(), 4, 4)
        from gwr_hoi.persistence import models_equal

        assert models_equal(a, b)

    def test_estimator(self):
        _, records = synth_generate(default_spec(subjects=2, repetitions=1))
        clf = HOIClassifier(config=fast_config(), n_categories=4, n_activities=4).fit(records)
        assert list(clf.classes_) == [0, 1, 2, 3]
        pred = clf.predict(records)
        assert pred.shape == (8,)
        assert clf.score(records, [r.activity for r in records]) >= 0.75
        assert clf.get_params()["n_categories"] == 4

    def test_ground_truth_labels_mode(self):
        _, records = synth_generate(default_spec(subjects=1, repetitions=1))
        model = train_architecture(records, fast_config(object_labels="ground_truth"), 4, 4)
        inp = integration_input(model, records[0])
        np.testing.assert_array_equal(inp.label_vector, np.eye(4)[records[0].categories[0]])
