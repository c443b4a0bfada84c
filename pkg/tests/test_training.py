"""Test episodic training, prediction and evaluation."""

import math

import numpy as np
import pytest

from khn.autodiff import backward
from khn.engine.rng import SeededRNG
from khn.episodes import SyntheticTaskSource, open_source, sample_episode
from khn.errors import NumericError, TrainingDivergedError
from khn.models.presets import get_preset
from khn.models.schemas import EvalReport, FinetuneConfig, RunConfig, TrainConfig, ci95_halfwidth
from khn.networks import HypernetModel, episode_forward, zero_final_head_layers
from khn.training import (
    aggregation_ablation,
    episode_loss,
    evaluate,
    evaluate_variants,
    finetune,
    predict_episode,
    run_evaluation,
    train,
    tuning_task,
)
from khn.training.trainer import TRAIN_STREAM


def _with_training(config, **updates):
    training = config.training.model_copy(update=updates)
    return config.model_copy(update={"training": training})


def _snapshot(model):
    return {name: tensor.data.copy() for name, tensor in model.named_parameters()}


def _first_episode(config, source):
    shape = config.episodes
    return sample_episode(
        source,
        shape.way,
        shape.shot,
        shape.queries_per_class,
        SeededRNG(config.seed, TRAIN_STREAM, 1, 0),
        split="train",
    )


def test_zero_learning_rate_leaves_parameters(small_config, synthetic_source):
    """Test a zero learning rate runs every iteration without moving parameters."""
    config = _with_training(small_config, learning_rate=0.0)
    model = HypernetModel.from_config(config)
    before = _snapshot(model)
    result = train(synthetic_source, config, model=model)
    assert result.iterations == 3
    for name, data in _snapshot(result.model).items():
        np.testing.assert_array_equal(data, before[name])


def test_sgd_step_is_exact(small_config, synthetic_source):
    """Test one SGD iteration subtracts exactly lr times the gradient."""
    config = _with_training(
        small_config, optimizer="sgd", learning_rate=0.05, epochs=1, tasks_per_epoch=1
    )
    reference = HypernetModel.from_config(config)
    backward(episode_loss(reference, _first_episode(config, synthetic_source)))
    expected = {name: t.data - 0.05 * t.grad for name, t in reference.named_parameters()}

    result = train(synthetic_source, config)
    for name, tensor in result.model.named_parameters():
        np.testing.assert_allclose(tensor.data, expected[name], atol=1e-12)


def test_all_groups_are_updated(gradcheck_config):
    """Test training moves encoder, kernel and hypernet parameters."""
    source = SyntheticTaskSource.from_config(gradcheck_config.data)
    config = _with_training(gradcheck_config, learning_rate=1e-2, epochs=1, tasks_per_epoch=1)
    before = HypernetModel.from_config(config)
    after = train(source, config).model
    for group in ("encoder", "kernel", "hypernet"):
        changed = [
            not np.array_equal(getattr(before, group)[name].data, tensor.data)
            for name, tensor in getattr(after, group).items()
        ]
        assert any(changed), group


def test_same_seed_same_history(small_config, synthetic_source):
    """Test equal seeds give bitwise identical training runs."""
    first = train(synthetic_source, small_config)
    second = train(synthetic_source, small_config)
    assert first.loss_history == second.loss_history
    for (_, a), (_, b) in zip(first.model.named_parameters(), second.model.named_parameters()):
        assert a.data.tobytes() == b.data.tobytes()


def test_iteration_callback(small_config, synthetic_source):
    """Test the iteration callback sees every loss in order."""
    rows = []
    result = train(synthetic_source, small_config, on_iteration=rows.append)
    assert [row.iteration for row in rows] == [1, 2, 3]
    assert [row.loss for row in rows] == result.loss_history
    assert all(math.isfinite(row.loss) and row.loss >= 0 for row in rows)


def test_taskset_averages_episodes(small_config, synthetic_source):
    """Test tasksets count one iteration per optimizer step."""
    config = _with_training(small_config, taskset_size=2, tasks_per_epoch=2)
    assert train(synthetic_source, config).iterations == 2


def test_periodic_validation(small_config, synthetic_source):
    """Test validation runs every eval_every iterations."""
    config = _with_training(small_config, eval_every=2, eval_episodes=2)
    seen = []
    result = train(
        synthetic_source,
        config,
        validation_source=open_source(config.data, "val"),
        on_evaluation=lambda iteration, report: seen.append(iteration),
    )
    assert seen == [2]
    assert result.evaluations[0][1].episode_count == 2


def test_divergence_is_reported(small_config, synthetic_source, monkeypatch):
    """Test a non-finite loss stops training with the failing iteration."""
    def overflow(*args, **kwargs):
        raise NumericError("Exp produced non-finite values")

    monkeypatch.setattr("khn.training.trainer.episode_loss", overflow)
    with pytest.raises(TrainingDivergedError) as info:
        train(synthetic_source, small_config)
    assert info.value.iteration == 1
    assert info.value.loss is None


def test_prediction_leaves_model_unchanged(small_model, small_episode):
    """Test prediction with finetuning leaves the stored model untouched."""
    before = _snapshot(small_model)
    prediction = predict_episode(small_model, small_episode, FinetuneConfig(steps=3, learning_rate=1e-2))
    assert len(prediction.tuning_losses) == 4
    for name, data in _snapshot(small_model).items():
        assert data.tobytes() == before[name].tobytes()
    assert all(t.grad is None for _, t in small_model.named_parameters())


def test_no_tuning_is_argmax(small_model, small_episode):
    """Test zero tuning steps predict the argmax of the logits."""
    prediction = predict_episode(small_model, small_episode, FinetuneConfig(steps=0))
    logits = episode_forward(small_model, small_episode).data
    np.testing.assert_array_equal(prediction.labels, logits.argmax(axis=1))
    np.testing.assert_allclose(prediction.probabilities.sum(axis=1), 1.0)
    assert prediction.tuning_losses == []


def test_tuning_task_reuses_support(small_model, small_episode):
    """Test the tuning task uses the support set as its queries."""
    task = tuning_task(small_model, small_episode.support)
    assert all(a is b for a, b in zip(task.query, small_episode.support))
    assert task.query_labels() == task.support_labels() == small_episode.support_labels()
    assert task.queries_per_class == task.shot == 2


def test_finetune_reduces_tuning_loss(small_model, small_episode):
    """Test finetuning lowers the loss on the tuning task."""
    _, losses = finetune(small_model, small_episode.support, FinetuneConfig(steps=20, learning_rate=1e-2))
    assert len(losses) == 21
    assert losses[-1] < losses[0]


def test_finetune_selected_groups(small_model, small_episode):
    """Test finetuning only moves the selected groups."""
    config = FinetuneConfig(steps=2, learning_rate=1e-2, tune_encoder=False)
    tuned, _ = finetune(small_model, small_episode.support, config)
    for name, tensor in tuned.encoder.items():
        np.testing.assert_array_equal(tensor.data, small_model.encoder[name].data)
    assert any(
        not np.array_equal(tensor.data, small_model.hypernet[name].data)
        for name, tensor in tuned.hypernet.items()
    )


def test_perfect_predictor(synthetic_source):
    """Test an oracle predictor scores 1 with a zero interval."""
    report = run_evaluation(
        lambda episode: np.array(episode.query_labels()),
        synthetic_source,
        10,
        way=3,
        shot=1,
        queries_per_class=2,
    )
    assert report.episode_count == 10
    assert report.mean_accuracy == 1.0
    assert report.ci95_halfwidth == 0.0


def test_constant_predictor_scores_chance(synthetic_source):
    """Test a constant predictor scores exactly 1/way on balanced queries."""
    report = run_evaluation(
        lambda episode: np.zeros(len(episode.query), dtype=int),
        synthetic_source,
        8,
        way=4,
        shot=1,
        queries_per_class=3,
    )
    assert report.mean_accuracy == pytest.approx(0.25)
    assert report.ci95_halfwidth == pytest.approx(0.0)


def test_single_episode_has_zero_interval(small_model, synthetic_source):
    """Test one evaluation episode reports a zero interval."""
    report = evaluate(small_model, synthetic_source, 1, FinetuneConfig(steps=0), queries_per_class=2)
    assert report.episode_count == 1
    assert report.ci95_halfwidth == 0.0
    assert 0.0 <= report.mean_accuracy <= 1.0


def test_threads_do_not_change_results(small_model, synthetic_source):
    """Test threaded evaluation matches serial evaluation."""
    serial = evaluate(small_model, synthetic_source, 6, FinetuneConfig(steps=0), seed=4, threads=1)
    threaded = evaluate(small_model, synthetic_source, 6, FinetuneConfig(steps=0), seed=4, threads=3)
    assert serial.per_episode_accuracies == threaded.per_episode_accuracies


def test_variants_share_episodes(small_model, synthetic_source):
    """Test plain and finetuned variants are both reported."""
    reports = evaluate_variants(
        small_model,
        synthetic_source,
        3,
        FinetuneConfig(steps=2, learning_rate=1e-3),
        ("plain", "finetuned"),
        queries_per_class=2,
    )
    assert set(reports) == {"plain", "finetuned"}
    assert reports["finetuned"].finetuned and not reports["plain"].finetuned


def test_episode_count_must_be_positive(synthetic_source):
    """Test evaluating zero episodes is rejected."""
    with pytest.raises(ValueError):
        run_evaluation(lambda e: np.zeros(len(e.query)), synthetic_source, 0, way=3, shot=1)


def test_interval_formula():
    """Test the 95% interval is 1.96 sigma over root n."""
    report = EvalReport.from_accuracies([0.0, 1.0])
    assert report.mean_accuracy == 0.5
    assert report.ci95_halfwidth == pytest.approx(1.96 * 0.5 / math.sqrt(2))
    assert report.summary() == "50.00 ± 69.30"


def test_inconsistent_report_rejected():
    """Test a report whose mean disagrees with its episodes is invalid."""
    with pytest.raises(ValueError):
        EvalReport(
            episode_count=2,
            mean_accuracy=0.5,
            ci95_halfwidth=0.0,
            per_episode_accuracies=[0.0, 1.0],
        )


def test_ci_of_constant_values():
    """Test constant accuracies have a zero interval."""
    assert ci95_halfwidth([0.4] * 5) == pytest.approx(0.0)
    assert ci95_halfwidth([0.4]) == 0.0


@pytest.mark.slow
def test_training_beats_chance(small_config, synthetic_source):
    """Test a short training run beats chance on held-out classes."""
    config = small_config.model_copy(
        update={"training": TrainConfig(learning_rate=1e-2, epochs=3, tasks_per_epoch=100)}
    )
    model = train(synthetic_source, config).model
    report = evaluate(model, synthetic_source, 30, FinetuneConfig(steps=0), queries_per_class=3)
    assert report.mean_accuracy > 0.5


@pytest.mark.slow
def test_aggregation_ablation():
    """Test averaged aggregation is within 1 point of fine-grained on 5-way 5-shot tasks."""
    desk = get_preset("desk")
    config = RunConfig.model_validate(
        {**desk.model_dump(), "episodes": {"way": 5, "shot": 5, "queries_per_class": 16}}
    )
    results = aggregation_ablation(config, seeds=range(5), episode_count=100)
    assert set(results) == {"averaged", "fine_grained"}
    assert all(len(result.reports) == 5 for result in results.values())
    averaged = results["averaged"].mean_accuracy
    fine_grained = results["fine_grained"].mean_accuracy
    assert averaged >= fine_grained - 0.01


def test_uniform_baseline_on_five_way_tasks():
    """Test zeroed heads score chance within 3 sigma on 5-way tasks."""
    config = get_preset("desk")
    model = HypernetModel.from_config(config)
    zero_final_head_layers(model)
    source = SyntheticTaskSource.from_config(config.data)
    episode = sample_episode(source, 5, 1, 16, 0, split="test")
    assert episode_loss(model, episode).item() == pytest.approx(math.log(5), abs=1e-9)

    report = evaluate(model, source, 200, FinetuneConfig(steps=0), queries_per_class=4)
    sigma = math.sqrt(0.2 * 0.8 / (200 * 20))
    assert abs(report.mean_accuracy - 0.2) <= 3 * sigma


@pytest.mark.slow
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_desk_learning_on_separable_tasks(seed):
    """Test desk training reaches 90% on well-separated clusters."""
    config = get_preset("desk")
    config = config.model_copy(
        update={"seed": seed, "training": TrainConfig(learning_rate=1e-3, epochs=1, tasks_per_epoch=500)}
    )
    source = SyntheticTaskSource.from_config(config.data)
    model = train(source, config).model
    report = evaluate(model, source, 200, FinetuneConfig(steps=0), seed=seed)
    assert report.mean_accuracy >= 0.9


@pytest.mark.slow
def test_finetuning_does_not_hurt(small_config, synthetic_source):
    """Test finetuning lowers tuning loss and keeps accuracy within 1 point."""
    config = small_config.model_copy(
        update={"training": TrainConfig(learning_rate=1e-2, epochs=1, tasks_per_epoch=100)}
    )
    model = train(synthetic_source, config).model
    tuning = FinetuneConfig(steps=10, learning_rate=1e-4)
    improved = 0
    for seed in range(100):
        episode = sample_episode(synthetic_source, 3, 2, 3, seed, split="test")
        _, losses = finetune(model, episode.support, tuning)
        improved += losses[-1] <= losses[0]
    assert improved >= 95

    reports = evaluate_variants(model, synthetic_source, 50, tuning, queries_per_class=3)
    assert reports["finetuned"].mean_accuracy >= reports["plain"].mean_accuracy - 0.01
