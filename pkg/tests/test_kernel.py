"""Test support ordering, aggregation and kernel matrices."""

import numpy as np
import pytest

from khn.autodiff import Tensor
from khn.errors import ConfigError, ShapeError
from khn.models.schemas import KernelConfig
from khn.networks import (
    KernelSpec,
    aggregate,
    init_kernel,
    kernel_value,
    order_support,
    pairwise_kernel,
    query_kernel_matrix,
    query_kernel_vector,
    support_kernel_matrix,
)

COSINE = KernelSpec(KernelConfig(kind="cosine"))
DOT = KernelSpec(KernelConfig(kind="dot"))


def _rows(embeddings, way, shot, mode="fine_grained", labels=None):
    labels = labels if labels is not None else [label for label in range(way) for _ in range(shot)]
    return aggregate(order_support(Tensor(embeddings), labels), mode, way, shot)


def _order_preserving_shuffle(labels, rng):
    """Random interleaving of the classes that keeps each class's own order."""
    slots = rng.permutation(len(labels))
    queues = {label: [i for i, x in enumerate(labels) if x == label] for label in set(labels)}
    picks = [labels[i] for i in slots]
    return [queues[label].pop(0) for label in picks]


def test_cosine_examples():
    """Test cosine of orthogonal, parallel and opposite vectors."""
    assert kernel_value(COSINE, Tensor([1.0, 0.0]), Tensor([0.0, 1.0])).item() == pytest.approx(0.0)
    assert kernel_value(COSINE, Tensor([1.0, 1.0]), Tensor([2.0, 2.0])).item() == pytest.approx(1.0)
    assert kernel_value(COSINE, Tensor([1.0, 0.0]), Tensor([-3.0, 0.0])).item() == pytest.approx(-1.0)


def test_dot_example():
    """Test the dot kernel is the inner product."""
    assert kernel_value(DOT, Tensor([1.0, 2.0]), Tensor([3.0, -1.0])).item() == pytest.approx(1.0)


def test_cosine_of_zero_vector_is_finite():
    """Test the norm clamp makes cosine with a zero vector exactly 0."""
    value = kernel_value(COSINE, Tensor([0.0, 0.0]), Tensor([1.0, 2.0])).item()
    assert value == 0.0


def test_cosine_bounds_and_scale_invariance(rng):
    """Test cosine entries lie in [-1, 1] and ignore positive scaling."""
    a = Tensor(rng.normal(size=(6, 5)))
    b = Tensor(rng.normal(size=(4, 5)))
    values = pairwise_kernel(COSINE, a, b).data
    assert np.all(np.abs(values) <= 1.0 + 1e-12)
    scaled = pairwise_kernel(COSINE, a * 3.7, b * 0.2).data
    np.testing.assert_allclose(scaled, values, atol=1e-12)


def test_support_matrix_symmetric_psd(rng):
    """Test both kernels give a symmetric PSD support matrix, cosine with unit diagonal."""
    rows = _rows(rng.normal(size=(6, 4)), way=3, shot=2)
    for spec in (COSINE, DOT):
        k = support_kernel_matrix(spec, rows).data
        assert k.shape == (6, 6)
        np.testing.assert_array_equal(k, k.T)
        assert np.linalg.eigvalsh(k).min() >= -1e-10
    np.testing.assert_allclose(np.diag(support_kernel_matrix(COSINE, rows).data), 1.0)


def test_learned_transform_keeps_symmetry(rng):
    """Test the support matrix stays exactly symmetric under a learned transform."""
    config = KernelConfig(kind="cosine", transform="mlp", transform_hidden_sizes=[6], transform_out_dim=3)
    spec = KernelSpec(config, init_kernel(config, embedding_dim=4, seed=0))
    rows = _rows(rng.normal(size=(4, 4)), way=2, shot=2)
    k = support_kernel_matrix(spec, rows).data
    np.testing.assert_array_equal(k, k.T)


def test_spec_params_must_match_transform():
    """Test a kernel spec rejects parameters that disagree with its transform."""
    with pytest.raises(ConfigError):
        KernelSpec(KernelConfig(transform="mlp"))
    config = KernelConfig(transform="mlp")
    params = init_kernel(config, embedding_dim=4, seed=0)
    with pytest.raises(ConfigError):
        KernelSpec(KernelConfig(), params)
    assert init_kernel(KernelConfig(), embedding_dim=4, seed=0) == {}


def test_order_support_is_stable():
    """Test support rows sort by label and keep input order within a class."""
    ordered = order_support(Tensor(np.arange(8.0).reshape(4, 2)), [1, 0, 1, 0])
    assert ordered.pi == [1, 3, 0, 2]
    assert ordered.row_labels == [0, 0, 1, 1]
    np.testing.assert_array_equal(ordered.embeddings.data[:, 0], [2.0, 6.0, 0.0, 4.0])


def test_averaged_aggregation_takes_class_means():
    """Test averaged mode keeps one mean row per class."""
    embeddings = np.array([[1.0, 0.0], [3.0, 0.0], [0.0, 2.0], [0.0, 4.0]])
    rows = _rows(embeddings, way=2, shot=2, mode="averaged")
    assert rows.rows == 2
    np.testing.assert_allclose(rows.embeddings.data, [[2.0, 0.0], [0.0, 3.0]])


def test_fine_grained_keeps_rows(rng):
    """Test fine-grained mode keeps every support row."""
    embeddings = rng.normal(size=(6, 3))
    rows = _rows(embeddings, way=3, shot=2)
    assert rows.rows == 6
    np.testing.assert_array_equal(rows.embeddings.data, embeddings)


def test_aggregate_rejects_unbalanced_support():
    """Test aggregation needs exactly shot rows per class."""
    ordered = order_support(Tensor(np.zeros((3, 2))), [0, 0, 1])
    with pytest.raises(ShapeError):
        aggregate(ordered, "averaged", way=2, shot=2)


def test_fine_grained_ignores_class_interleaving():
    """Test fine-grained rows are identical under shuffles that keep within-class order."""
    rng = np.random.default_rng(3)
    way, shot = 3, 4
    labels = [label for label in range(way) for _ in range(shot)]
    embeddings = rng.normal(size=(way * shot, 5))
    queries = Tensor(rng.normal(size=(4, 5)))
    reference = _rows(embeddings, way, shot)
    expected_k = support_kernel_matrix(COSINE, reference).data
    expected_q = query_kernel_matrix(COSINE, queries, reference).data
    for _ in range(100):
        order = _order_preserving_shuffle(labels, rng)
        rows = _rows(embeddings[order], way, shot, labels=[labels[i] for i in order])
        np.testing.assert_array_equal(rows.embeddings.data, reference.embeddings.data)
        np.testing.assert_allclose(support_kernel_matrix(COSINE, rows).data, expected_k, atol=1e-12)
        np.testing.assert_allclose(query_kernel_matrix(COSINE, queries, rows).data, expected_q, atol=1e-12)


def test_averaged_ignores_any_support_order():
    """Test averaged rows agree within 1e-12 under arbitrary support permutations."""
    rng = np.random.default_rng(4)
    way, shot = 3, 4
    labels = [label for label in range(way) for _ in range(shot)]
    embeddings = rng.normal(size=(way * shot, 5))
    expected = support_kernel_matrix(DOT, _rows(embeddings, way, shot, mode="averaged")).data
    for _ in range(100):
        order = rng.permutation(way * shot)
        rows = _rows(embeddings[order], way, shot, mode="averaged", labels=[labels[i] for i in order])
        np.testing.assert_allclose(support_kernel_matrix(DOT, rows).data, expected, atol=1e-12)


def test_query_vector_matches_matrix_row(rng):
    """Test the single-query kernel vector equals a row of the batched matrix."""
    rows = _rows(rng.normal(size=(3, 4)), way=3, shot=1)
    queries = Tensor(rng.normal(size=(5, 4)))
    matrix = query_kernel_matrix(COSINE, queries, rows)
    assert matrix.shape == (5, 3)
    vector = query_kernel_vector(COSINE, Tensor(queries.data[2]), rows)
    np.testing.assert_allclose(vector.data, matrix.data[2], atol=1e-14)


def test_dimension_mismatch():
    """Test embeddings of different widths are shape errors."""
    with pytest.raises(ShapeError):
        pairwise_kernel(COSINE, Tensor(np.ones((2, 3))), Tensor(np.ones((2, 4))))
    with pytest.raises(ShapeError):
        kernel_value(COSINE, Tensor([1.0, 2.0]), Tensor([1.0]))


def test_kernel_properties_over_random_instances():
    """Test kernel bounds, symmetry, PSD and scale invariance on 1000 random supports."""
    rng = np.random.default_rng(0)
    for _ in range(1000):
        rows = _rows(rng.normal(size=(5, 4)), way=5, shot=1)
        cosine = support_kernel_matrix(COSINE, rows).data
        assert np.all(np.abs(cosine) <= 1.0 + 1e-12)
        np.testing.assert_allclose(np.diag(cosine), 1.0, atol=1e-12)

        dot = support_kernel_matrix(DOT, rows).data
        np.testing.assert_array_equal(dot, dot.T)
        assert np.linalg.eigvalsh(dot).min() >= -1e-8

        scaled = _rows(rows.embeddings.data * rng.uniform(0.01, 100.0), way=5, shot=1)
        np.testing.assert_allclose(support_kernel_matrix(COSINE, scaled).data, cosine, atol=1e-12)
