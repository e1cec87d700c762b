import numpy as np
import pytest

from copytag.copy_model import (
    copy_logits,
    copy_posterior,
    grad_wrt_input,
    marginal_over_types,
    nll,
)

from conftest import make_gold, make_neighbor_set


def random_case(rng, n_tokens=3, dim=6, **kwargs):
    neighbors = make_neighbor_set(rng, dim=dim, **kwargs)
    x = rng.normal(size=(n_tokens, dim))
    posterior = copy_posterior(copy_logits(x, neighbors))
    return x, neighbors, posterior


class TestPosterior:
    def test_rows_sum_to_one(self, rng):
        for _ in range(50):
            _, _, posterior = random_case(rng)
            sums = posterior.probs.sum(axis=1)
            assert np.all(np.abs(sums - 1.0) < 1e-9)

    def test_shift_invariance(self, rng):
        x, neighbors, _ = random_case(rng)
        logits = copy_logits(x, neighbors)
        shifted = logits + 123.456  # constant shift per row cancels in softmax
        a = copy_posterior(logits).probs
        b = copy_posterior(shifted).probs
        assert np.allclose(a, b, atol=1e-12)

    def test_extreme_logits_stable(self):
        logits = np.array([[1e9, 1e9 - 1.0], [-1e9, -1e9 + 1.0]])
        probs = copy_posterior(logits).probs
        assert np.all(np.isfinite(probs))
        assert np.allclose(probs.sum(axis=1), 1.0)

    def test_logits_shape_checked(self, rng):
        neighbors = make_neighbor_set(rng, dim=6)
        with pytest.raises(ValueError):
            copy_logits(np.ones((2, 5)), neighbors)
        with pytest.raises(ValueError):
            copy_logits(np.ones(6), neighbors)

    def test_log_probs_read_only(self, rng):
        _, _, posterior = random_case(rng)
        with pytest.raises(ValueError):
            posterior.log_probs[0, 0] = 0.0


class TestMarginals:
    def test_rows_sum_to_one(self, rng):
        for _ in range(50):
            _, neighbors, posterior = random_case(rng)
            marginals = marginal_over_types(posterior, neighbors)
            assert np.all(np.abs(marginals.probs.sum(axis=1) - 1.0) < 1e-9)

    def test_column_order_is_first_appearance(self, rng):
        _, neighbors, posterior = random_case(rng)
        marginals = marginal_over_types(posterior, neighbors)
        assert marginals.type_ids == neighbors.types_present

    def test_mass_assignment(self, rng):
        _, neighbors, posterior = random_case(rng)
        marginals = marginal_over_types(posterior, neighbors)
        flat = neighbors.flat_labels
        for col, tid in enumerate(marginals.type_ids):
            expected = posterior.probs[:, flat == tid].sum(axis=1)
            assert np.allclose(marginals.probs[:, col], expected, atol=1e-12)

    def test_width_mismatch_checked(self, rng):
        _, neighbors, posterior = random_case(rng)
        other = make_neighbor_set(rng, n_neighbors=4, max_len=5, dim=6)
        if other.n_total != neighbors.n_total:
            with pytest.raises(ValueError):
                marginal_over_types(posterior, other)


class TestNll:
    def test_matches_direct_sum(self, rng):
        for _ in range(20):
            _, neighbors, posterior = random_case(rng)
            gold = make_gold(rng, posterior.n_tokens, n_types=4)
            report = nll(posterior, neighbors, gold)
            flat = neighbors.flat_labels
            expected = 0.0
            for t, g in enumerate(gold):
                mass = posterior.probs[t, flat == g].sum()
                if mass > 0:
                    expected += -np.log(mass)
            if report.skipped == 0:
                assert report.nll == pytest.approx(expected, rel=1e-9)

    def test_skipped_positions(self, rng):
        _, neighbors, posterior = random_case(rng, n_tokens=2)
        absent = max(neighbors.types_present) + 1
        gold = (absent, int(neighbors.types_present[0]))
        report = nll(posterior, neighbors, gold)
        assert report.skipped == 1
        assert report.per_token[0] is None
        assert report.per_token[1] is not None

    def test_perfect_copy_low_loss(self, rng):
        # one neighbor token exactly matching the input embedding dominates
        neighbors = make_neighbor_set(rng, n_neighbors=1, max_len=3, dim=4)
        x = neighbors.flat_embeddings[:1] * 50.0
        posterior = copy_posterior(copy_logits(x, neighbors))
        gold = (int(neighbors.flat_labels[0]),)
        report = nll(posterior, neighbors, gold)
        assert report.nll < 0.1

    def test_length_mismatch(self, rng):
        _, neighbors, posterior = random_case(rng, n_tokens=3)
        with pytest.raises(ValueError):
            nll(posterior, neighbors, (0,))


class TestGradient:
    def test_matches_finite_differences(self, rng):
        step = 1e-5
        for _ in range(20):
            neighbors = make_neighbor_set(
                rng, n_neighbors=2, max_len=4, n_types=3, dim=5
            )
            n_tokens = int(rng.integers(1, 4))
            x = rng.normal(size=(n_tokens, 5))
            gold = make_gold(rng, n_tokens, n_types=3)

            def loss(mat):
                post = copy_posterior(copy_logits(mat, neighbors))
                return nll(post, neighbors, gold).nll

            posterior = copy_posterior(copy_logits(x, neighbors))
            grad = grad_wrt_input(posterior, neighbors, gold)
            assert grad.shape == x.shape
            for t in range(n_tokens):
                for k in range(5):
                    up = x.copy()
                    up[t, k] += step
                    down = x.copy()
                    down[t, k] -= step
                    numeric = (loss(up) - loss(down)) / (2 * step)
                    denom = max(1.0, abs(numeric))
                    assert abs(numeric - grad[t, k]) / denom < 1e-4

    def test_skipped_rows_zero(self, rng):
        _, neighbors, posterior = random_case(rng, n_tokens=2)
        absent = max(neighbors.types_present) + 1
        gold = (absent, int(neighbors.types_present[0]))
        grad = grad_wrt_input(posterior, neighbors, gold)
        assert np.array_equal(grad[0], np.zeros(grad.shape[1]))
        assert not np.array_equal(grad[1], np.zeros(grad.shape[1]))
