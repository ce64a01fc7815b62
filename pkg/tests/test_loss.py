import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fapl.errors import ContractError, InputError, ShapeError
from fapl.labeling import CenterBank
from fapl.loss import (
    center_delta,
    center_loss,
    center_loss_grad,
    center_update,
    cross_entropy,
    cross_entropy_grad,
    total_loss,
)


def onehot(k, K):
    q = np.zeros(K)
    q[k] = 1.0
    return q


class TestCrossEntropy:
    def test_confident_correct(self):
        assert cross_entropy([50.0, 0.0], onehot(0, 2)) < 1e-20

    def test_uniform_target_equal_logits(self):
        assert cross_entropy(np.zeros(4), np.full(4, 0.25)) == pytest.approx(math.log(4), abs=1e-15)
        assert cross_entropy(np.zeros(4), np.full(4, 0.25)) == pytest.approx(1.38629, abs=1e-5)

    def test_onehot_equal_logits(self):
        assert cross_entropy(np.zeros(2), onehot(1, 2)) == pytest.approx(0.69315, abs=1e-5)

    def test_batch(self):
        y = np.array([[0.0, 0.0], [50.0, 0.0]])
        q = np.array([[1.0, 0.0], [1.0, 0.0]])
        np.testing.assert_allclose(cross_entropy(y, q), [math.log(2), 0.0], atol=1e-15)

    @pytest.mark.parametrize("q", [[0.5, 0.6], [1.5, -0.5], [np.nan, 1.0]])
    def test_rejects_non_distribution(self, q):
        with pytest.raises(InputError):
            cross_entropy([0.0, 0.0], q)
        with pytest.raises(InputError):
            cross_entropy_grad([0.0, 0.0], q)

    @given(st.integers(2, 8), st.integers(0, 2**31))
    def test_gibbs(self, K, seed):
        rng = np.random.default_rng(seed)
        y = rng.normal(0, 3, K)
        q = rng.dirichlet(np.ones(K))
        ent = -np.sum(q * np.log(q))
        assert cross_entropy(y, q) >= ent - 1e-12
        p = np.exp(y - y.max())
        p /= p.sum()
        assert cross_entropy(y, p) == pytest.approx(-np.sum(p * np.log(p)), abs=1e-12)


class TestCrossEntropyGrad:
    def test_stationary(self):
        y = np.log(np.array([0.2, 0.3, 0.5]))
        q = np.exp(y) / np.exp(y).sum()
        np.testing.assert_allclose(cross_entropy_grad(y, q), 0.0, atol=1e-15)

    def test_equal_logits_onehot(self):
        np.testing.assert_allclose(cross_entropy_grad([0.0, 0.0], onehot(0, 2)), [-0.5, 0.5], atol=1e-15)

    @pytest.mark.parametrize("seed", range(20))
    def test_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        K = int(rng.integers(2, 9))
        y = rng.normal(0, 2, K)
        q = rng.dirichlet(np.ones(K))
        h = 1e-5
        num = np.array([(cross_entropy(y + h * onehot(k, K), q) - cross_entropy(y - h * onehot(k, K), q)) / (2 * h)
                        for k in range(K)])
        g = cross_entropy_grad(y, q)
        assert np.max(np.abs(g - num) / np.maximum(np.abs(num), 1e-3)) <= 1e-6

    @given(st.integers(2, 10), st.integers(0, 2**31))
    def test_sums_to_zero(self, K, seed):
        rng = np.random.default_rng(seed)
        g = cross_entropy_grad(rng.normal(0, 5, K), rng.dirichlet(np.ones(K)))
        assert abs(g.sum()) <= 1e-12


class TestCenterLoss:
    def test_zero_at_centers(self):
        bank = CenterBank(np.array([[1.0, 2.0], [3.0, 4.0]]))
        assert center_loss(bank.centers[[1, 0, 1]], [1, 0, 1], bank) == 0.0

    def test_value(self):
        assert center_loss([[2.0, 0.0]], [0], CenterBank.zeros(1, 2)) == 2.0

    def test_additive(self):
        bank = CenterBank(np.array([[0.5, -1.0], [2.0, 0.0]]))
        xs = np.array([[1.0, 1.0], [-3.0, 0.5]])
        both = center_loss(xs, [0, 1], bank)
        assert both == pytest.approx(center_loss(xs[:1], [0], bank) + center_loss(xs[1:], [1], bank), abs=1e-15)

    def test_bad_index(self):
        with pytest.raises(InputError):
            center_loss([[1.0, 0.0]], [2], CenterBank.zeros(2, 2))

    def test_grad(self):
        assert center_loss_grad([3.0, 1.0], [1.0, 1.0]).tolist() == [2.0, 0.0]
        assert center_loss_grad([1.0, 1.0], [1.0, 1.0]).tolist() == [0.0, 0.0]
        with pytest.raises(ShapeError):
            center_loss_grad([1.0], [1.0, 2.0])

    def test_grad_finite_differences(self, rng):
        x = rng.normal(size=4)
        c = rng.normal(size=4)
        bank = CenterBank(c[None, :])
        h = 1e-6
        num = np.array([(center_loss([x + h * np.eye(4)[j]], [0], bank) - center_loss([x - h * np.eye(4)[j]], [0], bank))
                        / (2 * h) for j in range(4)])
        np.testing.assert_allclose(center_loss_grad(x, c), num, atol=1e-8)


class TestCenterUpdate:
    def test_absent_class_unchanged(self):
        bank = CenterBank(np.array([[1.0, 1.0], [5.0, 5.0]]))
        new = center_update([[0.0, 0.0]], [0], bank)
        assert new.centers[1].tolist() == [5.0, 5.0]
        assert center_delta([[0.0, 0.0]], [0], bank)[1].tolist() == [0.0, 0.0]

    def test_delta_by_hand(self):
        bank = CenterBank.zeros(1, 2, alpha=0.5)
        delta = center_delta([[2.0, 0.0], [0.0, 2.0]], [0, 0], bank)
        np.testing.assert_allclose(delta[0], [-2 / 3, -2 / 3], atol=1e-15)
        # the center moves toward its members
        np.testing.assert_allclose(center_update([[2.0, 0.0], [0.0, 2.0]], [0, 0], bank).centers[0], [1 / 3, 1 / 3])

    def test_fixed_point(self):
        bank = CenterBank(np.array([[0.3, -0.2]]))
        assert np.all(center_delta(bank.centers, [0], bank) == 0.0)

    def test_unlabeled_rejected(self):
        with pytest.raises(ContractError):
            center_update([[0.0, 0.0]], [-1], CenterBank.zeros(2, 2))

    def test_alpha_one_full_class(self, rng):
        c = rng.normal(size=(3, 2))
        x = rng.normal(size=(5, 2))
        new = center_update(x, [1] * 5, CenterBank(c, alpha=1.0))
        expected = c[1] - np.sum(c[1] - x, axis=0) / 6
        np.testing.assert_allclose(new.centers[1], expected, atol=1e-15)
        assert np.linalg.norm(new.centers[1] - x.mean(0)) < np.linalg.norm(c[1] - x.mean(0))


class TestTotalLoss:
    def setup_method(self):
        self.bank = CenterBank(np.array([[1.0, 0.0], [0.0, 1.0]]))
        self.y = np.array([[2.0, -1.0], [0.3, 0.4]])
        self.q = np.array([[1.0, 0.0], [0.4, 0.6]])
        self.x = np.array([[1.5, 0.5], [0.2, 0.9]])

    def test_lambda_zero(self):
        lb = total_loss(self.y, self.q, self.x, [0, -1], self.bank, 0.0)
        assert lb.L == lb.L_S
        assert lb.L_S == pytest.approx(float(np.sum(cross_entropy(self.y, self.q))))

    def test_unlabeled_batch_no_center_term(self):
        assert total_loss(self.y, self.q, self.x, [-1, -1], self.bank, 1.0).L_C == 0.0

    def test_center_term(self):
        lb = total_loss(self.y, self.q, self.x, [0, -1], self.bank, 0.1)
        assert lb.L_C == pytest.approx(0.5 * (0.25 + 0.25))
        assert lb.L == pytest.approx(lb.L_S + 0.1 * lb.L_C)

    def test_joint_minimum(self):
        y = np.array([[0.0, 0.0]])
        lb = total_loss(y, [[0.5, 0.5]], [[1.0, 0.0]], [0], self.bank, 1e-4)
        # p = q gives the entropy of q, the smallest possible classification term
        assert lb.L_C == 0.0 and lb.L == pytest.approx(math.log(2))
        lb = total_loss([[50.0, 0.0]], [[1.0, 0.0]], [[1.0, 0.0]], [0], self.bank, 1e-4)
        assert lb.L < 1e-20

    def test_arity(self):
        with pytest.raises(InputError):
            total_loss(self.y, self.q, self.x[:1], [0, 1], self.bank, 0.1)
