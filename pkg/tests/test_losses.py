"""Loss components against frozen closed-form oracles and structural properties.

Reference values are computed two ways: a hand-derived closed form evaluated
inline (so the test does not share code with the implementation), and a frozen
decimal literal guarding against silent drift.
"""

import math

import numpy as np
import pytest

from btmuda import losses
from btmuda.diffcore import tensor as dt
from btmuda.diffcore.tensor import Tensor, backward
from btmuda.errors import ContractViolation
from btmuda.losses import (
    KernelConfig,
    classification_loss,
    combine,
    consistency_loss,
    distill_loss,
    LossBundle,
    mmd_loss,
    mmd_squared,
    one_hot,
    restriction_loss,
    restriction_pair_count,
    symmetrized_kl,
)

RNG = np.random.default_rng(20240817)


def tensor64(values, grad=False):
    return Tensor(np.asarray(values, dtype=np.float64), requires_grad=grad)


class TestSymmetrizedKl:
    def test_frozen_value_half_vs_quarter(self):
        # ½·(KL(p||q) + KL(q||p)) for p=(.5,.5), q=(.25,.75):
        # ½·(½ln(4/3) − ¼ln2 + ¾ln(3/2)) = 0.13732653608351372
        p = tensor64([[0.5, 0.5]])
        q = tensor64([[0.25, 0.75]])
        got = float(symmetrized_kl(p, q).data)
        closed = 0.5 * (0.5 * math.log(4 / 3) - 0.25 * math.log(2)
                        + 0.75 * math.log(1.5))
        assert abs(got - closed) <= 1e-15
        assert abs(got - 0.13732653608351372) <= 1e-15

    def test_symmetric_in_arguments(self):
        p = tensor64([[0.1, 0.9], [0.3, 0.7]])
        q = tensor64([[0.6, 0.4], [0.2, 0.8]])
        assert float(symmetrized_kl(p, q).data) == float(symmetrized_kl(q, p).data)

    def test_zero_on_identical_and_positive_otherwise(self):
        p = tensor64([[0.2, 0.8]])
        assert float(symmetrized_kl(p, p).data) == 0.0
        q = tensor64([[0.8, 0.2]])
        assert float(symmetrized_kl(p, q).data) > 0.0

    def test_batch_mean(self):
        p = tensor64([[0.5, 0.5], [0.5, 0.5]])
        q = tensor64([[0.25, 0.75], [0.5, 0.5]])
        single = float(symmetrized_kl(tensor64([[0.5, 0.5]]),
                                      tensor64([[0.25, 0.75]])).data)
        assert abs(float(symmetrized_kl(p, q).data) - single / 2) <= 1e-15

    def test_floor_keeps_zero_probabilities_finite(self):
        p = tensor64([[1.0, 0.0]])
        q = tensor64([[0.0, 1.0]])
        out = float(symmetrized_kl(p, q).data)
        assert math.isfinite(out)
        assert out > 0


class TestConsistency:
    def test_mean_over_domains(self):
        pairs = [([[0.5, 0.5]], [[0.25, 0.75]]),
                 ([[0.3, 0.7]], [[0.3, 0.7]]),
                 ([[0.9, 0.1]], [[0.5, 0.5]])]
        path1 = [tensor64(p) for p, _ in pairs]
        path2 = [tensor64(q) for _, q in pairs]
        per_domain = [float(symmetrized_kl(tensor64(p), tensor64(q)).data)
                      for p, q in pairs]
        got = float(consistency_loss(path1, path2).data)
        assert abs(got - sum(per_domain) / 3) <= 1e-15

    def test_zero_when_paths_agree(self):
        probs = [tensor64([[0.4, 0.6], [0.7, 0.3]]) for _ in range(3)]
        assert float(consistency_loss(probs, probs).data) == 0.0

    def test_mismatched_lists_rejected(self):
        p = [tensor64([[0.5, 0.5]])]
        with pytest.raises(ContractViolation):
            consistency_loss(p, [])
        with pytest.raises(ContractViolation):
            consistency_loss(p, p + p)


def mmd_double_loop(x, y, scales, base):
    """O(n*m) per-entry oracle for the biased squared-MMD estimate."""
    n, m = len(x), len(y)

    def k(a, b, sigma):
        return math.exp(-float(np.sum((a - b) ** 2)) / (2 * sigma * sigma))

    total = 0.0
    for scale in scales:
        sigma = scale * base
        xx = sum(k(x[i], x[j], sigma) for i in range(n) for j in range(n))
        yy = sum(k(y[i], y[j], sigma) for i in range(m) for j in range(m))
        xy = sum(k(x[i], y[j], sigma) for i in range(n) for j in range(m))
        total += xx / (n * n) + yy / (m * m) - 2 * xy / (n * m)
    return total / len(scales)


class TestMmd:
    def test_frozen_single_point_value(self):
        # One sample per side at squared distance 2, unit bandwidth:
        # 1 + 1 − 2·e^{−1} = 1.2642411176571153.
        x = tensor64([[1.0, 0.0]])
        y = tensor64([[0.0, 1.0]])
        got = float(mmd_squared(x, y, KernelConfig(scales=(1.0,), bandwidth=1.0)).data)
        assert abs(got - (2.0 - 2.0 * math.exp(-1.0))) <= 1e-15
        assert abs(got - 1.2642411176571153) <= 1e-15

    def test_matches_double_loop_oracle(self):
        for _ in range(12):
            n = int(RNG.integers(1, 51))
            m = int(RNG.integers(1, 51))
            d = int(RNG.integers(1, 7))
            x = RNG.normal(size=(n, d))
            y = RNG.normal(size=(m, d)) + 0.5
            kernel = KernelConfig(bandwidth=1.3)
            got = float(mmd_squared(tensor64(x), tensor64(y), kernel).data)
            ref = mmd_double_loop(x, y, kernel.scales, 1.3)
            assert abs(got - ref) <= 1e-9

    def test_median_bandwidth_matches_oracle(self):
        x = RNG.normal(size=(9, 3))
        y = RNG.normal(size=(7, 3)) * 2.0
        joint = np.concatenate([x, y])
        dists = [float(np.linalg.norm(joint[i] - joint[j]))
                 for i in range(len(joint)) for j in range(i + 1, len(joint))]
        base = float(np.median(dists))
        got = float(mmd_squared(tensor64(x), tensor64(y)).data)
        ref = mmd_double_loop(x, y, losses.MMD_SCALES, base)
        assert abs(got - ref) <= 1e-9

    def test_zero_on_identical_sets_and_never_negative(self):
        x = RNG.normal(size=(12, 4))
        same = float(mmd_squared(tensor64(x), tensor64(x.copy())).data)
        assert abs(same) <= 1e-12
        for _ in range(8):
            a = tensor64(RNG.normal(size=(int(RNG.integers(2, 20)), 3)))
            b = tensor64(RNG.normal(size=(int(RNG.integers(2, 20)), 3)))
            assert float(mmd_squared(a, b).data) >= -1e-9

    def test_symmetry_and_sample_permutation_invariance(self):
        x = RNG.normal(size=(6, 3))
        y = RNG.normal(size=(8, 3))
        kernel = KernelConfig(bandwidth=0.9)
        fwd = float(mmd_squared(tensor64(x), tensor64(y), kernel).data)
        rev = float(mmd_squared(tensor64(y), tensor64(x), kernel).data)
        assert abs(fwd - rev) <= 1e-12
        perm = RNG.permutation(len(x))
        shuffled = float(mmd_squared(tensor64(x[perm]), tensor64(y), kernel).data)
        assert abs(fwd - shuffled) <= 1e-12

    def test_identical_points_fall_back_to_unit_bandwidth(self):
        x = tensor64(np.zeros((3, 2)))
        y = tensor64(np.zeros((4, 2)))
        out = float(mmd_squared(x, y).data)
        assert math.isfinite(out)
        assert abs(out) <= 1e-12

    def test_gradient_is_finite_and_flows(self):
        x = tensor64(RNG.normal(size=(5, 3)), grad=True)
        y = tensor64(RNG.normal(size=(4, 3)))
        backward(mmd_squared(x, y, KernelConfig(bandwidth=1.0)))
        assert x.grad is not None
        assert np.all(np.isfinite(x.grad))
        assert np.abs(x.grad).max() > 0

    def test_contract_violations(self):
        with pytest.raises(ContractViolation):
            mmd_squared(tensor64(np.zeros((0, 2))), tensor64(np.zeros((3, 2))))
        with pytest.raises(ContractViolation):
            mmd_squared(tensor64(np.zeros((2, 2))), tensor64(np.zeros((2, 3))))
        with pytest.raises(ContractViolation):
            KernelConfig(bandwidth=-1.0).base_bandwidth(np.zeros((1, 1)),
                                                        np.zeros((1, 1)))

    def test_pair_list_average(self):
        kernel = KernelConfig(bandwidth=1.0)
        src = [tensor64(RNG.normal(size=(4, 2))) for _ in range(4)]
        tgt = [tensor64(RNG.normal(size=(5, 2))) for _ in range(4)]
        per_pair = [float(mmd_squared(s, t, kernel).data) for s, t in zip(src, tgt)]
        got = float(mmd_loss(src, tgt, kernel).data)
        assert abs(got - sum(per_pair) / 4) <= 1e-14
        with pytest.raises(ContractViolation):
            mmd_loss(src, tgt[:-1], kernel)
        with pytest.raises(ContractViolation):
            mmd_loss([], [], kernel)


class TestDistillation:
    def test_equals_soft_cross_entropy(self):
        teacher = tensor64([[2.0, -1.0], [0.5, 0.5]])
        student = tensor64([[0.3, 0.1], [-0.2, 0.4]], grad=True)
        got = float(distill_loss([teacher], student).data)
        t = np.exp(teacher.data - teacher.data.max(axis=1, keepdims=True))
        t /= t.sum(axis=1, keepdims=True)
        s = np.exp(student.data - student.data.max(axis=1, keepdims=True))
        s /= s.sum(axis=1, keepdims=True)
        ref = float(np.mean(-np.sum(t * np.log(s), axis=1)))
        assert abs(got - ref) <= 1e-12

    def test_teacher_carries_no_gradient(self):
        teacher = tensor64([[1.0, -1.0]], grad=True)
        student = tensor64([[0.2, 0.8]], grad=True)
        backward(distill_loss([teacher], student))
        assert teacher.grad is None
        assert student.grad is not None
        assert np.abs(student.grad).max() > 0

    def test_minimized_when_student_matches_teacher(self):
        teacher_probs = np.array([[0.7, 0.3], [0.2, 0.8]])
        teacher = tensor64(np.log(teacher_probs))
        at_teacher = float(
            distill_loss([teacher], tensor64(np.log(teacher_probs))).data)
        entropy = float(np.mean(-np.sum(teacher_probs * np.log(teacher_probs),
                                        axis=1)))
        assert abs(at_teacher - entropy) <= 1e-12
        nudged = float(
            distill_loss([teacher],
                         tensor64(np.log(teacher_probs) + [[0.4, -0.4],
                                                           [0.0, 0.0]])).data)
        assert nudged > at_teacher

    def test_mean_over_teachers(self):
        t1 = tensor64([[3.0, 0.0]])
        t2 = tensor64([[-1.0, 1.0]])
        student = tensor64([[0.5, -0.5]])
        lone = [float(distill_loss([t], student).data) for t in (t1, t2)]
        both = float(distill_loss([t1, t2], student).data)
        assert abs(both - sum(lone) / 2) <= 1e-14

    def test_accepts_plain_arrays_and_rejects_empty(self):
        student = tensor64([[0.1, -0.1]])
        arr = np.array([[2.0, -2.0]])
        via_array = float(distill_loss([arr], student).data)
        via_tensor = float(distill_loss([tensor64(arr)], student).data)
        assert via_array == via_tensor
        with pytest.raises(ContractViolation):
            distill_loss([], student)


class TestRestriction:
    def test_frozen_two_classifier_value(self):
        # |0.3−0.6| + |0.7−0.4| = 0.6 over the single unordered pair.
        probs = [tensor64([[0.3, 0.7]]), tensor64([[0.6, 0.4]])]
        assert float(restriction_loss(probs).data) == pytest.approx(0.6, abs=1e-15)

    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_pair_count_formula(self, m):
        assert restriction_pair_count(m) == m * (2 * m - 1)
        assert restriction_pair_count(m) == math.comb(2 * m, 2)

    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_single_dissenter_closed_form(self, m):
        # 2M−1 of the M(2M−1) pairs disagree by |½−1|+|½−0| = 1 each,
        # so the normalized loss is exactly 1/M.
        probs = [tensor64([[0.5, 0.5]]) for _ in range(2 * m - 1)]
        probs.append(tensor64([[1.0, 0.0]]))
        got = float(restriction_loss(probs).data)
        assert abs(got - 1.0 / m) <= 1e-15

    def test_zero_when_all_agree(self):
        probs = [tensor64([[0.25, 0.75], [0.6, 0.4]]) for _ in range(4)]
        assert float(restriction_loss(probs).data) == 0.0

    def test_classifier_order_invariance(self):
        base = [tensor64(RNG.dirichlet((1, 1), size=3)) for _ in range(4)]
        fwd = float(restriction_loss(base).data)
        rev = float(restriction_loss(base[::-1]).data)
        assert abs(fwd - rev) <= 1e-15

    def test_batch_mean(self):
        a = tensor64([[0.3, 0.7], [0.5, 0.5]])
        b = tensor64([[0.6, 0.4], [0.5, 0.5]])
        # Rows disagree by 0.6 and 0.0, so the batch mean is 0.3.
        assert abs(float(restriction_loss([a, b]).data) - 0.3) <= 1e-15

    def test_needs_two_classifiers(self):
        with pytest.raises(ContractViolation):
            restriction_loss([tensor64([[0.5, 0.5]])])


class TestClassification:
    def test_frozen_uniform_value(self):
        # Uniform logits give cross-entropy ln 2 for each source classifier
        # and again for the fused head: the per-pair mean is 2·ln 2.
        labels = {1: np.array([0, 1])}
        logits = {(1, 1): tensor64(np.zeros((2, 2))),
                  (2, 1): tensor64(np.zeros((2, 2)))}
        fused = {1: tensor64(np.zeros((2, 2)))}
        got = float(classification_loss(logits, fused, labels).data)
        assert abs(got - 2 * math.log(2)) <= 1e-12
        assert abs(got - 1.3862943611198906) <= 1e-12

    def test_fused_term_repeats_per_pair(self):
        labels = {1: np.array([0, 1, 1])}
        per_pair = {(1, 1): tensor64(RNG.normal(size=(3, 2))),
                    (2, 1): tensor64(RNG.normal(size=(3, 2)))}
        fused = {1: tensor64(RNG.normal(size=(3, 2)))}
        got = float(classification_loss(per_pair, fused, labels).data)

        def ce(logits):
            z = logits.data - logits.data.max(axis=1, keepdims=True)
            logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
            return float(np.mean(-logp[np.arange(3), labels[1]]))

        ref = (ce(per_pair[(1, 1)]) + ce(per_pair[(2, 1)])) / 2 + ce(fused[1])
        assert abs(got - ref) <= 1e-12

    def test_confident_correct_beats_uniform(self):
        labels = {1: np.array([0, 1])}
        sharp = tensor64([[8.0, -8.0], [-8.0, 8.0]])
        flat = tensor64(np.zeros((2, 2)))
        confident = float(classification_loss({(1, 1): sharp}, {1: sharp},
                                              labels).data)
        uniform = float(classification_loss({(1, 1): flat}, {1: flat},
                                            labels).data)
        assert confident < 1e-3 < uniform

    def test_normalized_by_active_pair_count(self):
        labels = {1: np.array([1, 0])}
        logits = tensor64(RNG.normal(size=(2, 2)))
        fused = {1: tensor64(RNG.normal(size=(2, 2)))}
        one_pair = float(classification_loss({(1, 1): logits}, fused, labels).data)
        two_pairs = float(classification_loss({(1, 1): logits, (2, 1): logits},
                                              fused, labels).data)
        assert abs(one_pair - two_pairs) <= 1e-12

    def test_empty_rejected(self):
        with pytest.raises(ContractViolation):
            classification_loss({}, {}, {})


class TestOneHot:
    def test_encoding(self):
        np.testing.assert_array_equal(one_hot([1, 0, 1]),
                                      [[0.0, 1.0], [1.0, 0.0], [0.0, 1.0]])

    def test_rejects_bad_labels(self):
        with pytest.raises(ContractViolation):
            one_hot([0, 2])
        with pytest.raises(ContractViolation):
            one_hot([-1, 0])
        with pytest.raises(ContractViolation):
            one_hot([[0, 1]])


class TestCombination:
    def test_weighted_sum(self):
        parts = [tensor64(v) for v in (1.0, 2.0, 3.0, 4.0, 5.0)]
        total = combine(*parts, alpha=1.0, beta=0.5, lam=0.3)
        # 1·1 + 0.5·2 + 0.3·(3+4) + 5 = 9.1
        assert abs(float(total.data) - 9.1) <= 1e-15

    def test_classification_has_no_weight_knob(self):
        parts = [tensor64(0.0)] * 4 + [tensor64(7.25)]
        total = combine(*parts, alpha=0.0, beta=0.0, lam=0.0)
        assert float(total.data) == 7.25

    def test_bundle_recombines_to_total(self):
        bundle = LossBundle(distill=0.3, consistency=0.2, mmd=0.05,
                            restriction=0.1, classification=0.7,
                            alpha=1.0, beta=0.4, lam=0.9, total=0.0)
        parts = [tensor64(v) for v in (0.3, 0.2, 0.05, 0.1, 0.7)]
        direct = float(combine(*parts, alpha=1.0, beta=0.4, lam=0.9).data)
        assert abs(bundle.recombine() - direct) <= 1e-15

    def test_gradient_reaches_every_component(self):
        parts = [tensor64(float(i + 1), grad=True) for i in range(5)]
        backward(combine(*parts, alpha=1.0, beta=0.5, lam=0.25))
        grads = [float(p.grad) for p in parts]
        assert grads == [1.0, 0.5, 0.25, 0.25, 1.0]
