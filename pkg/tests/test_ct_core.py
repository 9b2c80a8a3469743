import itertools
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ctlayer import (
    CtConfig,
    EmbeddingSet,
    ThresholdError,
    ValidationError,
    cell_ct_stats,
    ct_curve,
    ct_score,
    curve_to_csv,
    curve_to_json_obj,
    diagnostics_to_json_obj,
    fit_kmeans,
    mann_whitney_zu,
    nn_sq_distance,
)
from ctlayer.ct_core import CellStats, CtCurve

from oracles import zu_bruteforce


class TestNnSqDistance:
    def test_self_distance_zero(self):
        rng = np.random.default_rng(0)
        t = rng.normal(size=(10, 4))
        assert nn_sq_distance(t[3], t) == 0.0

    def test_two_candidates(self):
        # candidates: |x-(0,0)|^2 = 2 and |x-(3,4)|^2 = 13
        t = np.array([[0.0, 0.0], [3.0, 4.0]])
        assert nn_sq_distance(np.array([1.0, 1.0]), t) == 2.0

    def test_single_row(self):
        t = np.array([[1.0, 2.0, 3.0]])
        x = np.array([2.0, 0.0, 3.0])
        assert nn_sq_distance(x, t) == 1.0 + 4.0

    def test_zero_iff_row_of_train(self):
        rng = np.random.default_rng(1)
        t = rng.normal(size=(25, 3)).astype(np.float32).astype(np.float64)
        for _ in range(50):
            x = rng.normal(size=3).astype(np.float32).astype(np.float64)
            is_row = any(np.array_equal(x, row) for row in t)
            assert (nn_sq_distance(x, t) == 0.0) == is_row
        assert nn_sq_distance(t[7], t) == 0.0

    def test_matches_bruteforce_reference(self):
        from oracles import nn_sq_distance_ref

        rng = np.random.default_rng(2)
        t = rng.normal(size=(30, 5))
        for _ in range(20):
            x = rng.normal(size=5)
            assert_allclose(nn_sq_distance(x, t), nn_sq_distance_ref(x, t), rtol=1e-12)

    def test_dim_mismatch(self):
        with pytest.raises(ValidationError, match="dim mismatch"):
            nn_sq_distance(np.zeros(3), np.zeros((2, 2)))


class TestMannWhitneyZu:
    def test_all_tied_returns_zero(self):
        assert mann_whitney_zu([3.0, 3.0, 3.0], [3.0, 3.0, 3.0]) == 0.0

    def test_separated_lists(self):
        # ranks of gen are 4,5,6 -> U_Q = 15 - 6 = 9, Z = 4.5 / sqrt(5.25)
        z = mann_whitney_zu([1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
        assert_allclose(z, 4.5 / math.sqrt(5.25), atol=1e-12)
        assert_allclose(z, zu_bruteforce([1, 2, 3], [4, 5, 6]), atol=1e-12)

    def test_antisymmetric_pair(self):
        a = [4.0, 5.0, 6.0]
        b = [1.0, 2.0, 3.0]
        assert mann_whitney_zu(a, b) == -mann_whitney_zu(b, a)
        assert_allclose(mann_whitney_zu(a, b), -4.5 / math.sqrt(5.25), atol=1e-12)

    def test_sign_contract(self):
        # generated distances smaller than test distances -> copying -> negative
        assert mann_whitney_zu([5.0, 6.0, 7.0], [0.1, 0.2, 0.3]) < 0
        assert mann_whitney_zu([0.1, 0.2, 0.3], [5.0, 6.0, 7.0]) > 0

    def test_exhaustive_small_oracle(self):
        # all multiset pairs with m + n <= 6 over {1, 2, 3}
        values = (1.0, 2.0, 3.0)
        for total in range(2, 7):
            for n in range(1, total):
                m = total - n
                for p in itertools.combinations_with_replacement(values, n):
                    for q in itertools.combinations_with_replacement(values, m):
                        got = mann_whitney_zu(list(p), list(q))
                        want = zu_bruteforce(list(p), list(q))
                        assert abs(got - want) <= 1e-12, (p, q)

    def test_antisymmetry_exact_random(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            a = rng.choice([0.0, 1.0, 2.5, 7.0], size=rng.integers(1, 9)).tolist()
            b = rng.choice([0.0, 1.0, 2.5, 7.0], size=rng.integers(1, 9)).tolist()
            assert mann_whitney_zu(a, b) == -mann_whitney_zu(b, a)

    def test_monotone_shift_never_decreases(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            a = rng.normal(size=rng.integers(2, 12)) ** 2
            b = rng.normal(size=rng.integers(2, 12)) ** 2
            base = mann_whitney_zu(a, b)
            shifted = mann_whitney_zu(a, b + rng.uniform(0.01, 5.0))
            assert shifted >= base - 1e-12

    def test_tie_correction_flag(self):
        a = [1.0, 2.0, 2.0]
        b = [2.0, 3.0, 3.0]
        with_corr = mann_whitney_zu(a, b, tie_correction=True)
        without = mann_whitney_zu(a, b, tie_correction=False)
        assert abs(with_corr) > abs(without)  # corrected variance is smaller
        assert_allclose(without, zu_bruteforce(a, b, tie_correction=False), atol=1e-12)

    def test_permutation_invariant_bitwise(self):
        rng = np.random.default_rng(5)
        a = rng.normal(size=40) ** 2
        b = rng.normal(size=30) ** 2
        base = mann_whitney_zu(a, b)
        for _ in range(5):
            assert mann_whitney_zu(rng.permutation(a), rng.permutation(b)) == base

    def test_empty_rejected(self):
        with pytest.raises(ValidationError, match="empty"):
            mann_whitney_zu([], [1.0])
        with pytest.raises(ValidationError, match="empty"):
            mann_whitney_zu([1.0], [])


class TestCellStats:
    def test_single_cell_partition(self):
        rng = np.random.default_rng(0)
        train = rng.normal(size=(30, 2))
        test = rng.normal(size=(20, 2))
        gen = rng.normal(size=(15, 2))
        part = fit_kmeans(train, 1, seed=0)
        cells = cell_ct_stats(part, train, test, gen, tau_p=10, tau_q=10)
        assert len(cells) == 1
        assert cells[0].weight == 1.0
        assert cells[0].included
        assert cells[0].n_test == 20 and cells[0].n_gen == 15

    def test_threshold_excludes(self):
        rng = np.random.default_rng(1)
        train = rng.normal(size=(30, 2))
        test = rng.normal(size=(20, 2))
        gen = rng.normal(size=(9, 2))  # tau_q - 1 generated samples
        part = fit_kmeans(train, 1, seed=0)
        cells = cell_ct_stats(part, train, test, gen, tau_p=10, tau_q=10)
        assert not cells[0].included
        assert cells[0].z_u is None
        assert cells[0].n_gen == 9

    def test_two_cell_1d_fixture(self):
        # T = {0, 10}; test {0.1, 9.9}, gen {0.2, 9.8}: each cell holds one
        # test and one gen distance with gen farther -> U_Q = 1, Z = +1
        train = np.array([[0.0], [10.0]])
        part = fit_kmeans(train, 2, seed=0)
        cells = cell_ct_stats(
            part,
            train,
            np.array([[0.1], [9.9]]),
            np.array([[0.2], [9.8]]),
            tau_p=1,
            tau_q=1,
        )
        assert len(cells) == 2
        for cell in cells:
            assert cell.n_test == 1 and cell.n_gen == 1
            assert cell.weight == 0.5
            assert_allclose(cell.z_u, zu_bruteforce([0.01], [0.04]), atol=1e-12)
            assert_allclose(cell.z_u, 1.0, atol=1e-12)
        assert_allclose(ct_score(cells), 1.0, atol=1e-12)

    def test_weights_sum_to_one(self):
        rng = np.random.default_rng(2)
        train = rng.normal(size=(100, 3))
        test = rng.normal(size=(60, 3))
        gen = rng.normal(size=(50, 3))
        part = fit_kmeans(train, 7, seed=1)
        cells = cell_ct_stats(part, train, test, gen, tau_p=1, tau_q=1)
        assert len(cells) == 7
        assert_allclose(sum(c.weight for c in cells), 1.0, atol=1e-12)

    def test_included_iff_thresholds(self):
        rng = np.random.default_rng(3)
        train = rng.normal(size=(120, 2))
        test = rng.normal(size=(80, 2))
        gen = rng.normal(size=(70, 2))
        part = fit_kmeans(train, 6, seed=2)
        for tau_p, tau_q in ((1, 1), (5, 8), (30, 30)):
            cells = cell_ct_stats(part, train, test, gen, tau_p=tau_p, tau_q=tau_q)
            for cell in cells:
                assert cell.included == (cell.n_test >= tau_p and cell.n_gen >= tau_q)
                assert (cell.z_u is None) == (not cell.included)

    def test_bad_threshold(self):
        part = fit_kmeans(np.zeros((3, 1)), 1, seed=0)
        with pytest.raises(ValidationError, match="tau"):
            cell_ct_stats(part, np.zeros((3, 1)), np.zeros((2, 1)), np.zeros((2, 1)), tau_p=0)


class TestCtScore:
    def _cell(self, idx, weight, z, included=True):
        return CellStats(cell_index=idx, n_test=10, n_gen=10, weight=weight,
                         z_u=z if included else None, included=included)

    def test_single_included_cell(self):
        assert ct_score([self._cell(0, 0.4, 2.5)]) == 2.5

    def test_weighted_average(self):
        cells = [self._cell(0, 0.6, 2.0), self._cell(1, 0.4, -1.0)]
        assert_allclose(ct_score(cells), 0.8, atol=1e-12)

    def test_excluded_cells_ignored(self):
        cells = [self._cell(0, 0.5, 2.0), self._cell(1, 0.5, None, included=False)]
        assert_allclose(ct_score(cells), 2.0, atol=1e-12)

    def test_all_excluded_raises(self):
        cells = [self._cell(0, 1.0, None, included=False)]
        with pytest.raises(ThresholdError, match="threshold"):
            ct_score(cells)

    def test_order_invariant(self):
        cells = [self._cell(i, w, z) for i, (w, z) in enumerate([(0.2, 1.0), (0.5, -2.0), (0.3, 0.7)])]
        assert ct_score(cells) == ct_score(list(reversed(cells)))


def _mixture(rng, n, centers=((-4.0, 0.0), (4.0, 3.0), (0.0, -5.0))):
    comps = rng.integers(0, len(centers), size=n)
    return np.asarray(centers)[comps] + rng.normal(size=(n, 2))


def _affine_stack(base, layer_count, seed=99):
    rng = np.random.default_rng(seed)
    layers = []
    for _ in range(layer_count):
        mat = rng.normal(size=(2, 2)) + 2.0 * np.eye(2)
        offset = rng.normal(size=2)
        layers.append((base @ mat.T + offset).astype(np.float32))
    return layers


class TestCtCurve:
    def _triple(self, seed=0, n=120, layer_count=3):
        rng = np.random.default_rng(seed)
        train = _mixture(rng, n)
        test = _mixture(rng, n)
        gen = _mixture(rng, n)
        mats = [np.random.default_rng(seed + 50).normal(size=(2, 2)) + 2 * np.eye(2)
                for _ in range(layer_count)]
        t = EmbeddingSet("t", tuple((train @ m.T).astype(np.float32) for m in mats))
        p = EmbeddingSet("p", tuple((test @ m.T).astype(np.float32) for m in mats))
        q = EmbeddingSet("q", tuple((gen @ m.T).astype(np.float32) for m in mats))
        return t, p, q

    def test_single_layer_composition(self):
        t, p, q = self._triple(layer_count=1)
        cfg = CtConfig(k=3, tau_p=5, tau_q=5, seed=0)
        curve, diags = ct_curve(t, p, q, cfg)
        assert curve.layer_count == 1
        part = fit_kmeans(t.layers[0], 3, seed=0)
        cells = cell_ct_stats(part, t.layers[0], p.layers[0], q.layers[0], tau_p=5, tau_q=5)
        assert curve.scores[0] == ct_score(cells)
        assert diags[0].layer == 0 and diags[0].ct == curve.scores[0]

    def test_exact_copy_strongly_negative(self):
        rng = np.random.default_rng(7)
        base_t = _mixture(rng, 200)
        base_p = _mixture(rng, 200)
        layers_t = _affine_stack(base_t, 3)
        layers_p = _affine_stack(base_p, 3)
        t = EmbeddingSet("t", tuple(layers_t))
        p = EmbeddingSet("p", tuple(layers_p))
        q = EmbeddingSet("q", tuple(layers_t))  # exact copies at every layer
        curve, diags = ct_curve(t, p, q, CtConfig(k=3, tau_p=5, tau_q=5))
        for score, diag in zip(curve.scores, diags):
            assert score < -3.0
            for cell in diag.cells:
                if cell.included:
                    assert cell.z_u < 0

    def test_deterministic(self):
        t, p, q = self._triple()
        a, _ = ct_curve(t, p, q, CtConfig(k=4, tau_p=5, tau_q=5, seed=3))
        b, _ = ct_curve(t, p, q, CtConfig(k=4, tau_p=5, tau_q=5, seed=3))
        assert a.scores == b.scores

    def test_row_permutation_invariance_bitwise(self):
        t, p, q = self._triple(seed=5)
        rng = np.random.default_rng(0)
        cfg = CtConfig(k=4, tau_p=5, tau_q=5, seed=1)
        base, _ = ct_curve(t, p, q, cfg)
        perm_t = rng.permutation(t.n_samples)
        perm_p = rng.permutation(p.n_samples)
        perm_q = rng.permutation(q.n_samples)
        t2 = EmbeddingSet("t", tuple(layer[perm_t] for layer in t.layers))
        p2 = EmbeddingSet("p", tuple(layer[perm_p] for layer in p.layers))
        q2 = EmbeddingSet("q", tuple(layer[perm_q] for layer in q.layers))
        permuted, _ = ct_curve(t2, p2, q2, cfg)
        assert base.scores == permuted.scores

    def test_failure_names_layer(self):
        t, p, q = self._triple(layer_count=2, n=30)
        # tau larger than any cell can satisfy -> ThresholdError at layer 0
        with pytest.raises(ThresholdError, match="layer 0"):
            ct_curve(t, p, q, CtConfig(k=2, tau_p=31, tau_q=31))

    def test_metadata_and_label(self):
        t, p, q = self._triple(layer_count=1)
        curve, _ = ct_curve(t, p, q, CtConfig(k=2, tau_p=5, tau_q=5), label="run-1")
        assert curve.label == "run-1"
        assert curve.metadata["k"] == 2
        assert curve.metadata["n_train"] == t.n_samples


class TestSerialization:
    def test_curve_json_obj(self):
        curve = CtCurve(label="m", scores=(1.0, -0.5))
        assert curve_to_json_obj(curve) == {"label": "m", "scores": [1.0, -0.5]}

    def test_curve_csv(self):
        curve = CtCurve(label="m", scores=(1.0, -0.5))
        assert curve_to_csv(curve) == "layer,ct\n0,1.0\n1,-0.5\n"

    def test_diagnostics_schema(self):
        t = EmbeddingSet("t", (np.random.default_rng(0).normal(size=(40, 2)).astype(np.float32),))
        p = EmbeddingSet("p", (np.random.default_rng(1).normal(size=(40, 2)).astype(np.float32),))
        q = EmbeddingSet("q", (np.random.default_rng(2).normal(size=(40, 2)).astype(np.float32),))
        curve, diags = ct_curve(t, p, q, CtConfig(k=2, tau_p=2, tau_q=2))
        obj = diagnostics_to_json_obj(curve, diags)
        assert set(obj) == {"label", "config", "per_layer"}
        layer0 = obj["per_layer"][0]
        assert set(layer0) == {"layer", "ct", "cells"}
        assert set(layer0["cells"][0]) == {"cell_index", "n_test", "n_gen", "weight", "z_u", "included"}

    def test_curve_validation(self):
        with pytest.raises(ValidationError):
            CtCurve(label="x", scores=())
        with pytest.raises(ValidationError):
            CtCurve(label="x", scores=(float("nan"),))
