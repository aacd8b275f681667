import numpy as np
import pytest

from emschart.metrics import (
    MetricReport,
    continuity,
    evaluate_embedding,
    localization_error,
    metric_objective,
    quantile,
    rank_neighbors,
    trustworthiness,
    write_cdf_csv,
    write_metric_csv,
    write_quantiles_json,
)


def brute_force_tw_ct(d_primary, d_latent, kappa, variant="classical"):
    """Set-based reimplementation straight from the neighbor-set definitions."""
    n = d_primary.shape[0]
    pr = rank_neighbors(d_primary)
    lr = rank_neighbors(d_latent)
    eta = 2.0 / (kappa * (2 * n - 3 * kappa - 1))
    tw = np.empty(n)
    ct = np.empty(n)
    for u in range(n):
        v_primary = {v for v in range(n) if v != u and pr[u, v] <= kappa}
        v_latent = {v for v in range(n) if v != u and lr[u, v] <= kappa}
        intruders = v_latent - v_primary
        missing = v_primary - v_latent
        if variant == "classical":
            tw[u] = 1.0 - eta * sum(pr[u, v] - kappa for v in intruders)
            ct[u] = 1.0 - eta * sum(lr[u, v] - kappa for v in missing)
        else:
            tw[u] = 1.0 - eta * sum(lr[u, v] - kappa for v in intruders)
            ct[u] = 1.0 - eta * sum(pr[u, v] - kappa for v in missing)
    return tw, ct


def random_distance_matrix(rng, n):
    d = rng.uniform(0.1, 3.0, size=(n, n))
    d = np.triu(d, 1)
    return d + d.T


# -------------------------------------------------------------- basic metrics


def test_localization_error_cases():
    truth = np.array([[0.0, 0.0], [1.0, 2.0]])
    assert np.all(localization_error(truth, truth) == 0)
    assert localization_error([[3.0, 4.0]], [[0.0, 0.0]])[0] == pytest.approx(5.0)
    rng = np.random.default_rng(0)
    est, tru = rng.standard_normal((7, 2)), rng.standard_normal((7, 2))
    le = localization_error(est, tru)
    for i in range(7):
        assert le[i] == pytest.approx(float(np.hypot(*(est[i] - tru[i]))), rel=1e-12)


def test_rank_neighbors_simple_and_ties():
    d = np.array([[0.0, 1.0, 2.0], [1.0, 0.0, 3.0], [2.0, 3.0, 0.0]])
    r = rank_neighbors(d)
    assert r[0, 1] == 1 and r[0, 2] == 2
    assert r[1, 0] == 1 and r[1, 2] == 2
    assert r[2, 0] == 1 and r[2, 1] == 2
    # Exact tie: the lower point index comes first.
    d_tie = np.array([[0.0, 5.0, 5.0], [5.0, 0.0, 1.0], [5.0, 1.0, 0.0]])
    r_tie = rank_neighbors(d_tie)
    assert r_tie[0, 1] == 1 and r_tie[0, 2] == 2


def test_rank_neighbors_matches_sort_oracle():
    rng = np.random.default_rng(1)
    d = random_distance_matrix(rng, 9)
    r = rank_neighbors(d)
    for u in range(9):
        order = sorted((dist, v) for v, dist in enumerate(d[u]) if v != u)
        for rank, (_, v) in enumerate(order, start=1):
            assert r[u, v] == rank


def test_tw_ct_identical_neighbor_sets_are_one():
    rng = np.random.default_rng(2)
    d = random_distance_matrix(rng, 8)
    pr = rank_neighbors(d)
    for kappa in (1, 2, 3):
        np.testing.assert_array_equal(trustworthiness(pr, pr, kappa), np.ones(8))
        np.testing.assert_array_equal(continuity(pr, pr, kappa), np.ones(8))


def test_tw_hand_case_kappa_one():
    # Four points; in the latent space point 3 intrudes as point 0's nearest
    # neighbor while being its farthest primary neighbor (rank 3).
    d_primary = np.array(
        [
            [0.0, 1.0, 2.0, 3.0],
            [1.0, 0.0, 1.5, 2.5],
            [2.0, 1.5, 0.0, 1.2],
            [3.0, 2.5, 1.2, 0.0],
        ]
    )
    d_latent = np.array(
        [
            [0.0, 2.0, 3.0, 0.5],
            [2.0, 0.0, 1.0, 2.2],
            [3.0, 1.0, 0.0, 2.8],
            [0.5, 2.2, 2.8, 0.0],
        ]
    )
    kappa = 1
    pr = rank_neighbors(d_primary)
    lr = rank_neighbors(d_latent)
    tw = trustworthiness(pr, lr, kappa)
    eta = 2.0 / (1 * (2 * 4 - 3 * 1 - 1))
    assert tw[0] == 1.0 - eta * (pr[0, 3] - kappa)
    assert tw[0] == pytest.approx(0.0)  # eta = 1/2, penalty rank 3 - kappa = 2
    bf_tw, bf_ct = brute_force_tw_ct(d_primary, d_latent, kappa)
    np.testing.assert_array_equal(tw, bf_tw)
    np.testing.assert_array_equal(continuity(pr, lr, kappa), bf_ct)


def test_tw_ct_match_brute_force_exactly():
    rng = np.random.default_rng(3)
    for n in (6, 11, 17):
        for kappa in (1, 2, 3):
            dp = random_distance_matrix(rng, n)
            dl = random_distance_matrix(rng, n)
            pr, lr = rank_neighbors(dp), rank_neighbors(dl)
            bf_tw, bf_ct = brute_force_tw_ct(dp, dl, kappa)
            np.testing.assert_array_equal(trustworthiness(pr, lr, kappa), bf_tw)
            np.testing.assert_array_equal(continuity(pr, lr, kappa), bf_ct)
            assert np.all(bf_tw >= 0) and np.all(bf_tw <= 1)
            assert np.all(bf_ct >= 0) and np.all(bf_ct <= 1)


def test_ct_equals_tw_with_spaces_swapped():
    rng = np.random.default_rng(4)
    dp = random_distance_matrix(rng, 10)
    dl = random_distance_matrix(rng, 10)
    pr, lr = rank_neighbors(dp), rank_neighbors(dl)
    for variant in ("classical", "literal"):
        np.testing.assert_array_equal(
            continuity(pr, lr, 3, variant), trustworthiness(lr, pr, 3, variant)
        )


def test_literal_variant_can_exceed_one():
    # The literal penalty charges intruders by their latent rank (<= kappa),
    # so any intrusion with latent rank < kappa pushes the score above 1.
    rng = np.random.default_rng(5)
    hit = False
    for _ in range(20):
        dp = random_distance_matrix(rng, 12)
        dl = random_distance_matrix(rng, 12)
        tw = trustworthiness(rank_neighbors(dp), rank_neighbors(dl), 4, variant="literal")
        if np.any(tw > 1.0):
            hit = True
            break
    assert hit


def test_tw_isometric_latent_space_is_perfect():
    rng = np.random.default_rng(6)
    pts = rng.standard_normal((12, 2))
    d = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
    pr = rank_neighbors(d)
    np.testing.assert_array_equal(trustworthiness(pr, pr, 3), np.ones(12))
    np.testing.assert_array_equal(continuity(pr, pr, 3), np.ones(12))


def test_kappa_range_validation():
    pr = rank_neighbors(random_distance_matrix(np.random.default_rng(7), 6))
    with pytest.raises(ValueError, match="kappa"):
        trustworthiness(pr, pr, 0)
    with pytest.raises(ValueError, match="kappa"):
        trustworthiness(pr, pr, 4)  # (2*6-1)/3 = 3.67


# ------------------------------------------------------------------ quantiles


def test_quantile_nearest_rank():
    values = np.arange(1, 11)
    assert quantile(values, 0.9) == 9
    assert quantile(values, 1.0) == 10
    assert quantile([5.0], 0.3) == 5.0
    assert quantile(values, 0.05) == 1


def test_quantile_monotone_in_alpha():
    rng = np.random.default_rng(8)
    values = rng.standard_normal(37)
    alphas = np.linspace(0.05, 1.0, 30)
    qs = [quantile(values, a) for a in alphas]
    assert all(x <= y for x, y in zip(qs, qs[1:]))


def test_quantile_rejects_bad_input():
    with pytest.raises(ValueError):
        quantile([], 0.5)
    with pytest.raises(ValueError):
        quantile([1.0], 0.0)
    with pytest.raises(ValueError):
        quantile([1.0], 1.1)


# ------------------------------------------------------------------- reports


def make_report(rng, n=12, kappa=3):
    truth = rng.standard_normal((n, 2)) * 10
    coords = truth + rng.standard_normal((n, 2))
    is_anchor = np.zeros(n, dtype=bool)
    is_anchor[rng.choice(n, 3, replace=False)] = True
    d = np.linalg.norm(truth[:, None] - truth[None, :], axis=2)
    return evaluate_embedding(d, coords, is_anchor, truth, kappa=kappa), is_anchor, coords, truth


def test_evaluate_embedding_excludes_anchors():
    rng = np.random.default_rng(9)
    report, is_anchor, _, _ = make_report(rng)
    assert report.indices.size == (~is_anchor).sum()
    assert not np.any(is_anchor[report.indices])
    assert np.all(report.tw >= 0) and np.all(report.tw <= 1)
    assert np.all(report.ct >= 0) and np.all(report.ct <= 1)
    assert np.all(report.le >= 0)


def test_metric_objective_perfect_embedding():
    truth = np.random.default_rng(10).standard_normal((10, 2))
    is_anchor = np.zeros(10, dtype=bool)
    is_anchor[:3] = True
    d = np.linalg.norm(truth[:, None] - truth[None, :], axis=2)
    report = evaluate_embedding(d, truth, is_anchor, truth, kappa=2)
    assert metric_objective(report, "le", 0.9) == 0.0
    assert metric_objective(report, "tw", 0.9) == -1.0
    assert metric_objective(report, "ct", 0.9) == -1.0


def test_metric_objective_matches_quantile_of_per_point_values():
    rng = np.random.default_rng(11)
    report, _, _, _ = make_report(rng)
    assert metric_objective(report, "le", 0.9) == quantile(report.le, 0.9)
    assert metric_objective(report, "tw", 0.5) == quantile(-report.tw, 0.5)
    assert metric_objective(report, "neg_ct", 0.75) == quantile(-report.ct, 0.75)


def test_evaluate_embedding_rejects_all_anchored():
    truth = np.random.default_rng(12).standard_normal((5, 2))
    d = np.linalg.norm(truth[:, None] - truth[None, :], axis=2)
    with pytest.raises(ValueError, match="anchor"):
        evaluate_embedding(d, truth, np.ones(5, dtype=bool), truth, kappa=1)


def test_evaluate_embedding_position_neighbor_source():
    rng = np.random.default_rng(13)
    truth = rng.standard_normal((10, 2))
    coords = truth.copy()
    is_anchor = np.zeros(10, dtype=bool)
    is_anchor[:3] = True
    d = random_distance_matrix(rng, 10)  # garbage dissimilarities
    report = evaluate_embedding(d, coords, is_anchor, truth, kappa=2, neighbor_source="position")
    # With position neighborhoods and a perfect chart, TW and CT are perfect.
    np.testing.assert_array_equal(report.tw, np.ones(7))
    np.testing.assert_array_equal(report.ct, np.ones(7))


def test_report_files_roundtrip(tmp_path):
    rng = np.random.default_rng(14)
    report, _, _, _ = make_report(rng)
    write_metric_csv(tmp_path / "metrics.csv", report)
    write_cdf_csv(tmp_path / "cdf_le.csv", report.le)
    write_quantiles_json(tmp_path / "quantiles.json", report)

    lines = (tmp_path / "metrics.csv").read_text().strip().splitlines()
    assert lines[0] == "index,le_m,tw,ct"
    assert len(lines) == 1 + report.indices.size

    cdf = (tmp_path / "cdf_le.csv").read_text().strip().splitlines()
    assert cdf[0] == "value,fraction"
    assert cdf[-1].endswith(",1")

    import json

    payload = json.loads((tmp_path / "quantiles.json").read_text())
    assert set(payload) == {"le", "neg_tw", "neg_ct"}
    assert payload["le"]["0.9"] == quantile(report.le, 0.9)
