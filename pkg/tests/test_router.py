import numpy as np
import pytest

from helpers import (
    build_state,
    hetero_config,
    nested_correctness,
    quick_bo,
    quick_mlp,
    truth_fractions,
)
from tierroute.accounting import UtilityWeights
from tierroute.bayesopt import ThresholdPair
from tierroute.errors import BundleIntegrityError, CorruptStateError, DimensionMismatchError
from tierroute.labels import LabelConfig, build_labels
from tierroute.mlp import init_model
from tierroute.network import scenario_by_name
from tierroute.router import (
    baseline_route,
    load_bundle,
    route_query,
    routing_tier,
    run_offline_phase,
    run_stream,
    save_bundle,
    state_checksum,
)
from tierroute.trace import (
    SyntheticConfig,
    TierId,
    Trace,
    concat_traces,
    generate_synthetic_trace,
)

GOOD = scenario_by_name("good")


class TestRoutingRule:
    def test_above_tau1_stays_on_device(self):
        assert routing_tier(0.90, 0.80, 0.50) == TierId.DEVICE

    def test_boundary_escalates(self):
        assert routing_tier(0.80, 0.80, 0.50) == TierId.EDGE
        assert routing_tier(0.50, 0.80, 0.50) == TierId.CLOUD

    def test_low_score_goes_to_cloud(self):
        assert routing_tier(0.10, 0.80, 0.50) == TierId.CLOUD

    def test_fuzzed_rule_consistency(self):
        rng = np.random.default_rng(0)
        for _ in range(5000):
            tau2, tau1 = np.sort(rng.random(2))
            if tau1 <= tau2:
                continue
            score = float(rng.random())
            tier = routing_tier(score, tau1, tau2)
            if score > tau1:
                assert tier == TierId.DEVICE
            elif score > tau2:
                assert tier == TierId.EDGE
            else:
                assert tier == TierId.CLOUD

    def test_threshold_monotonicity_on_fuzzed_scores(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            scores = rng.random(400)
            tau2 = float(rng.uniform(0.0, 0.5))
            tau1s = np.sort(rng.uniform(tau2 + 1e-6, 1.0, size=6))
            device_fracs = [
                np.mean([routing_tier(s, t1, tau2) == TierId.DEVICE for s in scores])
                for t1 in tau1s
            ]
            assert all(a >= b - 1e-12 for a, b in zip(device_fracs, device_fracs[1:]))
            tau1 = float(rng.uniform(0.5, 1.0))
            tau2s = np.sort(rng.uniform(0.0, tau1 - 1e-6, size=6))
            non_cloud = [
                np.mean([routing_tier(s, tau1, t2) != TierId.CLOUD for s in scores])
                for t2 in tau2s
            ]
            assert all(a >= b - 1e-12 for a, b in zip(non_cloud, non_cloud[1:]))


@pytest.fixture(scope="module")
def small_state():
    cfg = SyntheticConfig(n_queries=500, embedding_dim=12, n_latent_clusters=2,
                          seed=51, noise_sigma=0.03)
    trace, truth = generate_synthetic_trace(cfg)
    state = build_state(trace, GOOD, seed=3,
                        mlp_overrides={"max_epochs": 25},
                        bo_overrides={"offline_budget": 15},
                        k_min=2, k_max=5)
    return trace, truth, state


class TestRouteQuery:
    def test_decision_consistent_with_rule(self, small_state):
        trace, _, state = small_state
        for rec in trace.records[:50]:
            decision = route_query(state, rec)
            assert decision.tier == routing_tier(decision.score, decision.tau1,
                                                 decision.tau2)
            assert decision.cluster in state.thresholds

    def test_dimension_mismatch(self, small_state):
        trace, _, state = small_state
        rec = trace.records[0]
        bad = type(rec)(id="bad", embedding=np.zeros(5), tier_info=rec.tier_info)
        with pytest.raises(DimensionMismatchError):
            route_query(state, bad)

    def test_missing_threshold_is_corrupt_state(self, small_state):
        trace, _, state = small_state
        clone = state.clone()
        cluster = route_query(clone, trace.records[0]).cluster
        del clone.thresholds[cluster]
        with pytest.raises(CorruptStateError):
            route_query(clone, trace.records[0])


class TestOfflinePhase:
    def test_perfectly_split_clusters_route_apart(self):
        cfg = SyntheticConfig(
            n_queries=700, embedding_dim=16, n_latent_clusters=2, seed=29,
            noise_sigma=0.02,
            tier_accuracy_profile=((1.0, 1.0, 1.0), (0.0, 0.0, 1.0)),
            token_mean_profile=((90, 90, 90), (90, 90, 90)),
        )
        trace, truth = generate_synthetic_trace(cfg)
        state = build_state(trace, GOOD, seed=1, k_min=2, k_max=4,
                            mlp_overrides={"max_epochs": 30})
        report = run_stream(state.clone(), trace, GOOD, online=False)
        device_frac = truth_fractions(report, truth, TierId.DEVICE)
        cloud_frac = truth_fractions(report, truth, TierId.CLOUD)
        consistent = 0 if truth.tier_probs[0][0] == 1.0 else 1
        inconsistent = 1 - consistent
        assert device_frac[consistent] >= 0.80
        assert cloud_frac[inconsistent] >= 0.80

    def test_kappa_limit_routes_to_most_correct_tier(self):
        cfg = SyntheticConfig(
            n_queries=900, embedding_dim=16, n_latent_clusters=3, seed=31,
            noise_sigma=0.02,
            tier_accuracy_profile=((1.0, 1.0, 1.0), (0.3, 0.8, 0.97), (0.5, 0.55, 0.99)),
            token_mean_profile=((90, 90, 90),) * 3,
        )
        trace, truth = generate_synthetic_trace(cfg)
        weights = UtilityWeights(1.0, 1e-9, 1e-9)
        state = build_state(trace, GOOD, seed=2, weights=weights, k_min=2, k_max=5,
                            mlp_overrides={"max_epochs": 30})
        report = run_stream(state.clone(), trace, GOOD, online=False)
        correct = trace.correctness_matrix()
        # Brute-force oracle: realized per-tier accuracy argmax per latent cluster,
        # with ties (within 1e-6) all acceptable.
        ok = total = 0
        for latent in range(3):
            mask = truth.cluster_of == latent
            rates = correct[mask].mean(axis=0)
            best = set(np.flatnonzero(rates >= rates.max() - 1e-6))
            rows = [r for i, r in enumerate(report.decisions) if mask[i]]
            ok += sum(1 for r in rows if int(r.tier) in best)
            total += len(rows)
        assert ok / total >= 0.95

    def test_deterministic_checksum(self):
        cfg = SyntheticConfig(n_queries=400, embedding_dim=10, n_latent_clusters=2,
                              seed=37, noise_sigma=0.05)
        trace, _ = generate_synthetic_trace(cfg)
        kw = dict(mlp_overrides={"max_epochs": 15}, bo_overrides={"offline_budget": 10},
                  k_min=2, k_max=4)
        a = build_state(trace, GOOD, seed=5, **kw)
        b = build_state(trace, GOOD, seed=5, **kw)
        assert state_checksum(a) == state_checksum(b)

    def test_labels_must_cover_trace(self):
        cfg = SyntheticConfig(n_queries=60, embedding_dim=8, n_latent_clusters=2, seed=1)
        trace, _ = generate_synthetic_trace(cfg)
        labels = build_labels(trace, LabelConfig())
        labels.ids[0] = "other"
        with pytest.raises(ValueError, match="id mismatch"):
            run_offline_phase(trace, labels, mlp_config=quick_mlp(8), scenario=GOOD,
                              k_min=2, k_max=4)


class TestRunStream:
    def test_static_threshold_history_constant(self, small_state):
        trace, _, state = small_state
        clone = state.clone()
        initial = dict(clone.thresholds)
        report = run_stream(clone, trace, GOOD, online=False)
        assert clone.thresholds == initial
        for hist in report.threshold_history.values():
            taus = {(t1, t2) for _, t1, t2 in hist}
            assert len(taus) == 1

    def test_conservation(self, small_state):
        trace, _, state = small_state
        report = run_stream(state.clone(), trace, GOOD, online=False)
        assert sum(w.count for w in report.windows) == len(trace)
        for w in report.windows + [report.totals]:
            assert sum(w.tier_fractions.values()) == pytest.approx(1.0, abs=1e-9)

    def test_online_appends_observations(self, small_state):
        trace, _, state = small_state
        clone = state.clone()
        before = {k: len(o) for k, o in clone.observations.items()}
        run_stream(clone, trace, GOOD, online=True)
        grew = [k for k in before if len(clone.observations[k]) > before[k]]
        assert grew

    def test_refresh_skips_clusters_without_data(self):
        cfg = SyntheticConfig(n_queries=500, embedding_dim=12, n_latent_clusters=2,
                              seed=61, noise_sigma=0.03, cluster_separation=14.0)
        trace, truth = generate_synthetic_trace(cfg)
        state = build_state(trace, GOOD, seed=7, fixed_k=2,
                            mlp_overrides={"max_epochs": 20},
                            bo_overrides={"offline_budget": 10})
        assert state.clusters.k == 2
        # Stream only latent-cluster-0 queries.
        keep = [r for i, r in enumerate(trace.records) if truth.cluster_of[i] == 0]
        stream = Trace(records=keep, embedding_dim=trace.embedding_dim)
        clone = state.clone()
        streamed_cluster = route_query(clone, keep[0]).cluster
        silent = 1 - streamed_cluster
        before_pair = clone.thresholds[silent]
        before_len = len(clone.observations[silent])
        run_stream(clone, stream, GOOD, online=True)
        assert clone.thresholds[silent] == before_pair
        assert len(clone.observations[silent]) == before_len

    def test_drift_online_beats_static(self):
        base = dict(embedding_dim=16, n_latent_clusters=3,
                    token_mean_profile=((90, 90, 90),) * 3, noise_sigma=0.04)
        stable = ((0.95, 0.96, 0.97), (0.55, 0.93, 0.96), (0.2, 0.5, 0.95))
        shifted = ((0.12, 0.9, 0.97), (0.55, 0.93, 0.96), (0.2, 0.5, 0.95))
        offline_trace, _ = generate_synthetic_trace(
            SyntheticConfig(n_queries=1200, seed=71, tier_accuracy_profile=stable, **base))
        first, _ = generate_synthetic_trace(
            SyntheticConfig(n_queries=1200, seed=72, tier_accuracy_profile=stable, **base))
        second, _ = generate_synthetic_trace(
            SyntheticConfig(n_queries=1200, seed=72, tier_accuracy_profile=shifted, **base))
        stream = concat_traces(first, second)
        state = build_state(offline_trace, GOOD, seed=9, k_min=2, k_max=5,
                            mlp_overrides={"max_epochs": 30}, update_interval=200)
        static_report = run_stream(state.clone(), stream, GOOD, online=False)
        online_report = run_stream(state.clone(), stream, GOOD, online=True)
        tail = slice(-3, None)
        static_tail = np.mean([w.mean_utility for w in static_report.windows[tail]])
        online_tail = np.mean([w.mean_utility for w in online_report.windows[tail]])
        assert online_tail > static_tail + 0.02


@pytest.fixture(scope="module")
def baseline_trace():
    cfg = SyntheticConfig(n_queries=600, embedding_dim=10, n_latent_clusters=2,
                          seed=41, noise_sigma=0.05)
    trace, _ = generate_synthetic_trace(cfg)
    return trace


class TestBaselines:
    @pytest.fixture
    def trace(self, baseline_trace):
        return baseline_trace

    def test_cloud_only_accuracy_is_cloud_rate(self, trace):
        report = baseline_route("cloud_only", trace, GOOD)
        rate = trace.correctness_matrix()[:, TierId.CLOUD].mean()
        assert report.totals.accuracy == pytest.approx(rate, abs=1e-12)
        assert report.totals.tier_fractions["cloud"] == 1.0

    def test_device_only_latency_is_mean_compute(self, trace):
        report = baseline_route("device-only", trace, GOOD)
        mean_compute = np.mean([
            r.tier_info[TierId.DEVICE].compute_seconds for r in trace.records
        ])
        assert report.totals.mean_latency_s == pytest.approx(mean_compute, rel=1e-12)

    def test_global_static_near_one_never_uses_device(self, trace):
        predictor = init_model(quick_mlp(trace.embedding_dim, seed=0))
        report = baseline_route("global_static", trace, GOOD,
                                pair=ThresholdPair(1.0 - 1e-9, 0.5),
                                predictor=predictor)
        assert report.totals.tier_fractions["device"] == 0.0

    def test_global_static_requires_pair_and_predictor(self, trace):
        with pytest.raises(ValueError, match="global_static"):
            baseline_route("global_static", trace, GOOD)

    def test_unknown_policy(self, trace):
        with pytest.raises(ValueError, match="unknown baseline"):
            baseline_route("mystery", trace, GOOD)

    def test_baseline_envelope_under_pointwise_dominance(self):
        cfg = SyntheticConfig(n_queries=900, embedding_dim=16, n_latent_clusters=3,
                              seed=43, noise_sigma=0.03)
        trace, _ = generate_synthetic_trace(cfg)
        trace = nested_correctness(trace, seed=5)
        state = build_state(trace, GOOD, seed=4, k_min=2, k_max=5,
                            mlp_overrides={"max_epochs": 25})
        routed = run_stream(state.clone(), trace, GOOD, online=False)
        clm = baseline_route("cloud_only", trace, GOOD)
        dlm = baseline_route("device_only", trace, GOOD)
        assert clm.totals.accuracy >= routed.totals.accuracy - 1e-12
        assert routed.totals.accuracy >= dlm.totals.accuracy - 1e-12


class TestBundle:
    def test_round_trip_checksum(self, small_state, tmp_path):
        _, _, state = small_state
        save_bundle(state, tmp_path / "bundle")
        loaded = load_bundle(tmp_path / "bundle")
        assert state_checksum(loaded) == state_checksum(state)
        assert loaded.update_interval == state.update_interval
        assert loaded.weights == state.weights

    def test_corrupted_bundle_rejected(self, small_state, tmp_path):
        _, _, state = small_state
        path = save_bundle(state, tmp_path / "bundle")
        thresholds = path / "thresholds.json"
        thresholds.write_text(thresholds.read_text().replace("0.", "0.1", 1))
        with pytest.raises(BundleIntegrityError, match="checksum"):
            load_bundle(path)

    def test_missing_file_rejected(self, small_state, tmp_path):
        _, _, state = small_state
        path = save_bundle(state, tmp_path / "bundle")
        (path / "centroids.bin").unlink()
        with pytest.raises(BundleIntegrityError, match="missing"):
            load_bundle(path)
