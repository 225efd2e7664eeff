import numpy as np
import pytest

from cltta import netcore as nc
from cltta.adapt import AdaptationConfig, Engine, compare_runs, run_scenario
from cltta.bank import ThresholdPolicy
from cltta.scenarios import IDENTITY, Corruption, default_suite, make_stream

SHORT = [Corruption("gauss_noise", 5), Corruption("mean_shift", 3), Corruption("rotation_mix", 5)]


def _states(model):
    return {k: v.copy() for k, v in model.state_arrays().items()}


def _stream(test, n=3, bs=32):
    return make_stream(test, Corruption("gauss_noise", 5), n, bs, 0)


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(loss_kind="MSE"), dict(protocol="sometimes"), dict(batch_size=1),
                                    dict(lr=0.0), dict(param_group="head"), dict(weight_source="oracle")])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            AdaptationConfig(**kw)

    def test_name(self):
        assert AdaptationConfig().name == "ECL-dynamic-OAAT"
        assert AdaptationConfig(config_id="x").name == "x"


class TestEngine:
    def test_source_leaves_state_alone(self, source):
        res, _, test = source
        eng = Engine(AdaptationConfig(loss_kind="SOURCE", batch_size=32), res.model)
        before = _states(eng.model)
        s = _stream(test)
        for b in range(3):
            assert not eng.adapt_batch(s.features[b * 32:(b + 1) * 32], s.labels[b * 32:(b + 1) * 32]).updated
        after = eng.model.state_arrays()
        assert all(np.array_equal(v, after[k]) for k, v in before.items())
        assert len(eng.bank.rows) == 0

    def test_none_moves_only_running_stats(self, source):
        res, _, test = source
        eng = Engine(AdaptationConfig(loss_kind="NONE"), res.model)
        before = {k: v.copy() for k, v in eng.model.params().items()}
        eng.adapt_batch(_stream(test).features[:64])
        assert all(np.array_equal(v, eng.model.params()[k]) for k, v in before.items())
        assert not np.array_equal(eng.model.norms[0].running_mean, res.model.norms[0].running_mean)

    @pytest.mark.parametrize("kind", ["BCL", "ECL", "NPL", "ENTROPY"])
    def test_bn_group_touches_only_bn(self, source, kind):
        res, _, test = source
        eng = Engine(AdaptationConfig(loss_kind=kind), res.model)
        frozen = {k: v.copy() for k, v in eng.model.params().items() if not k.startswith("bn")}
        s = _stream(test, 4, 64)
        for b in range(4):
            eng.adapt_batch(s.features[b * 64:(b + 1) * 64])
        assert all(np.array_equal(v, eng.model.params()[k]) for k, v in frozen.items())
        assert not np.array_equal(eng.model.norms[0].gamma, res.model.norms[0].gamma)

    def test_deterministic(self, source):
        res, _, test = source
        x = _stream(test).features[:64]
        outs = [Engine(AdaptationConfig(), res.model).adapt_batch(x) for _ in range(2)]
        assert np.array_equal(outs[0].predictions, outs[1].predictions)
        assert outs[0].loss == outs[1].loss

    def test_source_model_untouched(self, source):
        res, _, test = source
        before = _states(res.model)
        Engine(AdaptationConfig(), res.model).adapt_batch(_stream(test).features[:64])
        assert all(np.array_equal(v, res.model.state_arrays()[k]) for k, v in before.items())

    def test_ecl_skipped_when_thresholds_saturate(self, source):
        res, _, test = source
        eng = Engine(AdaptationConfig(threshold_policy=ThresholdPolicy.fixed(0.2)), res.model)
        out = eng.adapt_batch(_stream(test).features[:64])
        assert not out.updated and eng.skipped == 1

    def test_frozen_weight_source(self, source):
        res, _, test = source
        out = Engine(AdaptationConfig(weight_source="frozen"), res.model).adapt_batch(_stream(test).features[:64])
        assert out.updated

    def test_rejects_single_sample(self, source):
        res, _, test = source
        with pytest.raises(ValueError):
            Engine(AdaptationConfig(), res.model).adapt_batch(test.features[:1])


class TestRunScenario:
    def test_report_shape(self, source):
        res, _, test = source
        rep = run_scenario(AdaptationConfig(n_batches=5), res.model, SHORT, test)
        assert rep.corruptions == [c.name for c in SHORT]
        assert all(len(t) == 5 for t in rep.batch_accuracy)
        assert all(0 <= a <= 1 for a in rep.accuracy)

    def test_oaat_permutation_invariance(self, source):
        res, _, test = source
        cfg = AdaptationConfig(n_batches=5)
        first = run_scenario(cfg, res.model, SHORT, test)
        base = dict(zip(first.corruptions, first.accuracy))
        for order in ([2, 0, 1], [1, 2, 0]):
            rep = run_scenario(cfg, res.model, [SHORT[i] for i in order], test)
            assert dict(zip(rep.corruptions, rep.accuracy)) == base

    def test_continual_carries_state(self, source):
        res, _, test = source
        oaat = run_scenario(AdaptationConfig(n_batches=5), res.model, SHORT, test)
        cont = run_scenario(AdaptationConfig(n_batches=5, protocol="continual"), res.model, SHORT, test)
        assert oaat.accuracy[0] == cont.accuracy[0]
        assert oaat.accuracy[1:] != cont.accuracy[1:]

    def test_identity_source_matches_test_accuracy(self, source):
        res, _, test = source
        rep = run_scenario(AdaptationConfig(loss_kind="SOURCE", n_batches=10), res.model, [IDENTITY], test)
        assert abs(rep.accuracy[0] - res.test_accuracy) < 0.05

    def test_empty_scenario(self, source):
        with pytest.raises(ValueError):
            run_scenario(AdaptationConfig(), source[0].model, [], source[2])

    def test_dimension_mismatch(self, source):
        with pytest.raises(ValueError):
            run_scenario(AdaptationConfig(), nc.mlp_new([5, 8, 10], 0), SHORT, source[2])


class TestCompareRuns:
    def test_single_row_matches_run(self, source):
        res, _, test = source
        cfg = AdaptationConfig(n_batches=4, seed=3)
        row, = compare_runs([cfg], res.model, SHORT, test, [3])
        assert row.mean == run_scenario(cfg, res.model, SHORT, test).mean_accuracy
        assert row.sd == 0.0

    def test_callable_scenario(self, source):
        res, _, test = source
        rows = compare_runs([AdaptationConfig(n_batches=2)], res.model, lambda s: default_suite()[s:s + 2], test, [0, 1])
        assert [r.corruptions for r in rows[0].reports] == [[c.name for c in default_suite()[s:s + 2]] for s in (0, 1)]

    def test_empty(self, source):
        with pytest.raises(ValueError):
            compare_runs([], source[0].model, SHORT, source[2], [0])
