import pytest

from ffp_lab.coupling import (CoupledExperiment, CoupleParams,
                              lemma1_experiment, lemma1_report)
from ffp_lab.errors import InvalidParameterError
from ffp_lab.measure import CylinderEvent


def params(**kw):
    base = dict(d=2, lam=1.0, K=6, k=3, r_I=0, L=1, t=0.05, seed=0,
                bank_snapshots=120, bank_spacing=1.0, bank_burn_in=20.0)
    base.update(kw)
    return CoupleParams(**base)


class TestValidation:
    def test_geometry_errors_listed(self):
        bad = params(k=1, L=2, K=0, lam=-1.0)
        msgs = bad.validate()
        assert any("lambda" in m for m in msgs)
        assert any("k > r_I + L" in m for m in msgs)
        assert any("k <= K" in m for m in msgs)

    def test_experiment_rejects_bad_params(self):
        with pytest.raises(InvalidParameterError):
            CoupledExperiment(params(k=1, L=2))

    def test_event_must_fit_probe_box(self):
        with pytest.raises(InvalidParameterError):
            CoupledExperiment(params(), CylinderEvent.site_occupied((3, 3)))


class TestRuns:
    def test_records_shape(self):
        exp = CoupledExperiment(params())
        recs = exp.run_many(30)
        assert len(recs) == 30
        for r in recs:
            assert isinstance(r.agree_on_I, bool)
            assert r.any_I_blurred == bool(r.blurred_I)

    def test_jobs_deterministic(self):
        exp = CoupledExperiment(params())
        assert exp.run_many(16, jobs=1) == exp.run_many(16, jobs=4)

    def test_t_zero_unblurred_coupled_pairs_agree(self):
        exp = CoupledExperiment(params(t=0.0))
        for r in exp.run_many(40):
            if r.initial_J_equal and not r.any_I_blurred:
                assert r.agree_on_I

    def test_domination_at_positive_time(self):
        exp = CoupledExperiment(params(t=0.02))
        violations = [r for r in exp.run_many(120)
                      if r.initial_J_equal and not r.any_I_blurred
                      and not r.agree_on_I]
        assert violations == []


class TestReport:
    def test_report_fields(self):
        exp = CoupledExperiment(params())
        rep = lemma1_report(exp, exp.run_many(60), n_boot=50)
        assert rep.replicas == 60
        assert 0.0 <= rep.lhs <= 1.0
        assert rep.tv_term == pytest.approx(2.0 * rep.tv)
        assert rep.blur_term >= 0.0
        assert rep.verdict in ("holds", "violated")
        assert 0.0 <= rep.eq_freq <= 1.0

    def test_experiment_needs_replicas(self):
        with pytest.raises(InvalidParameterError):
            lemma1_experiment(params(), None, 0)
