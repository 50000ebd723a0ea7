import math

import numpy as np
import pytest

from telegraphctl.errors import CapExceededError, GuardViolatedError
from telegraphctl.filtering import FilterConfig, run_filter
from telegraphctl.model import Belief, TransitionRates
from telegraphctl.rategrid import (
    GridAxis,
    GridSpec,
    init_flat,
    marginal_rates,
    marginal_states,
    run_estimation,
    stopping_check,
    update,
)
from telegraphctl.simulate import SimConfig, run_trace

DELTA2 = Belief(0.0, 0.0, 1.0)


def single_cell_spec(rates: TransitionRates) -> GridSpec:
    return GridSpec(
        r21=GridAxis(rates.r21, rates.r21, 1),
        r10=GridAxis(rates.r10, rates.r10, 1),
        r_repump=GridAxis(rates.r_repump, rates.r_repump, 1),
    )


class TestGridSpec:
    def test_axis_validation(self):
        with pytest.raises(ValueError):
            GridAxis(-1.0, 10.0, 5)
        with pytest.raises(ValueError):
            GridAxis(10.0, 5.0, 3)
        with pytest.raises(ValueError):
            GridAxis(10.0, 20.0, 0)
        with pytest.raises(ValueError):
            GridAxis(10.0, 20.0, 1)  # single point needs min == max
        GridAxis(10.0, 10.0, 1)

    def test_default_grid_shape(self):
        spec = GridSpec()
        assert spec.shape == (25, 25, 25)
        assert spec.n_cells == 3 * 25**3

    def test_cap_enforced(self):
        with pytest.raises(CapExceededError):
            GridSpec(max_cells=1000)

    def test_axis_values_linear(self):
        axis = GridAxis(0.0, 150.0, 25)
        values = axis.values()
        assert values[0] == 0.0 and values[-1] == 150.0
        assert np.allclose(np.diff(values), 150.0 / 24)


class TestInitFlat:
    def test_mass_in_initial_state_slab(self):
        grid = init_flat(GridSpec(), DELTA2)
        assert grid.joint[0].sum() == 0.0
        assert grid.joint[1].sum() == 0.0
        assert grid.joint[2].sum() == pytest.approx(1.0, abs=1e-12)
        # uniform across the slab
        assert np.ptp(grid.joint[2]) == 0.0

    def test_fresh_marginal_states_equal_initial(self):
        init = Belief(0.25, 0.25, 0.5)
        grid = init_flat(GridSpec(), init)
        assert marginal_states(grid) == init

    def test_fresh_rate_means_are_midpoints(self):
        spec = GridSpec(
            r21=GridAxis(0.0, 150.0, 25),
            r10=GridAxis(10.0, 50.0, 9),
            r_repump=GridAxis(2.0, 150.0, 25),
        )
        marg = marginal_rates(init_flat(spec, DELTA2))
        assert marg.r21.mean == pytest.approx(75.0, abs=1e-9)
        assert marg.r10.mean == pytest.approx(30.0, abs=1e-9)
        assert marg.r_repump.mean == pytest.approx(76.0, abs=1e-9)


class TestStoppingCheck:
    def test_single_cell_grid_true(self, paper_rates):
        grid = init_flat(single_cell_spec(paper_rates), DELTA2)
        assert stopping_check(grid) is True
        marg = marginal_rates(grid)
        assert marg.r21 .rms == 0.0
        assert marg.r21.mean == paper_rates.r21

    def test_fresh_flat_grid_false(self):
        # discrete uniform over [0, 150] with 25 points:
        # rms/mean = sqrt((n^2-1)/12)*spacing / 75
        spec = GridSpec(
            r21=GridAxis(0.0, 150.0, 25),
            r10=GridAxis(0.0, 150.0, 25),
            r_repump=GridAxis(0.0, 150.0, 25),
        )
        grid = init_flat(spec, DELTA2)
        assert stopping_check(grid) is False
        marg = marginal_rates(grid)
        n, spacing = 25, 150.0 / 24
        expected_rms = math.sqrt((n * n - 1) / 12.0) * spacing
        assert marg.r21.rms == pytest.approx(expected_rms, rel=1e-12)
        # the continuum limit approaches 1/sqrt(3) ~ 0.577
        fine = GridSpec(
            r21=GridAxis(0.0, 150.0, 1000),
            r10=GridAxis(0.0, 150.0, 3),
            r_repump=GridAxis(0.0, 150.0, 3),
            max_cells=10_000_000,
        )
        fine_marg = marginal_rates(init_flat(fine, DELTA2))
        assert fine_marg.r21.rms / fine_marg.r21.mean == pytest.approx(0.577, abs=1e-3)


class TestUpdate:
    def test_zero_dt_keeps_rate_marginals_flat(self, default_model):
        grid = init_flat(GridSpec(), DELTA2)
        out = update(grid, 16, default_model, 0.0)
        marg = marginal_rates(out)
        assert marg.r21.mean == pytest.approx(76.0, abs=1e-9)
        assert np.ptp(out.joint[2]) == pytest.approx(0.0, abs=1e-20)
        # states follow the plain Bayes update of the initial belief
        from telegraphctl.filtering import posterior_update

        expected = posterior_update(DELTA2, 16, default_model)
        states = marginal_states(out)
        for a, b in zip(states.as_tuple(), expected.as_tuple()):
            assert a == pytest.approx(b, abs=1e-12)

    def test_total_mass_one_after_updates(self, default_model, paper_rates):
        sim = SimConfig(paper_rates, default_model, 1e-3, 200, 2, 5)
        records = run_trace(sim)
        grid = init_flat(GridSpec(), DELTA2)
        for rec in records:
            grid = update(grid, rec.photon_count, default_model, 1e-3)
            assert grid.total() == pytest.approx(1.0, abs=1e-10)
            states = marginal_states(grid)
            assert math.fsum(states.as_tuple()) == 1.0
            for post in marginal_rates(grid).as_dict().values():
                assert post.rms >= 0.0
                assert 2.0 <= post.mean <= 150.0

    def test_guard_violated_on_coarse_bins(self, default_model):
        grid = init_flat(GridSpec(), DELTA2)
        with pytest.raises(GuardViolatedError):
            update(grid, 16, default_model, 3e-3)

    def test_exact_mode_matches_linear_at_small_dt(self, default_model):
        spec = GridSpec(
            r21=GridAxis(20.0, 50.0, 3),
            r10=GridAxis(40.0, 60.0, 3),
            r_repump=GridAxis(50.0, 70.0, 3),
        )
        grid = init_flat(spec, DELTA2)
        a = update(grid, 20, default_model, 1e-4, method="linear")
        b = update(grid, 20, default_model, 1e-4, method="exact")
        assert np.abs(a.joint - b.joint).max() < spec.max_guard_load(1e-4) ** 2

    def test_exact_mode_allows_coarse_bins(self, default_model):
        spec = GridSpec(
            r21=GridAxis(20.0, 50.0, 3),
            r10=GridAxis(40.0, 60.0, 3),
            r_repump=GridAxis(50.0, 70.0, 3),
        )
        grid = init_flat(spec, DELTA2)
        coarse_model = default_model.rescaled(10e-3)
        out = update(grid, 280, coarse_model, 10e-3, method="exact")
        assert out.total() == pytest.approx(1.0, abs=1e-10)
        assert np.all(out.joint >= 0.0)


def test_degenerate_grid_reproduces_plain_filter(default_model, paper_rates):
    # a 1x1x1 rate grid at the true rates is exactly the plain filter
    sim = SimConfig(paper_rates, default_model, 1e-3, 10_000, 2, 86420)
    records = run_trace(sim)
    beliefs = run_filter(records, FilterConfig(default_model, paper_rates, 1e-3))
    grid = init_flat(single_cell_spec(paper_rates), DELTA2)
    worst = 0.0
    for rec, belief in zip(records, beliefs):
        grid = update(grid, rec.photon_count, default_model, 1e-3)
        states = marginal_states(grid)
        worst = max(
            worst,
            max(
                abs(a - b)
                for a, b in zip(states.as_tuple(), belief.as_tuple())
            ),
        )
    assert worst < 1e-12


class TestRunEstimation:
    def test_matches_repeated_update(self, default_model, paper_rates):
        sim = SimConfig(paper_rates, default_model, 1e-3, 300, 2, 9)
        records = run_trace(sim)
        spec = GridSpec(
            r21=GridAxis(10.0, 60.0, 5),
            r10=GridAxis(10.0, 80.0, 5),
            r_repump=GridAxis(10.0, 90.0, 5),
        )
        result = run_estimation(
            records, spec, default_model, 1e-3, history_every=0, keep_grid=True
        )
        grid = init_flat(spec, DELTA2)
        for rec in records:
            grid = update(grid, rec.photon_count, default_model, 1e-3)
        assert np.array_equal(result.final_grid.joint, grid.joint)

    def test_single_cell_converges_instantly(self, default_model, paper_rates):
        sim = SimConfig(paper_rates, default_model, 1e-3, 50, 2, 10)
        records = run_trace(sim)
        result = run_estimation(
            records, single_cell_spec(paper_rates), default_model, 1e-3
        )
        assert result.converged and result.stop_bin == 0

    def test_stop_at_trigger_truncates(self, default_model, paper_rates):
        sim = SimConfig(paper_rates, default_model, 1e-3, 50, 2, 11)
        records = run_trace(sim)
        result = run_estimation(
            records,
            single_cell_spec(paper_rates),
            default_model,
            1e-3,
            stop_at_trigger=True,
        )
        assert result.n_bins == 1

    def test_rejects_pulsed_traces(self, default_model, paper_rates):
        from telegraphctl.model import Pulse, TraceRecord

        records = [TraceRecord(0, 30, Pulse.REPUMP)]
        with pytest.raises(ValueError):
            run_estimation(records, GridSpec(), default_model, 1e-3)

    def test_snapshots_exported(self, default_model, paper_rates):
        sim = SimConfig(paper_rates, default_model, 1e-3, 100, 2, 12)
        records = run_trace(sim)
        result = run_estimation(
            records, GridSpec(), default_model, 1e-3, snapshot_every=50
        )
        assert len(result.snapshots) == 2
        bin_index, snap = result.snapshots[0]
        assert bin_index == 49
        values, probs = snap["r21"]
        assert len(values) == 25
        assert probs.sum() == pytest.approx(1.0, abs=1e-9)
