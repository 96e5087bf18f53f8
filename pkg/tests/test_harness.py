import math

import numpy as np
import pytest

from expbench.harness import (
    CSV_HEADER,
    ExperimentSpec,
    WorkPrecisionRecord,
    build_problem,
    compute_reference,
    dump_fields,
    error_norm,
    preset,
    read_csv,
    run_experiment,
    write_csv,
)
from expbench.linalg import dense_expm
from expbench.problems import AdvDiffProblem, NavierStokesProblem


def small_spec(**overrides):
    base = dict(
        problem="advdiff",
        n=16,
        kappa=("const", 1.0 / 80.0),
        methods=("rk4", "exprb-euler-krylov"),
        taus=(0.25, 0.125),
        tols=(1e-4, 1e-7),
        zetas=(1.0, 10.0),
        t_end=0.5,
    )
    base.update(overrides)
    return ExperimentSpec(**base)


class TestExperimentSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            small_spec(problem="heat")
        with pytest.raises(ValueError):
            small_spec(methods=())
        with pytest.raises(ValueError):
            small_spec(methods=("euler",))
        with pytest.raises(ValueError):
            small_spec(taus=(0.0,))
        with pytest.raises(ValueError):
            small_spec(t_end=0.0)

    def test_build_problem(self):
        assert isinstance(build_problem(small_spec()), AdvDiffProblem)
        assert isinstance(
            build_problem(small_spec(problem="ns", n=8)), NavierStokesProblem
        )


class TestErrorNorm:
    def test_exact_match(self):
        r = np.array([1.0, 2.0])
        assert error_norm(r, r) == 0.0

    def test_double_reference(self):
        r = np.array([1.0, 2.0])
        assert error_norm(2.0 * r, r) == pytest.approx(1.0)

    def test_single_component_perturbation(self):
        r = np.array([3.0, 4.0])
        eps = 1e-3
        u = r.copy()
        u[0] += eps
        assert error_norm(u, r) == pytest.approx(eps / 5.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            error_norm(np.ones(2), np.zeros(2))
        with pytest.raises(ValueError):
            error_norm(np.ones(2), np.ones(3))


class TestComputeReference:
    def test_zero_horizon_returns_initial_state(self):
        pb = build_problem(small_spec())
        assert np.array_equal(compute_reference(pb, 0.0), pb.initial_state())

    def test_linear_problem_uses_exact_propagator(self):
        pb = build_problem(small_spec())
        ref = compute_reference(pb, 0.5)
        exact = dense_expm(0.5 * pb.operator.to_dense()) @ pb.initial_state()
        assert np.allclose(ref, exact, atol=1e-14)

    def test_nonlinear_reference_self_consistent(self):
        pb = NavierStokesProblem(8, 1e-4)
        ref = compute_reference(pb, 0.25, tau_hint=0.25)
        finer = compute_reference(pb, 0.25, tau_hint=0.125)
        assert error_norm(ref, finer) < 1e-9


class TestRunExperiment:
    def test_record_grid_shape(self):
        spec = small_spec()
        records = run_experiment(spec)
        assert len(records) == 2 * 2 * 2 * 2
        # grid iteration order: method, tau, tol, zeta
        assert [r.method for r in records[:8]] == ["rk4"] * 8
        assert records[0].zeta == 1.0 and records[1].zeta == 10.0

    def test_zeta_only_reweights_dots(self):
        records = run_experiment(small_spec())
        for a, b in zip(records[::2], records[1::2]):
            assert a.counts == b.counts
            assert b.total_cost - a.total_cost == pytest.approx(
                9.0 * a.counts["dot"] * 2 * 16
            )

    def test_unstable_cells_flagged_with_inf(self):
        spec = small_spec(
            n=159,
            methods=("rk2", "exprb-euler-krylov"),
            taus=(0.25,),
            tols=(1e-7,),
            zetas=(1.0,),
            t_end=1.0,
        )
        records = run_experiment(spec)
        by_method = {r.method: r for r in records}
        assert not by_method["rk2"].converged
        assert math.isinf(by_method["rk2"].error)
        assert by_method["exprb-euler-krylov"].converged
        assert by_method["exprb-euler-krylov"].error < 1e-5

    def test_tightening_tolerance_is_monotone(self):
        spec = small_spec(
            n=63,
            methods=("exprb-euler-leja", "exprb-euler-krylov"),
            taus=(0.25,),
            tols=(1e-4, 1e-7),
            zetas=(1.0,),
            t_end=1.0,
        )
        records = run_experiment(spec)
        for method in spec.methods:
            loose, tight = [r for r in records if r.method == method]
            assert (loose.tol, tight.tol) == (1e-4, 1e-7)
            assert tight.error <= loose.error
            assert tight.total_cost >= loose.total_cost


class TestCsv:
    def test_header_only_for_empty_records(self, tmp_path):
        path = tmp_path / "empty.csv"
        write_csv([], path)
        assert path.read_text() == CSV_HEADER + "\n"

    def test_roundtrip(self, tmp_path):
        records = run_experiment(small_spec(taus=(0.25,), tols=(1e-4,), zetas=(1.0,)))
        path = tmp_path / "out.csv"
        write_csv(records, path)
        back = read_csv(path)
        assert len(back) == len(records)
        for a, b in zip(records, back):
            assert a.method == b.method
            assert a.tau == b.tau
            assert a.error == b.error
            assert a.total_cost == b.total_cost
            assert a.counts == b.counts
            assert a.converged == b.converged

    def test_inf_sentinel_serialized(self, tmp_path):
        rec = WorkPrecisionRecord(
            method="rk2", tau=0.25, tol=1e-4, zeta=1.0, error=math.inf,
            total_cost=10.0, steps=2, counts={}, converged=False,
        )
        path = tmp_path / "inf.csv"
        write_csv([rec], path)
        text = path.read_text().splitlines()[1]
        assert ",inf," in text
        assert text.endswith("false")
        assert math.isinf(read_csv(path)[0].error)

    def test_determinism(self, tmp_path):
        spec = small_spec(taus=(0.25,))
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_csv(run_experiment(spec), p1)
        write_csv(run_experiment(spec), p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestDumpFields:
    def test_writes_four_grids(self, tmp_path):
        pb = NavierStokesProblem(8, 1e-6)
        out = tmp_path / "fields"
        dump_fields(pb, pb.initial_state(), out)
        for name in ("rho", "u", "v", "omega"):
            lines = (out / f"{name}.csv").read_text().splitlines()
            assert len(lines) == 8
            assert all(len(line.split(",")) == 8 for line in lines)


class TestPresets:
    def test_known_presets_are_valid(self):
        for name in ("diffusion", "advection", "mixed", "shearflow"):
            spec = preset(name)
            assert spec.taus and spec.methods

    def test_diffusion_parameters(self):
        spec = preset("diffusion")
        assert spec.problem == "advdiff"
        assert spec.n == 159
        assert spec.kappa == ("const", 1.0 / 80.0)
        assert max(spec.taus) == 0.25
        assert spec.tols == (1e-4, 1e-7)
        assert spec.zetas == (1.0, 10.0)

    def test_shearflow_full_scale(self):
        desk = preset("shearflow")
        full = preset("shearflow", full=True)
        assert desk.n == 40 and desk.t_end == 1.0
        assert full.n == 160 and full.t_end == 12.0
        assert max(full.taus) == 1.0

    def test_unknown_preset(self):
        with pytest.raises(ValueError):
            preset("turbulence")
