import numpy as np
import numpy.testing as npt
import pytest

from topowalk import protocols as pr
from topowalk import topology as tp
from topowalk.errors import BoundaryStateError, InvalidInputError

PI = np.pi


class TestGapClosings:
    def test_1d_chs_zero_angles_closes_at_zero_and_pi(self):
        pts = tp.find_gap_closings("1d-chs", angles={"alpha": 0.0, "beta": 0.0}, T=1)
        ks = sorted(round(p.k[0], 9) for p in pts)
        assert len(pts) == 2
        npt.assert_allclose(ks, [-PI, 0.0], atol=1e-9)
        energies = sorted(p.quasi_energy for p in pts)
        npt.assert_allclose(energies, [0.0, PI])
        assert max(p.residual for p in pts) <= 1e-9

    def test_1d_phs_type_one_configuration(self):
        # T=3, beta=pi/3 (odd half-angle), alpha=pi/3: closings at 0, +-pi
        pts = tp.find_gap_closings("1d-phs", angles={"alpha": PI / 3, "beta": PI / 3}, T=3)
        ks = sorted(round(p.k[0], 9) for p in pts)
        npt.assert_allclose(ks, [-PI, 0.0], atol=1e-9)

    def test_gapped_configuration_yields_empty_list(self):
        pts = tp.find_gap_closings("2d-phs", angles={"alpha": PI / 3, "beta": PI / 12},
                                   T=2, grid_n=48)
        assert pts == []

    def test_rejects_tiny_grid(self):
        with pytest.raises(InvalidInputError):
            tp.find_gap_closings("1d-chs", angles={"alpha": 0.0, "beta": 0.0}, T=1,
                                 grid_n=16)

    def test_interior_closing_is_refined_to_machine_gap(self):
        # generic arc-type touch away from high-symmetry momenta
        alpha = PI / 4
        beta = (alpha + PI) / 3
        pts = tp.find_gap_closings("1d-phs", angles={"alpha": alpha, "beta": beta}, T=6)
        assert pts and max(p.residual for p in pts) <= 1e-9


class TestBoundaryTaxonomy:
    def test_flat_band_detected(self):
        cls = tp.classify_boundary("3d-simple", angles={"beta": PI / 3}, T=3, grid_n=32)
        assert [c.kind for c in cls] == ["flat_band"]
        npt.assert_allclose(cls[0].evidence["energy"], PI / 2, atol=1e-10)

    def test_flat_band_never_fires_on_dispersive_bands(self):
        cls = tp.classify_boundary("3d-simple", angles={"beta": 0.3}, T=1, grid_n=32)
        assert all(c.kind != "flat_band" for c in cls)

    def test_type_one_dirac(self):
        cls = tp.classify_boundary("1d-phs", angles={"alpha": PI / 2, "beta": PI / 2},
                                   T=6)
        assert {c.kind for c in cls} == {"dirac_type_one"}
        slopes = [s for c in cls for side in c.evidence["slopes"].values() for s in side]
        npt.assert_allclose(slopes, 1.0, atol=1e-6)

    def test_type_two_dirac_includes_half_pi_momenta(self):
        cls = tp.classify_boundary("1d-phs", angles={"alpha": 0.0, "beta": PI / 3}, T=6)
        assert {c.kind for c in cls} == {"dirac_type_two"}
        ks = sorted(round(c.evidence["k"][0], 6) for c in cls)
        npt.assert_allclose(ks, [-PI, -PI / 2, 0.0, PI / 2], atol=1e-6)
        slopes = [s for c in cls for side in c.evidence["slopes"].values() for s in side]
        npt.assert_allclose(slopes, 2.0, atol=1e-6)

    def test_generic_touch_is_fermi_arc(self):
        alpha = PI / 4
        cls = tp.classify_boundary("1d-phs", angles={"alpha": alpha,
                                                     "beta": (alpha + PI) / 3}, T=6)
        assert {c.kind for c in cls} == {"fermi_arc"}

    def test_gapped_config_returns_nothing(self):
        assert tp.classify_boundary("2d-phs", angles={"alpha": PI / 3, "beta": PI / 12},
                                    T=2, grid_n=48) == []


class TestWinding:
    def test_trivial_and_nontrivial_regions(self):
        t = {"T": 6}
        w0 = tp.winding_number("1d-chs", angles={"alpha": -2.618,
                                                 "beta": (-2.618 + PI) / 3}, **t)
        assert (w0.w, round(w0.raw, 6)) == (0, 0.0)
        wm = tp.winding_number("1d-chs", angles={"alpha": -2.094,
                                                 "beta": (-2.094 + PI) / 3}, **t)
        assert wm.w == -1
        wp = tp.winding_number("1d-chs", angles={"alpha": 2.094,
                                                 "beta": (2.094 + PI) / 3}, **t)
        assert wp.w == 1

    def test_boundary_loop_raises(self):
        with pytest.raises(BoundaryStateError):
            tp.winding_number("1d-chs", angles={"alpha": 0.0, "beta": PI / 3}, T=6)

    def test_grid_doubling_stability(self):
        angles = {"alpha": 2.094, "beta": (2.094 + PI) / 3}
        a = tp.winding_number("1d-chs", angles=angles, T=6, grid_n=128)
        b = tp.winding_number("1d-chs", angles=angles, T=6, grid_n=256)
        assert a.w == b.w
        assert abs(a.raw - b.raw) <= 1e-3

    def test_orientation_reversal_flips_sign(self):
        from topowalk.symmetry import chiral_axis
        spec = pr.registry_lookup("1d-chs", T=6,
                                  angles={"alpha": 2.094, "beta": (2.094 + PI) / 3})
        A = chiral_axis(spec)
        w_fwd = tp.winding_number(spec, axis_vector=A)
        w_rev = tp.winding_number(spec, axis_vector=-A)
        assert w_fwd.w == -w_rev.w != 0

    def test_winding_supported_for_planar_split_walk(self):
        res = tp.winding_number("1d-split", angles={"alpha": 0.3, "beta": 0.9}, T=2)
        assert abs(res.raw - res.w) <= 0.02

    def test_rejects_wrong_dimension(self):
        with pytest.raises(InvalidInputError):
            tp.winding_number("2d-phs", angles={"alpha": 0.1, "beta": 0.2}, T=1)


class TestChern:
    def test_reference_fixture_is_plus_one(self):
        res = tp.chern_number("2d-phs", angles={"alpha": PI / 3, "beta": PI / 4}, T=2)
        assert (res.c, round(res.raw, 9)) == (1, 1.0)

    def test_trivial_phases(self):
        for beta in (PI / 12, PI / 2):
            res = tp.chern_number("2d-phs", angles={"alpha": PI / 3, "beta": beta}, T=2)
            assert res.c == 0 and abs(res.raw) <= 1e-6

    def test_origin_pass_raises(self):
        with pytest.raises(BoundaryStateError):
            tp.chern_number("2d-phs", angles={"alpha": PI / 3, "beta": PI / 6}, T=2)

    def test_band_additivity(self):
        # the two bands carry opposite Chern numbers; the lower band is
        # reached by conjugating the walk (d -> -d leaves gaps in place)
        angles = {"alpha": PI / 3, "beta": PI / 4}
        up = tp.chern_number("2d-phs", angles=angles, T=2)
        spec = pr.registry_lookup("2d-phs", T=2, angles=angles)

        import topowalk.topology as topo
        from topowalk.spectrum import bands_from_unitary
        from topowalk.protocols import build_unitary

        px, py = topo.momentum_period(spec, 0), topo.momentum_period(spec, 1)
        ax = np.linspace(-PI, -PI + px, 64, endpoint=False)
        ay = np.linspace(-PI, -PI + py, 64, endpoint=False)
        KX, KY = np.meshgrid(ax, ay, indexing="ij")
        d = bands_from_unitary(build_unitary(spec, np.stack([KX, KY], -1))).d
        n = -d / np.linalg.norm(d, axis=-1, keepdims=True)  # lower band
        n2 = np.roll(n, -1, axis=0)
        n3 = np.roll(np.roll(n, -1, axis=0), -1, axis=1)
        n4 = np.roll(n, -1, axis=1)
        omega = topo._solid_angle(n, n2, n3) + topo._solid_angle(n, n3, n4)
        down_raw = topo.CHERN_ORIENTATION * omega.sum() / (4 * PI)
        assert abs(up.raw + down_raw) <= 1e-9

    def test_grid_doubling_stability(self):
        angles = {"alpha": PI / 3, "beta": PI / 4}
        a = tp.chern_number("2d-phs", angles=angles, T=2, grid_n=64)
        b = tp.chern_number("2d-phs", angles=angles, T=2, grid_n=128)
        assert a.c == b.c and abs(a.raw - b.raw) <= 1e-3

    def test_rejects_wrong_dimension(self):
        with pytest.raises(InvalidInputError):
            tp.chern_number("1d-chs", angles={"alpha": 0.1, "beta": 0.2}, T=1)


class TestMomentumPeriod:
    def test_full_shift_pairs_give_pi(self):
        spec = pr.registry_lookup("2d-phs")
        assert tp.momentum_period(spec, 0) == PI
        assert tp.momentum_period(spec, 1) == PI

    def test_half_shifts_give_two_pi(self):
        spec = pr.registry_lookup("1d-chs")
        assert tp.momentum_period(spec, 0) == 2 * PI

    def test_single_full_shift_gives_two_pi(self):
        spec = pr.registry_lookup("2d-simple")
        assert tp.momentum_period(spec, 0) == 2 * PI

    @pytest.mark.parametrize("pid", ["2d-phs", "2d-nosym", "3d-phs"])
    def test_claimed_period_holds_numerically(self, pid):
        spec = pr.registry_lookup(pid, T=2)
        spec = spec.with_params(**{s: v for s, v in zip(spec.symbols, (0.7, -0.3, 1.1, 0.4))})
        rng = np.random.default_rng(5)
        k = rng.uniform(-PI, PI, size=(6, spec.dimension))
        for axis in range(spec.dimension):
            p = tp.momentum_period(spec, axis)
            shift = np.zeros(spec.dimension)
            shift[axis] = p
            assert np.abs(pr.build_unitary(spec, k + shift)
                          - pr.build_unitary(spec, k)).max() <= 1e-12


class TestPhaseBoundaryTrace:
    def test_invariance_within_phases_chern_sweep(self):
        samples = tp.phase_boundary_trace(
            "2d-phs", "beta", np.linspace(PI / 12, 2 * PI / 3, 8),
            angles={"alpha": PI / 3}, T=2, grid_n=48)
        pattern = [(s.status, s.invariant) for s in samples]
        assert pattern == [("ok", 0), ("boundary", None), ("ok", 1), ("boundary", None),
                           ("ok", 0), ("ok", 0), ("ok", 0), ("boundary", None)]

    def test_t_equals_one_matches_step_independent_sweep(self):
        vals = np.linspace(-2.0, 2.0, 7)
        a = tp.phase_boundary_trace("1d-chs", "alpha", vals, angles={"beta": 0.9}, T=1,
                                    grid_n=64)
        spec1 = pr.step_independent_reduction(pr.registry_lookup("1d-chs", T=1,
                                                                 angles={"beta": 0.9}))
        b = tp.phase_boundary_trace(spec1, "alpha", vals, grid_n=64)
        assert [(s.status, s.invariant, s.raw) for s in a] == \
               [(s.status, s.invariant, s.raw) for s in b]

    def test_boundary_population_grows_with_step_number(self):
        """Distinct phase transitions along the fixed-angle sweep multiply as
        the walk proceeds.  The growth is a trend, not a per-step law: at
        commensurate steps (here T divisible by 3, where T beta/2 hits a
        multiple of pi/2) many transitions merge, so successive counts can
        dip; endpoints and window averages must still grow."""
        from scipy.optimize import minimize_scalar
        from topowalk.spectrum import rho_closed_form

        k = np.linspace(-PI, PI, 257)[:, None]
        alphas = np.linspace(-PI, PI, 721)

        def boundary_count(T):
            def m(a):
                rho = rho_closed_form("1d-phs", {"alpha": a, "beta": PI / 3}, T, k)
                return (1 - np.abs(rho)).min()

            vals = np.array([m(a) for a in alphas])
            found = []
            for i in range(1, len(alphas) - 1):
                if vals[i] <= vals[i - 1] and vals[i] <= vals[i + 1] and vals[i] < 5e-2:
                    r = minimize_scalar(m, bounds=(alphas[i - 1], alphas[i + 1]),
                                        method="bounded", options={"xatol": 1e-10})
                    if r.fun < 1e-6 and all(abs(r.x - f) > 1e-6 for f in found):
                        found.append(r.x)
            return len(found)

        counts = {T: boundary_count(T) for T in (2, 3, 7, 8)}
        assert counts[7] > counts[2] and counts[8] > counts[3], counts
        assert counts[8] >= 3 * counts[2], counts
