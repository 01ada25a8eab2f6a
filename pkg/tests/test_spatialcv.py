import numpy as np
import pytest
from scipy import special

from evtboost import spatialcv
from evtboost.dataset import GridCell, GridDataset
from evtboost.errors import DataError


def small_grid(nx=4, ny=4, n_months=6, mask_cnt=None, mask_ba=None, seed=0):
    cells = []
    coords = sorted(((-100.0 + i * 0.5, 40.0 + j * 0.5) for j in range(ny)
                     for i in range(nx)))
    cells = [GridCell(k, lo, la) for k, (lo, la) in enumerate(coords)]
    n_cells = len(cells)
    rows = n_cells * n_months
    rng = np.random.default_rng(seed)
    cnt = rng.integers(0, 4, size=rows).astype(float)
    ba = np.where(cnt == 0, 0.0, rng.uniform(0, 400, size=rows))
    if mask_cnt is not None:
        cnt[rng.uniform(size=rows) < mask_cnt] = np.nan
    if mask_ba is not None:
        ba[rng.uniform(size=rows) < mask_ba] = np.nan
    return GridDataset(
        cells=cells,
        cell_index=np.tile(np.arange(n_cells), n_months),
        year=np.repeat(2001, rows),
        month=np.repeat(np.arange(3, 3 + n_months), n_cells),
        cnt=cnt,
        ba=ba,
        covariates=np.empty((rows, 0)),
        covariate_names=[],
    )


class TestMaternCov:
    def test_variance_at_zero_lag(self):
        assert spatialcv.matern_cov(0.0, r=2.0, sigma_gp=1.7) == pytest.approx(1.7 ** 2)

    def test_correlation_near_tenth_at_range(self):
        # nu = 1: correlation at d = r is sqrt(8) K_1(sqrt(8)) ~ 0.14
        corr = spatialcv.matern_cov(2.0, r=2.0, sigma_gp=1.0, nu=1.0)
        assert 0.05 < corr < 0.2
        direct = np.sqrt(8.0) * special.kv(1, np.sqrt(8.0))
        assert corr == pytest.approx(float(direct), rel=1e-12)

    def test_monotone_decreasing(self):
        d = np.linspace(0.0, 6.0, 80)
        vals = spatialcv.matern_cov(d, r=2.0, sigma_gp=1.0)
        assert np.all(np.diff(vals) < 0)

    def test_vanishes_far_away(self):
        assert spatialcv.matern_cov(1e6, r=2.0, sigma_gp=1.0) == pytest.approx(0.0)

    def test_negative_distance_rejected(self):
        with pytest.raises(DataError):
            spatialcv.matern_cov(-1.0, r=2.0, sigma_gp=1.0)


class TestSimulateField:
    def test_zero_sigma_gives_zero_field(self):
        ds = small_grid()
        params = spatialcv.MaskModelParams(sigma_gp=0.0)
        field = spatialcv.simulate_field(ds.cells, params, seed=1)
        np.testing.assert_array_equal(field, 0.0)

    def test_seed_determinism(self):
        ds = small_grid()
        params = spatialcv.MaskModelParams(sigma_gp=1.3, r=1.5)
        f1 = spatialcv.simulate_field(ds.cells, params, seed=9, n_draws=3)
        f2 = spatialcv.simulate_field(ds.cells, params, seed=9, n_draws=3)
        np.testing.assert_array_equal(f1, f2)

    def test_sample_covariance_matches_matern(self):
        ds = small_grid()
        params = spatialcv.MaskModelParams(sigma_gp=1.2, r=2.0, nu=1.0)
        draws = spatialcv.simulate_field(ds.cells, params, seed=5, n_draws=2000)
        # two cells half a degree apart
        a, b = 0, next(i for i, c in enumerate(ds.cells)
                       if (c.lon, c.lat) == (ds.cells[0].lon, ds.cells[0].lat + 0.5))
        emp = np.cov(draws[:, a], draws[:, b])
        expect = spatialcv.matern_cov(0.5, 2.0, 1.2, 1.0)
        var = params.sigma_gp ** 2
        se = np.sqrt((var * var + expect ** 2) / (draws.shape[0] - 1))
        assert abs(emp[0, 1] - expect) < 3 * se


class TestGenerateFolds:
    def test_default_shape_and_keys(self):
        ds = small_grid()
        folds = spatialcv.generate_folds(ds, spatialcv.MaskModelParams(), n_folds=5,
                                         seed=2)
        assert folds.n_folds == 5
        all_keys = set(ds.keys())
        for f in range(5):
            for resp in spatialcv.RESPONSES:
                assert folds.masks[f][resp] <= all_keys

    def test_half_rate_at_zero_parameters(self):
        ds = small_grid(nx=6, ny=6, n_months=8)
        params = spatialcv.MaskModelParams(beta0_cnt=0.0, beta0_ba=0.0, beta=0.0,
                                           sigma_gp=0.0, phi=0.0)
        folds = spatialcv.generate_folds(ds, params, n_folds=20, seed=3)
        total = sum(len(folds.masks[f]["cnt"]) for f in range(20))
        n_keys = ds.n_rows * 20
        rate = total / n_keys
        se = np.sqrt(0.25 / n_keys)
        assert abs(rate - 0.5) < 4 * se

    def test_premasked_keys_never_selected(self):
        ds = small_grid(mask_cnt=0.3, mask_ba=0.3, seed=4)
        folds = spatialcv.generate_folds(ds, spatialcv.MaskModelParams(), n_folds=5,
                                         seed=5)
        masked_cnt = {k for k, m in zip(ds.keys(), np.isnan(ds.cnt)) if m}
        masked_ba = {k for k, m in zip(ds.keys(), np.isnan(ds.ba)) if m}
        for f in range(5):
            assert not (folds.masks[f]["cnt"] & masked_cnt)
            assert not (folds.masks[f]["ba"] & masked_ba)

    def _mask_correlation(self, beta, seed=6):
        ds = small_grid(nx=5, ny=5, n_months=6)
        params = spatialcv.MaskModelParams(beta=beta, sigma_gp=1.5, phi=0.0, r=2.0)
        folds = spatialcv.generate_folds(ds, params, n_folds=40, seed=seed)
        keys = ds.keys()
        xs, ys = [], []
        for f in range(folds.n_folds):
            cnt_mask = folds.masks[f]["cnt"]
            ba_mask = folds.masks[f]["ba"]
            xs.extend(1.0 if k in cnt_mask else 0.0 for k in keys)
            ys.extend(1.0 if k in ba_mask else 0.0 for k in keys)
        return float(np.corrcoef(xs, ys)[0, 1])

    def test_correlation_increases_with_beta(self):
        corrs = [self._mask_correlation(b) for b in (0.0, 0.42, 1.0)]
        assert abs(corrs[0]) < 0.05
        assert corrs[0] < corrs[1] < corrs[2]

    def test_rate_matches_monte_carlo_oracle(self):
        ds = small_grid(nx=6, ny=6, n_months=8)
        params = spatialcv.MaskModelParams(beta0_cnt=-0.8, sigma_gp=1.1, phi=0.3)
        folds = spatialcv.generate_folds(ds, params, n_folds=25, seed=7)
        total = sum(len(folds.masks[f]["cnt"]) for f in range(25))
        n_keys = ds.n_rows * 25
        rate = total / n_keys
        rng = np.random.default_rng(123)
        mu = params.beta0_cnt + rng.normal(
            scale=np.sqrt(params.sigma_gp ** 2 + params.phi), size=100_000)
        expect = float(special.expit(mu).mean())
        se = np.sqrt(expect * (1 - expect) / n_keys)
        assert abs(rate - expect) < 3 * se + 0.01  # small allowance for key dependence


class TestCalibration:
    def test_mean_expit_against_monte_carlo(self, rng):
        got = spatialcv.mean_expit_gaussian(-0.7, 1.9)
        mc = special.expit(-0.7 + rng.normal(scale=np.sqrt(1.9), size=400_000)).mean()
        assert got == pytest.approx(float(mc), abs=0.005)

    def test_intercepts_match_observed_rate(self):
        ds = small_grid(mask_cnt=0.25, mask_ba=0.4, seed=8)
        params = spatialcv.calibrate_intercepts(ds, spatialcv.MaskModelParams())
        var_cnt = params.sigma_gp ** 2 + params.phi
        var_ba = params.beta ** 2 * params.sigma_gp ** 2 + params.phi
        rate_cnt = float(np.isnan(ds.cnt).mean())
        rate_ba = float(np.isnan(ds.ba).mean())
        assert spatialcv.mean_expit_gaussian(params.beta0_cnt, var_cnt) == \
            pytest.approx(rate_cnt, abs=1e-6)
        assert spatialcv.mean_expit_gaussian(params.beta0_ba, var_ba) == \
            pytest.approx(rate_ba, abs=1e-6)


class TestFoldIo:
    def test_round_trip(self, tmp_path):
        ds = small_grid(mask_cnt=0.2, seed=9)
        folds = spatialcv.generate_folds(ds, spatialcv.MaskModelParams(), n_folds=3,
                                         seed=10)
        path = tmp_path / "folds.csv"
        spatialcv.save_folds(folds, ds, path)
        folds2 = spatialcv.load_folds(path, ds)
        assert folds2.n_folds == folds.n_folds
        for f in range(3):
            for resp in spatialcv.RESPONSES:
                assert folds2.masks[f][resp] == folds.masks[f][resp]

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n", encoding="utf-8")
        with pytest.raises(DataError, match="not a fold export"):
            spatialcv.load_folds(path, small_grid())
