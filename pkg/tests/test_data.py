import numpy as np
import pytest

from ppta.data import (
    ConfigError,
    DataError,
    Dataset,
    McmcConfig,
    PriorConfig,
    load_dataset,
    validate_config,
    write_dataset,
)


def _write(path, rows, header="a,y,x1"):
    path.write_text(header + "\n" + "\n".join(rows) + "\n")
    return path


def test_load_minimal(tmp_path):
    f = _write(tmp_path / "d.csv", [f"{a},{i}.5,{i * 2}" for i, a in enumerate([1, 1, 1, 0, 0, 0])])
    d = load_dataset(f, "a", "y", ["x1"])
    assert d.n == 6 and d.p == 1
    np.testing.assert_array_equal(d.treatment, [1, 1, 1, 0, 0, 0])
    np.testing.assert_array_equal(d.outcome, [0.5, 1.5, 2.5, 3.5, 4.5, 5.5])


def test_non_binary_treatment_names_row(tmp_path):
    f = _write(tmp_path / "d.csv", ["1,0,0", "1,0,0", "0,0,0", "2,0,0", "0,0,0"])
    with pytest.raises(DataError, match="row 3"):
        load_dataset(f, "a", "y", ["x1"])


def test_too_few_treated(tmp_path):
    f = _write(tmp_path / "d.csv", [f"{a},1,1" for a in (1, 0, 0, 0, 0, 0)])
    with pytest.raises(DataError, match="too few units per group"):
        load_dataset(f, "a", "y", ["x1"])


def test_missing_column(tmp_path):
    f = _write(tmp_path / "d.csv", ["1,0,0"] * 4)
    with pytest.raises(DataError, match="'x9'"):
        load_dataset(f, "a", "y", ["x9"])


def test_non_finite_reports_row_and_column(tmp_path):
    f = _write(tmp_path / "d.csv", ["1,0,0", "1,0,nan", "0,0,0", "0,0,0"])
    with pytest.raises(DataError, match=r"row 1, column 'x1'"):
        load_dataset(f, "a", "y", ["x1"])


def test_column_selection_and_order(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("z,y,a,w\n1,10,1,5\n2,20,1,6\n3,30,0,7\n4,40,0,8\n")
    d = load_dataset(f, "a", "y", ["w", "z"])
    np.testing.assert_array_equal(d.covariates, [[5, 1], [6, 2], [7, 3], [8, 4]])
    assert d.covariate_names == ("w", "z")


def test_round_trip_is_exact(tmp_path):
    gen = np.random.default_rng(3)
    x = gen.normal(size=(50, 3)) * 10.0 ** gen.integers(-5, 5, size=(50, 3))
    a = np.r_[np.ones(25), np.zeros(25)].astype(int)
    d = Dataset(x, a, gen.normal(size=50), ("u", "v", "w"))
    write_dataset(d, tmp_path / "rt.csv")
    back = load_dataset(tmp_path / "rt.csv", "a", "y", ["u", "v", "w"])
    np.testing.assert_array_equal(back.treatment, d.treatment)
    np.testing.assert_array_equal(back.outcome, d.outcome)
    np.testing.assert_allclose(back.covariates, d.covariates, rtol=1e-15, atol=0)


def test_dataset_is_immutable():
    d = Dataset(np.zeros((4, 1)), [1, 1, 0, 0], [1, 2, 3, 4])
    with pytest.raises(ValueError):
        d.outcome[0] = 5.0


def test_dataset_requires_four_units():
    with pytest.raises(DataError):
        Dataset(np.zeros((3, 1)), [1, 1, 0], [1, 2, 3])


def test_default_config_accepted():
    mcmc, prior = validate_config(McmcConfig(), PriorConfig())
    assert (mcmc.m1, mcmc.burn1, mcmc.m2, mcmc.burn2) == (1500, 1000, 1500, 1000)
    assert prior.gamma_prior_sd == 10 and prior.beta_prior_sd == 100


def test_burn_in_consuming_chain_rejected():
    with pytest.raises(ConfigError, match="burn-in consumes entire chain"):
        validate_config(McmcConfig(m1=1500, burn1=1500), PriorConfig())


def test_violations_are_aggregated():
    with pytest.raises(ConfigError) as info:
        validate_config(McmcConfig(m2=0), PriorConfig(gamma_prior_sd=0))
    assert len(info.value.violations) == 2
    assert any("gamma_prior_sd" in v for v in info.value.violations)
