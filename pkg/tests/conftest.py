import numpy as np
import pytest


@pytest.fixture(params=["numba", "numpy"])
def kernel_impl(request, monkeypatch):
    """Run a test once per kernel backend by swapping the dispatch target."""
    from relevis import backend
    if request.param == "numpy":
        from relevis import _kernels_numpy as impl
    else:
        pytest.importorskip("numba")
        from relevis import _kernels_numba as impl
    monkeypatch.setattr(backend, "_impl", impl)
    return request.param


@pytest.fixture(scope="session")
def pipeline_dirs(tmp_path_factory):
    """One tiny end-to-end CLI run shared by the CLI and service tests.

    16^3 volumes and a 2-epoch fit keep this in the seconds range while
    still producing a real catalog, residual model, and classifier.
    """
    from relevis.cli import main

    root = tmp_path_factory.mktemp("pipeline")
    gen = root / "gen"
    # seed 5 gives the six controls both sexes and both field strengths,
    # which the covariate fit needs to stay full rank
    rc = main(["phantom-gen", "--out", str(gen), "--counts", "6,4,6",
               "--dims", "16,16,16", "--seed", "5"])
    assert rc == 0
    fit = root / "fit"
    rc = main(["fit-residualizer", "--catalog", str(gen / "catalog.json"),
               "--out", str(fit)])
    assert rc == 0
    res = root / "res"
    rc = main(["residualize", "--catalog", str(gen / "catalog.json"),
               "--model", str(fit / "residual_model.bin"), "--out", str(res)])
    assert rc == 0
    train = root / "train"
    rc = main(["train", "--catalog", str(res / "catalog.json"), "--out", str(train),
               "--epochs", "2", "--no-augment", "--holdout-fraction", "0.25",
               "--seed", "0"])
    assert rc == 0
    return {"root": root, "gen": gen, "fit": fit, "res": res, "train": train}


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
