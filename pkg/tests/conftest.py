import pytest

from metriq import kernels
from metriq.calibrate import reference_params

ACCEPTANCE_KEY = pytest.StashKey[list]()

BACKENDS = [pytest.param(kernels.NUMPY_KERNELS, id="numpy")]
if kernels.HAVE_NUMBA:
    BACKENDS.append(pytest.param(kernels.NUMBA_KERNELS, id="numba"))


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture(scope="session")
def java_params():
    return reference_params("Java")


@pytest.fixture(scope="session")
def python_params():
    return reference_params("Python")


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


@pytest.fixture
def acceptance(request):
    """Call with (criterion, passed, detail) to get a line in the summary."""
    rows = request.config.stash[ACCEPTANCE_KEY]

    def record(criterion, passed, detail=""):
        rows.append((criterion, bool(passed), detail))

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = config.stash.get(ACCEPTANCE_KEY, [])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(rows, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}")


def _spec_path():
    from importlib import resources

    return str(resources.files("metriq.fixtures").joinpath("synth_java_spec.json"))


@pytest.fixture
def run_pipeline():
    """Run synth -> fit -> train-weights -> score -> evaluate in ``workdir``;
    returns {artifact name: path}."""
    from metriq.cli import main

    def run(workdir, n_repos=200, seed=0):
        w = workdir
        w.mkdir(parents=True, exist_ok=True)
        paths = {
            "corpus": w / "corpus.csv",
            "params": w / "params.json",
            "weights": w / "weights.json",
            "model": w / "model.json",
            "scores": w / "scores.csv",
            "report": w / "eval" / "report.json",
            "hist": w / "eval" / "hist_Java.csv",
        }
        steps = [
            ["synth", "--spec", _spec_path(), "--output", paths["corpus"], "--seed", seed, "--n-repos", n_repos],
            ["fit", "--corpus", paths["corpus"], "--language", "Java", "--output", paths["params"]],
            ["train-weights", "--corpus", paths["corpus"], "--params", paths["params"], "--q", 0.2,
             "--seed", seed, "--output-weights", paths["weights"], "--output-model", paths["model"]],
            ["score", "--corpus", paths["corpus"], "--params", paths["params"], "--weights", paths["weights"],
             "--output", paths["scores"]],
            ["evaluate", "--corpus", paths["corpus"], "--params", paths["params"], "--weights", paths["weights"],
             "--seed", seed, "--outdir", w / "eval", "--bins", 20],
        ]
        for argv in steps:
            code = main([str(a) for a in argv])
            assert code == 0, f"{argv[0]} exited with {code}"
        return paths

    return run
