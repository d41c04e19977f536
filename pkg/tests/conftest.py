import time

import numpy as np
import pytest

from specbounds import invariants as I
from specbounds import laplace as L
from specbounds import mesh as Mh

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE = {}
# (stage, mesh name) -> seconds spent building shared fixtures
TIMINGS = {}


def build_corpus():
    meshes = {
        "sphere": Mh.gen_icosphere(5),
        "ellipsoid": Mh.gen_ellipsoid((2.0, 1.0, 1.0), 5),
        "torus": Mh.gen_torus(2.0, 1.0, 128, 64),
        "implicit_torus": Mh.gen_implicit(Mh.implicit_torus_poly(2.0, 1.0),
                                          ((-3.5, -3.5, -1.5), (3.5, 3.5, 1.5)), 96),
        "genus2": Mh.gen_genus2(150, seed=7),
    }
    return {k: Mh.recenter(v) for k, v in meshes.items()}


@pytest.fixture(scope="session")
def corpus():
    return build_corpus()


@pytest.fixture(scope="session")
def sphere5(corpus):
    return corpus["sphere"]


@pytest.fixture(scope="session")
def corpus_spectra(corpus):
    out = {}
    for name, m in corpus.items():
        t0 = time.perf_counter()
        pair = L.assemble(m)
        out[name] = (pair, L.eigs(pair, 50))
        TIMINGS["spectra", name] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def corpus_invariants(corpus):
    out = {}
    for name, m in corpus.items():
        t0 = time.perf_counter()
        out[name] = I.estimate_invariants(m, 10_000, 256, 24, seed=0)
        TIMINGS["invariants", name] = time.perf_counter() - t0
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
