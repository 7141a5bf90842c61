import numpy as np
import pytest

from foilforge import dataset as dsm
from foilforge import geometry, naca


@pytest.fixture(scope="session")
def naca0012():
    return geometry.repanel(geometry.normalize(naca.naca4("0012", 160)))


@pytest.fixture(scope="session")
def naca2412():
    return geometry.repanel(geometry.normalize(naca.naca4("2412", 160)))


@pytest.fixture(scope="session")
def mini_corpus():
    """Six sections spanning camber and thickness, as raw contours."""
    return [naca.naca4(c, 120) for c in ("0012", "0015", "2412", "2512", "4415", "4412")]


@pytest.fixture(scope="session")
def mini_c2a(mini_corpus):
    """Tiny split C2A dataset: 6 airfoils x 3 angles at the default Mach."""
    ds = dsm.sweep_generate(mini_corpus, dsm.CaseSpec("c2a"), aoa_grid=[0, 3, 6],
                            re_grid=[2e6])
    return dsm.split(ds, 0.8, seed=11)


def retag(ds: dsm.Dataset, case_id: str) -> dsm.Dataset:
    """Same samples and split under a different case wiring (valid when
    neither case uses the rotation protocol)."""
    return dsm.Dataset(samples=ds.samples, split=ds.split, seed=ds.seed,
                       case=dsm.CaseSpec(case_id))


@pytest.fixture(scope="session")
def mini_c4a(mini_c2a):
    return retag(mini_c2a, "c4a")


def dat_text(name: str, points: np.ndarray) -> str:
    return geometry.write_dat(name, points)
