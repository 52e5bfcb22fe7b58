import numpy as np
import pytest

from nfnoma.harness import ExperimentConfig, draw_random_instance
from nfnoma.sca import StackedGains


def random_instance(seed, k=1, dx=1, n=64, m=36, p_dbm=30.0, rho=1.0):
    """One accepted random drop, deterministic in the seed."""
    cfg = ExperimentConfig(scenario="random-drop", n=n, m=m, k=k, dx=dx,
                           trials=1, seed=seed, p_dbm=(p_dbm,), rho=rho)
    inst, _, _ = draw_random_instance(cfg, 0, p_dbm, rho=rho)
    return inst


def single_beam_gains(gt=1.0 + 0j, eta=1.0, mu=1.0, bud=1.0, nf_power=0.0):
    """Synthetic one-user one-beam StackedGains for solver unit tests."""
    gh = np.array([[np.real(gt), np.imag(gt)]])
    gc = np.array([[-np.imag(gt), np.real(gt)]])
    quad = (gh[0, :, None] * gh[0, None, :] + gc[0, :, None] * gc[0, None, :])[None, None]
    return StackedGains(beams=np.array([[0]]), nf_power=np.array([nf_power]),
                        eta=np.array([float(eta)]), mu=np.array([[float(mu)]]),
                        bud=np.array([[float(bud)]]), ghat=gh, gcheck=gc,
                        quad=quad, n_beams=1)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
