import numpy as np
import pytest
import torch

from structstyle import loss_network, synthetic
from structstyle.transformer import Manifest, init_transformer, save_checkpoint, load_checkpoint

SMALL_MANIFEST = Manifest(widths=(8, 16, 32), residual_blocks=2)


@pytest.fixture(scope="session")
def vgg_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("vgg") / "vgg19_surrogate.bin"
    loss_network.write_surrogate(path, seed=0)
    return path


@pytest.fixture(scope="session")
def net(vgg_path):
    return loss_network.load_weights(vgg_path)


@pytest.fixture(scope="session")
def net64(net):
    return net.to(torch.float64)


@pytest.fixture(scope="session")
def small_ckpt_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "small.ckpt"
    save_checkpoint(path, init_transformer(SMALL_MANIFEST, seed=3), style_id="test-style")
    return path


@pytest.fixture(scope="session")
def small_ckpt(small_ckpt_path):
    return load_checkpoint(small_ckpt_path)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def style_img():
    return synthetic.style_image(seed=0, size=32)


# Acceptance criteria report: test_acceptance records one line per criterion here and the
# terminal summary prints them, so the pass/fail table shows up without ``-s``.
ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion(request):
    def record(number: int, title: str, passed: bool, detail: str):
        ACCEPTANCE[number] = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
