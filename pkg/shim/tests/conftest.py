import pytest

from lm_shim import ShimConfig, ShimServer, ensure_checkpoint


@pytest.fixture(scope="session")
def checkpoint_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "tiny"
    ensure_checkpoint(path)
    return path


@pytest.fixture(scope="session")
def shim(checkpoint_dir):
    config = ShimConfig(model_dir=str(checkpoint_dir), port=0)
    with ShimServer(config) as server:
        host, port = server.address
        yield server, f"{host}:{port}"
