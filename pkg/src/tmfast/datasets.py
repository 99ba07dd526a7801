"""Locating the Iris and MNIST files used by the demos and tests.

Iris ships with the package.  MNIST is fetched once from a PyPI source
distribution that bundles the four original IDX files, then verified by
SHA-256 and cached under ``$TMFAST_DATA_DIR/mnist`` (default
``~/.cache/tmfast/mnist``).
"""

from __future__ import annotations

import hashlib
import io
import logging
import os
import tarfile
import urllib.request
from importlib import resources
from pathlib import Path

log = logging.getLogger(__name__)

MNIST_SDIST_URL = (
    "https://files.pythonhosted.org/packages/be/d1/"
    "6db83a78917574d10bdbfa61c1d563300770d643735f6cf355a6f9adcabe/MNIST_dir-0.2.tar.gz"
)
MNIST_SDIST_SHA256 = "174621ea86e24ebe98d24594d3c26aa206ae51419f0dbf2b750c296603597eee"
MNIST_FILES = {
    "train-images.idx3-ubyte": "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db",
    "train-labels.idx1-ubyte": "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5",
    "t10k-images.idx3-ubyte": "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7",
    "t10k-labels.idx1-ubyte": "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2",
}


def iris_csv() -> Path:
    return Path(str(resources.files("tmfast") / "data" / "iris.csv"))


def data_dir() -> Path:
    root = os.environ.get("TMFAST_DATA_DIR")
    return Path(root) if root else Path.home() / ".cache" / "tmfast"


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _complete(dest: Path) -> bool:
    return all((dest / name).is_file() for name in MNIST_FILES)


def fetch_mnist(dest: Path | None = None, timeout: float = 120.0) -> Path:
    """Return a directory holding the four MNIST IDX files, downloading if needed."""
    dest = Path(dest) if dest else data_dir() / "mnist"
    if _complete(dest):
        return dest
    log.info("downloading MNIST to %s", dest)
    with urllib.request.urlopen(MNIST_SDIST_URL, timeout=timeout) as resp:
        blob = resp.read()
    if _sha256(blob) != MNIST_SDIST_SHA256:
        raise IOError("MNIST archive checksum mismatch")
    dest.mkdir(parents=True, exist_ok=True)
    with tarfile.open(fileobj=io.BytesIO(blob), mode="r:gz") as tar:
        for member in tar.getmembers():
            name = Path(member.name).name
            if name not in MNIST_FILES:
                continue
            payload = tar.extractfile(member).read()
            if _sha256(payload) != MNIST_FILES[name]:
                raise IOError(f"MNIST file {name} checksum mismatch")
            tmp = dest / (name + ".part")
            tmp.write_bytes(payload)
            tmp.replace(dest / name)
    if not _complete(dest):
        raise IOError("MNIST archive did not contain all IDX files")
    return dest


def mnist_paths(split: str = "train", dest: Path | None = None) -> tuple[Path, Path]:
    """``(images, labels)`` paths for ``split`` in {"train", "test"}."""
    root = fetch_mnist(dest)
    prefix = {"train": "train", "test": "t10k"}[split]
    return root / f"{prefix}-images.idx3-ubyte", root / f"{prefix}-labels.idx1-ubyte"
