import numpy as np
import pytest

Image = pytest.importorskip("PIL.Image", reason="exporter not installed")


@pytest.fixture(scope="session")
def image_dir(tmp_path_factory):
    """Three decodable fixture images plus one corrupt file."""
    folder = tmp_path_factory.mktemp("images")
    rng = np.random.default_rng(5)
    for i in range(3):
        arr = (rng.random((48, 64, 3)) * 255).astype(np.uint8)
        Image.fromarray(arr).save(folder / f"scene{i}.png")
    (folder / "broken.jpg").write_bytes(b"not an image at all")
    return folder


@pytest.fixture(scope="session")
def captions_csv(tmp_path_factory):
    folder = tmp_path_factory.mktemp("captions")
    path = folder / "caps.csv"
    path.write_text(
        "image,caption\n"
        "scene0.png,a flooded road near damaged houses\n"
        "scene1.png,collapsed building with debris\n"
        "scene2.png,\n",  # empty caption: skipped with a log line
        encoding="utf-8",
    )
    return path
