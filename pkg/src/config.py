import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field


class Settings(BaseModel):
    """Process-level defaults taken from the environment"""
    output_dir: Path = Path("outputs")
    workers: int = Field(default=1, ge=1)
    log_level: str = "INFO"
    mnist_dir: Optional[Path] = None


def load_settings() -> Settings:
    """Read settings from the environment (and a local .env file if present)"""
    load_dotenv()

    mnist_dir = os.getenv("LATENT_GEODESICS_MNIST_DIR")
    return Settings(
        output_dir=Path(os.getenv("LATENT_GEODESICS_OUTPUT_DIR", "outputs")),
        workers=int(os.getenv("LATENT_GEODESICS_WORKERS", "1")),
        log_level=os.getenv("LATENT_GEODESICS_LOG_LEVEL", "INFO").upper(),
        mnist_dir=Path(mnist_dir) if mnist_dir else None,
    )


def mnist_paths(mnist_dir: Path, split: str) -> tuple[Path, Path]:
    """Standard MNIST file names for 'train' or 't10k', gzipped or not"""
    images = mnist_dir / f"{split}-images-idx3-ubyte"
    labels = mnist_dir / f"{split}-labels-idx1-ubyte"
    if not images.exists() and images.with_suffix(".gz").exists():
        images = Path(str(images) + ".gz")
        labels = Path(str(labels) + ".gz")
    return images, labels
