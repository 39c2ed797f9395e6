from pydantic_settings import BaseSettings
from pydantic import Field

VERSION = "1.0.0"


class Settings(BaseSettings):
    THREADS: int = Field(1, ge=1)
    # lattice sites per replicate
    POINT_BUDGET: int = Field(100_000_000, ge=1)
    TAIL_TOL: float = Field(1e-6, gt=0)
    QUAD_TOL: float = Field(1e-10, gt=0)
    # normalized samples kept in memory before histogram mode
    SAMPLE_CAP: int = Field(1_000_000, ge=1)
    HISTOGRAM_BINS: int = Field(4096, ge=16)
    JACKKNIFE_BLOCKS: int = Field(50, ge=2)
    LOG_LEVEL: str = "INFO"

    class Config:
        env_file = ".env"
        env_prefix = "HYPERLATTICE_"


settings = Settings()
