from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    PHYSICALITY_TOL: float = 1e-9
    SYMMETRY_TOL: float = 1e-12
    RANK_RTOL: float = 1e-10
    NULL_OVERLAP_TOL: float = 1e-6
    COMPARE_THRESHOLD_PER_PARAM: float = 9.0
    MC_BLOCK_SIZE: int = 100_000
    MC_WORKERS: int = 1
    THETA_GRID: int = 64
    STATIONARITY_PHI_GRID: int = 721
    SINGULAR_OFFSET: float = 1e-9
    LOG_LEVEL: str = "INFO"
    DATABASE_URL: str = "sqlite:///./sideband_tomo.db"
    SIDEBAND_TOMO_CONFIG: str | None = None

    model_config = {"env_file": ".env", "extra": "ignore"}


settings = Settings()
