from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # API Configuration
    api_title: str = "WGPR Ensemble API"
    api_version: str = "1.0.0"
    debug: bool = False
    log_level: str = "INFO"

    # Saved ensembles served by the API
    model_dir: str = "models"

    # Numerics
    jitter: float = 1e-6  # relative to sigma_f^2
    max_jitter: float = 1e-2
    jitter_growth: float = 10.0

    # Optimizer defaults
    optimizer_max_iters: int = 200
    optimizer_grad_tol: float = 1e-5
    optimizer_step_tol: float = 1e-9
    optimizer_memory: int = 10

    # Parallel candidate updates and comparison cells
    n_jobs: int = 1

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="WGPR_",
        case_sensitive=False,
        extra="ignore",
    )


settings = Settings()
