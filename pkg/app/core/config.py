from __future__ import annotations

from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    sim_seed: int = Field(default=2022, alias="SIM_SEED")
    sim_workers: int = Field(default=1, alias="SIM_WORKERS")
    sim_output_dir: str = Field(default="results", alias="SIM_OUTPUT_DIR")
    sim_early_stop_errors: int = Field(default=100, alias="SIM_EARLY_STOP_ERRORS")
    sim_api_max_trials: int = Field(default=20000, alias="SIM_API_MAX_TRIALS")

    codes_dir: str = Field(default="codes", alias="CODES_DIR")
    codes_repo_url: str = Field(
        default="https://gricad-gitlab.univ-grenoble-alpes.fr/ducrestj/qldpc-codes/-/raw/master",
        alias="CODES_REPO_URL",
    )

    mp_clamp: float = Field(default=1000.0, alias="MP_CLAMP")

    log_level: str = Field(default="INFO", alias="LOG_LEVEL")
    log_json: bool = Field(default=False, alias="LOG_JSON")

    mongo_enabled: bool = Field(default=False, alias="MONGO_ENABLED")
    mongo_uri: str = Field(default="mongodb://localhost:27017", alias="MONGO_URI")
    mongo_db: str = Field(default="qldpc_sim", alias="MONGO_DB")

    class Config:
        env_file = ".env"
        extra = "ignore"

    def codes_path(self) -> Path:
        return Path(self.codes_dir)


settings = Settings()
