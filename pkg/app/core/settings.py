import os
from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_file=".env", env_prefix="LOTENET_", case_sensitive=False)

    # Logging
    log_level: str = "INFO"

    # Parallelism for evaluation/prediction chunks; None means all cores
    threads: Optional[int] = None
    eval_batch_size: int = 256

    # Largest dense weight tensor the MPS oracle may materialize
    reconstruct_cap: int = 1_000_000

    def get_threads(self) -> int:
        """Resolve the worker count, falling back to the machine's cores."""
        if self.threads and self.threads > 0:
            return self.threads
        return os.cpu_count() or 1


settings = Settings()
