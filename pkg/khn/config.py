"""Runtime configuration read from the environment."""

import os
from dataclasses import dataclass
from typing import Optional

from dotenv import load_dotenv

# Load environment variables
load_dotenv()


@dataclass
class RuntimeConfig:
    """Process-level settings that are not part of an experiment config."""

    threads: int
    database_url: Optional[str]  # None: a ledger file inside the run's output directory
    log_level: str

    @classmethod
    def from_env(cls) -> "RuntimeConfig":
        """Create config from environment variables."""
        return cls(
            threads=max(1, int(os.getenv("KHN_THREADS", "1"))),
            database_url=os.getenv("KHN_DATABASE_URL"),
            log_level=os.getenv("KHN_LOG_LEVEL", "INFO").upper(),
        )

    def ledger_url(self, output_dir: str) -> str:
        """Database URL of the run ledger for runs written to output_dir."""
        if self.database_url:
            return self.database_url
        return f"sqlite:///{os.path.join(output_dir, 'ledger.db')}"


# Global config instance
runtime_config = RuntimeConfig.from_env()
