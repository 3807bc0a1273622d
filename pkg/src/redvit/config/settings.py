from dataclasses import dataclass, field
import os


@dataclass(frozen=True)
class Settings:
    log_level: str = field(default_factory=lambda: os.getenv(
        "REDVIT_LOG_LEVEL", "WARNING"))
    output: str = field(
        default_factory=lambda: os.getenv("REDVIT_OUTPUT", "text"))
