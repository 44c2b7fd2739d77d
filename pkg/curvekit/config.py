from dataclasses import dataclass
import os

from dotenv import load_dotenv


load_dotenv()


@dataclass(frozen=True)
class Settings:
    app_name: str
    database_url: str
    log_level: str
    input_dir: str
    output_dir: str
    max_load_retries: int
    retry_backoff_seconds: float
    schedule_hour_utc: int
    schedule_minute_utc: int
    daily_estimators: tuple[str, ...]
    fit_config_path: str | None


def _split_names(raw: str) -> tuple[str, ...]:
    return tuple(name.strip() for name in raw.split(",") if name.strip())


def get_settings() -> Settings:
    return Settings(
        app_name=os.getenv("APP_NAME", "curvekit"),
        database_url=os.getenv("DATABASE_URL", "sqlite:///./curvekit.db"),
        log_level=os.getenv("LOG_LEVEL", "INFO"),
        input_dir=os.getenv("INPUT_DIR", "./data/input"),
        output_dir=os.getenv("OUTPUT_DIR", "./outputs"),
        max_load_retries=int(os.getenv("MAX_LOAD_RETRIES", "2")),
        retry_backoff_seconds=float(os.getenv("RETRY_BACKOFF_SECONDS", "1")),
        schedule_hour_utc=int(os.getenv("SCHEDULE_HOUR_UTC", "18")),
        schedule_minute_utc=int(os.getenv("SCHEDULE_MINUTE_UTC", "30")),
        daily_estimators=_split_names(os.getenv("DAILY_ESTIMATORS", "bootstrap,nss,kr,nn")),
        fit_config_path=os.getenv("FIT_CONFIG_PATH") or None,
    )
