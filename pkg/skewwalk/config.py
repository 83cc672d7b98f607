import os

from dotenv import load_dotenv

from .models import AppConfig

load_dotenv()

config = AppConfig(
    worker_count=int(os.environ["SKEWWALK_WORKERS"])
    if os.getenv("SKEWWALK_WORKERS")
    else None,
    output_dir=os.getenv("SKEWWALK_OUTPUT_DIR", None),
    log_level=os.getenv("SKEWWALK_LOG_LEVEL", "INFO"),
)
