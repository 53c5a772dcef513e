import os
from pathlib import Path
from dotenv import load_dotenv

load_dotenv()

# Project paths
BASE_DIR = Path(__file__).parent.parent
DATA_DIR = BASE_DIR / "data"
CONFIGS_DIR = BASE_DIR / "configs"
PROMPTS_DIR = DATA_DIR / "prompts"
LOGS_DIR = Path(os.getenv("ESPL_LOGS_DIR", str(BASE_DIR / "logs")))
RUNS_DIR = Path(os.getenv("ESPL_RUNS_DIR", str(BASE_DIR / "runs")))

# Create directories
LOGS_DIR.mkdir(parents=True, exist_ok=True)

# Logging
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()

# Synthetic environment fixture shipped with the repo
SYNTHETIC_FIXTURE = DATA_DIR / "synthetic_fixture.json"
EXAMPLE_PROBLEMS = DATA_DIR / "problems_example.jsonl"

# Chat-completions endpoints (reference model for reflection, policy server for rollouts)
REFLECTOR_ENDPOINT = os.getenv("REFLECTOR_ENDPOINT", "https://api.openai.com/v1")
REFLECTOR_MODEL = os.getenv("REFLECTOR_MODEL", "gpt-4o")
SAMPLER_ENDPOINT = os.getenv("SAMPLER_ENDPOINT", "http://localhost:8000/v1")
SAMPLER_MODEL = os.getenv("SAMPLER_MODEL", "policy")

# Name of the env var holding the bearer token, not the token itself
DEFAULT_API_KEY_ENV = "OPENAI_API_KEY"

# Langfuse Configuration
LANGFUSE_PUBLIC_KEY = os.getenv("LANGFUSE_PUBLIC_KEY", "")
LANGFUSE_SECRET_KEY = os.getenv("LANGFUSE_SECRET_KEY", "")
LANGFUSE_BASE_URL = os.getenv("LANGFUSE_BASE_URL", "")

# Checkpoint schema version
CHECKPOINT_VERSION = 1
