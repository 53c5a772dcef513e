from typing import Optional

from langfuse import Langfuse
from langfuse.langchain import CallbackHandler

from src.config import LANGFUSE_BASE_URL, LANGFUSE_PUBLIC_KEY, LANGFUSE_SECRET_KEY
from src.monitoring.logger import setup_logger

logger = setup_logger(__name__)


def create_langfuse_handler() -> Optional[CallbackHandler]:
    """
    Langfuse callback for LLM calls, or None when tracing is not configured
    or the client cannot be created. Tracing never blocks a run.
    """
    if not (LANGFUSE_PUBLIC_KEY and LANGFUSE_SECRET_KEY):
        logger.info("Langfuse keys not set, tracing disabled")
        return None
    try:
        langfuse = Langfuse(
            public_key=LANGFUSE_PUBLIC_KEY,
            secret_key=LANGFUSE_SECRET_KEY,
            host=LANGFUSE_BASE_URL or None,
        )
        handler = CallbackHandler()
        handler.langfuse = langfuse
        logger.info("Langfuse tracing enabled")
        return handler
    except Exception as e:
        logger.warning(f"Langfuse connection warning: {e}")
        logger.info("Continuing without Langfuse tracing...")
        return None
