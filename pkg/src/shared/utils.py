"""
Shared utility functions for the simulation lab

Hashing, canonical JSON, identifiers and timing helpers used by
scenario I/O and the command line surface.
"""

import hashlib
import json
import logging
import time
import uuid
from datetime import datetime, timezone
from enum import Enum
from functools import wraps
from pathlib import Path
from typing import Any

import numpy as np

logger = logging.getLogger(__name__)


def generate_id(prefix: str = "") -> str:
    """
    Generate a unique identifier.

    Args:
        prefix: Optional prefix for the ID

    Returns:
        Unique identifier string
    """
    unique_id = uuid.uuid4().hex[:12]
    return f"{prefix}{unique_id}" if prefix else unique_id


def hash_content(content: str) -> str:
    """SHA-256 hex digest of a string."""
    return hashlib.sha256(content.encode('utf-8')).hexdigest()


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, datetime):
        return obj.isoformat()
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, Enum):
        return obj.value
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def canonical_json(obj: Any) -> str:
    """
    Serialize to JSON with sorted keys and no whitespace.

    Floats are written with repr precision, so equal values always
    produce equal text.
    """
    return json.dumps(obj, default=_jsonable, sort_keys=True, separators=(',', ':'),
                      ensure_ascii=False, allow_nan=False)


def safe_json_dumps(obj: Any, default: str = "{}", indent: int = 2) -> str:
    """
    Serialize object to JSON with fallback.

    Args:
        obj: Object to serialize
        default: Default JSON string if serialization fails
        indent: Indentation passed to json.dumps

    Returns:
        JSON string or default value
    """
    try:
        return json.dumps(obj, default=_jsonable, ensure_ascii=False, indent=indent, sort_keys=True)
    except (TypeError, ValueError) as e:
        logger.warning(f"Failed to serialize to JSON: {str(e)}")
        return default


def format_timestamp(dt: datetime = None) -> str:
    """ISO 8601 UTC timestamp."""
    dt = dt or datetime.now(timezone.utc)
    return dt.isoformat()


def measure_execution_time(func):
    """
    Decorator to measure function execution time.

    Args:
        func: Function to measure

    Returns:
        Decorated function that logs execution time
    """
    @wraps(func)
    def wrapper(*args, **kwargs):
        start_time = time.time()
        try:
            result = func(*args, **kwargs)
            execution_time = time.time() - start_time
            logger.debug(f"{func.__name__} executed in {execution_time:.3f} seconds")
            return result
        except Exception as e:
            execution_time = time.time() - start_time
            logger.debug(f"{func.__name__} failed after {execution_time:.3f} seconds: {str(e)}")
            raise

    return wrapper
