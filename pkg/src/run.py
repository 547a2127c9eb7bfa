#!/usr/bin/env python3
"""
Entry point for the RelGrad FastAPI application
"""

import os
import sys

import uvicorn

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.core.config import LOG_LEVEL, configure_logging

if __name__ == "__main__":
    configure_logging()
    uvicorn.run(
        "app.main:app",
        host=os.getenv("RELGRAD_HOST", "0.0.0.0"),
        port=int(os.getenv("RELGRAD_PORT", "8000")),
        reload=True,
        log_level=LOG_LEVEL.lower(),
    )
