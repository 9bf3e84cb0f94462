#!/usr/bin/env python3
"""Serve the workbench HTTP API with uvicorn.

Run from the repository root. API_HOST, API_PORT and API_RELOAD (read from the
environment or a local .env) override 127.0.0.1, 8000 and no reload.
"""

import os
import sys

import uvicorn
from dotenv import load_dotenv


def main() -> int:
    load_dotenv(override=False)
    uvicorn.run(
        "api.main:app",
        host=os.getenv("API_HOST", "127.0.0.1"),
        port=int(os.getenv("API_PORT", "8000")),
        reload=os.getenv("API_RELOAD", "0").lower() in ("1", "true", "yes"),
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
