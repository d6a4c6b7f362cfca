"""Entry point: ``python -m easel_adapter`` starts the stdio worker."""

from .worker import main

if __name__ == "__main__":
    raise SystemExit(main())
