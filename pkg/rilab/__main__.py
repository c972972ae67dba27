"""Allow running as python -m rilab."""
from rilab.cli import main

if __name__ == "__main__":
    main()
