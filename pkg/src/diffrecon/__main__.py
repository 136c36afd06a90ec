"""Entry point for running diffrecon as a module."""

from diffrecon.cli import main

if __name__ == "__main__":
    main()
