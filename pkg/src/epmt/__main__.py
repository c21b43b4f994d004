"""Allow `python -m epmt`."""

from .cli import entry

if __name__ == "__main__":
    entry()
