"""Allow running as: python -m vnlab"""
from .cli import main

main()
