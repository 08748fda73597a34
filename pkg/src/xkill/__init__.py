"""Test-data generation and grading toolkit for SQL queries."""

__version__ = "0.1.0"
