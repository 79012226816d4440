"""Package for test modules."""
