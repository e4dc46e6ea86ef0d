"""Built-in volume formats for ernet."""
