"""UI components package."""
