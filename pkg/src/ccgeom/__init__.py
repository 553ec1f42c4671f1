"""Workbench for weighted Carnot-Caratheodory spaces."""
