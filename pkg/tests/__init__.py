"""Tests for the sphere_waves package."""
