"""Tests package for bnsvp."""
