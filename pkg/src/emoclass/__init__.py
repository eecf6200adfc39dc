"""Emotion classification for short social-media texts."""
