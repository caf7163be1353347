"""Test suite for gbmap"""
