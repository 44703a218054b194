"""Contains code common to all modules"""
