"""CPOP Slope Changepoints Package"""
