"""CPOP Slope Changepoints Batch Package"""
