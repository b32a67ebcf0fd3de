#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""CPOP Slope Changepoints - 共通ライブラリパッケージ"""
