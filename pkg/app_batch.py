#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""CPOP Slope Changepoints - コマンドライン実行用ラッパー"""

# First Party Library
from app.batch.main import main

if __name__ == "__main__":
    # clickグループ（fit / simulate / bench / eval）を実行
    main()
