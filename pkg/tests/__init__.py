'''
@description: Test package for deep_eprop; run with ``python -m unittest discover -s tests``.
'''
