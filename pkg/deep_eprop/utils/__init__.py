'''
@description: Command-line, logging, settings and report helpers for the deep_eprop package.
'''
