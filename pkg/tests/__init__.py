"""specrank test suite"""
