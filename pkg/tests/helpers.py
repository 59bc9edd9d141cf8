import os

import pdeid.experiment as ex


def burgers(**kw):
    """Burgers preset; set PDEID_TEST_CACHE to reuse clean solves across runs."""
    kw.setdefault("cache_dir", os.environ.get("PDEID_TEST_CACHE"))
    return ex.burgers_config(**kw)


def kdv(**kw):
    kw.setdefault("cache_dir", os.environ.get("PDEID_TEST_CACHE"))
    return ex.kdv_config(**kw)
