"""Builds the optional compiled energy kernel.

The package works without it (a numpy implementation is selected at import
time), so any failure here degrades to the pure-Python build instead of
aborting the install.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "cdfkit._energy_cy",
                ["src/cdfkit/_energy_cy.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # noqa: BLE001 - fall back to pure python
    print(f"cdfkit: skipping compiled kernel ({exc}); using numpy fallback")

setup(ext_modules=ext_modules)
