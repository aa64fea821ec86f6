from setuptools import setup
from ubf import __version__

setup(name='ubf',
  version=__version__,
  packages = ['ubf'],
  description = "unrolled projected gradient beamforming for multi-user MISO downlink",
  install_requires=[
    'argcomplete',
    'numpy',
    'scipy',
    'PyYAML',
  ],
  entry_points = {
    'console_scripts': ['ubf = ubf.cli:run'],
  },
  long_description_content_type = "text/plain",
  long_description = "see README.txt",
  keywords = "beamforming MISO deep-unfolding projected-gradient WMMSE TPE",
  license = "MIT",
)
