from setuptools import setup
setup(
  name='quantdim',
  packages=['quantdim'],
  package_data={'quantdim': ['models/*.json']},
  version='0.1',
  description='Quantization errors and quantization dimension of self-similar measures',
  keywords=['quantization', 'fractal', 'self-similar measure', 'iterated function system', 'wasserstein'],
  classifiers=[
    'Programming Language :: Python :: 3.9',
  ],
  python_requires='>=3.9',
  install_requires=[
    'numpy>=1.17',
    'scipy>=1.7',
  ],
  extras_require={
    'test': ['pytest>=6'],
  },
  entry_points={
    'console_scripts': ['quantdim=quantdim.cli:main'],
  },
)
