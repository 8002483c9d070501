# -*- coding: utf-8 -*-
try:
    from setuptools import setup, find_packages
except ImportError:
    from ez_setup import use_setuptools
    use_setuptools()
    from setuptools import setup, find_packages

setup(
    name='slp',
    version='0.1',
    description='Skim-then-peruse localization of query segments in feature sequences',
    author='',
    author_email='',
    install_requires=[
        'numpy>=1.17',
        'pecan',
        'sqlalchemy>=1.4',
    ],
    tests_require=[
        'pytest',
        'mock',
    ],
    test_suite='slp',
    zip_safe=False,
    include_package_data=True,
    packages=find_packages(exclude=['ez_setup']),
    entry_points="""
        [pecan.command]
        gen-data=slp.commands.gen_data:GenDataCommand
        train=slp.commands.train:TrainCommand
        eval=slp.commands.evaluate:EvalCommand
        infer=slp.commands.infer:InferCommand
        grad-check=slp.commands.grad_check:GradCheckCommand
        ablate=slp.commands.ablate:AblateCommand
        populate=slp.commands.populate:PopulateCommand

        [console_scripts]
        slp=slp.commands:main
        """
)
