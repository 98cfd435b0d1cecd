"""Language-driven scene generation, randomization, and closed-loop evaluation.

The package is organized as a library first:

- ``assets``      asset catalog with semantic-embedding retrieval
- ``dsl``         scene-specification language: parse, validate, evaluate
- ``scenegraph``  scene representation, placement solver, validation, export
- ``conversation``  chat sessions turning prompts into scenes
- ``randomizer``  batch domain randomization of a base scene
- ``evaluation``  staged success predicates and judges
- ``world``       toy kinematic world
- ``episodes``    closed-loop policy protocol and scripted reference policies
- ``collect``     automated demonstration collection with retry/rollback
- ``analysis``    success-rate tables and sim-vs-real regression
- ``service``     HTTP facade; ``cli`` command-line adapter
"""

__version__ = "0.1.0"
