#__init__.py