# db/__init__.py
