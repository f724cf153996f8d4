"""Document ranking with dual (IN/OUT) word embedding spaces."""

__version__ = "0.1.0"
