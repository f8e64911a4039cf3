from xqtherm.tests.matchers import assert_exceptions_equal  # noqa: F401
